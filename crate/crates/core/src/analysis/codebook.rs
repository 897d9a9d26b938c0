use std::fs;
use std::path::Path;

use crate::channel::{DiscreteMessage, Message, Receiver};
use crate::error::{Error, Result};
use crate::tensor;

/// Receiver output for one enumerated message.
#[derive(Clone, Debug, PartialEq)]
pub struct CodebookEntry {
    pub message: Vec<usize>,
    /// The message with everything after its first eos dropped.
    pub canonical: Vec<usize>,
    pub output: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub vocab_size: usize,
    pub max_len: usize,
    pub image_shape: (usize, usize),
    /// All `V^L` messages in lexicographic order (first symbol slowest).
    pub entries: Vec<CodebookEntry>,
}

impl Codebook {
    /// Number of distinct canonical messages.
    pub fn canonical_count(&self) -> usize {
        let mut c: Vec<&Vec<usize>> = self.entries.iter().map(|e| &e.canonical).collect();
        c.sort();
        c.dedup();
        c.len()
    }
}

/// Every message of exactly `max_len` symbols over `vocab_size` symbols,
/// flattened, lexicographic.
pub fn enumerate_messages(vocab_size: usize, max_len: usize) -> Result<Vec<usize>> {
    let total = u32::try_from(max_len)
        .ok()
        .and_then(|l| vocab_size.checked_pow(l))
        .filter(|&t| t <= 1 << 20)
        .ok_or_else(|| Error::invalid(format!("{vocab_size}^{max_len} messages are too many to enumerate")))?;
    let mut out = Vec::with_capacity(total * max_len);
    for mut i in 0..total {
        let mut m = vec![0; max_len];
        for slot in m.iter_mut().rev() {
            *slot = i % vocab_size;
            i /= vocab_size;
        }
        out.extend(m);
    }
    Ok(out)
}

/// Binary PGM (P5), 8-bit.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::invalid(format!("{} pixels for a {width}x{height} image", pixels.len())));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn gray(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

const SEPARATOR: u8 = 255;

/// Feeds every possible message to the Receiver and writes each output as a
/// `rows x cols` image `message_<s1>_<s2>..pgm` plus `grid.pgm`. In the grid,
/// the column is the last symbol and the row enumerates the leading symbols
/// (first symbol slowest); tiles are separated by 1-pixel white lines.
///
/// The Receiver must produce `rows * cols` values in `[0, 1]` per message.
pub fn dump_codebook(receiver: &dyn Receiver, image_shape: (usize, usize), out_dir: &Path) -> Result<Codebook> {
    let vocab = receiver.vocab();
    let (rows, cols) = image_shape;
    let (v, l) = (vocab.size, vocab.max_len);
    let symbols = enumerate_messages(v, l)?;
    let n = symbols.len() / l;
    let message = Message::Discrete(DiscreteMessage::from_symbols(symbols.clone(), l)?);
    let output = tensor::no_grad(|| receiver.receive(&message, None))?.output;
    if output.shape() != [n, rows * cols] {
        return Err(Error::invalid(format!(
            "receiver output {:?} is not a batch of {rows}x{cols} images",
            output.shape()
        )));
    }
    let values = output.to_vec();
    if values.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::invalid("receiver output is not an image: values outside [0, 1]"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(n);
    for (i, (msg, out)) in symbols.chunks(l).zip(values.chunks(rows * cols)).enumerate() {
        let name: Vec<String> = msg.iter().map(usize::to_string).collect();
        let pixels: Vec<u8> = out.iter().map(|&x| gray(x)).collect();
        write_pgm(&out_dir.join(format!("message_{}.pgm", name.join("_"))), cols, rows, &pixels)?;
        let len = message.lengths()[i];
        entries.push(CodebookEntry {
            message: msg.to_vec(),
            canonical: msg[..len].to_vec(),
            output: out.to_vec(),
        });
    }

    let (grid_rows, grid_cols) = (n / v, v);
    let width = grid_cols * cols + grid_cols - 1;
    let height = grid_rows * rows + grid_rows - 1;
    let mut grid = vec![SEPARATOR; width * height];
    for (i, e) in entries.iter().enumerate() {
        let (gr, gc) = (i / grid_cols, i % grid_cols);
        for y in 0..rows {
            for x in 0..cols {
                grid[(gr * (rows + 1) + y) * width + gc * (cols + 1) + x] = gray(e.output[y * cols + x]);
            }
        }
    }
    write_pgm(&out_dir.join("grid.pgm"), width, height, &grid)?;
    Ok(Codebook {
        vocab_size: v,
        max_len: l,
        image_shape,
        entries,
    })
}
