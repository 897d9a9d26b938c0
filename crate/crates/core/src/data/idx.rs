//! IDX files: a big-endian `u32` magic (2051 for `u8` images, 2049 for `u8`
//! labels), big-endian `u32` dimensions (count, rows, cols for images; count
//! for labels), then the raw bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{TableDataset, TableLabels};

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

/// Images scaled to `[0, 1]` with their integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxDataset {
    pub rows: usize,
    pub cols: usize,
    /// `[count x rows*cols]` flattened, each byte divided by 255.
    pub images: Vec<f64>,
    pub labels: Vec<u8>,
}

impl IdxDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// The original pixel bytes.
    pub fn image_bytes(&self) -> Vec<u8> {
        self.images.iter().map(|&x| (x * 255.0).round() as u8).collect()
    }

    pub fn reconstruction(&self) -> Result<TableDataset> {
        TableDataset::new(self.pixels(), self.images.clone(), TableLabels::Inputs)
    }

    pub fn classification(&self) -> Result<TableDataset> {
        let classes = self.labels.iter().map(|&l| l as usize).collect();
        TableDataset::new(self.pixels(), self.images.clone(), TableLabels::Classes(classes))
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn header(bytes: &[u8], path: &Path, magic: u32, n_dims: usize) -> Result<Vec<usize>> {
    let need = 4 * (1 + n_dims);
    if bytes.len() < need {
        return Err(Error::Truncated {
            path: path.into(),
            expected: need as u64,
            actual: bytes.len() as u64,
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    if word(0) != magic {
        return Err(Error::Format {
            path: path.into(),
            message: format!("bad magic number {}, expected {magic}", word(0)),
        });
    }
    let dims: Vec<usize> = (1..=n_dims).map(|i| word(i) as usize).collect();
    let expected = need as u64 + dims.iter().map(|&d| d as u64).product::<u64>();
    if bytes.len() as u64 != expected {
        if (bytes.len() as u64) < expected {
            return Err(Error::Truncated {
                path: path.into(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        return Err(Error::Format {
            path: path.into(),
            message: format!("{} trailing bytes after the payload", bytes.len() as u64 - expected),
        });
    }
    Ok(dims)
}

/// Returns `(count, rows, cols, pixel bytes)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let dims = header(bytes, path, IMAGES_MAGIC, 3)?;
    Ok((dims[0], dims[1], dims[2], bytes[16..].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    header(bytes, path, LABELS_MAGIC, 1)?;
    Ok(bytes[8..].to_vec())
}

pub fn parse_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<IdxDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let (count, rows, cols, pixels) = parse_idx_images(&read(ip)?, ip)?;
    let labels = parse_idx_labels(&read(lp)?, lp)?;
    if labels.len() != count {
        return Err(Error::Format {
            path: lp.into(),
            message: format!("{} labels for {count} images", labels.len()),
        });
    }
    Ok(IdxDataset {
        rows,
        cols,
        images: pixels.iter().map(|&b| b as f64 / 255.0).collect(),
        labels,
    })
}

fn write(path: &Path, magic: u32, dims: &[usize], payload: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(4 * (1 + dims.len()) + payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("IDX dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(Error::invalid("pixel count is not a multiple of the image size"));
    }
    write(path.as_ref(), IMAGES_MAGIC, &[pixels.len() / per, rows, cols], pixels)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    write(path.as_ref(), LABELS_MAGIC, &[labels.len()], labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn magic_numbers() {
        let p = Path::new("x");
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 255, 0];
        let (count, rows, cols, px) = parse_idx_images(&img, p).unwrap();
        assert_eq!((count, rows, cols, px), (1, 1, 2, vec![255, 0]));
        img[3] = 1;
        assert!(matches!(parse_idx_images(&img, p), Err(Error::Format { .. })));
        let labels = [0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
        assert_eq!(parse_idx_labels(&labels, p).unwrap(), vec![7, 3]);
        assert!(parse_idx_images(&labels, p).is_err());
    }

    #[test]
    fn truncation_names_both_sizes() {
        let labels = [0, 0, 8, 1, 0, 0, 0, 5, 7, 3];
        match parse_idx_labels(&labels, Path::new("l")) {
            Err(Error::Truncated { expected, actual, .. }) => assert_eq!((expected, actual), (13, 10)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_idx_labels(&[0, 0], Path::new("l")), Err(Error::Truncated { .. })));
    }

    #[test]
    fn files_scale_and_validate_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx_images(&ip, 2, 2, &[255, 0, 51, 102, 1, 2, 3, 4]).unwrap();
        write_idx_labels(&lp, &[4, 9]).unwrap();
        let d = parse_idx(&ip, &lp).unwrap();
        assert_eq!(d.images[0], 1.0);
        assert_eq!(d.images[2], 0.2);
        assert_eq!(d.len(), 2);
        write_idx_labels(&lp, &[4]).unwrap();
        assert!(parse_idx(&ip, &lp).is_err());
        assert!(matches!(parse_idx(dir.path().join("missing"), &lp), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_byte_exact(pixels in proptest::collection::vec(any::<u8>(), 0..6).prop_map(|v| v.repeat(6)), labels_seed: u8) {
            let dir = tempfile::tempdir().unwrap();
            let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
            let count = pixels.len() / 6;
            let labels = vec![labels_seed; count];
            write_idx_images(&ip, 2, 3, &pixels).unwrap();
            write_idx_labels(&lp, &labels).unwrap();
            let original = fs::read(&ip).unwrap();
            let d = parse_idx(&ip, &lp).unwrap();
            let again = dir.path().join("again");
            write_idx_images(&again, d.rows, d.cols, &d.image_bytes()).unwrap();
            prop_assert_eq!(fs::read(&again).unwrap(), original);
            prop_assert!(d.images.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
