//! Binary checkpoints. All integers and floats are little-endian:
//!
//! ```text
//! magic        8 bytes  "EMCOMMCK"
//! version      u32
//! epoch        u64      epochs completed
//! baseline     u64 count, f64 mean
//! rng          32-byte ChaCha seed, u64 stream, u128 word position
//! early stop   u8 has_best, f64 best, u64 non-improving epochs
//! optimizer    u64 step count
//! 3 sections   parameters, first moments, second moments; each is
//!              u32 count, then per tensor: u32 name length, UTF-8 name,
//!              u32 rank, rank x u64 extents, extents-product x f64 values
//! digest       32-byte SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::channel::RunningMeanBaseline;
use crate::error::{Error, Result};
use crate::nn::NamedParams;
use crate::rng::RngState;

use super::trainer::EarlyStopState;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"EMCOMMCK";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: u64,
    pub params: Vec<NamedArray>,
    pub optimizer_step: u64,
    pub first_moments: Vec<NamedArray>,
    pub second_moments: Vec<NamedArray>,
    pub baseline: RunningMeanBaseline,
    pub rng: RngState,
    pub early_stop: EarlyStopState,
}

impl Checkpoint {
    pub fn params_of(params: &NamedParams) -> Vec<NamedArray> {
        params
            .iter()
            .map(|(name, t)| NamedArray {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: t.to_vec(),
            })
            .collect()
    }

    /// Copies the stored parameters into `params`. Every name and shape must
    /// match; all differences are listed in the error.
    pub fn load_params(&self, params: &NamedParams) -> Result<()> {
        let mut problems = Vec::new();
        for (name, t) in params {
            match self.params.iter().find(|a| &a.name == name) {
                None => problems.push(format!("{name} missing from checkpoint")),
                Some(a) if a.shape != t.shape() => {
                    problems.push(format!("{name}: checkpoint {:?}, model {:?}", a.shape, t.shape()))
                }
                Some(_) => {}
            }
        }
        for a in &self.params {
            if !params.iter().any(|(n, _)| n == &a.name) {
                problems.push(format!("{} not in model", a.name));
            }
        }
        if !problems.is_empty() {
            return Err(Error::ArchitectureMismatch(problems.join("; ")));
        }
        for (name, t) in params {
            let a = self.params.iter().find(|a| &a.name == name).expect("checked above");
            t.set_values(&a.values)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        w.extend_from_slice(&self.epoch.to_le_bytes());
        w.extend_from_slice(&self.baseline.count.to_le_bytes());
        w.extend_from_slice(&self.baseline.mean.to_le_bytes());
        w.extend_from_slice(&self.rng.seed);
        w.extend_from_slice(&self.rng.stream.to_le_bytes());
        w.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        let best = self.early_stop.best;
        w.push(best.is_some() as u8);
        w.extend_from_slice(&best.unwrap_or(0.0).to_le_bytes());
        w.extend_from_slice(&(self.early_stop.bad_epochs as u64).to_le_bytes());
        w.extend_from_slice(&self.optimizer_step.to_le_bytes());
        for section in [&self.params, &self.first_moments, &self.second_moments] {
            w.extend_from_slice(&(section.len() as u32).to_le_bytes());
            for a in section {
                w.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
                w.extend_from_slice(a.name.as_bytes());
                w.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
                for &d in &a.shape {
                    w.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for v in &a.values {
                    w.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let digest = Sha256::digest(&w);
        w.extend_from_slice(&digest);
        w
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.format("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        if bytes.len() < 32 + 12 {
            return Err(r.format("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(r.format("checksum mismatch, the file is corrupt"));
        }
        r.bytes = body;
        let epoch = r.u64()?;
        let baseline = RunningMeanBaseline {
            count: r.u64()?,
            mean: r.f64()?,
        };
        let rng = RngState {
            seed: r.take(32)?.try_into().expect("32 bytes"),
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes")),
        };
        let has_best = r.take(1)?[0] != 0;
        let best = r.f64()?;
        let early_stop = EarlyStopState {
            best: has_best.then_some(best),
            bad_epochs: r.u64()? as usize,
        };
        let optimizer_step = r.u64()?;
        let params = r.section()?;
        let first_moments = r.section()?;
        let second_moments = r.section()?;
        if r.pos != body.len() {
            return Err(r.format("unexpected bytes after the last section"));
        }
        Ok(Checkpoint {
            epoch,
            params,
            optimizer_step,
            first_moments,
            second_moments,
            baseline,
            rng,
            early_stop,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        // write-then-rename so a crash never leaves a half-written checkpoint
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn format(&self, message: &str) -> Error {
        Error::Format {
            path: self.path.into(),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Truncated {
                path: self.path.into(),
                expected: (self.pos as u64).saturating_add(n as u64),
                actual: self.bytes.len() as u64,
            });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn section(&mut self) -> Result<Vec<NamedArray>> {
        let n = self.u32()?;
        (0..n)
            .map(|_| {
                let len = self.u32()? as usize;
                let name = std::str::from_utf8(self.take(len)?)
                    .map_err(|_| self.format("tensor name is not UTF-8"))?
                    .to_owned();
                let rank = self.u32()?;
                let shape = (0..rank).map(|_| Ok(self.u64()? as usize)).collect::<Result<Vec<_>>>()?;
                let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
                let numel = numel.ok_or_else(|| self.format("tensor extents overflow"))?;
                let raw = self.take(numel.checked_mul(8).ok_or_else(|| self.format("tensor too large"))?)?;
                let values = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                Ok(NamedArray { name, shape, values })
            })
            .collect()
    }
}
