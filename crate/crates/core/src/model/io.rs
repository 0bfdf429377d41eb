use std::fs;
use std::path::Path;

use super::MlpParams;
use crate::error::{HifmError, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"HIFM-MLP";
pub const MODEL_VERSION: u32 = 1;

/// Layout: magic, `u32` version, `u32` layer count, `u32` rows and cols per
/// layer, then each layer's weights (row-major) and biases as little-endian
/// `f64`.
pub fn to_bytes(p: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * p.n_layers() + 8 * p.n_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(p.n_layers() as u32).to_le_bytes());
    for w in p.widths().windows(2) {
        out.extend_from_slice(&(w[1] as u32).to_le_bytes());
        out.extend_from_slice(&(w[0] as u32).to_le_bytes());
    }
    for v in p.params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MODEL_MAGIC {
        return Err(HifmError::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(HifmError::Format(format!(
            "model file version {version} is not supported (expected {MODEL_VERSION})"
        )));
    }
    let layers = r.u32()? as usize;
    if layers == 0 || layers > 1024 {
        return Err(HifmError::Format(format!("implausible layer count {layers}")));
    }
    let mut widths = Vec::with_capacity(layers + 1);
    for l in 0..layers {
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if l == 0 {
            widths.push(cols);
        } else if widths[l] != cols {
            return Err(HifmError::Format(format!(
                "layer {l} expects {cols} inputs but the previous layer has {} outputs",
                widths[l]
            )));
        }
        widths.push(rows);
    }
    let n: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let need = n * 8;
    if r.remaining() != need {
        return Err(HifmError::Format(format!(
            "expected {need} bytes of parameters, found {}",
            r.remaining()
        )));
    }
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    MlpParams::from_parts(widths, params).map_err(|e| HifmError::Format(format!("invalid model: {e}")))
}

pub fn save(p: &MlpParams, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(p))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<MlpParams> {
    from_bytes(&fs::read(path)?)
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl Reader<'_> {
    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.remaining() < n {
            return Err(HifmError::Format(format!("truncated file at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
