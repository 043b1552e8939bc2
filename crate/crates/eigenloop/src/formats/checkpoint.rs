use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use eigenloop_core::contrastive::EncoderMLP;
use eigenloop_core::nn::Dense;

use crate::error::{AppError, AppResult};

pub const ENC1_MAGIC: &[u8; 4] = b"ENC1";
pub const ENC1_VERSION: u32 = 1;

/// `"ENC1" | u32 version | u32 L | (L+1) u32 widths | per layer: f64 weights
/// (row-major, out x in) then f64 bias`, all little-endian.
pub fn write_encoder<W: Write>(mut w: W, enc: &EncoderMLP) -> std::io::Result<()> {
    let widths = enc.widths();
    w.write_all(ENC1_MAGIC)?;
    w.write_all(&ENC1_VERSION.to_le_bytes())?;
    w.write_all(&(enc.layers().len() as u32).to_le_bytes())?;
    for width in widths {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    for layer in enc.layers() {
        for v in layer.weight.as_slice().iter().chain(&layer.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_encoder<R: Read>(mut r: R) -> Result<EncoderMLP, String> {
    let mut u32_at = |what: &str| -> Result<u32, String> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|_| format!("truncated {what}"))?;
        Ok(u32::from_le_bytes(b))
    };
    let magic = u32_at("magic")?.to_le_bytes();
    if &magic != ENC1_MAGIC {
        return Err(format!("bad magic {:?}", String::from_utf8_lossy(&magic)));
    }
    let version = u32_at("version")?;
    if version != ENC1_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let layers = u32_at("layer count")? as usize;
    if layers == 0 || layers > 64 {
        return Err(format!("implausible layer count {layers}"));
    }
    let widths = (0..=layers)
        .map(|_| u32_at("widths").map(|w| w as usize))
        .collect::<Result<Vec<_>, _>>()?;
    if widths.iter().any(|&w| w == 0 || w > 1 << 16) {
        return Err("layer widths must be in 1..=65536".into());
    }
    let mut dense = Vec::with_capacity(layers);
    for l in 0..layers {
        let mut layer = Dense::zeros(widths[l], widths[l + 1]);
        let mut b = [0u8; 8];
        for v in layer.weight.as_mut_slice().iter_mut().chain(layer.bias.iter_mut()) {
            r.read_exact(&mut b).map_err(|_| "truncated weights".to_string())?;
            *v = f64::from_le_bytes(b);
        }
        dense.push(layer);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes after the last layer".into());
    }
    let enc = EncoderMLP::from_layers(dense).map_err(|e| e.to_string())?;
    if !enc.is_finite() {
        return Err("non-finite parameters".into());
    }
    Ok(enc)
}

pub fn save_encoder(path: impl AsRef<Path>, enc: &EncoderMLP) -> AppResult<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    write_encoder(BufWriter::new(file), enc).map_err(|e| AppError::io(path, e))
}

pub fn load_encoder(path: impl AsRef<Path>) -> AppResult<EncoderMLP> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_encoder(BufReader::new(file)).map_err(|m| AppError::format(path, m))
}
