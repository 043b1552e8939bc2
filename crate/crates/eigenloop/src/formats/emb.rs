use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use eigenloop_core::{EmbeddingSet, Error as CoreError, Matrix, SampleId};

use crate::error::{AppError, AppResult};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u32 = 1;

/// Writes rows as little-endian `f32`. Values that do not fit are a data error.
pub fn write_embeddings<W: Write>(mut w: W, set: &EmbeddingSet) -> Result<(), WriteError> {
    let n = u32::try_from(set.len()).map_err(|_| WriteError::Data("too many rows".into()))?;
    let d = u32::try_from(set.dim()).map_err(|_| WriteError::Data("too many columns".into()))?;
    w.write_all(EMB1_MAGIC)?;
    w.write_all(&EMB1_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    for (i, v) in set.data().as_slice().iter().enumerate() {
        let f = *v as f32;
        if !f.is_finite() {
            return Err(WriteError::Data(format!(
                "sample {} has a value outside the f32 range",
                set.ids()[i / set.dim()]
            )));
        }
        w.write_all(&f.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Data(String),
}

/// Parses an EMB1 stream; rows get sequential ids `0..N`.
pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingSet, ReadError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| ReadError::Format("truncated header".into()))?;
    if &header[..4] != EMB1_MAGIC {
        return Err(ReadError::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&header[..4])
        )));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != EMB1_VERSION {
        return Err(ReadError::Format(format!("unsupported version {version}")));
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    if n == 0 || d == 0 {
        return Err(ReadError::Data(format!("empty matrix ({n}x{d})")));
    }
    let len = n
        .checked_mul(d)
        .ok_or_else(|| ReadError::Format("size overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 4 {
        return Err(ReadError::Format(format!(
            "payload holds {} bytes, header promises {}",
            bytes.len(),
            len * 4
        )));
    }
    let mut data = Vec::with_capacity(len);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(ReadError::Data(format!(
                "non-finite value at row {}, column {}",
                i / d,
                i % d
            )));
        }
        data.push(f64::from(v));
    }
    let m = Matrix::from_vec(n, d, data).map_err(|e| ReadError::Data(e.to_string()))?;
    EmbeddingSet::with_sequential_ids(m).map_err(|e| ReadError::Data(e.to_string()))
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Data(String),
}

pub fn save_embeddings(path: impl AsRef<Path>, set: &EmbeddingSet) -> AppResult<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    write_embeddings(BufWriter::new(file), set).map_err(|e| match e {
        WriteError::Io(e) => AppError::io(path, e),
        WriteError::Data(m) => AppError::Core(CoreError::Data(format!("{}: {m}", path.display()))),
    })
}

pub fn load_embeddings(path: impl AsRef<Path>) -> AppResult<EmbeddingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_embeddings(BufReader::new(file)).map_err(|e| match e {
        ReadError::Io(e) => AppError::io(path, e),
        ReadError::Format(m) => AppError::format(path, m),
        ReadError::Data(m) => AppError::Core(CoreError::Data(format!("{}: {m}", path.display()))),
    })
}

/// Reads `id,f0,f1,...` rows (header required).
pub fn import_csv(path: impl AsRef<Path>) -> AppResult<EmbeddingSet> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| AppError::format(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| AppError::format(path, e.to_string()))?
        .clone();
    if headers.get(0) != Some("id") || headers.len() < 2 {
        return Err(AppError::format(path, "header must be `id,f0,f1,...`"));
    }
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{j}") {
            return Err(AppError::format(path, format!("column {} should be `f{j}`, found `{h}`", j + 1)));
        }
    }
    let d = headers.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| AppError::format(path, e.to_string()))?;
        let bad = |what: &str| AppError::format(path, format!("record {}: {what}", line + 1));
        let id: u64 = rec.get(0).unwrap_or("").trim().parse().map_err(|_| bad("invalid id"))?;
        ids.push(SampleId(id));
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| bad("invalid number"))?;
            data.push(v);
        }
    }
    if ids.is_empty() {
        return Err(AppError::Core(CoreError::Data(format!("{}: no samples", path.display()))));
    }
    let m = Matrix::from_vec(ids.len(), d, data)?;
    Ok(EmbeddingSet::new(ids, m)?)
}
