//! Model file: magic "NQACLM01", u32 header length, JSON header (spec and
//! vocabulary), u32 tensor count, then per tensor: u32 name length, UTF-8
//! name, u32 rank, u32 dims, little-endian f32 values.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{LmModel, ModelSpec};
use super::vocab::Vocabulary;
use super::LmError;

const MAGIC: &[u8; 8] = b"NQACLM01";
const MAX_HEADER: u32 = 1 << 24;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    vocab: Vocabulary,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, LmError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> LmError {
    match e.kind() {
        std::io::ErrorKind::UnexpectedEof => LmError::Format("truncated file".into()),
        _ => LmError::Io(e),
    }
}

impl LmModel {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LmError> {
        w.write_all(MAGIC)?;
        let header = serde_json::to_vec(&Header { spec: self.spec().clone(), vocab: self.vocab().clone() }).map_err(|e| LmError::Format(e.to_string()))?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let tensors = self.tensors();
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, dims, values) in tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(dims.len() as u32).to_le_bytes())?;
            for d in dims {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, LmError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(LmError::Format("bad magic or unsupported version".into()));
        }
        let len = read_u32(&mut r)?;
        if len > MAX_HEADER {
            return Err(LmError::Format(format!("header length {len} too large")));
        }
        let mut header = vec![0u8; len as usize];
        r.read_exact(&mut header).map_err(truncated)?;
        let Header { spec, vocab } = serde_json::from_slice(&header).map_err(|e| LmError::Format(format!("header: {e}")))?;
        spec.validate()?;
        let expected = super::model::Layout::new(&spec, vocab.len());
        let layout = expected.tensors();
        let count = read_u32(&mut r)? as usize;
        if count != layout.len() {
            return Err(LmError::Format(format!("expected {} tensors, found {count}", layout.len())));
        }
        let mut params = vec![0f32; expected.total];
        for (name, dims, offset) in layout {
            let name_len = read_u32(&mut r)?;
            if name_len > 256 {
                return Err(LmError::Format("tensor name too long".into()));
            }
            let mut buf = vec![0u8; name_len as usize];
            r.read_exact(&mut buf).map_err(truncated)?;
            if buf != name.as_bytes() {
                return Err(LmError::Format(format!("expected tensor {name}, found {}", String::from_utf8_lossy(&buf))));
            }
            let rank = read_u32(&mut r)? as usize;
            let mut got = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                got.push(read_u32(&mut r)? as usize);
            }
            if got != dims {
                return Err(LmError::Format(format!("tensor {name}: dims {got:?}, expected {dims:?}")));
            }
            let n: usize = dims.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes).map_err(truncated)?;
            for (p, chunk) in params[offset..offset + n].iter_mut().zip(bytes.chunks_exact(4)) {
                *p = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            }
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(LmError::Format("trailing bytes".into()));
        }
        LmModel::from_parts(spec, vocab, params)
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
