//! `STAT` binary tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "STAT"            4 bytes magic
//! version           u32 (currently 1)
//! metadata length   u64, then that many bytes of UTF-8 text
//! tensor count      u64
//! per tensor:
//!   name length     u32, then UTF-8 name
//!   rank            u32
//!   dims            rank × u64
//!   data            product(dims) × f64
//! ```
//!
//! The metadata block carries JSON for datasets and checkpoints; it may be
//! empty.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Result, StaError};

pub const MAGIC: &[u8; 4] = b"STAT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        NamedTensor {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        NamedTensor::new(name, t.shape().to_vec(), t.to_vec())
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_vec(self.data.clone(), &self.shape)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorFile {
    pub metadata: String,
    pub tensors: Vec<NamedTensor>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.metadata.len() as u64).to_le_bytes())?;
        w.write_all(self.metadata.as_bytes())?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        let mut buf = Vec::new();
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(StaError::InvalidShape {
                    shape: t.shape.clone(),
                    reason: format!("tensor '{}' has {} values", t.name, t.data.len()),
                });
            }
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for chunk in t.data.chunks(1 << 16) {
                buf.clear();
                for v in chunk {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<TensorFile> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(StaError::UnsupportedContainer(format!(
                "bad magic {magic:02x?}"
            )));
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != VERSION {
            return Err(StaError::UnsupportedContainer(format!(
                "version {version}, expected {VERSION}"
            )));
        }
        let meta_len = u64::from_le_bytes(read_array(r)?) as usize;
        let metadata = String::from_utf8(read_vec(r, meta_len)?)
            .map_err(|e| StaError::Format(format!("metadata is not UTF-8: {e}")))?;
        let count = u64::from_le_bytes(read_array(r)?) as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = u32::from_le_bytes(read_array(r)?) as usize;
            let name = String::from_utf8(read_vec(r, name_len)?)
                .map_err(|e| StaError::Format(format!("tensor name is not UTF-8: {e}")))?;
            let rank = u32::from_le_bytes(read_array(r)?) as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(read_array(r)?) as usize);
            }
            let n: usize = shape.iter().product();
            let bytes = read_vec(r, n * 8)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        Ok(TensorFile { metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TensorFile> {
        let mut r = BufReader::with_capacity(1 << 20, File::open(path)?);
        TensorFile::read_from(&mut r)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            StaError::Format("truncated file".into())
        } else {
            StaError::Io(e)
        }
    })
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    read_exact(r, &mut b)?;
    Ok(b)
}

fn read_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    let got = r.take(n as u64).read_to_end(&mut v)?;
    if got != n {
        return Err(StaError::Format("truncated file".into()));
    }
    Ok(v)
}
