//! Little-endian binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u8` model-kind tag, `u64`
//! config length and the canonical config text, `u32` tensor count, then per
//! tensor: `u32` name length, name, `u32` rank, `u64` dims, `f64` values in
//! row-major order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use diffnet_core::numkernel::Matrix;
use thiserror::Error;

use crate::config::ModelKind;

pub const MAGIC: [u8; 8] = *b"DIFFNETC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unknown model-kind tag {0}")]
    Kind(u8),
    #[error("truncated checkpoint at byte {0}")]
    Truncated(usize),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint has no tensor `{0}`")]
    Missing(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn matrix(name: impl Into<String>, m: &Matrix) -> Self {
        Tensor {
            name: name.into(),
            dims: vec![m.rows(), m.cols()],
            values: m.as_slice().to_vec(),
        }
    }

    pub fn vector(name: impl Into<String>, v: &[f64]) -> Self {
        Tensor {
            name: name.into(),
            dims: vec![v.len()],
            values: v.to_vec(),
        }
    }

    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        Tensor {
            name: name.into(),
            dims: Vec::new(),
            values: vec![v],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    /// Canonical run configuration text.
    pub config: String,
    pub tensors: Vec<Tensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated(self.pos))?;
        let out = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated(self.pos))?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| CheckpointError::Corrupt(format!("length {v} too large")))
    }

    fn text(&mut self, n: usize) -> Result<String, CheckpointError> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.tag());
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let tag = r.take(1)?[0];
        let kind = ModelKind::from_tag(tag).ok_or(CheckpointError::Kind(tag))?;
        let config_len = r.len()?;
        let config = r.text(config_len)?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = r.text(name_len)?;
            let rank = r.u32()? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(r.len()?);
            }
            let size = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::Corrupt(format!("tensor `{name}` is too large")))?;
            let raw = r.take(size.checked_mul(8).ok_or(CheckpointError::Truncated(r.pos))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor { name, dims, values });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { kind, config, tensors })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            f.write_all(&self.to_bytes()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.tensors.iter().any(|t| t.name.starts_with(prefix))
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix, CheckpointError> {
        let t = self.get(name).ok_or_else(|| CheckpointError::Missing(name.into()))?;
        let (rows, cols) = match t.dims[..] {
            [r, c] => (r, c),
            [r] => (r, 1),
            _ => return Err(CheckpointError::Corrupt(format!("`{name}` has rank {}", t.dims.len()))),
        };
        Matrix::from_vec(rows, cols, t.values.clone()).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>, CheckpointError> {
        self.get(name)
            .map(|t| t.values.clone())
            .ok_or_else(|| CheckpointError::Missing(name.into()))
    }

    pub fn scalar(&self, name: &str) -> Result<f64, CheckpointError> {
        let t = self.get(name).ok_or_else(|| CheckpointError::Missing(name.into()))?;
        match t.values[..] {
            [v] => Ok(v),
            _ => Err(CheckpointError::Corrupt(format!("`{name}` is not a scalar"))),
        }
    }

    /// Human-readable listing; `values` also prints every entry.
    pub fn dump(&self, values: bool) -> String {
        let mut out = format!(
            "format\t{VERSION}\nmodel\t{}\ntensors\t{}\n--- config\n{}--- tensors\n",
            self.kind,
            self.tensors.len(),
            self.config
        );
        for t in &self.tensors {
            let shape = t.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
            let shape = if shape.is_empty() { "scalar".to_string() } else { shape };
            out.push_str(&format!("{}\t{shape}\n", t.name));
            if values {
                let line = t.values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
                out.push_str(&format!("  {line}\n"));
            }
        }
        out
    }
}
