//! Weight checkpoint file.
//!
//! ```text
//! "CSWGT1"             6-byte magic
//! u32 little-endian    header length
//! UTF-8 header         `version=1`, optional `key=value` lines, then one
//!                      `tensor <name> <d0>x<d1>x..` line per tensor
//! payload              f32 little-endian values of every tensor in header order
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Array, Param};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"CSWGT1";
const VERSION: &str = "1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn push_params<T: Real>(&mut self, params: &[Param<T>]) {
        for p in params {
            self.push(&p.name, &p.value);
        }
    }

    pub fn push<T: Real>(&mut self, name: &str, value: &Array<T>) {
        let data = value.data().iter().map(|v| v.as_f64() as f32).collect();
        self.tensors.push((name.to_string(), value.shape().to_vec(), data));
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut header = format!("version={VERSION}\n");
        for (k, v) in &self.meta {
            header.push_str(&format!("{k}={v}\n"));
        }
        for (name, shape, _) in &self.tensors {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            header.push_str(&format!("tensor {name} {}\n", dims.join("x")));
        }
        let mut bytes = CHECKPOINT_MAGIC.to_vec();
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        for (_, _, data) in &self.tensors {
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() < 10 || &bytes[..6] != CHECKPOINT_MAGIC {
            return Err(Error::format("magic", "not a CSWGT1 checkpoint"));
        }
        let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let end = 10usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::format("header_length", "exceeds file size"))?;
        let header = std::str::from_utf8(&bytes[10..end]).map_err(|_| Error::format("header", "not UTF-8"))?;
        let mut ckpt = Checkpoint::default();
        let mut shapes = Vec::new();
        for line in header.lines().filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("tensor ") {
                let (name, dims) =
                    rest.rsplit_once(' ').ok_or_else(|| Error::format("tensor", format!("bad line `{line}`")))?;
                let shape = if dims.is_empty() {
                    vec![]
                } else {
                    dims.split('x')
                        .map(|d| d.parse::<usize>().map_err(|_| Error::format("tensor", format!("bad shape `{dims}`"))))
                        .collect::<Result<Vec<_>>>()?
                };
                shapes.push((name.to_string(), shape));
            } else {
                let (k, v) = line.split_once('=').ok_or_else(|| Error::format("header", format!("bad line `{line}`")))?;
                ckpt.meta.insert(k.to_string(), v.to_string());
            }
        }
        match ckpt.meta.remove("version") {
            Some(v) if v == VERSION => {}
            Some(v) => return Err(Error::Version { found: v, expected: VERSION.into() }),
            None => return Err(Error::format("version", "missing")),
        }
        let mut payload = &bytes[end..];
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            if payload.len() < 4 * n {
                return Err(Error::format("payload", format!("truncated in tensor `{name}`")));
            }
            let data = payload[..4 * n].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            payload = &payload[4 * n..];
            ckpt.tensors.push((name, shape, data));
        }
        if !payload.is_empty() {
            return Err(Error::format("payload", format!("{} trailing bytes", payload.len())));
        }
        Ok(ckpt)
    }

    /// Copies stored tensors into `params`, starting at tensor index `start`.
    /// Names and shapes must match the model exactly.
    pub fn restore_params<T: Real>(&self, start: usize, params: &mut [Param<T>]) -> Result<usize> {
        for (i, p) in params.iter_mut().enumerate() {
            let (name, shape, data) = self
                .tensors
                .get(start + i)
                .ok_or_else(|| Error::Shape(format!("checkpoint has no tensor for `{}`", p.name)))?;
            if name != &p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::Shape(format!(
                    "checkpoint tensor `{name}` {shape:?} does not match model `{}` {:?}",
                    p.name,
                    p.value.shape()
                )));
            }
            for (dst, &src) in p.value.data_mut().iter_mut().zip(data) {
                *dst = T::from_f64_lossy(src as f64);
            }
        }
        Ok(start + params.len())
    }

    pub fn tensor(&self, name: &str) -> Option<&(String, Vec<usize>, Vec<f32>)> {
        self.tensors.iter().find(|(n, _, _)| n == name)
    }
}
