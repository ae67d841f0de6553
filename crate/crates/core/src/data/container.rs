//! Binary dataset container.
//!
//! ```text
//! "CSRECON1"                      8-byte magic
//! u32 little-endian               header length in bytes
//! UTF-8 header                    key=value lines: version, ns, nc, ny, nz, seed, scale, provenance
//! payload                         ns*nc*ny*nz complex samples, f32 LE interleaved (re, im),
//!                                 index order [slice][channel][ky][kz]
//! ```

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex32;

use super::{DatasetMeta, KSpaceVolume, Provenance};
use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

pub const CONTAINER_MAGIC: &[u8; 8] = b"CSRECON1";
pub const CONTAINER_VERSION: u32 = 1;

fn header_text(meta: &DatasetMeta) -> String {
    format!(
        "version={CONTAINER_VERSION}\nns={}\nnc={}\nny={}\nnz={}\nseed={}\nscale={:?}\nprovenance={}\n",
        meta.ns, meta.nc, meta.ny, meta.nz, meta.seed, meta.scale, meta.provenance
    )
}

pub fn save_dataset(path: impl AsRef<Path>, volume: &KSpaceVolume) -> Result<()> {
    let header = header_text(volume.meta());
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CONTAINER_MAGIC)?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(header.as_bytes())?;
    let mut payload = Vec::with_capacity(volume.data().len() * 8);
    for z in volume.data().data() {
        payload.extend_from_slice(&z.re.to_le_bytes());
        payload.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

fn field<'a>(fields: &HashMap<&str, &'a str>, key: &str) -> Result<&'a str> {
    fields.get(key).copied().ok_or_else(|| Error::format(key, "missing"))
}

fn parse<T: std::str::FromStr>(fields: &HashMap<&str, &str>, key: &str) -> Result<T> {
    let raw = field(fields, key)?;
    raw.parse().map_err(|_| Error::format(key, format!("cannot parse `{raw}`")))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<KSpaceVolume> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[..8] != CONTAINER_MAGIC {
        return Err(Error::format("magic", "not a CSRECON1 dataset"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::format("header_length", format!("{header_len} exceeds file size")))?;
    let header = std::str::from_utf8(&bytes[12..header_end]).map_err(|_| Error::format("header", "not UTF-8"))?;

    let mut fields = HashMap::new();
    for line in header.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::format("header", format!("bad line `{line}`")))?;
        fields.insert(k.trim(), v.trim());
    }
    let version: u32 = parse(&fields, "version")?;
    if version != CONTAINER_VERSION {
        return Err(Error::Version { found: version.to_string(), expected: CONTAINER_VERSION.to_string() });
    }
    let meta = DatasetMeta {
        ns: parse(&fields, "ns")?,
        nc: parse(&fields, "nc")?,
        ny: parse(&fields, "ny")?,
        nz: parse(&fields, "nz")?,
        seed: parse(&fields, "seed")?,
        scale: parse(&fields, "scale")?,
        provenance: field(&fields, "provenance")?.parse::<Provenance>()?,
    };
    meta.validate().map_err(|e| Error::format("header", e.to_string()))?;

    let count = meta.shape().iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let expected = count.and_then(|c| c.checked_mul(8)).ok_or_else(|| Error::format("header", "extent overflow"))?;
    let payload = &bytes[header_end..];
    if payload.len() != expected {
        return Err(Error::format("payload", format!("expected {expected} bytes, found {}", payload.len())));
    }
    let data: Vec<Complex32> = payload
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(f32::from_le_bytes(c[..4].try_into().unwrap()), f32::from_le_bytes(c[4..].try_into().unwrap()))
        })
        .collect();
    KSpaceVolume::new(ComplexTensor::from_vec(&meta.shape(), data)?, meta)
        .map_err(|e| Error::format("payload", e.to_string()))
}
