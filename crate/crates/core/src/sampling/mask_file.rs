//! Mask file: `CSMASK1\n`, one ASCII line `ny nz r radius seed\n`, then
//! `ny * nz` bytes of 0/1 in row-major order.

use std::fs;
use std::path::Path;

use super::SamplingMask;
use crate::error::{Error, Result};

pub const MASK_MAGIC: &[u8; 8] = b"CSMASK1\n";

pub fn save_mask(path: impl AsRef<Path>, mask: &SamplingMask) -> Result<()> {
    let mut bytes = MASK_MAGIC.to_vec();
    bytes.extend_from_slice(
        format!("{} {} {:?} {} {}\n", mask.ny(), mask.nz(), mask.target_r(), mask.center_radius(), mask.seed())
            .as_bytes(),
    );
    bytes.extend_from_slice(mask.grid());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<SamplingMask> {
    let bytes = fs::read(path)?;
    if bytes.len() < MASK_MAGIC.len() || &bytes[..MASK_MAGIC.len()] != MASK_MAGIC {
        return Err(Error::format("magic", "not a CSMASK1 file"));
    }
    let rest = &bytes[MASK_MAGIC.len()..];
    let eol = rest.iter().position(|&b| b == b'\n').ok_or_else(|| Error::format("header", "missing newline"))?;
    let line = std::str::from_utf8(&rest[..eol]).map_err(|_| Error::format("header", "not ASCII"))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    let names = ["ny", "nz", "r", "radius", "seed"];
    if fields.len() != names.len() {
        return Err(Error::format("header", format!("expected {} fields, got {}", names.len(), fields.len())));
    }
    let num = |i: usize| -> Result<u64> {
        fields[i].parse().map_err(|_| Error::format(names[i], format!("cannot parse `{}`", fields[i])))
    };
    let (ny, nz, radius, seed) = (num(0)? as usize, num(1)? as usize, num(3)? as usize, num(4)?);
    let r: f64 = fields[2].parse().map_err(|_| Error::format("r", format!("cannot parse `{}`", fields[2])))?;
    let grid = rest[eol + 1..].to_vec();
    if grid.len() != ny * nz {
        return Err(Error::format("payload", format!("expected {} bytes, found {}", ny * nz, grid.len())));
    }
    SamplingMask::from_grid(ny, nz, grid, r, radius, seed).map_err(|e| Error::format("payload", e.to_string()))
}
