//! Volume types, synthetic multi-coil data and the on-disk dataset container.

mod coils;
mod container;
mod phantom;

use std::fmt;
use std::str::FromStr;

pub use coils::{generate_coil_maps, CoilOptions, CoilSensitivities};
pub use container::{load_dataset, save_dataset, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use phantom::{phantom_slice, synthesize_phantom, SynthConfig};

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, RealTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    ExternalFile,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Synthetic => "synthetic",
            Provenance::ExternalFile => "external",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Provenance::Synthetic),
            "external" => Ok(Provenance::ExternalFile),
            other => Err(Error::format("provenance", format!("unknown value `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub ns: usize,
    pub nc: usize,
    pub ny: usize,
    pub nz: usize,
    pub seed: u64,
    pub provenance: Provenance,
    /// Factor the raw k-space was divided by.
    pub scale: f64,
}

impl DatasetMeta {
    pub fn new(ns: usize, nc: usize, ny: usize, nz: usize) -> Self {
        Self { ns, nc, ny, nz, seed: 0, provenance: Provenance::ExternalFile, scale: 1.0 }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.ns, self.nc, self.ny, self.nz]
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns < 1 || self.nc < 1 {
            return Err(Error::Parameter(format!("need ns >= 1 and nc >= 1, got {} and {}", self.ns, self.nc)));
        }
        if self.ny < 16 || self.nz < 16 {
            return Err(Error::Parameter(format!("plane must be at least 16x16, got {}x{}", self.ny, self.nz)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Parameter(format!("normalization scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }
}

/// Multi-coil k-space, `[Ns, Nc, Ny, Nz]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceVolume {
    data: ComplexTensor,
    meta: DatasetMeta,
}

impl KSpaceVolume {
    pub fn new(data: ComplexTensor, meta: DatasetMeta) -> Result<Self> {
        meta.validate()?;
        if data.shape() != meta.shape() {
            return Err(Error::Shape(format!("data shape {:?} does not match meta {:?}", data.shape(), meta.shape())));
        }
        if !data.is_finite() {
            return Err(Error::Parameter("k-space contains non-finite samples".into()));
        }
        Ok(Self { data, meta })
    }

    pub fn data(&self) -> &ComplexTensor {
        &self.data
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn into_parts(self) -> (ComplexTensor, DatasetMeta) {
        (self.data, self.meta)
    }

    pub fn ns(&self) -> usize {
        self.meta.ns
    }

    pub fn nc(&self) -> usize {
        self.meta.nc
    }

    pub fn plane(&self) -> (usize, usize) {
        (self.meta.ny, self.meta.nz)
    }

    /// Copies slices `range` into a new volume.
    pub fn slices(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.meta.ns {
            return Err(Error::Parameter(format!("slice range {range:?} outside 0..{}", self.meta.ns)));
        }
        let per = self.meta.nc * self.meta.ny * self.meta.nz;
        let data = self.data.data()[range.start * per..range.end * per].to_vec();
        let meta = DatasetMeta { ns: range.len(), ..self.meta.clone() };
        Self::new(ComplexTensor::from_vec(&meta.shape(), data)?, meta)
    }

    /// Stacks volumes with identical coil and plane extents along the slice axis.
    pub fn concat(parts: &[KSpaceVolume]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Parameter("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        for p in parts {
            if (p.nc(), p.plane()) != (first.nc(), first.plane()) {
                return Err(Error::Shape(format!(
                    "cannot stack volume {:?} onto {:?}",
                    p.meta.shape(),
                    first.meta.shape()
                )));
            }
            data.extend_from_slice(p.data.data());
        }
        let meta = DatasetMeta { ns: parts.iter().map(|p| p.ns()).sum(), ..first.meta.clone() };
        Self::new(ComplexTensor::from_vec(&meta.shape(), data)?, meta)
    }
}

/// Image-domain data: complex per-coil images or a combined magnitude image.
#[derive(Clone, Debug, PartialEq)]
pub enum ImageVolume {
    /// `[Ns, Nc, Ny, Nz]`
    PerCoil(ComplexTensor),
    /// `[Ns, Ny, Nz]`, nonnegative
    Combined(RealTensor),
}

impl ImageVolume {
    pub fn per_coil(&self) -> Option<&ComplexTensor> {
        match self {
            ImageVolume::PerCoil(t) => Some(t),
            ImageVolume::Combined(_) => None,
        }
    }

    pub fn combined(&self) -> Option<&RealTensor> {
        match self {
            ImageVolume::Combined(t) => Some(t),
            ImageVolume::PerCoil(_) => None,
        }
    }

    pub fn combined_from(t: RealTensor) -> Result<Self> {
        if t.shape().len() != 3 {
            return Err(Error::Shape(format!("combined image must be [Ns, Ny, Nz], got {:?}", t.shape())));
        }
        if t.data().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Parameter("combined image must be finite and nonnegative".into()));
        }
        Ok(ImageVolume::Combined(t))
    }
}
