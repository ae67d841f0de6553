//! Dual-domain cascades: sub-networks in image (I) or k-space (K) domain, each
//! followed by a data-consistency step that restores the measured samples.
//!
//! Everything runs on channel-packed real tensors `[B, 2C, Ny, Nz]`; the
//! volume-level functions convert from and to [`KSpaceVolume`].

mod manifest;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex32;

pub use manifest::{load_model, save_model, ModelManifest};

use crate::data::{ImageVolume, KSpaceVolume};
use crate::error::{Error, Result};
use crate::network::{Array, DeepCascadeBlock, Param, Subnet, Tape, UNet, UNetWidths, Var};
use crate::sampling::{apply_mask, SamplingMask};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::tensor::{ComplexTensor, RealTensor};
use crate::transform::{channels_to_complex, complex_to_channels, ifft2c, sum_of_squares};

/// Number of sub-networks in the Deep Cascade baseline.
pub const DEEP_CASCADE_SUBNETS: usize = 6;

/// Slices pushed through the network at once by the volume-level drivers.
const INFERENCE_CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Image,
    KSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    UNet,
    DeepCascade,
}

/// SC: one complex channel per network pass (coils ride in the batch axis).
/// MC: all coils jointly, `2·Nc` real input channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Configuration {
    SingleChannel,
    MultiChannel,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::UNet => "unet",
            BlockKind::DeepCascade => "deepcascade",
        })
    }
}

impl FromStr for BlockKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unet" => Ok(BlockKind::UNet),
            "deepcascade" => Ok(BlockKind::DeepCascade),
            _ => Err(Error::Config(format!("unknown block kind `{s}`"))),
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Configuration::SingleChannel => "sc",
            Configuration::MultiChannel => "mc",
        })
    }
}

impl FromStr for Configuration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(Configuration::SingleChannel),
            "mc" => Ok(Configuration::MultiChannel),
            _ => Err(Error::Config(format!("configuration must be `sc` or `mc`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CascadeSpec {
    domains: Vec<Domain>,
    kind: BlockKind,
    config: Configuration,
    nc: usize,
}

impl CascadeSpec {
    pub fn new(domains: Vec<Domain>, kind: BlockKind, config: Configuration, nc: usize) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::Parameter("a cascade needs at least one block".into()));
        }
        if nc == 0 {
            return Err(Error::Parameter("coil count must be positive".into()));
        }
        Ok(Self { domains, kind, config, nc })
    }

    /// Parses `"IK"`-style domain strings (U-net blocks) or `"deepcascade"`.
    pub fn parse(spec: &str, config: Configuration, nc: usize) -> Result<Self> {
        if spec.eq_ignore_ascii_case("deepcascade") {
            return Self::new(vec![Domain::Image; DEEP_CASCADE_SUBNETS], BlockKind::DeepCascade, config, nc);
        }
        let domains = spec
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Domain::Image),
                'K' => Ok(Domain::KSpace),
                _ => Err(Error::Config(format!("model spec `{spec}` must be a string over {{I, K}} or `deepcascade`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if domains.is_empty() {
            return Err(Error::Config("model spec is empty".into()));
        }
        Self::new(domains, BlockKind::UNet, config, nc)
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn config(&self) -> Configuration {
        self.config
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    /// Real input channels of every block.
    pub fn c_in(&self) -> usize {
        match self.config {
            Configuration::SingleChannel => 2,
            Configuration::MultiChannel => 2 * self.nc,
        }
    }

    /// `"IK"`, `"IIII"`, … or `"deepcascade"`.
    pub fn name(&self) -> String {
        match self.kind {
            BlockKind::DeepCascade if self.domains.len() == DEEP_CASCADE_SUBNETS => "deepcascade".into(),
            _ => self.domains.iter().map(|d| if *d == Domain::Image { 'I' } else { 'K' }).collect(),
        }
    }
}

/// Filter widths of the blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockWidths {
    UNet(UNetWidths),
    Flat(usize),
}

impl BlockWidths {
    pub fn to_list(&self) -> Vec<usize> {
        match self {
            BlockWidths::UNet(w) => w.0.to_vec(),
            BlockWidths::Flat(w) => vec![*w],
        }
    }

    pub fn from_list(kind: BlockKind, list: &[usize]) -> Result<Self> {
        match (kind, list) {
            (BlockKind::UNet, &[a, b, c, d]) => Ok(BlockWidths::UNet(UNetWidths([a, b, c, d]))),
            (BlockKind::DeepCascade, &[w]) => Ok(BlockWidths::Flat(w)),
            _ => Err(Error::Config(format!("widths {list:?} do not fit block kind {kind}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel<T> {
    spec: CascadeSpec,
    widths: BlockWidths,
    seed: u64,
    blocks: Vec<Subnet<T>>,
}

impl<T: Real> CascadeModel<T> {
    /// Block `l` is initialised from `derive_seed(seed, [l])`.
    pub fn new(spec: CascadeSpec, widths: BlockWidths, seed: u64) -> Result<Self> {
        let c_in = spec.c_in();
        let blocks = (0..spec.domains.len())
            .map(|l| {
                let s = derive_seed(seed, &[l as u64]);
                let prefix = format!("block{l}.");
                Ok(match (spec.kind, widths) {
                    (BlockKind::UNet, BlockWidths::UNet(w)) => Subnet::UNet(UNet::new(c_in, w, s, &prefix)?),
                    (BlockKind::DeepCascade, BlockWidths::Flat(w)) => {
                        Subnet::DeepCascade(DeepCascadeBlock::new(c_in, w, s, &prefix)?)
                    }
                    _ => return Err(Error::Parameter(format!("widths {widths:?} do not fit block kind {}", spec.kind))),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, widths, seed, blocks })
    }

    /// U-net cascade with doubling widths `(w, 2w, 4w, 8w)`.
    pub fn unet(spec: CascadeSpec, base_width: usize, seed: u64) -> Result<Self> {
        if base_width < 4 {
            return Err(Error::Parameter(format!("base width must be >= 4, got {base_width}")));
        }
        Self::new(spec, BlockWidths::UNet(UNetWidths::doubling(base_width)), seed)
    }

    pub fn spec(&self) -> &CascadeSpec {
        &self.spec
    }

    pub fn widths(&self) -> BlockWidths {
        self.widths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn blocks(&self) -> &[Subnet<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Subnet<T>] {
        &mut self.blocks
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(Subnet::param_count).sum()
    }

    /// All parameter tensors in block order; position = parameter id on the tape.
    pub fn params(&self) -> Vec<&Param<T>> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect()
    }

    pub fn zero_all(&mut self) {
        self.blocks.iter_mut().for_each(Subnet::zero_all);
    }

    pub fn cast<U: Real>(&self) -> CascadeModel<U> {
        CascadeModel {
            spec: self.spec.clone(),
            widths: self.widths,
            seed: self.seed,
            blocks: self.blocks.iter().map(Subnet::cast).collect(),
        }
    }

    /// Full cascade on packed `[Ns, 2Nc, Ny, Nz]` data. `keep` holds `1 − F_u`
    /// broadcast to the same shape; `x_u` must be zero where `keep` is 1.
    pub fn forward(&self, tape: &mut Tape<T>, x_u: Var, keep: Var) -> Result<Var> {
        let (b, c, h, w) = tape.value(x_u).dims4()?;
        if tape.value(keep).shape() != tape.value(x_u).shape() {
            return Err(Error::Shape(format!(
                "mask complement {:?} does not match data {:?}",
                tape.value(keep).shape(),
                tape.value(x_u).shape()
            )));
        }
        let c_in = self.spec.c_in();
        let (x_u, keep) = match self.spec.config {
            Configuration::MultiChannel if c != c_in => {
                return Err(Error::Shape(format!(
                    "model expects data [Ns, {}, Ny, Nz] (Nc = {}), got {:?}",
                    c_in,
                    self.spec.nc,
                    tape.value(x_u).shape()
                )))
            }
            Configuration::MultiChannel => (x_u, keep),
            Configuration::SingleChannel => {
                if c % 2 != 0 {
                    return Err(Error::Shape(format!("packed channel count {c} is odd")));
                }
                let shape = [b * c / 2, 2, h, w];
                (tape.reshape(x_u, &shape)?, tape.reshape(keep, &shape)?)
            }
        };
        let mut x = x_u;
        let mut offset = 0;
        for (l, block) in self.blocks.iter().enumerate() {
            x = block_forward(tape, block, self.spec.domains[l], x, x_u, keep, offset)?;
            offset += block.params().len();
        }
        if self.spec.config == Configuration::SingleChannel {
            x = tape.reshape(x, &[b, c, h, w])?;
        }
        Ok(x)
    }
}

/// Sub-network call with symmetric zero padding up to the block's granularity.
pub fn subnet_forward<T: Real>(tape: &mut Tape<T>, block: &Subnet<T>, x: Var, offset: usize) -> Result<Var> {
    let (_, _, h, w) = tape.value(x).dims4()?;
    let g = block.granularity();
    let (ph, pw) = ((g - h % g) % g, (g - w % g) % g);
    if ph == 0 && pw == 0 {
        return block.forward(tape, x, offset);
    }
    let pad = [ph / 2, ph - ph / 2, pw / 2, pw - pw / 2];
    let padded = tape.pad(x, pad)?;
    let y = block.forward(tape, padded, offset)?;
    tape.crop(y, pad)
}

/// `pred ⊙ keep + x_u`: measured samples replace the prediction.
pub fn dc_tape<T: Real>(tape: &mut Tape<T>, pred: Var, x_u: Var, keep: Var) -> Result<Var> {
    let kept = tape.mul(pred, keep)?;
    tape.add(kept, x_u)
}

/// One block: K domain `f(x)⊙(1−F_u) + x_u`, I domain `F(f(F⁻¹x))⊙(1−F_u) + x_u`.
pub fn block_forward<T: Real>(
    tape: &mut Tape<T>,
    block: &Subnet<T>,
    domain: Domain,
    x_in: Var,
    x_u: Var,
    keep: Var,
    offset: usize,
) -> Result<Var> {
    let pred = match domain {
        Domain::KSpace => subnet_forward(tape, block, x_in, offset)?,
        Domain::Image => {
            let img = tape.fft2c(x_in, true)?;
            let out = subnet_forward(tape, block, img, offset)?;
            tape.fft2c(out, false)?
        }
    };
    dc_tape(tape, pred, x_u, keep)
}

/// `1 − F_u` tiled over `[B, C, Ny, Nz]`.
pub fn keep_array<T: Real>(mask: &SamplingMask, shape: &[usize]) -> Result<Array<T>> {
    let plane = mask.ny() * mask.nz();
    if shape.len() != 4 || shape[2] * shape[3] != plane || shape[2] != mask.ny() {
        return Err(Error::Shape(format!("mask {}x{} does not fit data {shape:?}", mask.ny(), mask.nz())));
    }
    let tile: Vec<T> = mask.grid().iter().map(|&m| if m == 0 { T::one() } else { T::zero() }).collect();
    let n = shape.iter().product::<usize>();
    Array::from_vec(shape, tile.iter().copied().cycle().take(n).collect())
}

fn packed(x: &ComplexTensor) -> Result<Array<f32>> {
    let t = complex_to_channels(x)?;
    let shape = t.shape().to_vec();
    Array::from_vec(&shape, t.into_vec())
}

fn unpacked(a: Array<f32>) -> Result<ComplexTensor> {
    let shape = a.shape().to_vec();
    channels_to_complex(&RealTensor::from_vec(&shape, a.into_vec())?)
}

fn check_mask(x: &KSpaceVolume, mask: &SamplingMask) -> Result<()> {
    if x.plane() != (mask.ny(), mask.nz()) {
        return Err(Error::Shape(format!(
            "mask is {}x{} but k-space is {:?}",
            mask.ny(),
            mask.nz(),
            x.data().shape()
        )));
    }
    Ok(())
}

/// `pred ⊙ (1 − F_u) + x_u` on complex volumes.
pub fn dc_replace(pred: &KSpaceVolume, x_u: &KSpaceVolume, mask: &SamplingMask) -> Result<KSpaceVolume> {
    if pred.data().shape() != x_u.data().shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs measurement {:?}",
            pred.data().shape(),
            x_u.data().shape()
        )));
    }
    check_mask(x_u, mask)?;
    let plane = mask.grid().len();
    let data = pred
        .data()
        .data()
        .iter()
        .zip(x_u.data().data())
        .enumerate()
        .map(|(i, (&p, &m))| if mask.grid()[i % plane] == 0 { p + m } else { m })
        .collect::<Vec<Complex32>>();
    KSpaceVolume::new(ComplexTensor::from_vec(pred.data().shape(), data)?, x_u.meta().clone())
}

/// Runs `f` on packed chunks of at most [`INFERENCE_CHUNK`] slices.
fn chunked(
    x_in: &KSpaceVolume,
    x_u: &KSpaceVolume,
    mask: &SamplingMask,
    f: impl Fn(&mut Tape<f32>, Var, Var, Var) -> Result<Var>,
) -> Result<KSpaceVolume> {
    check_mask(x_u, mask)?;
    if x_in.data().shape() != x_u.data().shape() {
        return Err(Error::Shape(format!("input {:?} vs measurement {:?}", x_in.data().shape(), x_u.data().shape())));
    }
    let mut parts = Vec::new();
    for start in (0..x_u.ns()).step_by(INFERENCE_CHUNK) {
        let range = start..(start + INFERENCE_CHUNK).min(x_u.ns());
        let xi = packed(x_in.slices(range.clone())?.data())?;
        let xu = packed(x_u.slices(range)?.data())?;
        let keep = keep_array(mask, xu.shape())?;
        let mut tape = Tape::inference();
        let (vi, vu, vk) = (tape.constant(xi), tape.constant(xu), tape.constant(keep));
        let y = f(&mut tape, vi, vu, vk)?;
        parts.push(unpacked(tape.value(y).clone())?);
    }
    let data: Vec<Complex32> = parts.into_iter().flat_map(ComplexTensor::into_vec).collect();
    KSpaceVolume::new(ComplexTensor::from_vec(x_u.data().shape(), data)?, x_u.meta().clone())
}

fn single_block(
    block: &Subnet<f32>,
    domain: Domain,
    x_in: &KSpaceVolume,
    x_u: &KSpaceVolume,
    mask: &SamplingMask,
) -> Result<KSpaceVolume> {
    let c = 2 * x_u.nc();
    let sc = block.c_in() == 2 && c != 2;
    if block.c_in() != c && !sc {
        return Err(Error::Shape(format!("block takes {} channels, data has {c}", block.c_in())));
    }
    chunked(x_in, x_u, mask, |tape, xi, xu, keep| {
        let shape = tape.value(xu).shape().to_vec();
        let (xi, xu, keep) = if sc {
            let s = [shape[0] * shape[1] / 2, 2, shape[2], shape[3]];
            (tape.reshape(xi, &s)?, tape.reshape(xu, &s)?, tape.reshape(keep, &s)?)
        } else {
            (xi, xu, keep)
        };
        let y = block_forward(tape, block, domain, xi, xu, keep, 0)?;
        tape.reshape(y, &shape)
    })
}

/// K-space block followed by data consistency. A two-channel block applied to
/// multi-coil data processes each coil independently.
pub fn k_block(block: &Subnet<f32>, x_in: &KSpaceVolume, x_u: &KSpaceVolume, mask: &SamplingMask) -> Result<KSpaceVolume> {
    single_block(block, Domain::KSpace, x_in, x_u, mask)
}

/// Image-domain block (inverse transform, network, forward transform) followed
/// by data consistency.
pub fn i_block(block: &Subnet<f32>, x_in: &KSpaceVolume, x_u: &KSpaceVolume, mask: &SamplingMask) -> Result<KSpaceVolume> {
    single_block(block, Domain::Image, x_in, x_u, mask)
}

/// Applies the whole cascade to undersampled k-space. `x_u` is masked first,
/// so fully sampled data may be passed as well.
pub fn cascade_forward(model: &CascadeModel<f32>, x_u: &KSpaceVolume, mask: &SamplingMask) -> Result<KSpaceVolume> {
    check_mask(x_u, mask)?;
    let x_u = apply_mask(x_u, mask)?;
    chunked(&x_u, &x_u, mask, |tape, _, xu, keep| model.forward(tape, xu, keep))
}

/// Sum-of-squares image of the cascade output.
pub fn reconstruct(model: &CascadeModel<f32>, x_u: &KSpaceVolume, mask: &SamplingMask) -> Result<ImageVolume> {
    sum_of_squares(&ifft2c(&cascade_forward(model, x_u, mask)?)?)
}

/// Sum-of-squares image of the zero-filled undersampled k-space.
pub fn zero_filled(x: &KSpaceVolume, mask: &SamplingMask) -> Result<ImageVolume> {
    check_mask(x, mask)?;
    sum_of_squares(&ifft2c(&apply_mask(x, mask)?)?)
}

/// Deep Cascade baseline: `n_subnets` image-domain flat blocks of width 64.
pub fn build_deep_cascade<T: Real>(
    config: Configuration,
    nc: usize,
    n_subnets: usize,
    seed: u64,
) -> Result<CascadeModel<T>> {
    let spec = CascadeSpec::new(vec![Domain::Image; n_subnets], BlockKind::DeepCascade, config, nc)?;
    CascadeModel::new(spec, BlockWidths::Flat(crate::network::DEEP_CASCADE_WIDTH), seed)
}

#[cfg(test)]
mod tests;
