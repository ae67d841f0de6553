use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::coils::{generate_coil_maps, CoilOptions};
use super::{DatasetMeta, ImageVolume, KSpaceVolume, Provenance};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tensor::{ComplexTensor, RealTensor};
use crate::transform::{Direction, FourierPlan};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub ns: usize,
    pub nc: usize,
    pub ny: usize,
    pub nz: usize,
    pub coils: CoilOptions,
    /// Divide everything by the peak of the fully sampled SOS image.
    pub normalize: bool,
}

impl SynthConfig {
    pub fn new(seed: u64, ns: usize, nc: usize, ny: usize, nz: usize) -> Self {
        Self { seed, ns, nc, ny, nz, coils: CoilOptions::default(), normalize: true }
    }

    fn validate(&self) -> Result<()> {
        if !(32..=512).contains(&self.ny) || !(32..=512).contains(&self.nz) {
            return Err(Error::Parameter(format!("ny, nz must be in [32, 512], got {}x{}", self.ny, self.nz)));
        }
        if !(1..=64).contains(&self.nc) {
            return Err(Error::Parameter(format!("nc must be in [1, 64], got {}", self.nc)));
        }
        if !(1..=4096).contains(&self.ns) {
            return Err(Error::Parameter(format!("ns must be in [1, 4096], got {}", self.ns)));
        }
        Ok(())
    }
}

/// (intensity, semi-axis a, semi-axis b, centre x, centre y, rotation in degrees)
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.605, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// One randomized Shepp-Logan-style slice, row-major `ny × nz`, nonnegative.
pub fn phantom_slice(seed: u64, ny: usize, nz: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global = rng.random_range(0.8..0.95);
    let mut ellipses: Vec<[f64; 6]> = SHEPP_LOGAN
        .iter()
        .enumerate()
        .map(|(i, e)| {
            // the skull and brain outline vary less than the inner structures
            let jitter = if i < 2 { 0.03 } else { 0.15 };
            let amp = if i < 2 { e[0] } else { e[0] * rng.random_range(0.7..1.3) };
            [
                amp,
                e[1] * rng.random_range(1.0 - jitter..1.0 + jitter),
                e[2] * rng.random_range(1.0 - jitter..1.0 + jitter),
                e[3] + rng.random_range(-0.3 * jitter..0.3 * jitter),
                e[4] + rng.random_range(-0.3 * jitter..0.3 * jitter),
                e[5] + rng.random_range(-10.0..10.0),
            ]
        })
        .collect();
    for _ in 0..rng.random_range(2..5) {
        ellipses.push([
            rng.random_range(-0.15..0.2),
            rng.random_range(0.03..0.15),
            rng.random_range(0.03..0.15),
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.5..0.5),
            rng.random_range(0.0..180.0),
        ]);
    }
    // smooth multiplicative shading
    let (fy, fz, ph) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5), rng.random_range(0.0..6.28));

    let mut out = vec![0.0; ny * nz];
    for y in 0..ny {
        let v = (y as f64 - (ny / 2) as f64) / (ny as f64 / 2.0);
        for z in 0..nz {
            let u = (z as f64 - (nz / 2) as f64) / (nz as f64 / 2.0);
            let mut value = 0.0;
            for e in &ellipses {
                let (sin, cos) = e[5].to_radians().sin_cos();
                let (du, dv) = (u / global - e[3], v / global - e[4]);
                let (ru, rv) = (du * cos + dv * sin, -du * sin + dv * cos);
                if (ru / e[1]).powi(2) + (rv / e[2]).powi(2) <= 1.0 {
                    value += e[0];
                }
            }
            let shade = 1.0 + 0.15 * (fy * v + fz * u + ph).sin();
            out[y * nz + z] = (value * shade).max(0.0);
        }
    }
    out
}

/// Builds fully sampled multi-coil k-space and its root-sum-of-squares
/// reference from randomized ellipse phantoms and synthetic coil maps.
pub fn synthesize_phantom(cfg: &SynthConfig) -> Result<(KSpaceVolume, ImageVolume)> {
    cfg.validate()?;
    let (ns, nc, ny, nz) = (cfg.ns, cfg.nc, cfg.ny, cfg.nz);
    let plane = ny * nz;
    let coils = generate_coil_maps(derive_seed(cfg.seed, &[0xC011]), nc, ny, nz, cfg.coils)?;
    let maps: Vec<Complex64> =
        coils.maps().data().iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect();

    let mut images = vec![Complex64::new(0.0, 0.0); ns * nc * plane];
    let mut reference = vec![0.0f64; ns * plane];
    for s in 0..ns {
        let phantom = phantom_slice(derive_seed(cfg.seed, &[1, s as u64]), ny, nz);
        for c in 0..nc {
            let dst = &mut images[(s * nc + c) * plane..(s * nc + c + 1) * plane];
            for (p, d) in dst.iter_mut().enumerate() {
                *d = maps[c * plane + p] * phantom[p];
            }
        }
        for p in 0..plane {
            let acc: f64 = (0..nc).map(|c| images[(s * nc + c) * plane + p].norm_sqr()).sum();
            reference[s * plane + p] = acc.sqrt();
        }
    }

    let peak = reference.iter().copied().fold(0.0f64, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Degenerate("synthetic volume is empty".into()));
    }
    let scale = if cfg.normalize { peak } else { 1.0 };

    let plan = FourierPlan::<f64>::new(ny, nz, Direction::Forward)?;
    plan.apply_all(&mut images);
    let kspace: Vec<Complex32> =
        images.iter().map(|z| Complex32::new((z.re / scale) as f32, (z.im / scale) as f32)).collect();
    let reference: Vec<f32> = reference.iter().map(|v| (v / scale) as f32).collect();

    let meta = DatasetMeta { ns, nc, ny, nz, seed: cfg.seed, provenance: Provenance::Synthetic, scale };
    let kspace = KSpaceVolume::new(ComplexTensor::from_vec(&meta.shape(), kspace)?, meta)?;
    let reference = ImageVolume::combined_from(RealTensor::from_vec(&[ns, ny, nz], reference)?)?;
    Ok((kspace, reference))
}
