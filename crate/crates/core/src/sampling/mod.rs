//! Undersampling masks in the ky-kz plane: a fully sampled central disc plus
//! Poisson-disc (blue-noise) samples elsewhere, tuned to hit a target
//! acceleration factor.

mod mask_file;
mod poisson;

use num_complex::Complex32;

pub use mask_file::{load_mask, save_mask, MASK_MAGIC};
pub use poisson::{poisson_disc_mask, MaskSearch};

use crate::data::KSpaceVolume;
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tensor::ComplexTensor;

/// Default radius of the fully sampled k-space centre, in grid units.
pub const DEFAULT_CENTER_RADIUS: usize = 16;

/// Allowed relative deviation of the sampled fraction from `1 / R`.
pub const FRACTION_TOLERANCE: f64 = 0.02;

/// Binary sampling pattern over a `ny × nz` k-space plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    ny: usize,
    nz: usize,
    grid: Vec<u8>,
    target_r: f64,
    center_radius: usize,
    seed: u64,
    /// Poisson-disc spacing the generator settled on (0 for full sampling).
    min_distance: f64,
}

/// Index of the zero-frequency sample along an axis of length `n`.
pub fn center_index(n: usize) -> usize {
    n / 2
}

/// Whether `(y, z)` lies within `radius` of the k-space centre.
pub fn in_center_disc(y: usize, z: usize, ny: usize, nz: usize, radius: usize) -> bool {
    let dy = y as f64 - center_index(ny) as f64;
    let dz = z as f64 - center_index(nz) as f64;
    dy * dy + dz * dz <= (radius * radius) as f64
}

impl SamplingMask {
    /// Builds a mask from an explicit 0/1 grid.
    pub fn from_grid(ny: usize, nz: usize, grid: Vec<u8>, target_r: f64, center_radius: usize, seed: u64) -> Result<Self> {
        if grid.len() != ny * nz {
            return Err(Error::Shape(format!("grid has {} entries, expected {}", grid.len(), ny * nz)));
        }
        if grid.iter().any(|&g| g > 1) {
            return Err(Error::Parameter("mask entries must be 0 or 1".into()));
        }
        Ok(Self { ny, nz, grid, target_r, center_radius, seed, min_distance: 0.0 })
    }

    pub fn full(ny: usize, nz: usize) -> Self {
        Self { ny, nz, grid: vec![1; ny * nz], target_r: 1.0, center_radius: 0, seed: 0, min_distance: 0.0 }
    }

    pub fn empty(ny: usize, nz: usize) -> Self {
        Self { ny, nz, grid: vec![0; ny * nz], target_r: f64::INFINITY, center_radius: 0, seed: 0, min_distance: 0.0 }
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn grid(&self) -> &[u8] {
        &self.grid
    }

    pub fn is_sampled(&self, y: usize, z: usize) -> bool {
        self.grid[y * self.nz + z] == 1
    }

    pub fn target_r(&self) -> f64 {
        self.target_r
    }

    pub fn center_radius(&self) -> usize {
        self.center_radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    pub fn sampled_count(&self) -> usize {
        self.grid.iter().filter(|&&g| g == 1).count()
    }

    pub fn achieved_fraction(&self) -> f64 {
        self.sampled_count() as f64 / (self.ny * self.nz) as f64
    }

    /// `Ny·Nz / (number of sampled positions)`.
    pub fn achieved_acceleration(&self) -> Result<f64> {
        match self.sampled_count() {
            0 => Err(Error::Degenerate("mask samples no k-space positions".into())),
            n => Ok((self.ny * self.nz) as f64 / n as f64),
        }
    }
}

/// Free-function form of [`SamplingMask::achieved_acceleration`].
pub fn achieved_acceleration(mask: &SamplingMask) -> Result<f64> {
    mask.achieved_acceleration()
}

/// Zeroes unsampled positions of every plane of a `[.., Ny, Nz]` tensor.
pub fn apply_mask_tensor(x: &ComplexTensor, mask: &SamplingMask) -> Result<ComplexTensor> {
    if x.plane() != (mask.ny, mask.nz) {
        return Err(Error::Shape(format!(
            "mask is {}x{} but data planes are {:?}",
            mask.ny,
            mask.nz,
            x.plane()
        )));
    }
    let mut out = x.clone();
    let zero = Complex32::new(0.0, 0.0);
    for plane in out.data_mut().chunks_mut(mask.grid.len()) {
        for (v, &m) in plane.iter_mut().zip(&mask.grid) {
            if m == 0 {
                *v = zero;
            }
        }
    }
    Ok(out)
}

/// `x_u = F_u ⊙ x`, broadcasting the mask over slices and coils.
pub fn apply_mask(kspace: &KSpaceVolume, mask: &SamplingMask) -> Result<KSpaceVolume> {
    KSpaceVolume::new(apply_mask_tensor(kspace.data(), mask)?, kspace.meta().clone())
}

/// Seed for the mask of `sample` in `epoch`, so per-epoch masks are random
/// but reproducible.
pub fn epoch_mask_seed(base_seed: u64, epoch: u64, sample: u64) -> u64 {
    derive_seed(base_seed, &[0x4D41_534B, epoch, sample])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ComplexTensor;

    fn c(re: f32, im: f32) -> Complex32 {
        Complex32::new(re, im)
    }

    #[test]
    fn elementwise_product_two_by_two() {
        let x = ComplexTensor::from_vec(&[1, 1, 2, 2], vec![c(1.0, 1.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, -1.0)])
            .unwrap();
        let mask = SamplingMask::from_grid(2, 2, vec![1, 0, 0, 1], 2.0, 0, 0).unwrap();
        let out = apply_mask_tensor(&x, &mask).unwrap();
        assert_eq!(out.data(), &[c(1.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(4.0, -1.0)]);
        assert_eq!(apply_mask_tensor(&out, &mask).unwrap(), out);
    }

    #[test]
    fn identity_and_annihilation() {
        let x = ComplexTensor::from_vec(&[2, 3, 4, 4], (0..96).map(|i| c(i as f32, -(i as f32))).collect()).unwrap();
        assert_eq!(apply_mask_tensor(&x, &SamplingMask::full(4, 4)).unwrap(), x);
        assert!(apply_mask_tensor(&x, &SamplingMask::empty(4, 4)).unwrap().data().iter().all(|z| z.norm() == 0.0));
        assert!(matches!(apply_mask_tensor(&x, &SamplingMask::full(4, 5)), Err(Error::Shape(_))));
    }

    #[test]
    fn acceleration_from_counts() {
        assert_eq!(SamplingMask::full(8, 8).achieved_acceleration().unwrap(), 1.0);
        let half = SamplingMask::from_grid(2, 4, vec![1, 0, 1, 0, 1, 0, 1, 0], 2.0, 0, 0).unwrap();
        assert_eq!(achieved_acceleration(&half).unwrap(), 2.0);
        assert!(matches!(SamplingMask::empty(4, 4).achieved_acceleration(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn disc_membership_count_by_enumeration() {
        // lattice points within radius 16 of a lattice point
        let mut count = 0;
        for dy in -16i64..=16 {
            for dz in -16i64..=16 {
                if dy * dy + dz * dz <= 256 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 797);
        let grid_count =
            (0..218).flat_map(|y| (0..170).map(move |z| (y, z))).filter(|&(y, z)| in_center_disc(y, z, 218, 170, 16)).count();
        assert_eq!(grid_count, 797);
    }

    #[test]
    fn epoch_seeds_differ() {
        assert_ne!(epoch_mask_seed(1, 0, 0), epoch_mask_seed(1, 1, 0));
        assert_ne!(epoch_mask_seed(1, 0, 0), epoch_mask_seed(1, 0, 1));
        assert_eq!(epoch_mask_seed(1, 3, 4), epoch_mask_seed(1, 3, 4));
    }
}
