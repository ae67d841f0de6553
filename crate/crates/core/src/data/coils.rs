use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

/// Sensitivity magnitude never drops below this fraction of the peak.
const MAGNITUDE_FLOOR: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoilOptions {
    /// Gaussian width of each coil's magnitude profile as a fraction of the
    /// larger plane extent.
    pub smoothness: f64,
    /// Return the constant map `1 + 0i` (single coil only).
    pub trivial: bool,
}

impl Default for CoilOptions {
    fn default() -> Self {
        Self { smoothness: 0.4, trivial: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    /// `[Nc, Ny, Nz]`
    maps: ComplexTensor,
    smoothness: f64,
    sigma_px: f64,
}

impl CoilSensitivities {
    pub fn maps(&self) -> &ComplexTensor {
        &self.maps
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn nc(&self) -> usize {
        self.maps.shape()[0]
    }

    /// Upper bound on the change of `|map|` between neighbouring pixels.
    ///
    /// The magnitude is `floor + (1 - floor) * exp(-r^2 / 2 sigma^2)`, whose
    /// slope never exceeds `(1 - floor) / (sigma * sqrt(e))`.
    pub fn gradient_bound(&self) -> f64 {
        if self.sigma_px.is_infinite() {
            return 0.0;
        }
        (1.0 - MAGNITUDE_FLOOR) / (self.sigma_px * std::f64::consts::E.sqrt())
    }
}

/// Smooth complex sensitivities: Gaussian magnitude blobs centred around the
/// field of view, each with a random linear phase ramp.
pub fn generate_coil_maps(seed: u64, nc: usize, ny: usize, nz: usize, opts: CoilOptions) -> Result<CoilSensitivities> {
    if nc < 1 || nc > 64 {
        return Err(Error::Parameter(format!("coil count must be in [1, 64], got {nc}")));
    }
    if ny < 2 || nz < 2 {
        return Err(Error::Parameter(format!("plane {ny}x{nz} too small")));
    }
    if opts.trivial {
        if nc != 1 {
            return Err(Error::Parameter("the trivial coil is only defined for nc = 1".into()));
        }
        let maps = ComplexTensor::from_vec(&[1, ny, nz], vec![Complex32::new(1.0, 0.0); ny * nz])?;
        return Ok(CoilSensitivities { maps, smoothness: opts.smoothness, sigma_px: f64::INFINITY });
    }
    if !(opts.smoothness > 0.0) {
        return Err(Error::Parameter(format!("smoothness must be positive, got {}", opts.smoothness)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = ny.max(nz) as f64;
    let sigma = opts.smoothness * extent;
    let (cy, cz) = ((ny / 2) as f64, (nz / 2) as f64);
    let mut data = Vec::with_capacity(nc * ny * nz);
    let offset = rng.random_range(0.0..2.0 * PI);
    for c in 0..nc {
        let angle = offset + 2.0 * PI * c as f64 / nc as f64 + rng.random_range(-0.2..0.2);
        let ring = if nc == 1 { 0.0 } else { 0.5 * rng.random_range(0.8..1.1) };
        let py = cy + ring * ny as f64 * angle.sin();
        let pz = cz + ring * nz as f64 * angle.cos();
        let phase0 = rng.random_range(-PI..PI);
        let ramp_y = rng.random_range(-PI..PI) / ny as f64;
        let ramp_z = rng.random_range(-PI..PI) / nz as f64;
        for y in 0..ny {
            for z in 0..nz {
                let (dy, dz) = (y as f64 - py, z as f64 - pz);
                let mag = MAGNITUDE_FLOOR
                    + (1.0 - MAGNITUDE_FLOOR) * (-(dy * dy + dz * dz) / (2.0 * sigma * sigma)).exp();
                let phase = phase0 + ramp_y * (y as f64 - cy) + ramp_z * (z as f64 - cz);
                let v = Complex64::from_polar(mag, phase);
                data.push(Complex32::new(v.re as f32, v.im as f32));
            }
        }
    }
    let maps = ComplexTensor::from_vec(&[nc, ny, nz], data)?;
    Ok(CoilSensitivities { maps, smoothness: opts.smoothness, sigma_px: sigma })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_coil_is_constant_one() {
        let s = generate_coil_maps(0, 1, 32, 32, CoilOptions { trivial: true, ..Default::default() }).unwrap();
        assert!(s.maps().data().iter().all(|z| *z == Complex32::new(1.0, 0.0)));
        assert!(generate_coil_maps(0, 2, 32, 32, CoilOptions { trivial: true, ..Default::default() }).is_err());
    }

    #[test]
    fn no_dead_pixels() {
        for seed in 0..10 {
            let s = generate_coil_maps(seed, 8, 40, 36, CoilOptions::default()).unwrap();
            let plane = 40 * 36;
            let min = (0..plane)
                .map(|p| (0..8).map(|c| s.maps().data()[c * plane + p].norm_sqr()).sum::<f32>())
                .fold(f32::INFINITY, f32::min);
            assert!(min > 0.0);
        }
    }

    #[test]
    fn finite_difference_gradient_within_bound() {
        let (nc, ny, nz) = (12, 64, 64);
        let s = generate_coil_maps(3, nc, ny, nz, CoilOptions::default()).unwrap();
        let mags: Vec<f64> = s.maps().data().iter().map(|z| z.norm() as f64).collect();
        let mut worst = 0.0f64;
        for c in 0..nc {
            for y in 0..ny {
                for z in 0..nz {
                    let here = mags[(c * ny + y) * nz + z];
                    if y + 1 < ny {
                        worst = worst.max((mags[(c * ny + y + 1) * nz + z] - here).abs());
                    }
                    if z + 1 < nz {
                        worst = worst.max((mags[(c * ny + y) * nz + z + 1] - here).abs());
                    }
                }
            }
        }
        // f32 storage adds at most a few ulps
        assert!(worst <= s.gradient_bound() + 1e-6, "{worst} > {}", s.gradient_bound());
        assert!(worst > 0.2 * s.gradient_bound());
    }

    #[test]
    fn deterministic() {
        let a = generate_coil_maps(42, 4, 32, 32, CoilOptions::default()).unwrap();
        let b = generate_coil_maps(42, 4, 32, 32, CoilOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
