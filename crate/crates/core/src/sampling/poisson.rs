use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{in_center_disc, SamplingMask, FRACTION_TOLERANCE};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Knobs of the spacing search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskSearch {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Candidates tried around each active point before it is retired.
    pub candidates: usize,
}

impl Default for MaskSearch {
    fn default() -> Self {
        Self { max_iterations: 50, tolerance: FRACTION_TOLERANCE, candidates: 30 }
    }
}

/// Bridson dart throwing over the continuous rectangle
/// `[-0.5, ny - 0.5) × [-0.5, nz - 0.5)`, so that rounding lands on grid indices.
fn bridson(ny: usize, nz: usize, min_dist: f64, candidates: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let (h, w) = (ny as f64, nz as f64);
    let cell = min_dist / std::f64::consts::SQRT_2;
    let (gy, gz) = ((h / cell).ceil() as usize, (w / cell).ceil() as usize);
    let mut cells: Vec<u32> = vec![u32::MAX; gy * gz];
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut active: Vec<u32> = Vec::new();
    let cell_of = |p: (f64, f64)| {
        let cy = (((p.0 + 0.5) / cell) as usize).min(gy - 1);
        let cz = (((p.1 + 0.5) / cell) as usize).min(gz - 1);
        (cy, cz)
    };
    let d2 = min_dist * min_dist;

    let first = (rng.random_range(0.0..h) - 0.5, rng.random_range(0.0..w) - 0.5);
    let (cy, cz) = cell_of(first);
    cells[cy * gz + cz] = 0;
    points.push(first);
    active.push(0);

    while !active.is_empty() {
        let slot = rng.random_range(0..active.len());
        let origin = points[active[slot] as usize];
        let mut placed = false;
        for _ in 0..candidates {
            // uniform by area in the annulus [d, 2d]
            let radius = (rng.random_range(0.0..1.0) * 3.0 * d2 + d2).sqrt();
            let theta = rng.random_range(0.0..2.0 * PI);
            let p = (origin.0 + radius * theta.sin(), origin.1 + radius * theta.cos());
            if p.0 < -0.5 || p.0 >= h - 0.5 || p.1 < -0.5 || p.1 >= w - 0.5 {
                continue;
            }
            let (cy, cz) = cell_of(p);
            let mut ok = true;
            'scan: for ny_ in cy.saturating_sub(2)..(cy + 3).min(gy) {
                for nz_ in cz.saturating_sub(2)..(cz + 3).min(gz) {
                    let idx = cells[ny_ * gz + nz_];
                    if idx != u32::MAX {
                        let q = points[idx as usize];
                        if (q.0 - p.0).powi(2) + (q.1 - p.1).powi(2) < d2 {
                            ok = false;
                            break 'scan;
                        }
                    }
                }
            }
            if ok {
                let id = points.len() as u32;
                cells[cy * gz + cz] = id;
                points.push(p);
                active.push(id);
                placed = true;
                break;
            }
        }
        if !placed {
            active.swap_remove(slot);
        }
    }
    points
}

fn rasterize(ny: usize, nz: usize, points: &[(f64, f64)], center_radius: usize) -> Vec<u8> {
    let mut grid = vec![0u8; ny * nz];
    for &(y, z) in points {
        let (y, z) = (y.round() as usize, z.round() as usize);
        grid[y.min(ny - 1) * nz + z.min(nz - 1)] = 1;
    }
    for y in 0..ny {
        for z in 0..nz {
            if in_center_disc(y, z, ny, nz, center_radius) {
                grid[y * nz + z] = 1;
            }
        }
    }
    grid
}

impl MaskSearch {
    /// Bisects the Poisson-disc spacing until the sampled fraction lands within
    /// `tolerance` (relative) of `1 / r`.
    pub fn generate(&self, ny: usize, nz: usize, r: f64, center_radius: usize, seed: u64) -> Result<SamplingMask> {
        if ny == 0 || nz == 0 {
            return Err(Error::Parameter("mask extents must be nonzero".into()));
        }
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::Parameter(format!("acceleration must be a finite value >= 1, got {r}")));
        }
        let total = (ny * nz) as f64;
        if r == 1.0 {
            let mut mask = SamplingMask::full(ny, nz);
            mask.center_radius = center_radius;
            mask.seed = seed;
            return Ok(mask);
        }
        let target = 1.0 / r;
        let disc = (0..ny)
            .flat_map(|y| (0..nz).map(move |z| (y, z)))
            .filter(|&(y, z)| in_center_disc(y, z, ny, nz, center_radius))
            .count();
        if disc as f64 > total * target * (1.0 + self.tolerance) {
            return Err(Error::Parameter(format!(
                "centre disc of radius {center_radius} holds {disc} samples, more than the budget for R = {r}; \
                 R must not exceed {:.4}",
                total / disc as f64
            )));
        }

        let within = |frac: f64| (frac - target).abs() <= self.tolerance * target;
        // fraction falls as spacing grows
        let (mut lo, mut hi) = (0.25f64, ny.max(nz) as f64);
        let mut attempt = 0u64;
        for _ in 0..self.max_iterations {
            let d = (lo * hi).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[attempt]));
            let grid = rasterize(ny, nz, &bridson(ny, nz, d, self.candidates, &mut rng), center_radius);
            let frac = grid.iter().filter(|&&g| g == 1).count() as f64 / total;
            if within(frac) {
                return Ok(SamplingMask { ny, nz, grid, target_r: r, center_radius, seed, min_distance: d });
            }
            if frac > target {
                lo = d;
            } else {
                hi = d;
            }
            if hi / lo < 1.0 + 1e-9 {
                // the stochastic count jumped over the band; retry with a fresh stream
                attempt += 1;
                lo *= 0.9;
                hi *= 1.1;
            }
        }
        Err(Error::Parameter(format!(
            "no spacing reached R = {r} within ±{:.1}% after {} iterations",
            100.0 * self.tolerance,
            self.max_iterations
        )))
    }
}

/// Poisson-disc mask with a fully sampled centre disc, using default search settings.
pub fn poisson_disc_mask(ny: usize, nz: usize, r: f64, center_radius: usize, seed: u64) -> Result<SamplingMask> {
    MaskSearch::default().generate(ny, nz, r, center_radius, seed)
}
