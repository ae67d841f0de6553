//! Quantitative evaluation: per-slice metrics against the fully sampled
//! sum-of-squares reference, acceleration sweeps, rank statistics and timing.

mod metrics;
mod report;
mod stats;
mod vif;

use std::time::Instant;

use rayon::prelude::*;

pub use metrics::{nrmse, nrmse_slice, psnr, psnr_slice, rmse};
pub use report::{format_mean_std, Aggregate, Metric, MetricsReport, SliceRecord};
pub use stats::{average_ranks, dunn_posthoc, friedman_test, StatTestResult, DEFAULT_ALPHA};
pub use vif::{vif_slice, VIF_NOISE_VARIANCE};

use crate::cascade::{reconstruct, zero_filled, CascadeModel};
use crate::data::{ImageVolume, KSpaceVolume};
use crate::error::{Error, Result};
use crate::sampling::{poisson_disc_mask, SamplingMask};
use crate::seed::derive_seed;
use crate::transform::{ifft2c, sum_of_squares};

/// A reconstruction method under evaluation.
#[derive(Clone, Debug)]
pub enum Method<'a> {
    Cascade(&'a CascadeModel<f32>),
    /// Sum of squares of the zero-filled undersampled k-space.
    ZeroFilled,
}

impl Method<'_> {
    pub fn reconstruct(&self, x: &KSpaceVolume, mask: &SamplingMask) -> Result<ImageVolume> {
        match self {
            Method::Cascade(m) => reconstruct(m, x, mask),
            Method::ZeroFilled => zero_filled(x, mask),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub accelerations: Vec<f64>,
    pub center_radius: usize,
    pub seed: u64,
    /// Pixels above this fraction of the volume maximum count as foreground.
    pub foreground_level: f64,
    /// Slices with a smaller foreground fraction are excluded.
    pub min_foreground: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            accelerations: vec![2.0, 4.0, 8.0],
            center_radius: crate::sampling::DEFAULT_CENTER_RADIUS,
            seed: 0,
            foreground_level: 0.05,
            min_foreground: 0.02,
        }
    }
}

/// Evaluation mask of `slice` at acceleration `r`; fixed for a given seed.
pub fn eval_mask(opts: &EvalOptions, ny: usize, nz: usize, r: f64, slice: usize) -> Result<SamplingMask> {
    poisson_disc_mask(ny, nz, r, opts.center_radius, derive_seed(opts.seed, &[0x4556_414C, r.to_bits(), slice as u64]))
}

/// Indices of slices kept by the foreground rule.
pub fn foreground_slices(reference: &ImageVolume, level: f64, min_fraction: f64) -> Result<Vec<usize>> {
    let r = reference.combined().ok_or_else(|| Error::Parameter("reference must be combined".into()))?;
    let shape = r.shape();
    let plane = shape[1] * shape[2];
    let threshold = level * r.max() as f64;
    Ok(r.data()
        .chunks(plane)
        .enumerate()
        .filter(|(_, s)| s.iter().filter(|&&v| v as f64 > threshold).count() as f64 >= min_fraction * plane as f64)
        .map(|(i, _)| i)
        .collect())
}

/// Scores every method at every acceleration on the kept slices of `test`.
pub fn evaluate(methods: &[(String, Method<'_>)], test: &KSpaceVolume, opts: &EvalOptions) -> Result<MetricsReport> {
    let reference = sum_of_squares(&ifft2c(test)?)?;
    let keep = foreground_slices(&reference, opts.foreground_level, opts.min_foreground)?;
    let excluded: Vec<usize> = (0..test.ns()).filter(|s| !keep.contains(s)).collect();
    if !excluded.is_empty() {
        log::info!("excluding {} low-foreground slices: {excluded:?}", excluded.len());
    }
    let ref_t = reference.combined().unwrap();
    let (ny, nz) = test.plane();
    let plane = ny * nz;
    let mut records = Vec::new();
    for &r in &opts.accelerations {
        let masks: Vec<SamplingMask> =
            keep.par_iter().map(|&s| eval_mask(opts, ny, nz, r, s)).collect::<Result<_>>()?;
        for (name, method) in methods {
            for (&s, mask) in keep.iter().zip(&masks) {
                let recon = method.reconstruct(&test.slices(s..s + 1)?, mask)?;
                let recon = recon.combined().unwrap().data();
                let truth = &ref_t.data()[s * plane..(s + 1) * plane];
                records.push(SliceRecord {
                    model: name.clone(),
                    r,
                    slice: s,
                    nrmse: nrmse_slice(recon, truth)?,
                    psnr: psnr_slice(recon, truth)?,
                    vif: vif_slice(recon, truth, ny, nz)?,
                });
            }
        }
    }
    Ok(MetricsReport {
        records,
        excluded,
        policy: format!(
            "slices with fewer than {:.1}% of pixels above {:.1}% of the volume maximum are excluded",
            100.0 * opts.min_foreground,
            100.0 * opts.foreground_level
        ),
    })
}

/// Mean wall time in milliseconds of reconstructing one slice, over `count`
/// reconstructions after `warmup` untimed ones, on a single thread.
pub fn benchmark_time(method: &Method<'_>, data: &KSpaceVolume, mask: &SamplingMask, count: usize, warmup: usize) -> Result<f64> {
    if count == 0 || data.ns() == 0 {
        return Err(Error::Parameter("benchmark needs at least one slice and one repetition".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    pool.install(|| {
        let slices = (0..data.ns()).map(|s| data.slices(s..s + 1)).collect::<Result<Vec<_>>>()?;
        for i in 0..warmup {
            method.reconstruct(&slices[i % slices.len()], mask)?;
        }
        let start = Instant::now();
        for i in 0..count {
            method.reconstruct(&slices[i % slices.len()], mask)?;
        }
        Ok(start.elapsed().as_secs_f64() * 1e3 / count as f64)
    })
}
