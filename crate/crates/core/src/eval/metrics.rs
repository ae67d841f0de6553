//! Reconstruction error metrics on magnitude images.

use crate::data::ImageVolume;
use crate::error::{Error, Result};
use crate::tensor::RealTensor;

fn check(recon: &[f32], reference: &[f32]) -> Result<()> {
    if recon.len() != reference.len() || reference.is_empty() {
        return Err(Error::Shape(format!("metric operands have {} and {} pixels", recon.len(), reference.len())));
    }
    Ok(())
}

pub fn rmse(recon: &[f32], reference: &[f32]) -> Result<f64> {
    check(recon, reference)?;
    let sum: f64 = recon.iter().zip(reference).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
    Ok((sum / reference.len() as f64).sqrt())
}

fn range(x: &[f32]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)))
}

/// `rmse / (max(ref) − min(ref))`.
pub fn nrmse_slice(recon: &[f32], reference: &[f32]) -> Result<f64> {
    let e = rmse(recon, reference)?;
    let (lo, hi) = range(reference);
    if hi <= lo {
        return Err(Error::Degenerate("reference image is constant".into()));
    }
    Ok(e / (hi - lo))
}

/// `20·log10(max(ref) / rmse)`; identical images give `+∞`.
pub fn psnr_slice(recon: &[f32], reference: &[f32]) -> Result<f64> {
    let e = rmse(recon, reference)?;
    let peak = range(reference).1;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / e).log10())
}

fn combined<'a>(x: &'a ImageVolume, what: &str) -> Result<&'a RealTensor> {
    x.combined().ok_or_else(|| Error::Parameter(format!("{what} must be a combined magnitude image")))
}

/// NRMSE over a whole combined volume.
pub fn nrmse(recon: &ImageVolume, reference: &ImageVolume) -> Result<f64> {
    let (a, b) = (combined(recon, "reconstruction")?, combined(reference, "reference")?);
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    nrmse_slice(a.data(), b.data())
}

/// pSNR over a whole combined volume (peak = volume maximum of the reference).
pub fn psnr(recon: &ImageVolume, reference: &ImageVolume) -> Result<f64> {
    let (a, b) = (combined(recon, "reconstruction")?, combined(reference, "reference")?);
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    psnr_slice(a.data(), b.data())
}
