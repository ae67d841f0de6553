//! Pixel-domain visual information fidelity over four scales.

use crate::error::{Error, Result};

/// Noise variance of the visual channel, for images scaled to [0, 255].
pub const VIF_NOISE_VARIANCE: f64 = 2.0;
const SCALES: u32 = 4;
const TINY: f64 = 1e-10;

/// Normalised 1-D Gaussian of length `n` and standard deviation `n / 5`.
fn gaussian(n: usize) -> Vec<f64> {
    let sigma = n as f64 / 5.0;
    let c = (n as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..n).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" correlation of an `h × w` image.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for j in 0..ow {
            rows[y * ow + j] = (0..n).map(|t| k[t] * x[y * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..n).map(|t| k[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    (out, oh, ow)
}

/// Separable correlation with symmetric (edge-mirroring) borders; output is `h × w`.
fn filter_same(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let half = (k.len() / 2) as isize;
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
        }
        i as usize
    };
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for z in 0..w {
            rows[y * w + z] = k.iter().enumerate().map(|(t, kt)| kt * x[y * w + mirror(z as isize + t as isize - half, w)]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for z in 0..w {
            out[y * w + z] = k.iter().enumerate().map(|(t, kt)| kt * rows[mirror(y as isize + t as isize - half, h) * w + z]).sum();
        }
    }
    out
}

fn decimate(x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let out = (0..oh).flat_map(|i| (0..ow).map(move |j| x[2 * i * w + 2 * j])).collect();
    (out, oh, ow)
}

/// VIF of `recon` against `reference` (`h × w`, row-major). Both are scaled by
/// `255 / max(reference)`. Local statistics use "valid" Gaussian windows; the
/// low-pass before each ×2 decimation mirrors borders so 32×32 inputs still
/// reach the fourth scale. The per-pixel gain is capped at 1, which bounds the
/// result to [0, 1].
pub fn vif_slice(recon: &[f32], reference: &[f32], h: usize, w: usize) -> Result<f64> {
    if recon.len() != h * w || reference.len() != h * w {
        return Err(Error::Shape(format!("VIF operands must both be {h}x{w}")));
    }
    if h < 32 || w < 32 {
        return Err(Error::Parameter(format!("VIF needs extents >= 32, got {h}x{w}")));
    }
    let peak = reference.iter().fold(0.0f64, |m, &v| m.max(v as f64));
    if peak <= 0.0 {
        return Err(Error::Degenerate("reference image has no positive intensity".into()));
    }
    let scale = 255.0 / peak;
    let mut r: Vec<f64> = reference.iter().map(|&v| v as f64 * scale).collect();
    let mut d: Vec<f64> = recon.iter().map(|&v| v as f64 * scale).collect();
    let (mut ch, mut cw) = (h, w);
    let (mut num, mut den) = (0.0, 0.0);
    for s in 1..=SCALES {
        let n = (1usize << (SCALES - s + 1)) + 1;
        let win = gaussian(n);
        if s > 1 {
            let fr = filter_same(&r, ch, cw, &win);
            let fd = filter_same(&d, ch, cw, &win);
            d = decimate(&fd, ch, cw).0;
            (r, ch, cw) = decimate(&fr, ch, cw);
        }
        let (mu1, _, _) = filter_valid(&r, ch, cw, &win);
        let (mu2, _, _) = filter_valid(&d, ch, cw, &win);
        let rr: Vec<f64> = r.iter().map(|v| v * v).collect();
        let dd: Vec<f64> = d.iter().map(|v| v * v).collect();
        let rd: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a * b).collect();
        let (e11, _, _) = filter_valid(&rr, ch, cw, &win);
        let (e22, _, _) = filter_valid(&dd, ch, cw, &win);
        let (e12, _, _) = filter_valid(&rd, ch, cw, &win);
        for i in 0..mu1.len() {
            let s1 = (e11[i] - mu1[i] * mu1[i]).max(0.0);
            let s2 = (e22[i] - mu2[i] * mu2[i]).max(0.0);
            let s12 = e12[i] - mu1[i] * mu2[i];
            let (sigma1, mut g, mut sv);
            if s1 < TINY {
                (sigma1, g, sv) = (0.0, 0.0, s2);
            } else {
                sigma1 = s1;
                g = s12 / (s1 + TINY);
                sv = s2 - g * s12;
            }
            if s2 < TINY {
                g = 0.0;
                sv = 0.0;
            }
            if g < 0.0 {
                sv = s2;
                g = 0.0;
            }
            if g > 1.0 {
                g = 1.0;
                sv = s2 - s12;
            }
            let sv = sv.max(TINY);
            num += (1.0 + g * g * sigma1 / (sv + VIF_NOISE_VARIANCE)).log10();
            den += (1.0 + sigma1 / VIF_NOISE_VARIANCE).log10();
        }
    }
    if den <= 0.0 {
        return Err(Error::Degenerate("reference image has zero local variance".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn image(seed: u64) -> Vec<f32> {
        crate::data::phantom_slice(seed, 64, 64).into_iter().map(|v| v as f32).collect()
    }

    fn noisy(x: &[f32], sigma: f32, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0f32, sigma).unwrap();
        x.iter().map(|v| v + n.sample(&mut rng)).collect()
    }

    fn blur(x: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
        let r = (3.0 * sigma).ceil() as isize;
        let k: Vec<f64> = (-r..=r).map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let s: f64 = k.iter().sum();
        let at = |y: isize, z: isize| x[(y.clamp(0, h as isize - 1) as usize) * w + z.clamp(0, w as isize - 1) as usize];
        let mut rows = vec![0.0f64; h * w];
        for y in 0..h as isize {
            for z in 0..w as isize {
                rows[y as usize * w + z as usize] = (-r..=r).map(|t| k[(t + r) as usize] * at(y, z + t) as f64).sum::<f64>() / s;
            }
        }
        let row = |y: isize, z: usize| rows[(y.clamp(0, h as isize - 1) as usize) * w + z];
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h as isize {
            for z in 0..w {
                out.push(((-r..=r).map(|t| k[(t + r) as usize] * row(y + t, z)).sum::<f64>() / s) as f32);
            }
        }
        out
    }

    #[test]
    fn identical_images_score_one() {
        for seed in 0..5 {
            let x = image(seed);
            assert!((vif_slice(&x, &x, 64, 64).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn noise_and_blur_ordering() {
        let x = image(7);
        let scores: Vec<f64> =
            [0.02f32, 0.08, 0.3].iter().map(|&s| vif_slice(&noisy(&x, s, 8), &x, 64, 64).unwrap()).collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
        assert!(scores.iter().all(|v| (0.0..=1.0).contains(v)));
        let blurred = vif_slice(&blur(&x, 64, 64, 2.0), &x, 64, 64).unwrap();
        assert!(blurred < 1.0 && blurred > scores[2], "{blurred} vs {}", scores[2]);
    }

    #[test]
    fn contrast_boost_stays_bounded() {
        let x = image(9);
        let mean = x.iter().sum::<f32>() / x.len() as f32;
        let boosted: Vec<f32> = x.iter().map(|v| mean + 1.5 * (v - mean)).collect();
        let v = vif_slice(&boosted, &x, 64, 64).unwrap();
        assert!((0.0..=1.0).contains(&v), "{v}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(vif_slice(&[0.0; 16 * 16], &[1.0; 16 * 16], 16, 16).is_err());
        assert!(matches!(vif_slice(&[1.0; 64 * 64], &[1.0; 64 * 64], 64, 64), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gaussian_window_is_normalised() {
        for n in [3, 5, 9, 17] {
            let w = gaussian(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!((w[0] - w[n - 1]).abs() < 1e-18);
        }
    }
}
