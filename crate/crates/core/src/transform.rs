//! Centered, orthonormal 2-D Fourier transforms over the trailing two axes,
//! complex/real channel packing and root-sum-of-squares coil combination.
//!
//! The zero frequency sits at index `n / 2` along each axis (the `fftshift`
//! convention); for odd `n` that is `(n - 1) / 2`.

use std::sync::Arc;

use num_complex::{Complex, Complex32};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::data::{DatasetMeta, ImageVolume, KSpaceVolume};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{ComplexTensor, RealTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A reusable transform for one `ny × nz` plane size and direction.
#[derive(Clone)]
pub struct FourierPlan<T: Real> {
    ny: usize,
    nz: usize,
    direction: Direction,
    along_y: Arc<dyn Fft<T>>,
    along_z: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> FourierPlan<T> {
    pub fn new(ny: usize, nz: usize, direction: Direction) -> Result<Self> {
        if ny < 2 || nz < 2 {
            return Err(Error::Shape(format!("transform plane must be at least 2x2, got {ny}x{nz}")));
        }
        let mut planner = FftPlanner::new();
        let (along_y, along_z) = match direction {
            Direction::Forward => (planner.plan_fft_forward(ny), planner.plan_fft_forward(nz)),
            Direction::Inverse => (planner.plan_fft_inverse(ny), planner.plan_fft_inverse(nz)),
        };
        let scale = T::one() / T::from_usize(ny * nz).unwrap().sqrt();
        Ok(Self { ny, nz, direction, along_y, along_z, scale })
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn plane_len(&self) -> usize {
        self.ny * self.nz
    }

    /// Transforms one plane in place. `scratch` is resized as needed.
    pub fn apply(&self, plane: &mut [Complex<T>], scratch: &mut Vec<Complex<T>>) {
        let (ny, nz) = (self.ny, self.nz);
        debug_assert_eq!(plane.len(), ny * nz);
        scratch.resize(ny * nz, Complex::new(T::zero(), T::zero()));

        // ifftshift into scratch
        let (hy, hz) = (ny / 2, nz / 2);
        for y in 0..ny {
            let sy = (y + hy) % ny;
            for z in 0..nz {
                scratch[y * nz + z] = plane[sy * nz + (z + hz) % nz];
            }
        }
        self.along_z.process(scratch);

        // columns: transpose into `plane`, transform rows of length ny, transpose back
        for y in 0..ny {
            for z in 0..nz {
                plane[z * ny + y] = scratch[y * nz + z];
            }
        }
        self.along_y.process(plane);
        for z in 0..nz {
            for y in 0..ny {
                scratch[y * nz + z] = plane[z * ny + y];
            }
        }

        // fftshift back into the plane, with orthonormal scaling
        let (sy0, sz0) = (ny - hy, nz - hz);
        for y in 0..ny {
            let sy = (y + sy0) % ny;
            for z in 0..nz {
                plane[y * nz + z] = scratch[sy * nz + (z + sz0) % nz] * self.scale;
            }
        }
    }

    /// Transforms every plane of a flat buffer holding consecutive planes.
    pub fn apply_all(&self, data: &mut [Complex<T>]) {
        let len = self.plane_len();
        debug_assert_eq!(data.len() % len, 0);
        data.par_chunks_mut(len).for_each_init(Vec::new, |scratch, plane| self.apply(plane, scratch));
    }
}

fn transform_tensor(x: &ComplexTensor, direction: Direction) -> Result<ComplexTensor> {
    let (ny, nz) = x.plane();
    let plan = FourierPlan::<f32>::new(ny, nz, direction)?;
    let mut out = x.clone();
    plan.apply_all(out.data_mut());
    Ok(out)
}

/// Forward centered transform over the trailing two axes of any complex tensor.
pub fn fft2c_tensor(x: &ComplexTensor) -> Result<ComplexTensor> {
    transform_tensor(x, Direction::Forward)
}

/// Inverse centered transform over the trailing two axes of any complex tensor.
pub fn ifft2c_tensor(x: &ComplexTensor) -> Result<ComplexTensor> {
    transform_tensor(x, Direction::Inverse)
}

/// Image-domain coil images to k-space.
pub fn fft2c(x: &ImageVolume, meta: DatasetMeta) -> Result<KSpaceVolume> {
    let coils = x.per_coil().ok_or_else(|| Error::Parameter("fft2c needs per-coil complex images".into()))?;
    KSpaceVolume::new(fft2c_tensor(coils)?, meta)
}

/// k-space to per-coil images.
pub fn ifft2c(x: &KSpaceVolume) -> Result<ImageVolume> {
    Ok(ImageVolume::PerCoil(ifft2c_tensor(x.data())?))
}

/// Splits complex channels into interleaved real channels: `[.., C, Ny, Nz]`
/// becomes `[.., 2C, Ny, Nz]` with real parts at even and imaginary parts at
/// odd channel indices.
pub fn complex_to_channels(x: &ComplexTensor) -> Result<RealTensor> {
    let shape = x.shape();
    if shape.len() < 3 {
        return Err(Error::Shape(format!("expected [.., C, Ny, Nz], got {shape:?}")));
    }
    let (ny, nz) = x.plane();
    let plane = ny * nz;
    let mut out_shape = shape.to_vec();
    let c = shape.len() - 3;
    out_shape[c] *= 2;
    let mut out = vec![0.0f32; x.len() * 2];
    for (src, dst) in x.data().chunks(plane).zip(out.chunks_mut(2 * plane)) {
        let (re, im) = dst.split_at_mut(plane);
        for ((z, r), i) in src.iter().zip(re).zip(im) {
            *r = z.re;
            *i = z.im;
        }
    }
    RealTensor::from_vec(&out_shape, out)
}

/// Inverse of [`complex_to_channels`].
pub fn channels_to_complex(x: &RealTensor) -> Result<ComplexTensor> {
    let shape = x.shape();
    if shape.len() < 3 {
        return Err(Error::Shape(format!("expected [.., 2C, Ny, Nz], got {shape:?}")));
    }
    let c = shape.len() - 3;
    if shape[c] % 2 != 0 {
        return Err(Error::Shape(format!("channel count {} is odd", shape[c])));
    }
    let plane = shape[c + 1] * shape[c + 2];
    let mut out_shape = shape.to_vec();
    out_shape[c] /= 2;
    let mut out = Vec::with_capacity(x.len() / 2);
    for pair in x.data().chunks(2 * plane) {
        let (re, im) = pair.split_at(plane);
        out.extend(re.iter().zip(im).map(|(&r, &i)| Complex32::new(r, i)));
    }
    ComplexTensor::from_vec(&out_shape, out)
}

/// Root sum of squares over the coil axis of a `[Ns, Nc, Ny, Nz]` tensor.
pub fn sum_of_squares_tensor(x: &ComplexTensor) -> Result<RealTensor> {
    let shape = x.shape();
    if shape.len() != 4 || shape[1] == 0 {
        return Err(Error::Shape(format!("expected [Ns, Nc>=1, Ny, Nz], got {shape:?}")));
    }
    let (ns, nc, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let mut out = vec![0.0f32; ns * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(s, dst)| {
        let slice = &x.data()[s * nc * plane..(s + 1) * nc * plane];
        for (p, d) in dst.iter_mut().enumerate() {
            let acc: f64 = (0..nc).map(|c| slice[c * plane + p].norm_sqr() as f64).sum();
            *d = acc.sqrt() as f32;
        }
    });
    RealTensor::from_vec(&[ns, shape[2], shape[3]], out)
}

pub fn sum_of_squares(x: &ImageVolume) -> Result<ImageVolume> {
    let coils = x.per_coil().ok_or_else(|| Error::Parameter("sum of squares needs per-coil images".into()))?;
    Ok(ImageVolume::Combined(sum_of_squares_tensor(coils)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> ComplexTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        let data = (0..n).map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        ComplexTensor::from_vec(shape, data).unwrap()
    }

    fn norm(x: &ComplexTensor) -> f64 {
        x.data().iter().map(|z| z.norm_sqr() as f64).sum::<f64>().sqrt()
    }

    fn rel_diff(a: &ComplexTensor, b: &ComplexTensor) -> f64 {
        let d: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm_sqr() as f64).sum();
        d.sqrt() / norm(b)
    }

    #[test]
    fn round_trip_is_identity() {
        for &(ny, nz) in &[(64, 64), (33, 20), (218, 170), (7, 5)] {
            let x = random_tensor(&[2, 3, ny, nz], 11);
            let back = ifft2c_tensor(&fft2c_tensor(&x).unwrap()).unwrap();
            assert!(rel_diff(&back, &x) < 1e-6, "{ny}x{nz}");
        }
    }

    #[test]
    fn centered_impulse_gives_flat_spectrum() {
        for &(ny, nz) in &[(16, 16), (15, 12)] {
            let mut x = ComplexTensor::zeros(&[1, 1, ny, nz]);
            x.data_mut()[(ny / 2) * nz + nz / 2] = Complex32::new(1.0, 0.0);
            let k = fft2c_tensor(&x).unwrap();
            let expected = 1.0 / ((ny * nz) as f32).sqrt();
            for z in k.data() {
                assert!((z.re - expected).abs() < 1e-7 && z.im.abs() < 1e-7);
            }
        }
    }

    #[test]
    fn parseval() {
        let x = random_tensor(&[1, 1, 64, 64], 5);
        let k = fft2c_tensor(&x).unwrap();
        assert!(((norm(&k) - norm(&x)) / norm(&x)).abs() < 1e-6);
    }

    #[test]
    fn matches_direct_dft() {
        // direct O(N^2) DFT with explicit centering
        let (ny, nz) = (6, 5);
        let x = random_tensor(&[1, 1, ny, nz], 9);
        let k = fft2c_tensor(&x).unwrap();
        let (cy, cz) = ((ny / 2) as f64, (nz / 2) as f64);
        for ky in 0..ny {
            for kz in 0..nz {
                let mut acc = num_complex::Complex64::new(0.0, 0.0);
                for y in 0..ny {
                    for z in 0..nz {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((ky as f64 - cy) * (y as f64 - cy) / ny as f64
                                + (kz as f64 - cz) * (z as f64 - cz) / nz as f64);
                        let v = x.data()[y * nz + z];
                        acc += num_complex::Complex64::new(v.re as f64, v.im as f64)
                            * num_complex::Complex64::from_polar(1.0, phase);
                    }
                }
                acc /= ((ny * nz) as f64).sqrt();
                let got = k.data()[ky * nz + kz];
                assert!((got.re as f64 - acc.re).abs() < 1e-5 && (got.im as f64 - acc.im).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn linear_and_channel_independent() {
        let x = random_tensor(&[1, 3, 16, 16], 1);
        let y = random_tensor(&[1, 3, 16, 16], 2);
        let (a, b) = (Complex32::new(0.3, -1.2), Complex32::new(-0.7, 0.4));
        let combo = ComplexTensor::from_vec(
            x.shape(),
            x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        let (fx, fy) = (fft2c_tensor(&x).unwrap(), fft2c_tensor(&y).unwrap());
        let expected = ComplexTensor::from_vec(
            x.shape(),
            fx.data().iter().zip(fy.data()).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        assert!(rel_diff(&fft2c_tensor(&combo).unwrap(), &expected) < 1e-6);

        let mut zeroed = x.clone();
        zeroed.data_mut()[256..512].iter_mut().for_each(|z| *z = Complex32::new(0.0, 0.0));
        let out = fft2c_tensor(&zeroed).unwrap();
        assert!(out.data()[256..512].iter().all(|z| z.norm() == 0.0));
        assert_eq!(&out.data()[..256], &fx.data()[..256]);
        assert_eq!(&out.data()[512..], &fx.data()[512..]);
    }

    #[test]
    fn packing_definition() {
        let x = ComplexTensor::from_vec(&[1, 1, 1, 1], vec![Complex32::new(3.0, 4.0)]).unwrap();
        assert_eq!(complex_to_channels(&x).unwrap().data(), &[3.0, 4.0]);
        let real = ComplexTensor::from_vec(&[1, 2, 2, 2], (0..8).map(|v| Complex32::new(v as f32, 0.0)).collect())
            .unwrap();
        let packed = complex_to_channels(&real).unwrap();
        assert_eq!(packed.shape(), &[1, 4, 2, 2]);
        assert!(packed.data()[4..8].iter().all(|&v| v == 0.0));
        assert!(packed.data()[12..16].iter().all(|&v| v == 0.0));
        let odd = RealTensor::zeros(&[1, 3, 2, 2]);
        assert!(matches!(channels_to_complex(&odd), Err(Error::Shape(_))));
    }

    #[test]
    fn sos_matches_scalar_loop() {
        let x = random_tensor(&[2, 8, 12, 10], 3);
        let sos = sum_of_squares_tensor(&x).unwrap();
        for s in 0..2 {
            for p in 0..120 {
                let mut acc = 0.0f64;
                for c in 0..8 {
                    let v = x.data()[(s * 8 + c) * 120 + p];
                    acc += (v.re as f64).powi(2) + (v.im as f64).powi(2);
                }
                assert!((sos.data()[s * 120 + p] as f64 - acc.sqrt()).abs() < 1e-6);
            }
        }
        let pair = ComplexTensor::from_vec(&[1, 2, 1, 1], vec![Complex32::new(3.0, 0.0), Complex32::new(0.0, 4.0)])
            .unwrap();
        assert_eq!(sum_of_squares_tensor(&pair).unwrap().data(), &[5.0]);
    }

    #[test]
    fn sos_ignores_pixelwise_phase() {
        let x = random_tensor(&[1, 4, 8, 8], 21);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phases: Vec<f32> = (0..64).map(|_| rng.random_range(0.0..6.28)).collect();
        let mut rotated = x.clone();
        for (i, z) in rotated.data_mut().iter_mut().enumerate() {
            *z *= Complex32::from_polar(1.0, phases[i % 64]);
        }
        let a = sum_of_squares_tensor(&x).unwrap();
        let b = sum_of_squares_tensor(&rotated).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() <= 1e-6 * p.max(1.0));
        }
    }

    proptest::proptest! {
        #[test]
        fn packing_round_trip(c in 1usize..4, ny in 1usize..6, nz in 1usize..6, seed in 0u64..1000) {
            let x = random_tensor(&[2, c, ny, nz], seed);
            let back = channels_to_complex(&complex_to_channels(&x).unwrap()).unwrap();
            proptest::prop_assert_eq!(back, x);
        }
    }
}
