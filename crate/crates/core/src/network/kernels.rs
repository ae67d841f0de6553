//! Forward and adjoint kernels over `[B, C, H, W]` buffers.
//!
//! Work is split across the batch; cross-batch reductions are summed in batch
//! order so results do not depend on the thread count.

use num_complex::Complex;
use rayon::prelude::*;

use crate::scalar::Real;
use crate::transform::{Direction, FourierPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.h * self.w
    }

    fn direct(&self) -> bool {
        self.k == 1 && self.pad == 0
    }
}

fn im2col<T: Real>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let (h, w, k, pad) = (g.h, g.w, g.k, g.pad as isize);
    let hw = h * w;
    for c in 0..g.cin {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * hw..][..hw];
                let (dy, dx) = (ky as isize - pad, kx as isize - pad);
                for y in 0..h {
                    let iy = y as isize + dy;
                    let out = &mut row[y * w..(y + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (x, o) in out.iter_mut().enumerate() {
                        let ix = x as isize + dx;
                        *o = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let (h, w, k, pad) = (g.h, g.w, g.k, g.pad as isize);
    let hw = h * w;
    for c in 0..g.cin {
        let plane = &mut dx[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * hw..][..hw];
                let (oy, ox) = (ky as isize - pad, kx as isize - pad);
                for y in 0..h {
                    let iy = y as isize + oy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for x in 0..w {
                        let ix = x as isize + ox;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] = dst[ix as usize] + row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(g: &ConvGeom, x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let (kk, hw) = (g.patch(), g.pixels());
    let mut out = vec![T::zero(); g.batch * g.cout * hw];
    out.par_chunks_mut(g.cout * hw).enumerate().for_each_init(Vec::new, |cols, (b, out_b)| {
        let x_b = &x[b * g.cin * hw..(b + 1) * g.cin * hw];
        let src = if g.direct() {
            x_b
        } else {
            cols.resize(kk * hw, T::zero());
            im2col(g, x_b, cols);
            &cols[..]
        };
        for (co, row) in out_b.chunks_mut(hw).enumerate() {
            row.fill(bias[co]);
        }
        // SAFETY: weight is cout×kk, src is kk×hw and out_b is cout×hw, all contiguous row-major.
        unsafe {
            T::gemm(
                g.cout,
                kk,
                hw,
                T::one(),
                weight.as_ptr(),
                kk as isize,
                1,
                src.as_ptr(),
                hw as isize,
                1,
                T::one(),
                out_b.as_mut_ptr(),
                hw as isize,
                1,
            );
        }
    });
    out
}

/// Gradients with respect to input, weight and bias. Each is computed only
/// when requested.
#[allow(clippy::type_complexity)]
pub fn conv2d_backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    weight: &[T],
    grad_out: &[T],
    want_input: bool,
    want_weight: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let (kk, hw) = (g.patch(), g.pixels());
    let per_sample: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = (0..g.batch)
        .into_par_iter()
        .map(|b| {
            let x_b = &x[b * g.cin * hw..(b + 1) * g.cin * hw];
            let go = &grad_out[b * g.cout * hw..(b + 1) * g.cout * hw];
            let mut cols = Vec::new();
            let src: &[T] = if g.direct() {
                x_b
            } else if want_weight {
                cols.resize(kk * hw, T::zero());
                im2col(g, x_b, &mut cols);
                &cols
            } else {
                &[]
            };
            let dw = want_weight.then(|| {
                let mut dw = vec![T::zero(); g.cout * kk];
                // SAFETY: go is cout×hw, src read as its transpose hw×kk, dw is cout×kk.
                unsafe {
                    T::gemm(
                        g.cout,
                        hw,
                        kk,
                        T::one(),
                        go.as_ptr(),
                        hw as isize,
                        1,
                        src.as_ptr(),
                        1,
                        hw as isize,
                        T::zero(),
                        dw.as_mut_ptr(),
                        kk as isize,
                        1,
                    );
                }
                dw
            });
            let dx = want_input.then(|| {
                let mut dcols = vec![T::zero(); kk * hw];
                // SAFETY: weight read as its transpose kk×cout, go is cout×hw, dcols is kk×hw.
                unsafe {
                    T::gemm(
                        kk,
                        g.cout,
                        hw,
                        T::one(),
                        weight.as_ptr(),
                        1,
                        kk as isize,
                        go.as_ptr(),
                        hw as isize,
                        1,
                        T::zero(),
                        dcols.as_mut_ptr(),
                        hw as isize,
                        1,
                    );
                }
                if g.direct() {
                    dcols
                } else {
                    let mut dx = vec![T::zero(); g.cin * hw];
                    col2im(g, &dcols, &mut dx);
                    dx
                }
            });
            (dx, dw)
        })
        .collect();

    let mut grad_bias = vec![T::zero(); g.cout];
    for b in 0..g.batch {
        for (co, gb) in grad_bias.iter_mut().enumerate() {
            let row = &grad_out[(b * g.cout + co) * hw..(b * g.cout + co + 1) * hw];
            *gb = *gb + row.iter().copied().sum::<T>();
        }
    }
    let mut grad_input = want_input.then(|| Vec::with_capacity(g.batch * g.cin * hw));
    let mut grad_weight = want_weight.then(|| vec![T::zero(); g.cout * kk]);
    for (dx, dw) in per_sample {
        if let (Some(acc), Some(dx)) = (grad_input.as_mut(), dx) {
            acc.extend_from_slice(&dx);
        }
        if let (Some(acc), Some(dw)) = (grad_weight.as_mut(), dw) {
            acc.iter_mut().zip(dw).for_each(|(a, d)| *a = *a + d);
        }
    }
    (grad_input, grad_weight, grad_bias)
}

/// 2×2 max pooling with stride 2; returns values and flat argmax indices.
/// The first maximum in row-major window order wins ties.
pub fn max_pool2_forward<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); planes * oh * ow];
    let mut arg = vec![0u32; planes * oh * ow];
    out.par_chunks_mut(oh * ow).zip(arg.par_chunks_mut(oh * ow)).enumerate().for_each(|(p, (o, a))| {
        let base = p * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let first = base + 2 * y * w + 2 * xx;
                let mut best = first;
                for idx in [first + 1, first + w, first + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                o[y * ow + xx] = x[best];
                a[y * ow + xx] = best as u32;
            }
        }
    });
    (out, arg)
}

pub fn max_pool2_backward<T: Real>(grad_out: &[T], argmax: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (g, &i) in grad_out.iter().zip(argmax) {
        dx[i as usize] = dx[i as usize] + *g;
    }
    dx
}

/// Nearest-neighbour ×2 up-sampling of every `h × w` plane.
pub fn upsample2_forward<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * oh * ow];
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(p, o)| {
        let src = &x[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                o[y * ow + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    });
    out
}

pub fn upsample2_backward<T: Real>(grad_out: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let ow = 2 * w;
    let mut dx = vec![T::zero(); planes * h * w];
    dx.par_chunks_mut(h * w).enumerate().for_each(|(p, d)| {
        let g = &grad_out[p * 4 * h * w..(p + 1) * 4 * h * w];
        for y in 0..h {
            for xx in 0..w {
                let i = 2 * y * ow + 2 * xx;
                d[y * w + xx] = g[i] + g[i + 1] + g[i + ow] + g[i + ow + 1];
            }
        }
    });
    dx
}

/// Spatial zero padding: `[top, bottom, left, right]`.
pub fn pad_forward<T: Real>(x: &[T], planes: usize, h: usize, w: usize, pad: [usize; 4]) -> Vec<T> {
    let (oh, ow) = (h + pad[0] + pad[1], w + pad[2] + pad[3]);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        for y in 0..h {
            let dst = (p * oh + y + pad[0]) * ow + pad[2];
            out[dst..dst + w].copy_from_slice(&x[(p * h + y) * w..(p * h + y + 1) * w]);
        }
    }
    out
}

/// Adjoint of [`pad_forward`]: crops the interior back out. `h × w` is the
/// unpadded extent.
pub fn crop_forward<T: Real>(x: &[T], planes: usize, h: usize, w: usize, pad: [usize; 4]) -> Vec<T> {
    let (ph, pw) = (h + pad[0] + pad[1], w + pad[2] + pad[3]);
    let mut out = Vec::with_capacity(planes * h * w);
    for p in 0..planes {
        for y in 0..h {
            let src = (p * ph + y + pad[0]) * pw + pad[2];
            out.extend_from_slice(&x[src..src + w]);
        }
    }
    out
}

/// Centered orthonormal transform of channel-packed data: channels `2k` and
/// `2k + 1` hold the real and imaginary part of complex channel `k`.
pub fn packed_fft<T: Real>(x: &[T], batch: usize, channels: usize, h: usize, w: usize, inverse: bool) -> Vec<T> {
    let direction = if inverse { Direction::Inverse } else { Direction::Forward };
    let plan = FourierPlan::<T>::new(h, w, direction).expect("plane validated by caller");
    let hw = h * w;
    let mut out = vec![T::zero(); batch * channels * hw];
    out.par_chunks_mut(2 * hw).enumerate().for_each_init(
        || (Vec::new(), Vec::new()),
        |(buf, scratch), (pair, dst)| {
            let src = &x[pair * 2 * hw..(pair + 1) * 2 * hw];
            buf.clear();
            buf.extend((0..hw).map(|i| Complex::new(src[i], src[hw + i])));
            plan.apply(buf, scratch);
            let (re, im) = dst.split_at_mut(hw);
            for ((z, r), i) in buf.iter().zip(re).zip(im) {
                *r = z.re;
                *i = z.im;
            }
        },
    );
    out
}
