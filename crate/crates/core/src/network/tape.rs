//! Reverse-mode differentiation over a recorded list of operations.
//!
//! Nodes are appended in evaluation order, so walking the list backwards is a
//! valid topological order and visits each operation exactly once.

use super::array::Array;
use super::kernels::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Leaf,
    Param(usize),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    Upsample2 { x: Var },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Relu { x: Var },
    Fft { x: Var, inverse: bool },
    Pad { x: Var, pad: [usize; 4] },
    Crop { x: Var, pad: [usize; 4] },
    Reshape { x: Var },
    Mse { a: Var, b: Var, samples: usize },
    Sum { x: Var },
}

struct Node<T> {
    value: Array<T>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    inference: bool,
}

/// Gradients of a scalar with respect to every recorded value that needs one.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(usize, Var)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of leaf or parameter `v`, or `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of parameter `id`; disconnected parameters yield zeros of length `len`.
    pub fn param(&self, id: usize, len: usize) -> Vec<T> {
        let mut out = vec![T::zero(); len];
        for &(pid, var) in &self.params {
            if pid == id {
                if let Some(g) = self.get(var) {
                    out.iter_mut().zip(g).for_each(|(o, g)| *o = *o + *g);
                }
            }
        }
        out
    }
}

fn same_shape<T: Real>(a: &Array<T>, b: &Array<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, g: &[T]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, g)| *a = *a + *g),
        None => *slot = Some(g.to_vec()),
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), inference: false }
    }

    /// A tape whose parameters are recorded as constants; `backward` is then
    /// meaningless but forward passes skip gradient bookkeeping.
    pub fn inference() -> Self {
        Self { nodes: Vec::new(), inference: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array<T>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A free variable that receives a gradient.
    pub fn leaf(&mut self, value: Array<T>) -> Var {
        let grad = !self.inference;
        self.push(value, Op::Leaf, grad)
    }

    /// A model parameter identified by `id` for gradient collection.
    pub fn param(&mut self, id: usize, value: Array<T>) -> Var {
        if self.inference {
            return self.constant(value);
        }
        self.push(value, Op::Param(id), true)
    }

    /// "Same" convolution with odd square kernels, stride 1, zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, k, k2) = self.value(w).dims4()?;
        if wcin != cin || k != k2 || k % 2 == 0 || self.value(b).shape() != [cout] {
            return Err(Error::Shape(format!(
                "conv2d: input {:?}, weight {:?}, bias {:?}",
                self.value(x).shape(),
                self.value(w).shape(),
                self.value(b).shape()
            )));
        }
        let geom = ConvGeom { batch, cin, cout, h, w: wd, k, pad: k / 2 };
        let out = kernels::conv2d_forward(&geom, self.value(x).data(), self.value(w).data(), self.value(b).data());
        let value = Array::from_vec(&[batch, cout, h, wd], out)?;
        let grad = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, grad))
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("max pool needs even extents, got {h}x{w}")));
        }
        let (out, argmax) = kernels::max_pool2_forward(self.value(x).data(), b * c, h, w);
        let value = Array::from_vec(&[b, c, h / 2, w / 2], out)?;
        let grad = self.needs(x);
        let argmax = if grad { argmax } else { Vec::new() };
        Ok(self.push(value, Op::MaxPool2 { x, argmax }, grad))
    }

    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        let out = kernels::upsample2_forward(self.value(x).data(), b * c, h, w);
        let value = Array::from_vec(&[b, c, 2 * h, 2 * w], out)?;
        let grad = self.needs(x);
        Ok(self.push(value, Op::Upsample2 { x }, grad))
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ba, ca, ha, wa) = self.value(a).dims4()?;
        let (bb, cb, hb, wb) = self.value(b).dims4()?;
        if (ba, ha, wa) != (bb, hb, wb) {
            return Err(Error::Shape(format!(
                "concat: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let (pa, pb) = (ca * ha * wa, cb * hb * wb);
        let mut out = Vec::with_capacity(ba * (pa + pb));
        for i in 0..ba {
            out.extend_from_slice(&self.value(a).data()[i * pa..(i + 1) * pa]);
            out.extend_from_slice(&self.value(b).data()[i * pb..(i + 1) * pb]);
        }
        let value = Array::from_vec(&[ba, ca + cb, ha, wa], out)?;
        let grad = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Concat { a, b }, grad))
    }

    fn zip_with(&self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T) -> Result<Array<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, what)?;
        Array::from_vec(va.shape(), va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with(a, b, "add", |x, y| x + y)?;
        let grad = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add { a, b }, grad))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let grad = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub { a, b }, grad))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let grad = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul { a, b }, grad))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = Array::from_vec(v.shape(), v.data().iter().map(|&t| t.max(T::zero())).collect()).unwrap();
        let grad = self.needs(x);
        self.push(value, Op::Relu { x }, grad)
    }

    /// Centered orthonormal 2-D transform of channel-packed complex data
    /// (`[B, 2C, H, W]`, real/imaginary in consecutive channels).
    pub fn fft2c(&mut self, x: Var, inverse: bool) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        if c % 2 != 0 || h < 2 || w < 2 {
            return Err(Error::Shape(format!("fft2c needs [B, 2C, H>=2, W>=2], got {:?}", self.value(x).shape())));
        }
        let out = kernels::packed_fft(self.value(x).data(), b, c, h, w, inverse);
        let value = Array::from_vec(&[b, c, h, w], out)?;
        let grad = self.needs(x);
        Ok(self.push(value, Op::Fft { x, inverse }, grad))
    }

    /// Spatial zero padding by `[top, bottom, left, right]`.
    pub fn pad(&mut self, x: Var, pad: [usize; 4]) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        let out = kernels::pad_forward(self.value(x).data(), b * c, h, w, pad);
        let value = Array::from_vec(&[b, c, h + pad[0] + pad[1], w + pad[2] + pad[3]], out)?;
        let grad = self.needs(x);
        Ok(self.push(value, Op::Pad { x, pad }, grad))
    }

    /// Removes `[top, bottom, left, right]` borders.
    pub fn crop(&mut self, x: Var, pad: [usize; 4]) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        if pad[0] + pad[1] >= h || pad[2] + pad[3] >= w {
            return Err(Error::Shape(format!("cannot crop {pad:?} from {h}x{w}")));
        }
        let (ih, iw) = (h - pad[0] - pad[1], w - pad[2] - pad[3]);
        let out = kernels::crop_forward(self.value(x).data(), b * c, ih, iw, pad);
        let value = Array::from_vec(&[b, c, ih, iw], out)?;
        let grad = self.needs(x);
        Ok(self.push(value, Op::Crop { x, pad }, grad))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let grad = self.needs(x);
        Ok(self.push(value, Op::Reshape { x }, grad))
    }

    /// `Σ (a - b)² / B`, with `B` the leading (sample) extent.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, "mse")?;
        let samples = va.shape().first().copied().unwrap_or(1).max(1);
        let total: T = va.data().iter().zip(vb.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let value = Array::scalar(total / T::from_usize(samples).unwrap());
        let grad = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mse { a, b, samples }, grad))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Array::scalar(self.value(x).data().iter().copied().sum());
        let grad = self.needs(x);
        self.push(value, Op::Sum { x }, grad)
    }

    /// Propagates `d loss / d v` to every node that needs a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!("backward needs a scalar, got {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params = Vec::new();
        if self.needs(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if let Op::Param(id) = node.op {
                params.push((id, Var(idx)));
            }
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            // intermediate gradients are dropped once consumed
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let want = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Constant | Op::Leaf | Op::Param(_) => {}
            Op::Conv2d { x, w, b, geom } => {
                let (dx, dw, db) = kernels::conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    want(*x),
                    want(*w),
                );
                if let Some(dx) = dx {
                    accumulate(&mut grads[x.0], &dx);
                }
                if let Some(dw) = dw {
                    accumulate(&mut grads[w.0], &dw);
                }
                if want(*b) {
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let dx = kernels::max_pool2_backward(g, argmax, self.value(*x).len());
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Upsample2 { x } => {
                let (b, c, h, w) = self.value(*x).dims4().unwrap();
                accumulate(&mut grads[x.0], &kernels::upsample2_backward(g, b * c, h, w));
            }
            Op::Concat { a, b } => {
                let (batch, ca, h, w) = self.value(*a).dims4().unwrap();
                let cb = self.value(*b).dims4().unwrap().1;
                let (pa, pb) = (ca * h * w, cb * h * w);
                if want(*a) {
                    let da: Vec<T> = (0..batch).flat_map(|i| &g[i * (pa + pb)..i * (pa + pb) + pa]).copied().collect();
                    accumulate(&mut grads[a.0], &da);
                }
                if want(*b) {
                    let db: Vec<T> =
                        (0..batch).flat_map(|i| &g[i * (pa + pb) + pa..(i + 1) * (pa + pb)]).copied().collect();
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::Add { a, b } => {
                if want(*a) {
                    accumulate(&mut grads[a.0], g);
                }
                if want(*b) {
                    accumulate(&mut grads[b.0], g);
                }
            }
            Op::Sub { a, b } => {
                if want(*a) {
                    accumulate(&mut grads[a.0], g);
                }
                if want(*b) {
                    let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                    accumulate(&mut grads[b.0], &neg);
                }
            }
            Op::Mul { a, b } => {
                if want(*a) {
                    let da: Vec<T> = g.iter().zip(self.value(*b).data()).map(|(&g, &y)| g * y).collect();
                    accumulate(&mut grads[a.0], &da);
                }
                if want(*b) {
                    let db: Vec<T> = g.iter().zip(self.value(*a).data()).map(|(&g, &x)| g * x).collect();
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::Relu { x } => {
                let dx: Vec<T> = g
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Fft { x, inverse } => {
                // orthonormal, so the adjoint is the opposite-direction transform
                let (b, c, h, w) = self.value(*x).dims4().unwrap();
                accumulate(&mut grads[x.0], &kernels::packed_fft(g, b, c, h, w, !inverse));
            }
            Op::Pad { x, pad } => {
                let (b, c, h, w) = self.value(*x).dims4().unwrap();
                accumulate(&mut grads[x.0], &kernels::crop_forward(g, b * c, h, w, *pad));
            }
            Op::Crop { x, pad } => {
                let (b, c, _, _) = self.value(*x).dims4().unwrap();
                let (_, _, h, w) = node.value.dims4().unwrap();
                accumulate(&mut grads[x.0], &kernels::pad_forward(g, b * c, h, w, *pad));
            }
            Op::Reshape { x } => accumulate(&mut grads[x.0], g),
            Op::Mse { a, b, samples } => {
                let scale = g[0] * T::from_f64_lossy(2.0) / T::from_usize(*samples).unwrap();
                let diff: Vec<T> =
                    self.value(*a).data().iter().zip(self.value(*b).data()).map(|(&x, &y)| (x - y) * scale).collect();
                if want(*a) {
                    accumulate(&mut grads[a.0], &diff);
                }
                if want(*b) {
                    let neg: Vec<T> = diff.iter().map(|&v| -v).collect();
                    accumulate(&mut grads[b.0], &neg);
                }
            }
            Op::Sum { x } => {
                let dx = vec![g[0]; self.value(*x).len()];
                accumulate(&mut grads[x.0], &dx);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Array<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Array::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Checks the reverse-mode gradient of `⟨f(inputs), r⟩` against central
    /// differences for every input element.
    fn check(inputs: &[Array<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
        let project = |tape: &mut Tape<f64>, vars: &[Var]| {
            let y = f(tape, vars);
            let r = tape.constant(random(tape.value(y).shape(), 99));
            let p = tape.mul(y, r).unwrap();
            tape.sum(p)
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
        let loss = project(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();
        let eval = |inputs: &[Array<f64>]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|a| tape.constant(a.clone())).collect();
            let loss = project(&mut tape, &vars);
            tape.value(loss).item()
        };
        let h = 1e-6;
        for (k, var) in vars.iter().enumerate() {
            let g = grads.get(*var).expect("input is connected");
            for i in 0..inputs[k].len() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[i] += h;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[i] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "input {k}[{i}]: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn conv2d_gradients() {
        check(&[random(&[2, 3, 5, 4], 1), random(&[2, 3, 3, 3], 2), random(&[2], 3)], |t, v| {
            t.conv2d(v[0], v[1], v[2]).unwrap()
        });
        check(&[random(&[1, 2, 4, 4], 4), random(&[3, 2, 1, 1], 5), random(&[3], 6)], |t, v| {
            t.conv2d(v[0], v[1], v[2]).unwrap()
        });
    }

    #[test]
    fn structural_gradients() {
        check(&[random(&[2, 2, 4, 6], 7)], |t, v| t.max_pool2(v[0]).unwrap());
        check(&[random(&[2, 2, 3, 2], 8)], |t, v| t.upsample2(v[0]).unwrap());
        check(&[random(&[2, 1, 3, 3], 9), random(&[2, 2, 3, 3], 10)], |t, v| t.concat(v[0], v[1]).unwrap());
        check(&[random(&[1, 2, 3, 3], 11)], |t, v| t.pad(v[0], [1, 2, 0, 1]).unwrap());
        check(&[random(&[1, 2, 6, 5], 12)], |t, v| t.crop(v[0], [1, 2, 0, 1]).unwrap());
        check(&[random(&[2, 3, 2], 13)], |t, v| t.reshape(v[0], &[3, 4]).unwrap());
    }

    #[test]
    fn elementwise_gradients() {
        let (a, b) = (random(&[2, 5], 14), random(&[2, 5], 15));
        check(&[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]).unwrap());
        check(&[a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]).unwrap());
        check(&[a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]).unwrap());
        check(&[a.clone()], |t, v| t.relu(v[0]));
        check(&[a, b], |t, v| t.mse(v[0], v[1]).unwrap());
    }

    #[test]
    fn fourier_gradients() {
        check(&[random(&[2, 4, 4, 6], 16)], |t, v| t.fft2c(v[0], false).unwrap());
        check(&[random(&[1, 2, 5, 3], 17)], |t, v| t.fft2c(v[0], true).unwrap());
    }

    #[test]
    fn mse_divides_by_sample_count() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Array::from_vec(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.constant(Array::zeros(&[2, 1, 1, 2]));
        let l = tape.mse(a, b).unwrap();
        assert_eq!(tape.value(l).item(), 15.0);
    }

    #[test]
    fn sum_of_param_has_unit_gradient_and_constants_have_none() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(3, random(&[4, 2], 18));
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.param(3, 8), vec![1.0; 8]);
        assert_eq!(g.param(4, 8), vec![0.0; 8]);

        let mut tape = Tape::<f64>::new();
        let p = tape.param(0, random(&[3], 19));
        let c = tape.constant(Array::scalar(2.0));
        let g = tape.backward(c).unwrap();
        assert!(g.get(p).is_none());
        assert_eq!(g.param(0, 3), vec![0.0; 3]);
    }

    #[test]
    fn shared_parameter_gradients_accumulate() {
        let mut tape = Tape::<f64>::new();
        let x = Array::from_vec(&[2], vec![1.5, -2.0]).unwrap();
        let p1 = tape.param(0, x.clone());
        let p2 = tape.param(0, x);
        let y = tape.mul(p1, p2).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.param(0, 2), vec![3.0, -4.0]);
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let (x, w, b) = (random(&[2, 3, 6, 5], 20), random(&[4, 3, 3, 3], 21), random(&[4], 22));
        let mut tape = Tape::inference();
        let (vx, vw, vb) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
        let y = tape.conv2d(vx, vw, vb).unwrap();
        let y = tape.value(y).data();
        let (xd, wd) = (x.data(), w.data());
        for n in 0..2 {
            for o in 0..4 {
                for i in 0..6 {
                    for j in 0..5 {
                        let mut acc = b.data()[o];
                        for c in 0..3 {
                            for di in 0..3 {
                                for dj in 0..3 {
                                    let (ii, jj) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                                    if (0..6).contains(&ii) && (0..5).contains(&jj) {
                                        acc += xd[((n * 3 + c) * 6 + ii as usize) * 5 + jj as usize]
                                            * wd[((o * 3 + c) * 3 + di) * 3 + dj];
                                    }
                                }
                            }
                        }
                        let got = y[((n * 4 + o) * 6 + i) * 5 + j];
                        assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                    }
                }
            }
        }
    }
}
