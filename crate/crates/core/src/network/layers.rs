use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::array::Array;
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::scalar::Real;
use crate::seed::derive_seed;

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Array<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl ConvLayer {
    pub fn param_count(&self) -> usize {
        self.kernel * self.kernel * self.cin * self.cout + self.cout
    }
}

/// Activation applied after a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// Ordered convolution layers with one weight and one bias tensor each.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvStack<T> {
    layers: Vec<ConvLayer>,
    params: Vec<Param<T>>,
}

impl<T: Real> ConvStack<T> {
    /// Weights are uniform with a fan-in scaled bound (`sqrt(6 / fan_in)` before
    /// ReLU, `sqrt(3 / fan_in)` before a linear output); biases start at zero.
    pub fn init(prefix: &str, layers: Vec<ConvLayer>, activations: &[Activation], seed: u64) -> Self {
        let mut params = Vec::with_capacity(2 * layers.len());
        for (i, (layer, act)) in layers.iter().zip(activations).enumerate() {
            let fan_in = (layer.cin * layer.kernel * layer.kernel) as f64;
            let gain = match act {
                Activation::Relu => 6.0,
                Activation::Linear => 3.0,
            };
            let bound = (gain / fan_in).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
            let shape = [layer.cout, layer.cin, layer.kernel, layer.kernel];
            let n: usize = shape.iter().product();
            let w = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-bound..bound))).collect();
            params.push(Param { name: format!("{prefix}conv{i}.weight"), value: Array::from_vec(&shape, w).unwrap() });
            params.push(Param { name: format!("{prefix}conv{i}.bias"), value: Array::zeros(&[layer.cout]) });
        }
        Self { layers, params }
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    /// Applies layer `i` and its activation. Parameter ids start at `offset`.
    pub fn apply(&self, tape: &mut Tape<T>, i: usize, x: Var, act: Activation, offset: usize) -> Result<Var> {
        let w = tape.param(offset + 2 * i, self.params[2 * i].value.clone());
        let b = tape.param(offset + 2 * i + 1, self.params[2 * i + 1].value.clone());
        let y = tape.conv2d(x, w, b)?;
        Ok(match act {
            Activation::Relu => tape.relu(y),
            Activation::Linear => y,
        })
    }

    pub fn zero_all(&mut self) {
        for p in &mut self.params {
            p.value.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn cast<U: Real>(&self) -> ConvStack<U> {
        ConvStack {
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| Param { name: p.name.clone(), value: p.value.cast() }).collect(),
        }
    }
}
