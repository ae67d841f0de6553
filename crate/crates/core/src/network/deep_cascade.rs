//! Flat convolutional sub-network of the Deep Cascade baseline: five 3×3
//! convolutions of equal width with ReLU, a linear 1×1 projection back to the
//! input channel count, and a residual connection.

use super::layers::{Activation, ConvLayer, ConvStack, Param};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEEP_CASCADE_HIDDEN_LAYERS: usize = 5;
pub const DEEP_CASCADE_WIDTH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct DeepCascadeBlock<T> {
    c_in: usize,
    width: usize,
    stack: ConvStack<T>,
}

pub fn deep_cascade_layers(c_in: usize, width: usize) -> Vec<ConvLayer> {
    let mut layers = vec![ConvLayer { cin: c_in, cout: width, kernel: 3 }];
    for _ in 1..DEEP_CASCADE_HIDDEN_LAYERS {
        layers.push(ConvLayer { cin: width, cout: width, kernel: 3 });
    }
    layers.push(ConvLayer { cin: width, cout: c_in, kernel: 1 });
    layers
}

impl<T: Real> DeepCascadeBlock<T> {
    pub fn new(c_in: usize, width: usize, seed: u64, prefix: &str) -> Result<Self> {
        if c_in < 2 || c_in % 2 != 0 {
            return Err(Error::Parameter(format!("input channels must be even and >= 2, got {c_in}")));
        }
        if width == 0 {
            return Err(Error::Parameter("block width must be positive".into()));
        }
        let mut acts = vec![Activation::Relu; DEEP_CASCADE_HIDDEN_LAYERS];
        acts.push(Activation::Linear);
        let stack = ConvStack::init(prefix, deep_cascade_layers(c_in, width), &acts, seed);
        Ok(Self { c_in, width, stack })
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn layers(&self) -> &[ConvLayer] {
        self.stack.layers()
    }

    pub fn params(&self) -> &[Param<T>] {
        self.stack.params()
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        self.stack.params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.stack.param_count()
    }

    pub fn zero_all(&mut self) {
        self.stack.zero_all();
    }

    pub fn cast<U: Real>(&self) -> DeepCascadeBlock<U> {
        DeepCascadeBlock { c_in: self.c_in, width: self.width, stack: self.stack.cast() }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, offset: usize) -> Result<Var> {
        let c = tape.value(x).dims4()?.1;
        if c != self.c_in {
            return Err(Error::Shape(format!("block expects {} channels, got {c}", self.c_in)));
        }
        let mut h = x;
        for i in 0..DEEP_CASCADE_HIDDEN_LAYERS {
            h = self.stack.apply(tape, i, h, Activation::Relu, offset)?;
        }
        let out = self.stack.apply(tape, DEEP_CASCADE_HIDDEN_LAYERS, h, Activation::Linear, offset)?;
        tape.add(out, x)
    }
}
