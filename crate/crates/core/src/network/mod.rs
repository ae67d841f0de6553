//! Minimal reverse-mode differentiation engine and the sub-networks built on it.

mod array;
pub mod checkpoint;
mod deep_cascade;
pub mod kernels;
mod layers;
mod tape;
mod unet;

pub use array::Array;
pub use checkpoint::Checkpoint;
pub use deep_cascade::{deep_cascade_layers, DeepCascadeBlock, DEEP_CASCADE_HIDDEN_LAYERS, DEEP_CASCADE_WIDTH};
pub use layers::{Activation, ConvLayer, ConvStack, Param};
pub use tape::{Gradients, Tape, Var};
pub use unet::{build_unet, unet_layers, UNet, UNetWidths, UNET_CONV_LAYERS, UNET_GRANULARITY};

use crate::error::Result;
use crate::scalar::Real;

/// One trainable block of a cascade.
#[derive(Clone, Debug, PartialEq)]
pub enum Subnet<T> {
    UNet(UNet<T>),
    DeepCascade(DeepCascadeBlock<T>),
}

impl<T: Real> Subnet<T> {
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, offset: usize) -> Result<Var> {
        match self {
            Subnet::UNet(n) => n.forward(tape, x, offset),
            Subnet::DeepCascade(n) => n.forward(tape, x, offset),
        }
    }

    pub fn c_in(&self) -> usize {
        match self {
            Subnet::UNet(n) => n.c_in(),
            Subnet::DeepCascade(n) => n.c_in(),
        }
    }

    /// Spatial extents the block accepts must be multiples of this.
    pub fn granularity(&self) -> usize {
        match self {
            Subnet::UNet(_) => UNET_GRANULARITY,
            Subnet::DeepCascade(_) => 1,
        }
    }

    pub fn layers(&self) -> &[ConvLayer] {
        match self {
            Subnet::UNet(n) => n.layers(),
            Subnet::DeepCascade(n) => n.layers(),
        }
    }

    pub fn params(&self) -> &[Param<T>] {
        match self {
            Subnet::UNet(n) => n.params(),
            Subnet::DeepCascade(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        match self {
            Subnet::UNet(n) => n.params_mut(),
            Subnet::DeepCascade(n) => n.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Subnet::UNet(n) => n.param_count(),
            Subnet::DeepCascade(n) => n.param_count(),
        }
    }

    pub fn zero_all(&mut self) {
        match self {
            Subnet::UNet(n) => n.zero_all(),
            Subnet::DeepCascade(n) => n.zero_all(),
        }
    }

    pub fn cast<U: Real>(&self) -> Subnet<U> {
        match self {
            Subnet::UNet(n) => Subnet::UNet(n.cast()),
            Subnet::DeepCascade(n) => Subnet::DeepCascade(n.cast()),
        }
    }
}
