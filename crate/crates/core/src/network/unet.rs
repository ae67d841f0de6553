//! Residual U-net: four resolution levels with three 3×3 convolutions each,
//! three 2×2 max-pools, three nearest ×2 up-samplings feeding skip
//! concatenations, a final linear 1×1 convolution back to the input channel
//! count, and an input-to-output residual addition. 22 convolutions in total.

use super::layers::{Activation, ConvLayer, ConvStack, Param};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const UNET_CONV_LAYERS: usize = 22;
const LEVELS: usize = 4;
const CONVS_PER_LEVEL: usize = 3;
/// Spatial extents must be divisible by this (three pooling steps).
pub const UNET_GRANULARITY: usize = 8;

/// Filter counts from the finest to the coarsest level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UNetWidths(pub [usize; LEVELS]);

impl UNetWidths {
    /// `(w, 2w, 4w, 8w)`.
    pub fn doubling(base: usize) -> Self {
        Self([base, 2 * base, 4 * base, 8 * base])
    }

    /// `(48, 64, 128, 256)`: gives 3,000,674 parameters for two input channels.
    pub fn reference() -> Self {
        Self([48, 64, 128, 256])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UNet<T> {
    c_in: usize,
    widths: UNetWidths,
    stack: ConvStack<T>,
}

fn activations() -> Vec<Activation> {
    let mut acts = vec![Activation::Relu; UNET_CONV_LAYERS - 1];
    acts.push(Activation::Linear);
    acts
}

/// Layer list in evaluation order.
pub fn unet_layers(c_in: usize, widths: UNetWidths) -> Vec<ConvLayer> {
    let w = widths.0;
    let mut layers = Vec::with_capacity(UNET_CONV_LAYERS);
    let mut prev = c_in;
    for &width in &w {
        for _ in 0..CONVS_PER_LEVEL {
            layers.push(ConvLayer { cin: prev, cout: width, kernel: 3 });
            prev = width;
        }
    }
    for level in (0..LEVELS - 1).rev() {
        // up-sampled coarse features concatenated with the skip
        layers.push(ConvLayer { cin: prev + w[level], cout: w[level], kernel: 3 });
        for _ in 1..CONVS_PER_LEVEL {
            layers.push(ConvLayer { cin: w[level], cout: w[level], kernel: 3 });
        }
        prev = w[level];
    }
    layers.push(ConvLayer { cin: prev, cout: c_in, kernel: 1 });
    layers
}

impl<T: Real> UNet<T> {
    pub fn new(c_in: usize, widths: UNetWidths, seed: u64, prefix: &str) -> Result<Self> {
        if c_in < 2 || c_in % 2 != 0 {
            return Err(Error::Parameter(format!("input channels must be even and >= 2, got {c_in}")));
        }
        if widths.0.iter().any(|&w| w == 0) {
            return Err(Error::Parameter(format!("U-net widths must be positive, got {:?}", widths.0)));
        }
        let stack = ConvStack::init(prefix, unet_layers(c_in, widths), &activations(), seed);
        Ok(Self { c_in, widths, stack })
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn widths(&self) -> UNetWidths {
        self.widths
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

    pub fn cast<U: Real>(&self) -> UNet<U> {
        UNet { c_in: self.c_in, widths: self.widths, stack: self.stack.cast() }
    }

    /// `trunk(x) + x` for `x: [B, C_in, H, W]` with `H`, `W` divisible by 8.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, offset: usize) -> Result<Var> {
        let (_, c, h, w) = tape.value(x).dims4()?;
        if c != self.c_in {
            return Err(Error::Shape(format!("U-net expects {} channels, got {c}", self.c_in)));
        }
        if h % UNET_GRANULARITY != 0 || w % UNET_GRANULARITY != 0 {
            return Err(Error::Shape(format!(
                "U-net input {h}x{w} is not divisible by {UNET_GRANULARITY}; zero-pad it first"
            )));
        }
        let mut layer = 0;
        let mut conv = |tape: &mut Tape<T>, x: Var, act| {
            let y = self.stack.apply(tape, layer, x, act, offset);
            layer += 1;
            y
        };
        let mut h = x;
        let mut skips = Vec::with_capacity(LEVELS - 1);
        for level in 0..LEVELS {
            for _ in 0..CONVS_PER_LEVEL {
                h = conv(tape, h, Activation::Relu)?;
            }
            if level < LEVELS - 1 {
                skips.push(h);
                h = tape.max_pool2(h)?;
            }
        }
        while let Some(skip) = skips.pop() {
            let up = tape.upsample2(h)?;
            h = tape.concat(up, skip)?;
            for _ in 0..CONVS_PER_LEVEL {
                h = conv(tape, h, Activation::Relu)?;
            }
        }
        let out = conv(tape, h, Activation::Linear)?;
        tape.add(out, x)
    }
}

/// U-net with doubling widths `(w, 2w, 4w, 8w)`.
pub fn build_unet<T: Real>(c_in: usize, base_width: usize, seed: u64) -> Result<UNet<T>> {
    if base_width < 4 {
        return Err(Error::Parameter(format!("base width must be >= 4, got {base_width}")));
    }
    UNet::new(c_in, UNetWidths::doubling(base_width), seed, "")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::array::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed form: Σ over layers of k²·c_in·c_out + c_out, written out by hand.
    fn hand_count(c: usize, w: [usize; 4]) -> usize {
        let conv = |k: usize, i: usize, o: usize| k * k * i * o + o;
        let mut total = 0;
        total += conv(3, c, w[0]) + 2 * conv(3, w[0], w[0]);
        total += conv(3, w[0], w[1]) + 2 * conv(3, w[1], w[1]);
        total += conv(3, w[1], w[2]) + 2 * conv(3, w[2], w[2]);
        total += conv(3, w[2], w[3]) + 2 * conv(3, w[3], w[3]);
        total += conv(3, w[3] + w[2], w[2]) + 2 * conv(3, w[2], w[2]);
        total += conv(3, w[2] + w[1], w[1]) + 2 * conv(3, w[1], w[1]);
        total += conv(3, w[1] + w[0], w[0]) + 2 * conv(3, w[0], w[0]);
        total + conv(1, w[0], c)
    }

    #[test]
    fn layer_structure() {
        let net = build_unet::<f32>(2, 8, 0).unwrap();
        assert_eq!(net.layers().len(), UNET_CONV_LAYERS);
        let last = net.layers().last().unwrap();
        assert_eq!((last.kernel, last.cout), (1, 2));
        assert!(net.layers()[..21].iter().all(|l| l.kernel == 3));
    }

    #[test]
    fn parameter_counts() {
        let net = build_unet::<f32>(2, 48, 1).unwrap();
        assert_eq!(net.param_count(), hand_count(2, [48, 96, 192, 384]));
        let params: usize = net.params().iter().map(|p| p.value.len()).sum();
        assert_eq!(params, net.param_count());
        let reference = UNet::<f32>::new(2, UNetWidths::reference(), 0, "").unwrap();
        assert_eq!(reference.param_count(), 3_000_674);
        assert_eq!(reference.param_count(), hand_count(2, [48, 64, 128, 256]));
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(build_unet::<f32>(3, 8, 0).is_err());
        assert!(build_unet::<f32>(0, 8, 0).is_err());
        assert!(build_unet::<f32>(2, 3, 0).is_err());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = build_unet::<f32>(4, 4, 9).unwrap();
        assert_eq!(a, build_unet::<f32>(4, 4, 9).unwrap());
        assert_ne!(a, build_unet::<f32>(4, 4, 10).unwrap());
    }

    fn random(shape: &[usize], seed: u64) -> Array<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Array::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_weights_pass_input_through() {
        let mut net = build_unet::<f64>(2, 4, 3).unwrap();
        net.zero_all();
        let mut tape = Tape::inference();
        let x = tape.constant(random(&[1, 2, 16, 16], 1));
        let y = net.forward(&mut tape, x, 0).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn batch_entries_are_independent() {
        let net = build_unet::<f64>(2, 4, 3).unwrap();
        let single = random(&[1, 2, 16, 16], 7);
        let mut doubled = single.data().to_vec();
        doubled.extend_from_slice(single.data());
        let mut tape = Tape::inference();
        let x = tape.constant(Array::from_vec(&[2, 2, 16, 16], doubled).unwrap());
        let y = net.forward(&mut tape, x, 0).unwrap();
        let out = tape.value(y).data();
        assert_eq!(&out[..512], &out[512..]);
        assert!(out.iter().zip(single.data()).any(|(a, b)| a != b));
    }

    #[test]
    fn rejects_indivisible_extent() {
        let net = build_unet::<f64>(2, 4, 3).unwrap();
        let mut tape = Tape::inference();
        let x = tape.constant(random(&[1, 2, 12, 16], 1));
        let err = net.forward(&mut tape, x, 0).unwrap_err();
        assert!(err.to_string().contains("pad"));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = build_unet::<f64>(2, 4, 5).unwrap();
        let (x, target) = (random(&[1, 2, 16, 16], 6), random(&[1, 2, 16, 16], 7));
        let loss = |net: &UNet<f64>, tape: &mut Tape<f64>| {
            let vx = tape.constant(x.clone());
            let vt = tape.constant(target.clone());
            let y = net.forward(tape, vx, 0).unwrap();
            tape.mse(y, vt).unwrap()
        };
        let mut tape = Tape::new();
        let l = loss(&net, &mut tape);
        let grads = tape.backward(l).unwrap();
        // larger steps straddle ReLU / max-pool switching points
        let h = 1e-5;
        let mut probe = net.clone();
        for (id, p) in net.params().iter().enumerate() {
            let analytic = grads.param(id, p.value.len());
            let (mut diff, mut norm) = (0.0f64, 0.0f64);
            for i in (0..p.value.len()).step_by(13) {
                let original = p.value.data()[i];
                let mut eval = |v: f64| {
                    probe.params_mut()[id].value.data_mut()[i] = v;
                    let mut tape = Tape::inference();
                    let l = loss(&probe, &mut tape);
                    tape.value(l).item()
                };
                let numeric = (eval(original + h) - eval(original - h)) / (2.0 * h);
                probe.params_mut()[id].value.data_mut()[i] = original;
                diff += (numeric - analytic[i]).powi(2);
                norm += numeric.powi(2).max(analytic[i].powi(2));
            }
            assert!(diff.sqrt() <= 1e-4 * norm.sqrt(), "{}: {} vs {}", p.name, diff.sqrt(), norm.sqrt());
        }
    }
}
