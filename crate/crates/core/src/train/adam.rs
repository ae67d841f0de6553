use crate::network::Param;
use crate::scalar::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Updates applied so far.
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(lens: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = lens.into_iter().map(|n| (vec![T::zero(); n], vec![T::zero(); n])).unzip();
        Self { m, v, step: 0 }
    }
}

/// Learning rate for the update that follows `step` completed updates:
/// `lr / (1 + decay · step)`.
pub fn decayed_lr(lr: f64, decay: f64, step: u64) -> f64 {
    lr / (1.0 + decay * step as f64)
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step<T: Real>(params: &mut [&mut Param<T>], grads: &[Vec<T>], state: &mut AdamState<T>, lr: f64, decay: f64) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    assert_eq!(params.len(), state.m.len(), "one moment pair per parameter");
    let lr_t = decayed_lr(lr, decay, state.step);
    state.step += 1;
    let t = state.step as i32;
    let c1 = T::from_f64_lossy(1.0 - BETA1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - BETA2.powi(t));
    let (b1, b2) = (T::from_f64_lossy(BETA1), T::from_f64_lossy(BETA2));
    let (one, eps, lr_t) = (T::one(), T::from_f64_lossy(EPSILON), T::from_f64_lossy(lr_t));
    for (k, p) in params.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[k], &mut state.v[k], &grads[k]);
        for (((w, m), v), &g) in p.value.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w = *w - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
