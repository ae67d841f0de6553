//! Central finite differences against reverse-mode gradients of the training loss.

use rayon::prelude::*;

use super::cascade_loss;
use crate::cascade::CascadeModel;
use crate::error::Result;
use crate::network::{Array, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TensorError {
    pub name: String,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
    pub error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Every parameter tensor with a nonzero analytic or numeric gradient.
    pub tensor_errors: Vec<TensorError>,
    /// Loss at the unperturbed parameters.
    pub loss: f64,
    pub step: f64,
    /// Largest element-wise `|a − n| / max(|a|, |n|, floor)`, with its
    /// tensor, index, and the two derivatives.
    pub max_element_error: f64,
    pub worst_element: (String, usize, f64, f64),
    pub checked: usize,
}

impl GradCheck {
    pub fn max_tensor_error(&self) -> f64 {
        self.tensor_errors.iter().map(|e| e.error).fold(0.0, f64::max)
    }

    /// Finite-difference roundoff scale `ε·|L| / h`.
    pub fn roundoff(&self) -> f64 {
        f64::EPSILON * self.loss.abs() / self.step
    }

    /// Tensors whose analytic and numeric gradient norms both stay within
    /// `resolution`: numerically zero, so a relative error says nothing.
    pub fn unresolved(&self, resolution: f64) -> Vec<&TensorError> {
        self.tensor_errors.iter().filter(|t| t.analytic_norm.max(t.numeric_norm) <= resolution).collect()
    }

    /// Largest relative error among tensors whose gradient exceeds `resolution`.
    pub fn max_resolved_error(&self, resolution: f64) -> f64 {
        self.tensor_errors
            .iter()
            .filter(|t| t.analytic_norm.max(t.numeric_norm) > resolution)
            .map(|t| t.error)
            .fold(0.0, f64::max)
    }
}

fn loss_value(model: &CascadeModel<f64>, x_u: &Array<f64>, keep: &Array<f64>, target: &Array<f64>) -> Result<f64> {
    let mut tape = Tape::inference();
    let loss = cascade_loss(model, &mut tape, x_u.clone(), keep.clone(), target.clone())?;
    Ok(tape.value(loss).item())
}

/// Checks every `stride`-th parameter element of `model` with step `step`.
pub fn gradient_check(
    model: &CascadeModel<f64>,
    x_u: &Array<f64>,
    keep: &Array<f64>,
    target: &Array<f64>,
    step: f64,
    floor: f64,
    stride: usize,
) -> Result<GradCheck> {
    let mut tape = Tape::new();
    let loss = cascade_loss(model, &mut tape, x_u.clone(), keep.clone(), target.clone())?;
    let loss_value_at_start = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let params = model.params();
    let analytic: Vec<Vec<f64>> = params.iter().enumerate().map(|(id, p)| grads.param(id, p.value.len())).collect();
    drop(tape);

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(k, p)| (0..p.value.len()).map(move |i| (k, i)))
        .step_by(stride.max(1))
        .collect();
    let numeric = coords
        .par_iter()
        .map_init(
            || model.clone(),
            |probe, &(k, i)| -> Result<f64> {
                let original = probe.params()[k].value.data()[i];
                let set = |probe: &mut CascadeModel<f64>, v: f64| probe.params_mut()[k].value.data_mut()[i] = v;
                set(probe, original + step);
                let plus = loss_value(probe, x_u, keep, target)?;
                set(probe, original - step);
                let minus = loss_value(probe, x_u, keep, target)?;
                set(probe, original);
                Ok((plus - minus) / (2.0 * step))
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let mut sums = vec![(0.0f64, 0.0f64, 0.0f64); params.len()];
    let mut worst = (0.0, (String::new(), 0, 0.0, 0.0));
    for (&(k, i), &n) in coords.iter().zip(&numeric) {
        let a = analytic[k][i];
        sums[k].0 += (a - n) * (a - n);
        sums[k].1 += a * a;
        sums[k].2 += n * n;
        let e = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        if e > worst.0 {
            worst = (e, (params[k].name.clone(), i, a, n));
        }
    }
    let tensor_errors = sums
        .iter()
        .zip(&params)
        .filter(|(s, _)| s.1 > 0.0 || s.2 > 0.0)
        .map(|(s, p)| TensorError {
            name: p.name.clone(),
            error: s.0.sqrt() / s.1.sqrt().max(s.2.sqrt()),
            analytic_norm: s.1.sqrt(),
            numeric_norm: s.2.sqrt(),
        })
        .collect();
    Ok(GradCheck {
        tensor_errors,
        loss: loss_value_at_start,
        step,
        max_element_error: worst.0,
        worst_element: worst.1,
        checked: coords.len(),
    })
}
