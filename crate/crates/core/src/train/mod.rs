//! Training: k-space MSE, Adam with inverse-time decay, per-epoch random
//! masks, fixed validation masks and early stopping on validation loss.

mod adam;
mod gradcheck;
mod state;

use std::io::Write;
use std::time::Instant;

use num_complex::Complex32;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, decayed_lr, AdamState, BETA1, BETA2, EPSILON};
pub use gradcheck::{gradient_check, GradCheck, TensorError};

use crate::cascade::CascadeModel;
use crate::data::{ImageVolume, KSpaceVolume};
use crate::error::{Error, Result};
use crate::network::{Array, Tape};
use crate::sampling::{epoch_mask_seed, poisson_disc_mask, SamplingMask, DEFAULT_CENTER_RADIUS};
use crate::scalar::Real;
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Inverse-time decay per update step.
    pub decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Acceleration factor of the training and validation masks.
    pub acceleration: f64,
    pub center_radius: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 1e-6,
            max_epochs: 50,
            patience: 5,
            batch_size: 4,
            seed: 0,
            acceleration: 4.0,
            center_radius: DEFAULT_CENTER_RADIUS,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is allowed (it freezes the model).
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad(format!("decay must be finite and >= 0, got {}", self.decay));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("max_epochs, patience and batch_size must be positive".into());
        }
        if self.patience > self.max_epochs {
            return bad(format!("patience {} exceeds max_epochs {}", self.patience, self.max_epochs));
        }
        if !(self.acceleration >= 1.0 && self.acceleration.is_finite()) {
            return bad(format!("acceleration must be >= 1, got {}", self.acceleration));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
    /// Set when early stopping ended the run before `max_epochs`.
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min)
    }

    /// `epoch,train_loss,val_loss,seconds`; losses use the shortest exact decimal form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["epoch", "train_loss", "val_loss", "seconds"]).map_err(err)?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:?}", e.train_loss),
                format!("{:?}", e.val_loss),
                format!("{:.3}", e.seconds),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sum over the batch of squared complex differences, divided by the number of samples.
fn squared_error(pred: &[Complex32], target: &[Complex32], samples: usize) -> f64 {
    let total: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).norm_sqr() as f64).sum();
    total / samples.max(1) as f64
}

/// `(1/N) Σ ‖Ŷ − Y‖²` over the `N` slices of two k-space volumes.
pub fn mse_loss(pred: &KSpaceVolume, target: &KSpaceVolume) -> Result<f64> {
    if pred.data().shape() != target.data().shape() {
        return Err(Error::Shape(format!("loss: {:?} vs {:?}", pred.data().shape(), target.data().shape())));
    }
    Ok(squared_error(pred.data().data(), target.data().data(), pred.ns()))
}

/// Image-domain variant of [`mse_loss`] (per-coil complex or combined magnitude).
pub fn mse_loss_image(pred: &ImageVolume, target: &ImageVolume) -> Result<f64> {
    match (pred, target) {
        (ImageVolume::PerCoil(a), ImageVolume::PerCoil(b)) if a.shape() == b.shape() => {
            Ok(squared_error(a.data(), b.data(), a.shape()[0]))
        }
        (ImageVolume::Combined(a), ImageVolume::Combined(b)) if a.shape() == b.shape() => {
            let total: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum();
            Ok(total / a.shape()[0].max(1) as f64)
        }
        _ => Err(Error::Shape("loss operands differ in kind or shape".into())),
    }
}

/// Packed `(x_u, 1 − F_u, target)` arrays for the given slices and masks.
pub fn batch_arrays<T: Real>(
    data: &KSpaceVolume,
    slices: &[usize],
    masks: &[&SamplingMask],
) -> Result<(Array<T>, Array<T>, Array<T>)> {
    let (nc, (ny, nz)) = (data.nc(), data.plane());
    let plane = ny * nz;
    let n = slices.len() * nc * 2 * plane;
    let (mut x_u, mut keep, mut target) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (&s, mask) in slices.iter().zip(masks) {
        if (mask.ny(), mask.nz()) != (ny, nz) {
            return Err(Error::Shape(format!("mask {}x{} vs k-space {ny}x{nz}", mask.ny(), mask.nz())));
        }
        let slice = &data.data().data()[s * nc * plane..(s + 1) * nc * plane];
        for coil in slice.chunks(plane) {
            for part in [|z: &Complex32| z.re, |z: &Complex32| z.im] {
                for (z, &m) in coil.iter().zip(mask.grid()) {
                    let v = T::from_f64_lossy(part(z) as f64);
                    target.push(v);
                    x_u.push(if m == 1 { v } else { T::zero() });
                    keep.push(if m == 1 { T::zero() } else { T::one() });
                }
            }
        }
    }
    let shape = [slices.len(), 2 * nc, ny, nz];
    Ok((Array::from_vec(&shape, x_u)?, Array::from_vec(&shape, keep)?, Array::from_vec(&shape, target)?))
}

/// Builds the training graph: cascade on `x_u`, k-space MSE against `target`.
pub fn cascade_loss<T: Real>(
    model: &CascadeModel<T>,
    tape: &mut Tape<T>,
    x_u: Array<T>,
    keep: Array<T>,
    target: Array<T>,
) -> Result<crate::network::Var> {
    let (vx, vk, vt) = (tape.constant(x_u), tape.constant(keep), tape.constant(target));
    let pred = model.forward(tape, vx, vk)?;
    tape.mse(pred, vt)
}

fn mask_for(config: &TrainConfig, ny: usize, nz: usize, seed: u64) -> Result<SamplingMask> {
    poisson_disc_mask(ny, nz, config.acceleration, config.center_radius, seed)
}

/// Fixed validation masks, one per validation slice.
pub fn validation_masks(config: &TrainConfig, val: &KSpaceVolume) -> Result<Vec<SamplingMask>> {
    let (ny, nz) = val.plane();
    (0..val.ns())
        .into_par_iter()
        .map(|s| mask_for(config, ny, nz, derive_seed(config.seed, &[0x5641_4C, s as u64])))
        .collect()
}

/// Mean per-slice k-space loss of `model` on `data` under `masks`.
pub fn evaluate_loss(model: &CascadeModel<f32>, data: &KSpaceVolume, masks: &[SamplingMask], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    let indices: Vec<usize> = (0..data.ns()).collect();
    for chunk in indices.chunks(batch.max(1)) {
        let ms: Vec<&SamplingMask> = chunk.iter().map(|&s| &masks[s]).collect();
        let (x_u, keep, target) = batch_arrays::<f32>(data, chunk, &ms)?;
        let mut tape = Tape::inference();
        let loss = cascade_loss(model, &mut tape, x_u, keep, target)?;
        total += tape.value(loss).item() as f64 * chunk.len() as f64;
    }
    Ok(total / data.ns().max(1) as f64)
}

/// Owns the model, optimiser state and history of one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    model: CascadeModel<f32>,
    best: CascadeModel<f32>,
    adam: AdamState<f32>,
    history: TrainHistory,
    /// Consecutive epochs without validation improvement.
    stall: usize,
    finished: bool,
    val_masks: Option<Vec<SamplingMask>>,
}

impl Trainer {
    pub fn new(model: CascadeModel<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(model.params().iter().map(|p| p.value.len()));
        Ok(Self {
            config,
            best: model.clone(),
            model,
            adam,
            history: TrainHistory::default(),
            stall: 0,
            finished: false,
            val_masks: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &CascadeModel<f32> {
        &self.model
    }

    pub fn best_model(&self) -> &CascadeModel<f32> {
        &self.best
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn epochs_done(&self) -> usize {
        self.history.epochs.len()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn check_data(&self, data: &KSpaceVolume, what: &str) -> Result<()> {
        if data.ns() == 0 {
            return Err(Error::Parameter(format!("{what} set is empty")));
        }
        let spec = self.model.spec();
        if spec.config() == crate::cascade::Configuration::MultiChannel && data.nc() != spec.nc() {
            return Err(Error::Shape(format!(
                "{what} data has {} coils, model expects {} ({:?})",
                data.nc(),
                spec.nc(),
                data.data().shape()
            )));
        }
        Ok(())
    }

    /// Runs one epoch; returns `false` once training has ended.
    pub fn run_epoch(&mut self, train: &KSpaceVolume, val: &KSpaceVolume) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        self.check_data(train, "training")?;
        self.check_data(val, "validation")?;
        if self.val_masks.as_ref().is_none_or(|m| m.len() != val.ns()) {
            self.val_masks = Some(validation_masks(&self.config, val)?);
        }
        let start = Instant::now();
        let epoch = self.history.epochs.len() + 1;
        let (ny, nz) = train.plane();
        let masks = (0..train.ns())
            .into_par_iter()
            .map(|s| mask_for(&self.config, ny, nz, epoch_mask_seed(self.config.seed, epoch as u64, s as u64)))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..train.ns()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[0x5348_5546, epoch as u64])));

        let mut train_total = 0.0;
        for (step, batch) in order.chunks(self.config.batch_size).enumerate() {
            let ms: Vec<&SamplingMask> = batch.iter().map(|&s| &masks[s]).collect();
            let (x_u, keep, target) = batch_arrays::<f32>(train, batch, &ms)?;
            let mut tape = Tape::new();
            let loss = cascade_loss(&self.model, &mut tape, x_u, keep, target)?;
            let value = tape.value(loss).item() as f64;
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, step: step + 1, loss: value });
            }
            train_total += value * batch.len() as f64;
            let grads = tape.backward(loss)?;
            let mut params = self.model.params_mut();
            let g: Vec<Vec<f32>> = params.iter().enumerate().map(|(id, p)| grads.param(id, p.value.len())).collect();
            adam_step(&mut params, &g, &mut self.adam, self.config.learning_rate, self.config.decay);
        }
        let train_loss = train_total / train.ns() as f64;
        let val_loss = evaluate_loss(&self.model, val, self.val_masks.as_deref().unwrap(), self.config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, step: 0, loss: val_loss });
        }
        let seconds = start.elapsed().as_secs_f64();
        log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e} ({seconds:.1} s)");

        let improved = val_loss < self.history.best_val_loss();
        self.history.epochs.push(EpochRecord { epoch, train_loss, val_loss, seconds });
        if improved {
            self.best = self.model.clone();
            self.history.best_epoch = epoch;
            self.stall = 0;
        } else {
            self.stall += 1;
        }
        if self.stall >= self.config.patience {
            self.history.stopped_early = epoch < self.config.max_epochs;
            self.finished = true;
        } else if epoch >= self.config.max_epochs {
            self.finished = true;
        }
        Ok(!self.finished)
    }

    /// Trains to completion and returns the best-validation model.
    pub fn run(mut self, train: &KSpaceVolume, val: &KSpaceVolume) -> Result<(CascadeModel<f32>, TrainHistory)> {
        while self.run_epoch(train, val)? {}
        Ok(self.finish())
    }

    pub fn finish(self) -> (CascadeModel<f32>, TrainHistory) {
        (self.best, self.history)
    }
}

/// Convenience wrapper around [`Trainer`].
pub fn train(
    model: CascadeModel<f32>,
    train_set: &KSpaceVolume,
    val_set: &KSpaceVolume,
    config: &TrainConfig,
) -> Result<(CascadeModel<f32>, TrainHistory)> {
    Trainer::new(model, config.clone())?.run(train_set, val_set)
}
