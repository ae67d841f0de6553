//! Resumable training state, stored in the weight checkpoint format: current
//! and best weights, Adam moments, and the history so far.

use std::path::Path;

use super::{AdamState, EpochRecord, TrainConfig, TrainHistory, Trainer};
use crate::cascade::CascadeModel;
use crate::error::{Error, Result};
use crate::network::{Array, Checkpoint, Param};

const KIND: &str = "train-state";

fn meta_num<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    ckpt.meta
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(key, "missing or malformed in training state"))
}

fn restore(ckpt: &Checkpoint, prefix: &str, params: &mut [&mut Param<f32>]) -> Result<()> {
    for p in params.iter_mut() {
        let name = format!("{prefix}/{}", p.name);
        let (_, shape, data) =
            ckpt.tensor(&name).ok_or_else(|| Error::Shape(format!("training state has no tensor `{name}`")))?;
        if shape.as_slice() != p.value.shape() {
            return Err(Error::Shape(format!("`{name}` is {shape:?}, model needs {:?}", p.value.shape())));
        }
        p.value.data_mut().copy_from_slice(data);
    }
    Ok(())
}

impl Trainer {
    pub fn save_state(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut ckpt = Checkpoint::default();
        let meta = &mut ckpt.meta;
        meta.insert("kind".into(), KIND.into());
        meta.insert("seed".into(), self.config.seed.to_string());
        meta.insert("stall".into(), self.stall.to_string());
        meta.insert("finished".into(), self.finished.to_string());
        meta.insert("best_epoch".into(), self.history.best_epoch.to_string());
        meta.insert("stopped_early".into(), self.history.stopped_early.to_string());
        meta.insert("adam_step".into(), self.adam.step.to_string());
        meta.insert("epochs".into(), self.history.epochs.len().to_string());
        for e in &self.history.epochs {
            meta.insert(format!("epoch.{:06}", e.epoch), format!("{:?},{:?},{:?}", e.train_loss, e.val_loss, e.seconds));
        }
        for p in self.model.params() {
            ckpt.push(&format!("model/{}", p.name), &p.value);
        }
        for p in self.best.params() {
            ckpt.push(&format!("best/{}", p.name), &p.value);
        }
        for (k, p) in self.model.params().iter().enumerate() {
            let shape = p.value.shape();
            ckpt.push(&format!("adam.m/{}", p.name), &Array::from_vec(shape, self.adam.m[k].clone())?);
            ckpt.push(&format!("adam.v/{}", p.name), &Array::from_vec(shape, self.adam.v[k].clone())?);
        }
        ckpt.save(path)
    }

    /// Restores a run saved by [`Trainer::save_state`] into a freshly built
    /// model of the same layout.
    pub fn resume(path: impl AsRef<Path>, mut model: CascadeModel<f32>, config: TrainConfig) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.meta.get("kind").map(String::as_str) != Some(KIND) {
            return Err(Error::format("kind", "not a training state file"));
        }
        let seed: u64 = meta_num(&ckpt, "seed")?;
        if seed != config.seed {
            return Err(Error::Config(format!("training state was produced with seed {seed}, config has {}", config.seed)));
        }
        let mut best = model.clone();
        restore(&ckpt, "model", &mut model.params_mut())?;
        restore(&ckpt, "best", &mut best.params_mut())?;
        let mut trainer = Trainer::new(model, config)?;
        trainer.best = best;
        let names: Vec<String> = trainer.model.params().iter().map(|p| p.name.clone()).collect();
        let mut adam = AdamState::new(trainer.model.params().iter().map(|p| p.value.len()));
        for (k, name) in names.iter().enumerate() {
            for (prefix, dst) in [("adam.m", &mut adam.m[k]), ("adam.v", &mut adam.v[k])] {
                let key = format!("{prefix}/{name}");
                let (_, _, data) = ckpt.tensor(&key).ok_or_else(|| Error::Shape(format!("missing `{key}`")))?;
                if data.len() != dst.len() {
                    return Err(Error::Shape(format!("`{key}` has {} values, expected {}", data.len(), dst.len())));
                }
                dst.copy_from_slice(data);
            }
        }
        adam.step = meta_num(&ckpt, "adam_step")?;
        trainer.adam = adam;
        trainer.stall = meta_num(&ckpt, "stall")?;
        trainer.finished = meta_num(&ckpt, "finished")?;
        let mut history = TrainHistory {
            epochs: Vec::new(),
            best_epoch: meta_num(&ckpt, "best_epoch")?,
            stopped_early: meta_num(&ckpt, "stopped_early")?,
        };
        let count: usize = meta_num(&ckpt, "epochs")?;
        for epoch in 1..=count {
            let key = format!("epoch.{epoch:06}");
            let values: Vec<f64> = ckpt
                .meta
                .get(&key)
                .map(|v| v.split(',').filter_map(|x| x.parse().ok()).collect())
                .unwrap_or_default();
            let [train_loss, val_loss, seconds] = values[..] else {
                return Err(Error::format(key, "malformed epoch record"));
            };
            history.epochs.push(EpochRecord { epoch, train_loss, val_loss, seconds });
        }
        // a run that only hit its epoch budget may be extended
        if trainer.finished && !history.stopped_early && trainer.stall < trainer.config.patience {
            trainer.finished = count >= trainer.config.max_epochs;
        }
        trainer.history = history;
        Ok(trainer)
    }
}
