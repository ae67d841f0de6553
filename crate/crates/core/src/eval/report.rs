use std::io::Write;

use super::stats::{dunn_posthoc, friedman_test, StatTestResult, DEFAULT_ALPHA};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SliceRecord {
    pub model: String,
    pub r: f64,
    pub slice: usize,
    pub nrmse: f64,
    /// `+∞` for a perfect reconstruction.
    pub psnr: f64,
    pub vif: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub model: String,
    pub r: f64,
    pub count: usize,
    pub nrmse: (f64, f64),
    /// Over finite values only.
    pub psnr: (f64, f64),
    pub vif: (f64, f64),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub records: Vec<SliceRecord>,
    pub excluded: Vec<usize>,
    pub policy: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Nrmse,
    Psnr,
    Vif,
}

impl Metric {
    pub fn of(self, r: &SliceRecord) -> f64 {
        match self {
            Metric::Nrmse => r.nrmse,
            Metric::Psnr => r.psnr,
            Metric::Vif => r.vif,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nrmse => "nrmse",
            Metric::Psnr => "psnr",
            Metric::Vif => "vif",
        }
    }
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `"0.0280 ± 0.0071"`-style text with `decimals` digits.
pub fn format_mean_std(mean: f64, std: f64, decimals: usize) -> String {
    format!("{mean:.decimals$} ± {std:.decimals$}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

impl MetricsReport {
    /// Model names in first-seen order.
    pub fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.model) {
                out.push(r.model.clone());
            }
        }
        out
    }

    pub fn accelerations(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.r) {
                out.push(r.r);
            }
        }
        out
    }

    pub fn select(&self, model: &str, r: f64) -> Vec<&SliceRecord> {
        self.records.iter().filter(|x| x.model == model && x.r == r).collect()
    }

    pub fn aggregate(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for r in self.accelerations() {
            for model in self.models() {
                let rows = self.select(&model, r);
                if rows.is_empty() {
                    continue;
                }
                let col = |f: fn(&SliceRecord) -> f64| rows.iter().map(|x| f(x)).collect::<Vec<_>>();
                let psnr: Vec<f64> = col(|x| x.psnr).into_iter().filter(|v| v.is_finite()).collect();
                if psnr.len() < rows.len() {
                    log::warn!("{model} at R={r}: {} identical slices left out of the pSNR aggregate", rows.len() - psnr.len());
                }
                out.push(Aggregate {
                    model,
                    r,
                    count: rows.len(),
                    nrmse: mean_std(&col(|x| x.nrmse)),
                    psnr: mean_std(&psnr),
                    vif: mean_std(&col(|x| x.vif)),
                });
            }
        }
        out
    }

    /// `scores[slice][model]` of one metric at one acceleration.
    pub fn score_matrix(&self, r: f64, metric: Metric) -> (Vec<String>, Vec<Vec<f64>>) {
        let models = self.models();
        let slices: Vec<usize> = self.select(&models[0], r).iter().map(|x| x.slice).collect();
        let scores = slices
            .iter()
            .map(|&s| {
                models
                    .iter()
                    .map(|m| self.records.iter().find(|x| &x.model == m && x.r == r && x.slice == s).map_or(f64::NAN, |x| metric.of(x)))
                    .collect()
            })
            .collect();
        (models, scores)
    }

    /// Friedman test and Dunn post-hoc per acceleration for `metric`.
    pub fn statistics(&self, metric: Metric) -> Result<Vec<(f64, StatTestResult, StatTestResult)>> {
        self.accelerations()
            .into_iter()
            .map(|r| {
                let (labels, scores) = self.score_matrix(r, metric);
                Ok((r, friedman_test(&scores, &labels)?, dunn_posthoc(&scores, &labels, DEFAULT_ALPHA)?))
            })
            .collect()
    }

    /// `model,r,slice,nrmse,psnr,vif`, shortest exact decimals.
    pub fn write_slices_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "r", "slice", "nrmse", "psnr", "vif"]).map_err(csv_err)?;
        for x in &self.records {
            w.write_record([
                x.model.clone(),
                format!("{:?}", x.r),
                x.slice.to_string(),
                format!("{:?}", x.nrmse),
                format!("{:?}", x.psnr),
                format!("{:?}", x.vif),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean and standard deviation per (model, R), numerically and as report text.
    pub fn write_aggregate_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model", "r", "slices", "nrmse_mean", "nrmse_std", "psnr_mean", "psnr_std", "vif_mean", "vif_std", "nrmse",
            "psnr", "vif",
        ])
        .map_err(csv_err)?;
        for a in self.aggregate() {
            w.write_record([
                a.model.clone(),
                format!("{:?}", a.r),
                a.count.to_string(),
                format!("{:?}", a.nrmse.0),
                format!("{:?}", a.nrmse.1),
                format!("{:?}", a.psnr.0),
                format!("{:?}", a.psnr.1),
                format!("{:?}", a.vif.0),
                format!("{:?}", a.vif.1),
                format_mean_std(a.nrmse.0, a.nrmse.1, 4),
                format_mean_std(a.psnr.0, a.psnr.1, 1),
                format_mean_std(a.vif.0, a.vif.1, 3),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Statistical tests for every metric, as structured text.
    pub fn statistics_text(&self) -> Result<String> {
        let mut s = format!("# {}\n# excluded slices: {:?}\n", self.policy, self.excluded);
        if self.models().len() < 2 {
            s.push_str("# fewer than two models: no rank tests\n");
            return Ok(s);
        }
        for metric in [Metric::Nrmse, Metric::Psnr, Metric::Vif] {
            for (r, f, d) in self.statistics(metric)? {
                s.push_str(&format!("\n[{} r={r:?}]\n{}{}", metric.name(), f.to_text(), d.to_text()));
            }
        }
        Ok(s)
    }
}

