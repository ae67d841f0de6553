//! Friedman rank test across models with Dunn's post-hoc comparisons.

use std::fmt::Write;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct StatTestResult {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    /// Model labels indexing the pairwise matrices.
    pub labels: Vec<String>,
    /// Pairwise |z| (Dunn), empty for the omnibus test.
    pub z: Vec<Vec<f64>>,
    pub raw_p: Vec<Vec<f64>>,
    pub adjusted_p: Vec<Vec<f64>>,
}

impl StatTestResult {
    pub fn significant(&self) -> bool {
        self.p_value < self.alpha
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "test = {}", self.test);
        let _ = writeln!(s, "statistic = {:?}", self.statistic);
        let _ = writeln!(s, "p_value = {:?}", self.p_value);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        for i in 0..self.adjusted_p.len() {
            for j in i + 1..self.adjusted_p.len() {
                let _ = writeln!(
                    s,
                    "pair {} vs {}: z = {:.6}, p = {:.6e}, p_bonferroni = {:.6e}",
                    self.labels[i], self.labels[j], self.z[i][j], self.raw_p[i][j], self.adjusted_p[i][j]
                );
            }
        }
        s
    }
}

fn check(scores: &[Vec<f64>]) -> Result<usize> {
    let n = scores.len();
    let k = scores.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::Degenerate(format!("need >= 2 subjects and >= 2 models, got {n} x {k}")));
    }
    if scores.iter().any(|row| row.len() != k || row.iter().any(|v| v.is_nan())) {
        return Err(Error::Shape("score rows must all have the same length and contain no NaN".into()));
    }
    Ok(k)
}

/// Ranks `1..=k` within a row, ties receiving their average rank.
pub fn average_ranks(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn rank_sums(scores: &[Vec<f64>], k: usize) -> (Vec<f64>, f64) {
    let mut sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in scores {
        let ranks = average_ranks(row);
        for (s, r) in sums.iter_mut().zip(&ranks) {
            *s += r;
        }
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        for group in sorted.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            ties += t * t * t - t;
        }
    }
    (sums, ties)
}

/// Friedman χ² over `scores[subject][model]`, tie-corrected.
pub fn friedman_test(scores: &[Vec<f64>], labels: &[String]) -> Result<StatTestResult> {
    let k = check(scores)?;
    let n = scores.len() as f64;
    let kf = k as f64;
    let (sums, ties) = rank_sums(scores, k);
    let correction = 1.0 - ties / (n * (kf * kf * kf - kf));
    let (statistic, p_value) = if correction <= 0.0 {
        (0.0, 1.0)
    } else {
        let raw = 12.0 / (n * kf * (kf + 1.0)) * sums.iter().map(|r| r * r).sum::<f64>() - 3.0 * n * (kf + 1.0);
        let chi2 = (raw / correction).max(0.0);
        let dist = ChiSquared::new(kf - 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
        (chi2, 1.0 - dist.cdf(chi2))
    };
    Ok(StatTestResult {
        test: "friedman".into(),
        statistic,
        p_value,
        alpha: DEFAULT_ALPHA,
        labels: labels.to_vec(),
        z: Vec::new(),
        raw_p: Vec::new(),
        adjusted_p: Vec::new(),
    })
}

/// Dunn's pairwise test on mean ranks, Bonferroni-adjusted over `k(k−1)/2` pairs.
/// `p_value` holds the smallest adjusted p.
pub fn dunn_posthoc(scores: &[Vec<f64>], labels: &[String], alpha: f64) -> Result<StatTestResult> {
    let k = check(scores)?;
    let n = scores.len() as f64;
    let (sums, _) = rank_sums(scores, k);
    let se = (k as f64 * (k as f64 + 1.0) / (6.0 * n)).sqrt();
    let comparisons = (k * (k - 1) / 2) as f64;
    let normal = Normal::standard();
    let mut z = vec![vec![0.0; k]; k];
    let mut raw = vec![vec![1.0; k]; k];
    let mut adj = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let zij = ((sums[i] - sums[j]) / n).abs() / se;
            let p = (2.0 * (1.0 - normal.cdf(zij))).min(1.0);
            z[i][j] = zij;
            raw[i][j] = p;
            adj[i][j] = (p * comparisons).min(1.0);
        }
    }
    let min_adj = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| adj[i][j]);
    Ok(StatTestResult {
        test: "dunn-bonferroni".into(),
        statistic: comparisons,
        p_value: min_adj.fold(1.0, f64::min),
        alpha,
        labels: labels.to_vec(),
        z,
        raw_p: raw,
        adjusted_p: adj,
    })
}
