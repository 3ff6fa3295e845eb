//! Model-versus-human agreement: id alignment, Pearson correlation and a
//! seeded percentile bootstrap.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::inference::QueryResult;
use crate::stimulus::HumanDataTable;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0;
pub const EVAL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("correlation needs at least 2 pairs, got {0}")]
    TooFew(usize),
    #[error("correlation undefined: {0} ratings have zero variance")]
    ZeroVariance(&'static str),
    #[error("ids do not align; model-only: [{}]; human-only: [{}]", .model_only.join(", "), .human_only.join(", "))]
    Orphans {
        model_only: Vec<String>,
        human_only: Vec<String>,
    },
}

/// `kind:label`, e.g. `goal:gemB` or `belief:ball@box1`.
pub fn question_id(q: &QueryResult, label: &str) -> String {
    format!("{}:{label}", q.kind)
}

/// Flattens query answers into (question id, rating) pairs.
pub fn model_ratings(results: &[QueryResult]) -> Vec<(String, f64)> {
    results
        .iter()
        .flat_map(|q| q.labels.iter().zip(&q.ratings).map(move |(l, r)| (question_id(q, l), *r)))
        .collect()
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    let n = xs.len();
    if n < 2 {
        return Err(EvalError::TooFew(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(EvalError::ZeroVariance("model"));
    }
    if syy == 0.0 {
        return Err(EvalError::ZeroVariance("human"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub n: usize,
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    /// Resamples skipped because one side had zero variance.
    pub degenerate_resamples: usize,
}

/// Pearson r with a 95% percentile bootstrap over pairs.
pub fn correlate(xs: &[f64], ys: &[f64], resamples: usize, seed: u64) -> Result<Correlation, EvalError> {
    let r = pearson(xs, ys)?;
    let n = xs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(resamples);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..resamples {
        for k in 0..n {
            let i = rng.random_range(0..n);
            bx[k] = xs[i];
            by[k] = ys[i];
        }
        if let Ok(b) = pearson(&bx, &by) {
            stats.push(b);
        }
    }
    let degenerate_resamples = resamples - stats.len();
    stats.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if stats.is_empty() {
        (r, r)
    } else {
        (quantile(&stats, 0.025), quantile(&stats, 0.975))
    };
    Ok(Correlation {
        n,
        r,
        ci_low,
        ci_high,
        resamples,
        degenerate_resamples,
    })
}

/// Linear interpolation between order statistics of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRating {
    pub stimulus_id: String,
    pub question_id: String,
    pub domain: String,
    pub model: f64,
    pub human: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_std: Option<f64>,
}

/// Model output for one stimulus, ready for alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusRatings {
    pub stimulus_id: String,
    pub domain: String,
    pub ratings: Vec<(String, f64)>,
}

/// Pairs every model rating with its human counterpart; any id present on
/// one side only is an error.
pub fn align(model: &[StimulusRatings], human: &HumanDataTable) -> Result<Vec<PairedRating>, EvalError> {
    let mut human_by: BTreeMap<(&str, &str), (f64, Option<f64>)> = BTreeMap::new();
    for h in &human.rows {
        human_by.insert((&h.stimulus_id, &h.question_id), (h.mean, h.std));
    }
    let mut pairs = Vec::new();
    let mut model_only = Vec::new();
    for s in model {
        for (q, v) in &s.ratings {
            match human_by.remove(&(s.stimulus_id.as_str(), q.as_str())) {
                Some((mean, std)) => pairs.push(PairedRating {
                    stimulus_id: s.stimulus_id.clone(),
                    question_id: q.clone(),
                    domain: s.domain.clone(),
                    model: *v,
                    human: mean,
                    human_std: std,
                }),
                None => model_only.push(format!("{}/{q}", s.stimulus_id)),
            }
        }
    }
    let human_only: Vec<String> = human_by.keys().map(|(s, q)| format!("{s}/{q}")).collect();
    if !model_only.is_empty() || !human_only.is_empty() {
        return Err(EvalError::Orphans { model_only, human_only });
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCorrelation {
    pub key: String,
    pub n: usize,
    /// `None` when undefined for the group (too few pairs or no variance).
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub version: u32,
    pub seed: u64,
    pub pooled: Correlation,
    pub per_domain: Vec<(String, Correlation)>,
    pub per_stimulus: Vec<GroupCorrelation>,
    /// Scatter data: x = model, y = human.
    pub pairs: Vec<PairedRating>,
}

impl EvalReport {
    pub fn build(pairs: Vec<PairedRating>, resamples: usize, seed: u64) -> Result<Self, EvalError> {
        let xs: Vec<f64> = pairs.iter().map(|p| p.model).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.human).collect();
        let pooled = correlate(&xs, &ys, resamples, seed)?;

        let mut by_domain: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let mut by_stim: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for p in &pairs {
            for (m, k) in [(&mut by_domain, p.domain.as_str()), (&mut by_stim, p.stimulus_id.as_str())] {
                let e = m.entry(k).or_default();
                e.0.push(p.model);
                e.1.push(p.human);
            }
        }
        let mut per_domain = Vec::new();
        // Single-domain evaluations already report the pooled figure.
        if by_domain.len() > 1 {
            for (d, (x, y)) in &by_domain {
                if let Ok(c) = correlate(x, y, resamples, seed) {
                    per_domain.push((d.to_string(), c));
                }
            }
        }
        let per_stimulus = by_stim
            .iter()
            .map(|(s, (x, y))| GroupCorrelation {
                key: s.to_string(),
                n: x.len(),
                r: pearson(x, y).ok(),
            })
            .collect();
        Ok(Self {
            version: EVAL_SCHEMA_VERSION,
            seed,
            pooled,
            per_domain,
            per_stimulus,
            pairs,
        })
    }

    /// Scatter data as CSV for external plotting.
    pub fn scatter_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["stimulus_id", "question_id", "domain", "model", "human", "human_std"])
            .expect("in-memory write");
        for p in &self.pairs {
            w.write_record([
                p.stimulus_id.clone(),
                p.question_id.clone(),
                p.domain.clone(),
                p.model.to_string(),
                p.human.to_string(),
                p.human_std.map(|s| s.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_matches_hand_computation() {
        // x = 1,2,3; y = 1,3,2: sxy = 1, sxx = syy = 2.
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 2.0], &[5.0, 5.0]), Err(EvalError::ZeroVariance("human")));
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
        assert!((quantile(&[0.0, 10.0], 0.25) - 2.5).abs() < 1e-12);
    }
}
