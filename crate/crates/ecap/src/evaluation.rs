//! Empirical excess-certainty estimation on real forecast archives: windowed
//! point estimates with bootstrap confidence intervals, per group when the
//! archive carries group keys.

use rand::Rng;
use serde::Serialize;

use crate::error::{EcapError, Result};
use crate::model::{flip, Probability};
use crate::rng::stream_rng;

/// One archived forecast: the published estimate, whether the event occurred,
/// and optional grouping metadata.
#[derive(Debug, Clone)]
pub struct ForecastRecord {
    pub p_tilde: Probability,
    pub outcome: bool,
    pub group: Option<String>,
    pub weight: Option<f64>,
}

impl ForecastRecord {
    pub fn new(p_tilde: Probability, outcome: bool) -> Self {
        Self {
            p_tilde,
            outcome,
            group: None,
            weight: None,
        }
    }
}

/// Selection window on the flipped scale, closed on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    lower: f64,
    upper: f64,
}

impl Window {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_finite() && upper.is_finite() && 0.0 <= lower && lower < upper && upper <= 0.5 {
            Ok(Self { lower, upper })
        } else {
            Err(EcapError::Config(format!(
                "window must satisfy 0 <= lower < upper <= 0.5, got [{lower}, {upper}]"
            )))
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

// (flipped outcome as 0/1, flipped adjusted value) for in-window records
fn windowed_pairs(
    records: &[ForecastRecord],
    adjusted: &[Probability],
    window: &Window,
) -> Result<Vec<(f64, f64)>> {
    if records.len() != adjusted.len() {
        return Err(EcapError::Config(
            "adjusted probabilities must align one-to-one with the records".into(),
        ));
    }
    let mut pairs = Vec::new();
    for (rec, adj) in records.iter().zip(adjusted) {
        let f = flip(rec.p_tilde);
        if window.contains(f.value) {
            let z = rec.outcome != f.flipped; // flipping swaps the outcome
            let a = if f.flipped {
                1.0 - adj.value()
            } else {
                adj.value()
            };
            pairs.push((f64::from(z), a));
        }
    }
    Ok(pairs)
}

fn ec_of_pairs(pairs: &[(f64, f64)]) -> Result<f64> {
    let n = pairs.len() as f64;
    let p_bar = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let a_bar = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    if !(a_bar > 0.0) {
        return Err(EcapError::Domain(
            "mean adjusted probability in the window must be positive".into(),
        ));
    }
    Ok((p_bar - a_bar) / a_bar)
}

/// Windowed empirical excess certainty: the relative gap between the outcome
/// frequency and the mean adjusted probability among records whose flipped
/// estimate falls in the window. Outcomes of flipped records are flipped
/// along with their probabilities.
pub fn empirical_ec(
    records: &[ForecastRecord],
    adjusted: &[Probability],
    window: &Window,
) -> Result<f64> {
    let pairs = windowed_pairs(records, adjusted, window)?;
    if pairs.is_empty() {
        return Err(EcapError::InsufficientData(
            "no records fall inside the evaluation window".into(),
        ));
    }
    ec_of_pairs(&pairs)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Percentile bootstrap interval for the windowed empirical excess certainty,
/// resampling in-window records with replacement. Deterministic in the seed.
pub fn bootstrap_ci(
    records: &[ForecastRecord],
    adjusted: &[Probability],
    window: &Window,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EcapError::Config(
            "confidence level must be in (0, 1)".into(),
        ));
    }
    if draws < 2 {
        return Err(EcapError::Config("need at least 2 bootstrap draws".into()));
    }
    let pairs = windowed_pairs(records, adjusted, window)?;
    if pairs.len() < 2 {
        return Err(EcapError::InsufficientData(
            "bootstrap needs at least 2 in-window records".into(),
        ));
    }
    let n = pairs.len();
    let mut rng = stream_rng(seed, 0);
    let mut stats = Vec::with_capacity(draws);
    let mut resample = vec![(0.0, 0.0); n];
    for _ in 0..draws {
        for slot in resample.iter_mut() {
            *slot = pairs[rng.random_range(0..n)];
        }
        // degenerate resamples (all-zero adjusted means) sort to the top end
        let ec = ec_of_pairs(&resample).unwrap_or(f64::INFINITY);
        stats.push(ec);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = 1.0 - level;
    Ok((
        percentile(&stats, 0.5 * alpha),
        percentile(&stats, 1.0 - 0.5 * alpha),
    ))
}

/// Per-group evaluation row. Groups with no in-window records report only
/// their size; groups with a single record carry a point estimate but no
/// interval.
#[derive(Debug, Clone, Serialize)]
pub struct GroupEc {
    pub key: String,
    pub n_delta: usize,
    pub ec: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

/// Applies the windowed estimator and bootstrap per group, preserving the
/// order of first appearance. Records without a key form the unnamed group.
pub fn grouped_ec_curve(
    records: &[ForecastRecord],
    adjusted: &[Probability],
    window: &Window,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<GroupEc>> {
    if records.len() != adjusted.len() {
        return Err(EcapError::Config(
            "adjusted probabilities must align one-to-one with the records".into(),
        ));
    }
    let mut keys: Vec<String> = Vec::new();
    for rec in records {
        let key = rec.group.clone().unwrap_or_default();
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = Vec::with_capacity(keys.len());
    for (gi, key) in keys.iter().enumerate() {
        let mut group_records = Vec::new();
        let mut group_adjusted = Vec::new();
        for (rec, adj) in records.iter().zip(adjusted) {
            if rec.group.clone().unwrap_or_default() == *key {
                group_records.push(rec.clone());
                group_adjusted.push(*adj);
            }
        }
        let pairs = windowed_pairs(&group_records, &group_adjusted, window)?;
        let n_delta = pairs.len();
        let ec = if n_delta >= 1 {
            ec_of_pairs(&pairs).ok()
        } else {
            None
        };
        let (lo, hi) = if n_delta >= 2 {
            match bootstrap_ci(
                &group_records,
                &group_adjusted,
                window,
                level,
                draws,
                crate::rng::stream_seed(seed, gi as u64),
            ) {
                Ok((l, h)) => (Some(l), Some(h)),
                Err(_) => (None, None),
            }
        } else {
            (None, None)
        };
        out.push(GroupEc {
            key: key.clone(),
            n_delta,
            ec,
            lo,
            hi,
        });
    }
    Ok(out)
}
