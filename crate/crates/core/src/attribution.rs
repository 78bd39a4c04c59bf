//! Monte Carlo Shapley attribution and its comparison with causal distance
//! through per-feature drift sweeps.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::drift::{breaking_point_from_steps, step_metrics, DriftScenario, DriftTarget, Threshold};
use crate::scm::{Mechanism, Scm};
use crate::stats::{mix_seed, rng_for};
use crate::tabular::Dataset;
use crate::{Error, Result};

/// Anything that maps a feature row to a score.
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;
    fn predict_row(&self, row: &[f64]) -> f64;
}

impl Predictor for Classifier {
    fn n_features(&self) -> usize {
        self.features().len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        Classifier::predict_row(self, row)
    }
}

/// Wraps a closure as a predictor over `n` features.
pub struct FnPredictor<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn n_features(&self) -> usize {
        self.n
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        (self.f)(row)
    }
}

fn check_inputs(model: &dyn Predictor, background: &[Vec<f64>], x: &[f64]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::Data("empty background set".into()));
    }
    let p = model.n_features();
    if x.len() != p || background.iter().any(|b| b.len() != p) {
        return Err(Error::Model("schema mismatch: row width differs from the model's features".into()));
    }
    Ok(())
}

/// Adds the marginal contributions of one ordering walked from `base` to `x`.
fn walk_ordering(model: &dyn Predictor, base: &[f64], x: &[f64], order: &[usize], phi: &mut [f64]) {
    let mut z = base.to_vec();
    let mut prev = model.predict_row(&z);
    for &j in order {
        z[j] = x[j];
        let cur = model.predict_row(&z);
        phi[j] += cur - prev;
        prev = cur;
    }
}

/// Permutation-sampling Shapley values: each draw pairs a random feature
/// ordering with a random background row.
pub fn shapley_mc(model: &dyn Predictor, background: &[Vec<f64>], x: &[f64], n_perms: usize, seed: u64) -> Result<Vec<f64>> {
    check_inputs(model, background, x)?;
    if n_perms == 0 {
        return Err(Error::Config("n_perms must be at least 1".into()));
    }
    let p = x.len();
    let mut rng = rng_for(seed, 0);
    let mut phi = vec![0.0; p];
    let mut order: Vec<usize> = (0..p).collect();
    for _ in 0..n_perms {
        order.shuffle(&mut rng);
        let b = &background[rng.random_range(0..background.len())];
        walk_ordering(model, b, x, &order, &mut phi);
    }
    for v in &mut phi {
        *v /= n_perms as f64;
    }
    Ok(phi)
}

/// Exact Shapley values against the background: every ordering with every
/// background row. Only practical for a handful of features.
pub fn shapley_exhaustive(model: &dyn Predictor, background: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    check_inputs(model, background, x)?;
    let p = x.len();
    if p > 8 {
        return Err(Error::Config("exhaustive Shapley is limited to 8 features".into()));
    }
    let mut phi = vec![0.0; p];
    let mut order: Vec<usize> = (0..p).collect();
    let mut count = 0usize;
    loop {
        for b in background {
            walk_ordering(model, b, x, &order, &mut phi);
            count += 1;
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    for v in &mut phi {
        *v /= count as f64;
    }
    Ok(phi)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn feature_rows(model: &Classifier, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = model
        .features()
        .iter()
        .map(|f| ds.column_index(&f.name))
        .collect::<Result<_>>()
        .map_err(|_| Error::Model("schema mismatch: data lacks model features".into()))?;
    let mut rows: Vec<Vec<f64>> = ds.rows().map(|r| idx.iter().map(|&j| r[j]).collect()).collect();
    // Canonical order so the seeded draws below ignore the input row order.
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_attribution: f64,
}

pub const BACKGROUND_ROWS: usize = 100;

/// Mean |Shapley| over `n_rows` seeded rows of `ds`, descending, ties by name.
/// The background is `BACKGROUND_ROWS` further seeded rows of `ds`.
pub fn rank_features(model: &Classifier, ds: &Dataset, n_rows: usize, n_perms: usize, seed: u64) -> Result<Vec<FeatureImportance>> {
    if n_rows == 0 || n_rows > ds.n_rows() {
        return Err(Error::Config(format!("n_rows must lie in 1..={}", ds.n_rows())));
    }
    let rows = feature_rows(model, ds)?;
    let mut rng = rng_for(seed, 0xB6);
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut rng);
    let background: Vec<Vec<f64>> = idx.iter().take(BACKGROUND_ROWS).map(|&i| rows[i].clone()).collect();
    let mut explain: Vec<usize> = (0..rows.len()).collect();
    explain.shuffle(&mut rng);
    explain.truncate(n_rows);

    let per_row: Vec<Result<Vec<f64>>> = explain
        .par_iter()
        .enumerate()
        .map(|(r, &i)| shapley_mc(model, &background, &rows[i], n_perms, mix_seed(seed, r as u64)))
        .collect();
    let p = model.features().len();
    let mut total = vec![0.0; p];
    for phi in per_row {
        for (t, v) in total.iter_mut().zip(phi?) {
            *t += v.abs();
        }
    }
    let mut out: Vec<FeatureImportance> = model
        .features()
        .iter()
        .zip(total)
        .map(|(f, t)| FeatureImportance {
            feature: f.name.clone(),
            mean_abs_attribution: t / n_rows as f64,
        })
        .collect();
    out.sort_by(|a, b| {
        b.mean_abs_attribution
            .total_cmp(&a.mean_abs_attribution)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub delta_max: f64,
    pub k_steps: usize,
    pub step_eval_n: usize,
    pub threshold: Threshold,
    pub consecutive: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            delta_max: -0.5,
            k_steps: 20,
            step_eval_n: 500,
            threshold: Threshold::default(),
            consecutive: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub feature: String,
    pub mean_abs_attribution: f64,
    /// `None` when no directed path reaches the target.
    pub causal_distance: Option<usize>,
    pub drift_tested: bool,
    /// The (parent, child) edge whose coefficients were scaled.
    pub drifted_edge: Option<(String, String)>,
    /// `None` with `drift_tested` means robust over the swept range.
    pub delta_crit: Option<f64>,
    pub rule: String,
}

impl AttributionRecord {
    pub fn delta_crit_label(&self) -> String {
        match (self.drift_tested, self.delta_crit) {
            (false, _) => "untestable".into(),
            (true, None) => "robust".into(),
            (true, Some(d)) => format!("{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub target: String,
    pub records: Vec<AttributionRecord>,
}

fn coefficient_strength(mech: &Mechanism, parent: &str) -> f64 {
    let pos = mech.parents().iter().position(|p| p == parent);
    match (mech, pos) {
        (Mechanism::LinearGaussian(m), Some(j)) => m.beta[j].abs(),
        (Mechanism::BinaryLogistic(m), Some(j)) => m.beta[j].abs(),
        (Mechanism::MultinomialSoftmax(m), Some(j)) => m.coef.iter().map(|r| r[j].abs()).fold(0.0, f64::max),
        _ => 0.0,
    }
}

/// The edge into `target` that a sweep for `feature` drifts: the feature's
/// own edge at distance 1, otherwise the mediator→target edge on a shortest
/// path (strongest fitted coefficient first, then name).
pub fn sweep_edge(scm: &Scm, feature: &str, target: &str) -> Result<Option<(String, String)>> {
    let g = scm.graph();
    let Some(dist) = g.causal_distance(feature, target)? else {
        return Ok(None);
    };
    if dist == 0 {
        return Err(Error::Config(format!("`{feature}` is the target itself")));
    }
    if dist == 1 {
        return Ok(Some((feature.to_string(), target.to_string())));
    }
    let t = g.index_of(target)?;
    let mech = scm.mechanism(target)?;
    let mut candidates = Vec::new();
    for p in g.parents(t) {
        let name = g.name(p);
        if g.causal_distance(feature, name)? == Some(dist - 1) {
            candidates.push((coefficient_strength(mech, name), name.to_string()));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(candidates.into_iter().next().map(|(_, m)| (m, target.to_string())))
}

/// Drift sweep for each feature; features with no path to the target are
/// reported as untestable instead of swept.
pub fn per_feature_drift_sweep(
    scm: &Scm,
    model: &Classifier,
    features: &[FeatureImportance],
    target: &str,
    cfg: &SweepConfig,
) -> Result<AttributionReport> {
    let rule = format!("consecutive_steps({})", cfg.consecutive);
    let mut records = Vec::new();
    for fi in features {
        let distance = scm.graph().causal_distance(&fi.feature, target)?;
        let edge = sweep_edge(scm, &fi.feature, target)?;
        let (tested, delta_crit) = match &edge {
            None => (false, None),
            Some((parent, child)) => {
                log::info!("sweeping {parent} -> {child} for feature {}", fi.feature);
                let sc = DriftScenario {
                    name: format!("sweep_{}", fi.feature),
                    targets: vec![DriftTarget {
                        child: child.clone(),
                        parent: parent.clone(),
                        delta_max: cfg.delta_max,
                    }],
                    k_steps: cfg.k_steps,
                    step_eval_n: cfg.step_eval_n,
                    threshold: cfg.threshold.clone(),
                    ..DriftScenario::default()
                };
                let steps = step_metrics(scm, model, &sc, cfg.seed)?;
                (true, breaking_point_from_steps(&steps, &cfg.threshold, cfg.consecutive)?.delta_crit)
            }
        };
        records.push(AttributionRecord {
            feature: fi.feature.clone(),
            mean_abs_attribution: fi.mean_abs_attribution,
            causal_distance: distance,
            drift_tested: tested,
            drifted_edge: edge,
            delta_crit,
            rule: rule.clone(),
        });
    }
    Ok(AttributionReport {
        target: target.to_string(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn background() -> Vec<Vec<f64>> {
        vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, -1.0], vec![0.5, 0.5, 0.5]]
    }

    #[test]
    fn dictator_function() {
        let f = FnPredictor { n: 3, f: |r: &[f64]| r[0] };
        let bg = background();
        let x = [3.0, 7.0, 9.0];
        let phi = shapley_exhaustive(&f, &bg, &x).unwrap();
        let mean_bg = bg.iter().map(|r| r[0]).sum::<f64>() / 3.0;
        assert!((phi[0] - (3.0 - mean_bg)).abs() < 1e-12);
        assert_eq!((phi[1], phi[2]), (0.0, 0.0));
    }

    #[test]
    fn exhaustive_efficiency() {
        let f = FnPredictor {
            n: 3,
            f: |r: &[f64]| (r[0] * r[1] - r[2]).tanh() + r[0] * r[0],
        };
        let bg = background();
        let x = [0.3, -1.2, 2.5];
        let phi = shapley_exhaustive(&f, &bg, &x).unwrap();
        let mean_bg = bg.iter().map(|r| f.predict_row(r)).sum::<f64>() / bg.len() as f64;
        assert!((phi.iter().sum::<f64>() - (f.predict_row(&x) - mean_bg)).abs() < 1e-10);
    }

    #[test]
    fn permutations_enumerated() {
        let mut v = vec![0, 1, 2];
        let mut n = 1;
        while next_permutation(&mut v) {
            n += 1;
        }
        assert_eq!(n, 6);
    }

    #[test]
    fn constant_model_attributes_nothing() {
        let f = FnPredictor { n: 3, f: |_: &[f64]| 0.42 };
        let phi = shapley_mc(&f, &background(), &[1.0, 2.0, 3.0], 50, 1).unwrap();
        assert!(phi.iter().all(|&v| v == 0.0));
    }
}
