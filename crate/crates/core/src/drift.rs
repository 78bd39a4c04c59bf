//! Causal parametric drift: stepped coefficient-scaling scenarios, streamed
//! robustness curves, breaking points and their bootstrap distribution.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{binary_target, validate_metric_name, Classifier, Confusion, MetricsVector};
use crate::scm::{ScaleTarget, Scm};
use crate::stats::{self, mix_seed, rng_for};
use crate::tabular::Dataset;
use crate::{Error, Result};

const STREAM_TAG: u64 = 0x5354_5245_414d;
const EVAL_TAG: u64 = 0x4556_414c;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTarget {
    pub child: String,
    pub parent: String,
    pub delta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub metric: String,
    pub value: f64,
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold {
            metric: "precision".into(),
            value: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftScenario {
    pub name: String,
    pub targets: Vec<DriftTarget>,
    pub k_steps: usize,
    pub baseline_n: usize,
    pub step_n: usize,
    pub final_n: usize,
    pub step_eval_n: usize,
    pub threshold: Threshold,
    pub window: usize,
}

impl Default for DriftScenario {
    fn default() -> Self {
        DriftScenario {
            name: "scenario".into(),
            targets: Vec::new(),
            k_steps: 20,
            baseline_n: 3000,
            step_n: 200,
            final_n: 3000,
            step_eval_n: 500,
            threshold: Threshold::default(),
            window: 300,
        }
    }
}

impl DriftScenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: DriftScenario = toml::from_str(text).map_err(|e| Error::Parse {
            what: "scenario",
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "scenario",
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_steps == 0 {
            return Err(Error::Config("k_steps must be at least 1".into()));
        }
        if self.baseline_n == 0 || self.step_n == 0 || self.final_n == 0 || self.step_eval_n == 0 || self.window == 0 {
            return Err(Error::Config("all scenario sizes must be at least 1".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("scenario has no targets".into()));
        }
        if self.targets.iter().any(|t| !t.delta_max.is_finite()) {
            return Err(Error::Config("delta_max must be finite".into()));
        }
        validate_metric_name(&self.threshold.metric)
    }

    /// δ_k = k·δ_max/K for the first target (the curve's reporting axis).
    pub fn delta_at(&self, k: usize) -> f64 {
        step_delta(k, self.k_steps, self.targets[0].delta_max)
    }

    /// All targets scaled to step `k`, applied together.
    pub fn scale_targets(&self, k: usize) -> Vec<ScaleTarget> {
        self.targets
            .iter()
            .map(|t| ScaleTarget::new(&t.child, &t.parent, step_delta(k, self.k_steps, t.delta_max)))
            .collect()
    }

    fn segment_len(&self, k: usize) -> usize {
        if k == 0 {
            self.baseline_n
        } else if k == self.k_steps {
            self.final_n
        } else {
            self.step_n
        }
    }

    pub fn stream_len(&self) -> usize {
        (0..=self.k_steps).map(|k| self.segment_len(k)).sum()
    }
}

pub fn step_delta(k: usize, k_steps: usize, delta_max: f64) -> f64 {
    k as f64 * delta_max / k_steps as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub sample_index: usize,
    pub step: usize,
    pub delta: f64,
    pub y_true: bool,
    pub y_pred: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    /// Index of the last sample in the window.
    pub end_index: usize,
    pub step: usize,
    pub metrics: MetricsVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub delta: f64,
    pub metrics: MetricsVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub scenario: DriftScenario,
    pub stream: Vec<StreamRecord>,
    pub windows: Vec<WindowRecord>,
    pub steps: Vec<StepRecord>,
}

/// Intervened SCM at step `k`.
pub fn scm_at_step(scm: &Scm, sc: &DriftScenario, k: usize) -> Result<Scm> {
    scm.intervene_scale(&sc.scale_targets(k))
}

/// Independent per-step evaluation sets (`step_eval_n` rows each), k = 0..=K.
pub fn step_datasets(scm: &Scm, sc: &DriftScenario, seed: u64) -> Result<Vec<(usize, f64, Dataset)>> {
    sc.validate()?;
    (0..=sc.k_steps)
        .into_par_iter()
        .map(|k| {
            let s = scm_at_step(scm, sc, k)?;
            let ds = s.sample(sc.step_eval_n, mix_seed(seed, EVAL_TAG + k as u64))?;
            Ok((k, sc.delta_at(k), ds))
        })
        .collect()
}

/// Per-step metrics on the independent evaluation sets.
pub fn step_metrics(scm: &Scm, model: &Classifier, sc: &DriftScenario, seed: u64) -> Result<Vec<StepRecord>> {
    step_datasets(scm, sc, seed)?
        .into_iter()
        .map(|(k, delta, ds)| {
            Ok(StepRecord {
                step: k,
                delta,
                metrics: model.evaluate(&ds)?,
            })
        })
        .collect()
}

pub fn run_scenario(scm: &Scm, model: &Classifier, sc: &DriftScenario, seed: u64) -> Result<RobustnessCurve> {
    sc.validate()?;
    if sc.window > sc.stream_len() {
        return Err(Error::Config(format!(
            "window {} exceeds the stream length {}",
            sc.window,
            sc.stream_len()
        )));
    }
    let segments: Vec<Result<(Vec<bool>, Vec<f64>)>> = (0..=sc.k_steps)
        .into_par_iter()
        .map(|k| {
            let s = scm_at_step(scm, sc, k)?;
            let ds = s.sample(sc.segment_len(k), mix_seed(seed, STREAM_TAG + k as u64))?;
            Ok((binary_target(&ds, model.target())?, model.predict_proba(&ds)?))
        })
        .collect();
    let mut stream = Vec::with_capacity(sc.stream_len());
    for (k, seg) in segments.into_iter().enumerate() {
        let (y, scores) = seg?;
        let delta = sc.delta_at(k);
        for (t, s) in y.into_iter().zip(scores) {
            stream.push(StreamRecord {
                sample_index: stream.len(),
                step: k,
                delta,
                y_true: t,
                y_pred: s >= 0.5,
                score: s,
            });
        }
    }
    let windows = rolling_windows(&stream, sc.window);
    let steps = step_metrics(scm, model, sc, seed)?;
    Ok(RobustnessCurve {
        scenario: sc.clone(),
        stream,
        windows,
        steps,
    })
}

/// Confusion-matrix metrics over every complete window of `w` samples,
/// maintained with sliding counts.
pub fn rolling_windows(stream: &[StreamRecord], w: usize) -> Vec<WindowRecord> {
    let mut out = Vec::new();
    if w == 0 || w > stream.len() {
        return out;
    }
    let mut c = Confusion::default();
    let bump = |c: &mut Confusion, r: &StreamRecord, add: bool| {
        let slot = match (r.y_true, r.y_pred) {
            (true, true) => &mut c.tp,
            (false, true) => &mut c.fp,
            (false, false) => &mut c.tn,
            (true, false) => &mut c.fn_,
        };
        if add {
            *slot += 1;
        } else {
            *slot -= 1;
        }
    };
    for (i, r) in stream.iter().enumerate() {
        bump(&mut c, r, true);
        if i >= w {
            bump(&mut c, &stream[i - w], false);
        }
        if i + 1 >= w {
            out.push(WindowRecord {
                end_index: i,
                step: r.step,
                metrics: MetricsVector::from_confusion(&c),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "m")]
pub enum BreakingRule {
    /// First step that opens a run of `m` consecutive per-step values below τ.
    ConsecutiveSteps(usize),
    /// First step all of whose complete rolling windows (those ending inside
    /// the step's block of the stream) lie below τ.
    RwaConsistent,
}

impl BreakingRule {
    pub fn name(&self) -> String {
        match self {
            BreakingRule::ConsecutiveSteps(m) => format!("consecutive_steps({m})"),
            BreakingRule::RwaConsistent => "rwa_consistent".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakingPointEstimate {
    pub delta_crit: Option<f64>,
    pub step: Option<usize>,
    pub rule: BreakingRule,
    pub found: bool,
}

fn below(m: &MetricsVector, tau: &Threshold) -> Result<bool> {
    Ok(m.get(&tau.metric)?.is_some_and(|v| v < tau.value))
}

pub fn breaking_point_from_steps(steps: &[StepRecord], tau: &Threshold, m: usize) -> Result<BreakingPointEstimate> {
    validate_metric_name(&tau.metric)?;
    if steps.is_empty() {
        return Err(Error::Data("empty robustness curve".into()));
    }
    if m == 0 {
        return Err(Error::Config("consecutive-step count must be at least 1".into()));
    }
    let flags: Vec<bool> = steps.iter().map(|s| below(&s.metrics, tau)).collect::<Result<_>>()?;
    let hit = (0..flags.len()).find(|&i| i + m <= flags.len() && flags[i..i + m].iter().all(|&b| b));
    Ok(BreakingPointEstimate {
        delta_crit: hit.map(|i| steps[i].delta),
        step: hit.map(|i| steps[i].step),
        rule: BreakingRule::ConsecutiveSteps(m),
        found: hit.is_some(),
    })
}

pub fn breaking_point(curve: &RobustnessCurve, tau: &Threshold, rule: BreakingRule) -> Result<BreakingPointEstimate> {
    match rule {
        BreakingRule::ConsecutiveSteps(m) => breaking_point_from_steps(&curve.steps, tau, m),
        BreakingRule::RwaConsistent => {
            validate_metric_name(&tau.metric)?;
            if curve.windows.is_empty() {
                return Err(Error::Data("empty robustness curve".into()));
            }
            for k in 0..=curve.scenario.k_steps {
                let mut any = false;
                let mut all_below = true;
                for w in curve.windows.iter().filter(|w| w.step == k) {
                    any = true;
                    if !below(&w.metrics, tau)? {
                        all_below = false;
                        break;
                    }
                }
                if any && all_below {
                    return Ok(BreakingPointEstimate {
                        delta_crit: Some(curve.scenario.delta_at(k)),
                        step: Some(k),
                        rule,
                        found: true,
                    });
                }
            }
            Ok(BreakingPointEstimate {
                delta_crit: None,
                step: None,
                rule,
                found: false,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub std: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub n_replications: usize,
    pub n_found: usize,
    /// δ_crit per replication, in seed order.
    pub values: Vec<Option<f64>>,
}

impl BootstrapSummary {
    pub fn from_values(values: Vec<Option<f64>>) -> Self {
        let found: Vec<f64> = values.iter().flatten().copied().collect();
        let n_found = found.len();
        let (mean, median, ci_lower, ci_upper) = if n_found == 0 {
            (None, None, None, None)
        } else {
            let mut sorted = found.clone();
            sorted.sort_by(f64::total_cmp);
            (
                Some(stats::mean(&found)),
                Some(stats::quantile_sorted(&sorted, 0.5)),
                Some(stats::quantile_sorted(&sorted, 0.025)),
                Some(stats::quantile_sorted(&sorted, 0.975)),
            )
        };
        BootstrapSummary {
            mean,
            median,
            std: (n_found >= 2).then(|| stats::std_dev(&found, 1)),
            ci_lower,
            ci_upper,
            n_replications: values.len(),
            n_found,
            values,
        }
    }
}

/// B replications with seeds `base_seed..base_seed+B`, each scored on the
/// per-step evaluation sets with the consecutive-steps rule.
pub fn bootstrap_breaking_point(
    scm: &Scm,
    model: &Classifier,
    sc: &DriftScenario,
    replications: usize,
    base_seed: u64,
    consecutive: usize,
) -> Result<BootstrapSummary> {
    if replications < 2 {
        return Err(Error::Config("bootstrap needs at least 2 replications".into()));
    }
    let values: Vec<Result<Option<f64>>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let steps = step_metrics(scm, model, sc, base_seed + r)?;
            Ok(breaking_point_from_steps(&steps, &sc.threshold, consecutive)?.delta_crit)
        })
        .collect();
    Ok(BootstrapSummary::from_values(values.into_iter().collect::<Result<_>>()?))
}

/// Replaces `feature` on a uniformly chosen share `fraction` of rows by a
/// permutation of those rows' own values, so the column's multiset is kept.
pub fn shuffle_feature(ds: &Dataset, feature: &str, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("fraction {fraction} outside [0, 1]")));
    }
    let j = ds.column_index(feature)?;
    let mut rng = rng_for(seed, j as u64);
    let mut rows: Vec<usize> = (0..ds.n_rows()).collect();
    rows.shuffle(&mut rng);
    let m = (fraction * ds.n_rows() as f64).round() as usize;
    let chosen = &rows[..m];
    let mut vals: Vec<f64> = chosen.iter().map(|&i| ds.value(i, j)).collect();
    vals.shuffle(&mut rng);
    let mut col = ds.column(j);
    for (&i, v) in chosen.iter().zip(vals) {
        col[i] = v;
    }
    ds.with_column(j, &col)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub fraction: f64,
    pub metrics: MetricsVector,
}

pub fn replacement_noise_baseline(
    scm: &Scm,
    model: &Classifier,
    fractions: &[f64],
    feature: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<NoiseRecord>> {
    let base = scm.sample(n, seed)?;
    base.column_index(feature)?;
    fractions
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let noisy = shuffle_feature(&base, feature, f, mix_seed(seed, i as u64 + 1))?;
            Ok(NoiseRecord {
                fraction: f,
                metrics: model.evaluate(&noisy)?,
            })
        })
        .collect()
}

/// Noise shuffling at fraction k/K next to causal drift at δ_k, both drawn
/// with the same seed so they start from the same baseline rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseContrastRecord {
    pub step: usize,
    pub fraction: f64,
    pub delta: f64,
    pub noise: MetricsVector,
    pub causal: MetricsVector,
    pub delta_precision: f64,
}

pub fn noise_vs_causal(
    scm: &Scm,
    model: &Classifier,
    sc: &DriftScenario,
    feature: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<NoiseContrastRecord>> {
    sc.validate()?;
    let fractions: Vec<f64> = (0..=sc.k_steps).map(|k| k as f64 / sc.k_steps as f64).collect();
    let noise = replacement_noise_baseline(scm, model, &fractions, feature, n, seed)?;
    (0..=sc.k_steps)
        .map(|k| {
            let causal = model.evaluate(&scm_at_step(scm, sc, k)?.sample(n, seed)?)?;
            let nz = noise[k].metrics;
            Ok(NoiseContrastRecord {
                step: k,
                fraction: fractions[k],
                delta: sc.delta_at(k),
                noise: nz,
                causal,
                delta_precision: causal.precision - nz.precision,
            })
        })
        .collect()
}
