//! Conventional drift monitors: per-feature Jensen–Shannon and two-sample KS,
//! PCA reconstruction error, and supervised detection under label delay.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::stats;
use crate::tabular::{ColumnKind, Dataset};
use crate::{Error, Result};

/// Jensen–Shannon divergence in bits. Inputs are normalized first.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Data("histograms must share a non-empty support".into()));
    }
    let norm = |h: &[f64]| -> Result<Vec<f64>> {
        let s: f64 = h.iter().sum();
        if h.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || !(s > 0.0) {
            return Err(Error::Data("histogram cannot be normalized".into()));
        }
        Ok(h.iter().map(|x| x / s).collect())
    };
    let (p, q) = (norm(p)?, norm(q)?);
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(&q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            js += 0.5 * b * (b / m).log2();
        }
    }
    Ok(js.clamp(0.0, 1.0))
}

/// Two-sample KS: (D, asymptotic p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 5 || b.len() < 5 {
        return Err(Error::Data("two-sample KS needs at least 5 values per sample".into()));
    }
    let d = stats::ks_statistic(a, b);
    Ok((d, stats::ks_p_value(d, a.len(), b.len())))
}

/// Histogram layout for one feature, fixed from the reference data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    Levels(usize),
    /// Equal-width bins over [lo, hi] plus one overflow bin on each side.
    EqualWidth { lo: f64, hi: f64, bins: usize },
}

impl Binning {
    pub fn n_bins(&self) -> usize {
        match self {
            Binning::Levels(k) => *k,
            Binning::EqualWidth { bins, .. } => bins + 2,
        }
    }

    pub fn bin(&self, v: f64) -> usize {
        match *self {
            Binning::Levels(k) => (v as usize).min(k - 1),
            Binning::EqualWidth { lo, hi, bins } => {
                if v < lo {
                    0
                } else if v > hi {
                    bins + 1
                } else if hi > lo {
                    1 + (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
                } else {
                    1
                }
            }
        }
    }

    pub fn histogram(&self, xs: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.n_bins()];
        for &x in xs {
            h[self.bin(x)] += 1.0;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaMonitor {
    pub columns: Vec<String>,
    pub excluded: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Principal axes as columns, p × c, largest eigenvalue first.
    axes: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub reference_error_mean: f64,
    pub reference_error_std: f64,
    pub threshold: f64,
}

impl PcaMonitor {
    pub fn fit(reference: &Dataset, components: usize, sigma_mult: f64) -> Result<Self> {
        if components == 0 {
            return Err(Error::Config("pca_components must be at least 1".into()));
        }
        if reference.n_rows() <= components {
            return Err(Error::Data("PCA reference needs more rows than components".into()));
        }
        let mut columns = Vec::new();
        let mut excluded = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut cols = Vec::new();
        for (j, spec) in reference.columns().iter().enumerate() {
            let c = reference.column(j);
            let s = stats::std_dev(&c, 1);
            if !(s > 0.0) {
                warn!("PCA monitor skips zero-variance column `{}`", spec.name);
                excluded.push(spec.name.clone());
                continue;
            }
            columns.push(spec.name.clone());
            mean.push(stats::mean(&c));
            std.push(s);
            cols.push(c);
        }
        let p = columns.len();
        if components > p {
            return Err(Error::Config(format!("{components} components requested but only {p} usable columns")));
        }
        let n = reference.n_rows();
        let z = DMatrix::from_fn(n, p, |i, j| (cols[j][i] - mean[j]) / std[j]);
        let cov = (z.transpose() * &z) / (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let axes: Vec<Vec<f64>> = order[..components]
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect();
        let eigenvalues = order[..components].iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut monitor = PcaMonitor {
            columns,
            excluded,
            mean,
            std,
            axes,
            eigenvalues,
            reference_error_mean: 0.0,
            reference_error_std: 0.0,
            threshold: 0.0,
        };
        let errors = monitor.errors(reference)?;
        monitor.reference_error_mean = stats::mean(&errors);
        monitor.reference_error_std = stats::std_dev(&errors, 1);
        monitor.threshold = monitor.reference_error_mean + sigma_mult * monitor.reference_error_std;
        Ok(monitor)
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// Per-row mean squared reconstruction residual in standardized space.
    pub fn errors(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let idx: Vec<usize> = self.columns.iter().map(|c| ds.column_index(c)).collect::<Result<_>>()?;
        let p = idx.len();
        let axes: Vec<DVector<f64>> = self.axes.iter().map(|a| DVector::from_column_slice(a)).collect();
        Ok(ds
            .rows()
            .map(|row| {
                let z = DVector::from_fn(p, |j, _| (row[idx[j]] - self.mean[j]) / self.std[j]);
                let mut recon = DVector::zeros(p);
                for a in &axes {
                    recon += a * a.dot(&z);
                }
                (z - recon).norm_squared() / p as f64
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub js_threshold: f64,
    pub js_bins: usize,
    pub ks_alpha: f64,
    pub pca_components: usize,
    pub pca_sigma_mult: f64,
    /// Absolute precision drop that triggers the supervised detector.
    pub supervised_drop: f64,
    /// Label delay in steps, by scenario name.
    pub label_delay_steps: BTreeMap<String, usize>,
    pub reference_n: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            js_threshold: 0.1,
            js_bins: 10,
            ks_alpha: 0.05,
            pca_components: 5,
            pca_sigma_mult: 3.0,
            supervised_drop: 0.05,
            label_delay_steps: BTreeMap::from([
                ("instant".to_string(), 0),
                ("1_week".to_string(), 4),
                ("1_month".to_string(), 18),
                ("1_year".to_string(), 219),
            ]),
            reference_n: 3000,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.js_threshold > 0.0) {
            return Err(Error::Config("js_threshold must be positive".into()));
        }
        if self.pca_components == 0 || self.js_bins == 0 {
            return Err(Error::Config("pca_components and js_bins must be at least 1".into()));
        }
        if !(self.supervised_drop > 0.0) {
            return Err(Error::Config("supervised_drop must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMonitorRecord {
    pub step: usize,
    pub delta: f64,
    pub js: BTreeMap<String, f64>,
    pub ks_d: BTreeMap<String, f64>,
    pub ks_p: BTreeMap<String, f64>,
    pub max_js: f64,
    pub max_js_feature: String,
    pub js_alert: bool,
    pub pca_error: f64,
    pub pca_alert: bool,
    pub max_ks_d: f64,
    pub min_ks_p: f64,
    pub any_ks_p_below_alpha: bool,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub records: Vec<StepMonitorRecord>,
    pub pca_threshold: f64,
    pub supervised: BTreeMap<String, Vec<bool>>,
    pub footnote: String,
}

/// Runs every monitor on each step dataset against the reference. The
/// target column is left out of all input-feature monitors.
pub fn monitor_stream(
    steps: &[(usize, f64, Dataset)],
    reference: &Dataset,
    target: &str,
    model: Option<&Classifier>,
    cfg: &MonitorConfig,
) -> Result<MonitorReport> {
    cfg.validate()?;
    let features: Vec<String> = reference
        .columns()
        .iter()
        .filter(|c| c.name != target)
        .map(|c| c.name.clone())
        .collect();
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    let ref_x = reference.select_columns(&names)?;
    let binnings: Vec<Binning> = ref_x
        .columns()
        .iter()
        .enumerate()
        .map(|(j, spec)| match spec.kind {
            ColumnKind::Categorical => Binning::Levels(spec.n_levels()),
            ColumnKind::Numeric => {
                let c = ref_x.column(j);
                let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Binning::EqualWidth { lo, hi, bins: cfg.js_bins }
            }
        })
        .collect();
    let ref_hists: Vec<Vec<f64>> = binnings.iter().enumerate().map(|(j, b)| b.histogram(&ref_x.column(j))).collect();
    let pca = PcaMonitor::fit(&ref_x, cfg.pca_components, cfg.pca_sigma_mult)?;

    let records: Vec<Result<StepMonitorRecord>> = steps
        .par_iter()
        .map(|(k, delta, ds)| {
            for spec in reference.columns() {
                let other = ds.spec(&spec.name)?;
                if other.kind != spec.kind || other.levels != spec.levels {
                    return Err(Error::Schema(format!("step {k}: column `{}` differs from the reference", spec.name)));
                }
            }
            let x = ds.select_columns(&names)?;
            let mut js = BTreeMap::new();
            let mut ks_d = BTreeMap::new();
            let mut ks_p = BTreeMap::new();
            for (j, name) in features.iter().enumerate() {
                let col = x.column(j);
                js.insert(name.clone(), js_divergence(&ref_hists[j], &binnings[j].histogram(&col))?);
                let (d, p) = ks_two_sample(&ref_x.column(j), &col)?;
                ks_d.insert(name.clone(), d);
                ks_p.insert(name.clone(), p);
            }
            let (max_js_feature, max_js) = js
                .iter()
                .fold((String::new(), f64::NEG_INFINITY), |acc, (n, &v)| if v > acc.1 { (n.clone(), v) } else { acc });
            let pca_error = stats::mean(&pca.errors(&x)?);
            let (precision, f1) = match model {
                Some(m) => {
                    let mv = m.evaluate(ds)?;
                    (Some(mv.precision), Some(mv.f1))
                }
                None => (None, None),
            };
            Ok(StepMonitorRecord {
                step: *k,
                delta: *delta,
                max_js,
                js_alert: max_js > cfg.js_threshold,
                max_js_feature,
                pca_error,
                pca_alert: pca_error > pca.threshold,
                max_ks_d: ks_d.values().copied().fold(0.0, f64::max),
                min_ks_p: ks_p.values().copied().fold(1.0, f64::min),
                any_ks_p_below_alpha: ks_p.values().any(|&p| p < cfg.ks_alpha),
                js,
                ks_d,
                ks_p,
                precision,
                f1,
            })
        })
        .collect();
    let records: Vec<StepMonitorRecord> = records.into_iter().collect::<Result<_>>()?;
    let supervised = match records.first().and_then(|r| r.precision) {
        Some(baseline) => {
            let precisions: Vec<f64> = records.iter().map(|r| r.precision.unwrap_or(f64::NAN)).collect();
            supervised_delay_detector(&precisions, baseline, cfg.supervised_drop, &cfg.label_delay_steps)
        }
        None => BTreeMap::new(),
    };
    Ok(MonitorReport {
        records,
        pca_threshold: pca.threshold,
        supervised,
        footnote: "per-feature KS p-values are uncorrected for multiple testing; sporadic p < 0.05 is expected by chance"
            .into(),
    })
}

/// Alerts per delay: at step k the detector sees the precision of step
/// k − d and fires when baseline − observed exceeds `drop`.
pub fn supervised_delay_detector(
    precision: &[f64],
    baseline: f64,
    drop: f64,
    delays: &BTreeMap<String, usize>,
) -> BTreeMap<String, Vec<bool>> {
    delays
        .iter()
        .map(|(name, &d)| {
            let alerts = (0..precision.len())
                .map(|k| k >= d && baseline - precision[k - d] > drop)
                .collect();
            (name.clone(), alerts)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn js_basics() {
        assert_eq!(js_divergence(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        // Reference value from scipy's jensenshannon (base 2), squared.
        let v = js_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((v - 0.048794940695398505).abs() < 1e-12);
        assert!(js_divergence(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn overflow_bins() {
        let b = Binning::EqualWidth { lo: 0.0, hi: 1.0, bins: 10 };
        assert_eq!(b.bin(-0.1), 0);
        assert_eq!(b.bin(0.0), 1);
        assert_eq!(b.bin(1.0), 10);
        assert_eq!(b.bin(1.5), 11);
    }

    #[test]
    fn delay_detector_matches_published_pattern() {
        let prec = [
            0.783, 0.759, 0.777, 0.782, 0.801, 0.734, 0.683, 0.749, 0.739, 0.747, 0.707, 0.678, 0.644, 0.676, 0.717,
            0.656, 0.662, 0.657, 0.657, 0.695, 0.688,
        ];
        let delays = BTreeMap::from([("d0".to_string(), 0), ("d4".to_string(), 4), ("d18".to_string(), 18)]);
        let out = supervised_delay_detector(&prec, prec[0], 0.05, &delays);
        let fired = |name: &str| -> Vec<usize> { (0..21).filter(|&k| out[name][k]).collect() };
        let mut instant = vec![6];
        instant.extend(10..=20);
        assert_eq!(fired("d0"), instant);
        let mut week = vec![10];
        week.extend(14..=20);
        assert_eq!(fired("d4"), week);
        assert!(fired("d18").is_empty());
    }
}
