//! Twin acceptance checks: global covariance fit, per-column marginal
//! fidelity and predictive consistency.

use std::collections::BTreeMap;

use log::{info, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, MetricsVector, METRIC_NAMES};
use crate::scm::Scm;
use crate::stats;
use crate::tabular::{covariance_matrix, ColumnKind, Dataset};
use crate::{Error, Result};

const EIGEN_FLOOR: f64 = 1e-10;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitIndices {
    pub chi2: f64,
    pub df: usize,
    pub rmsea: f64,
    pub n: usize,
    pub p: usize,
}

fn symmetric_eigenvalues(m: &DMatrix<f64>, what: &str) -> Result<Vec<f64>> {
    let (r, c) = m.shape();
    if r != c {
        return Err(Error::Numerical(format!("{what} is not square")));
    }
    let scale = m.amax().max(1.0);
    for i in 0..r {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::Numerical(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect())
}

/// χ² = (N−1)[ln|Σ| − ln|S| + tr(SΣ⁻¹) − p] and RMSEA from it.
pub fn chi2_rmsea(s: &DMatrix<f64>, sigma: &DMatrix<f64>, n: usize, df: usize) -> Result<FitIndices> {
    let p = s.nrows();
    if sigma.shape() != s.shape() {
        return Err(Error::Numerical("S and Sigma differ in dimension".into()));
    }
    if n <= 1 {
        return Err(Error::Config("fit indices need N > 1".into()));
    }
    if df == 0 {
        return Err(Error::Config("degrees of freedom must be at least 1".into()));
    }
    let s_eig = symmetric_eigenvalues(s, "observed covariance")?;
    if s_eig.iter().any(|&e| e <= EIGEN_FLOOR) {
        return Err(Error::Numerical("observed covariance is not positive definite".into()));
    }
    let mut sigma = sigma.clone();
    let mut sigma_eig = symmetric_eigenvalues(&sigma, "model covariance")?;
    if sigma_eig.iter().any(|&e| e < -EIGEN_FLOOR) {
        return Err(Error::Numerical("model covariance is not positive semi-definite".into()));
    }
    if sigma_eig.iter().any(|&e| e <= EIGEN_FLOOR) {
        warn!("model covariance is near-singular; adding ridge {RIDGE} before inversion");
        for i in 0..p {
            sigma[(i, i)] += RIDGE;
        }
        sigma_eig = symmetric_eigenvalues(&sigma, "model covariance")?;
        if sigma_eig.iter().any(|&e| e <= 0.0) {
            return Err(Error::Numerical("model covariance is singular".into()));
        }
    }
    let ln_det_sigma: f64 = sigma_eig.iter().map(|e| e.ln()).sum();
    let ln_det_s: f64 = s_eig.iter().map(|e| e.ln()).sum();
    let inv = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("model covariance is singular".into()))?
        .inverse();
    let trace = (s * inv).trace();
    let chi2 = ((n - 1) as f64 * (ln_det_sigma - ln_det_s + trace - p as f64)).max(0.0);
    Ok(FitIndices {
        chi2,
        df,
        rmsea: rmsea(chi2, df, n),
        n,
        p,
    })
}

pub fn rmsea(chi2: f64, df: usize, n: usize) -> f64 {
    ((chi2 - df as f64) / (df as f64 * (n - 1) as f64)).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCovariance {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
    /// True when the estimate has an eigenvalue at or below the floor.
    pub rank_deficient: bool,
}

/// Monte Carlo Σ: covariance of one large draw from the SCM.
pub fn model_covariance(scm: &Scm, n_mc: usize, seed: u64) -> Result<ModelCovariance> {
    if n_mc < 1000 {
        return Err(Error::Config(format!("n_mc must be at least 1000, got {n_mc}")));
    }
    let draw = scm.sample(n_mc, seed)?;
    let cov = covariance_matrix(&draw)?;
    let eig = symmetric_eigenvalues(&cov.matrix, "model covariance")?;
    let min_eigenvalue = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let rank_deficient = min_eigenvalue <= EIGEN_FLOOR;
    if rank_deficient {
        warn!("model covariance is rank deficient (smallest eigenvalue {min_eigenvalue:e})");
    }
    Ok(ModelCovariance {
        names: cov.names,
        matrix: cov.matrix,
        min_eigenvalue,
        rank_deficient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreesOfFreedom {
    pub df: usize,
    pub moments: usize,
    pub parameters: usize,
    pub clamped: bool,
}

/// df = p(p+1)/2 − t with t the SCM's free parameter count, floored at 1.
pub fn degrees_of_freedom(scm: &Scm) -> DegreesOfFreedom {
    let p = scm.columns().len();
    let moments = p * (p + 1) / 2;
    let parameters = scm.n_free_parameters();
    let clamped = parameters + 1 > moments;
    if clamped {
        warn!("{parameters} free parameters leave no degrees of freedom over {moments} moments; using df = 1");
    }
    DegreesOfFreedom {
        df: if clamped { 1 } else { moments - parameters },
        moments,
        parameters,
        clamped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalTest {
    Ks,
    CramersV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRecord {
    pub column: String,
    pub test: MarginalTest,
    /// KS distance D or Cramér's V.
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
}

/// Cramér's V of the 2×L table of (source, level) counts, together with the
/// χ² p-value. Levels unseen in both sources are dropped; fewer than two
/// observed levels gives V = 0.
pub fn cramers_v(a: &[usize], b: &[usize]) -> (f64, f64) {
    let cols: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0)
        .map(|(&x, &y)| (x as f64, y as f64))
        .collect();
    let na: f64 = cols.iter().map(|c| c.0).sum();
    let nb: f64 = cols.iter().map(|c| c.1).sum();
    let n = na + nb;
    if cols.len() < 2 || na == 0.0 || nb == 0.0 {
        return (0.0, 1.0);
    }
    let mut chi2 = 0.0;
    for &(x, y) in &cols {
        let tot = x + y;
        let ea = na * tot / n;
        let eb = nb * tot / n;
        chi2 += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let k = (cols.len().min(2) - 1) as f64;
    let v = (chi2 / (n * k)).sqrt();
    let p = stats::chi2_sf(chi2, (cols.len() - 1) as f64).unwrap_or(1.0);
    (v, p)
}

pub fn marginal_fidelity(real: &Dataset, gen: &Dataset, alpha: f64, v_threshold: f64) -> Result<Vec<MarginalRecord>> {
    if real.n_cols() != gen.n_cols() {
        return Err(Error::Schema("real and generated data have different columns".into()));
    }
    let mut out = Vec::with_capacity(real.n_cols());
    for (j, spec) in real.columns().iter().enumerate() {
        let gspec = gen.spec(&spec.name)?;
        if gspec.kind != spec.kind || gspec.levels != spec.levels {
            return Err(Error::Schema(format!("column `{}` differs between datasets", spec.name)));
        }
        let gj = gen.column_index(&spec.name)?;
        let (a, b) = (real.column(j), gen.column(gj));
        let rec = match spec.kind {
            ColumnKind::Numeric => {
                let d = stats::ks_statistic(&a, &b);
                let p = stats::ks_p_value(d, a.len(), b.len());
                MarginalRecord {
                    column: spec.name.clone(),
                    test: MarginalTest::Ks,
                    statistic: d,
                    p_value: p,
                    pass: p > alpha,
                }
            }
            ColumnKind::Categorical => {
                let count = |xs: &[f64]| {
                    let mut c = vec![0usize; spec.n_levels()];
                    for &x in xs {
                        c[x as usize] += 1;
                    }
                    c
                };
                let (v, p) = cramers_v(&count(&a), &count(&b));
                MarginalRecord {
                    column: spec.name.clone(),
                    test: MarginalTest::CramersV,
                    statistic: v,
                    p_value: p,
                    pass: p > alpha || v < v_threshold,
                }
            }
        };
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveConsistency {
    pub valid: MetricsVector,
    pub generated: MetricsVector,
    /// |valid − generated| per metric; `None` where either side is undefined.
    pub gaps: BTreeMap<String, Option<f64>>,
}

pub fn predictive_consistency(model: &Classifier, d_valid: &Dataset, d_gen: &Dataset, target: &str) -> Result<PredictiveConsistency> {
    if target != model.target() {
        return Err(Error::Config(format!(
            "model predicts `{}`, not `{target}`",
            model.target()
        )));
    }
    d_valid.column_index(target)?;
    d_gen.column_index(target)?;
    let valid = model.evaluate(d_valid)?;
    let generated = model.evaluate(d_gen)?;
    let mut gaps = BTreeMap::new();
    for name in METRIC_NAMES {
        let gap = match (valid.get(name)?, generated.get(name)?) {
            (Some(a), Some(b)) => Some((a - b).abs()),
            _ => None,
        };
        gaps.insert(name.to_string(), gap);
    }
    Ok(PredictiveConsistency { valid, generated, gaps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub n_mc: usize,
    pub rmsea_threshold: f64,
    pub alpha: f64,
    pub v_threshold: f64,
    /// Largest accepted |F1(valid) − F1(generated)|.
    pub f1_gap_tolerance: f64,
    /// Rows drawn for the marginal and predictive tiers (0 = size of the
    /// real data).
    pub n_generated: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            n_mc: 50_000,
            rmsea_threshold: 0.08,
            alpha: 0.05,
            v_threshold: 0.1,
            f1_gap_tolerance: 0.05,
            n_generated: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub fit: FitIndices,
    pub dof: DegreesOfFreedom,
    pub marginals: Vec<MarginalRecord>,
    /// Keyed by a caller-chosen model label.
    pub predictive: BTreeMap<String, PredictiveConsistency>,
    pub rmsea_threshold: f64,
    pub f1_gap_tolerance: f64,
    pub v_threshold: f64,
    pub alpha: f64,
    pub accepted: bool,
}

/// Runs all three tiers. `real` supplies S and the marginal reference;
/// `d_valid` is the held-out split for predictive consistency.
pub fn validate_twin(
    scm: &Scm,
    real: &Dataset,
    d_valid: &Dataset,
    models: &[(String, &Classifier)],
    cfg: &ValidationConfig,
    seed: u64,
) -> Result<ValidationReport> {
    let s = covariance_matrix(real)?;
    let sigma = model_covariance(scm, cfg.n_mc, stats::mix_seed(seed, 1))?;
    if s.names != sigma.names {
        return Err(Error::Schema("SCM columns differ from the data columns".into()));
    }
    let dof = degrees_of_freedom(scm);
    let fit = chi2_rmsea(&s.matrix, &sigma.matrix, real.n_rows(), dof.df)?;
    info!("chi2 = {:.3}, df = {}, RMSEA = {:.4}", fit.chi2, fit.df, fit.rmsea);

    let n_gen = if cfg.n_generated == 0 { real.n_rows() } else { cfg.n_generated };
    let gen = scm.sample(n_gen, stats::mix_seed(seed, 2))?;
    let marginals = marginal_fidelity(real, &gen, cfg.alpha, cfg.v_threshold)?;

    let mut predictive = BTreeMap::new();
    for (label, model) in models {
        let pc = predictive_consistency(model, d_valid, &gen, model.target())?;
        predictive.insert(label.clone(), pc);
    }
    let accepted = fit.rmsea <= cfg.rmsea_threshold
        && marginals.iter().all(|m| m.pass)
        && predictive
            .values()
            .all(|pc| pc.gaps["f1"].is_some_and(|g| g <= cfg.f1_gap_tolerance));
    Ok(ValidationReport {
        fit,
        dof,
        marginals,
        predictive,
        rmsea_threshold: cfg.rmsea_threshold,
        f1_gap_tolerance: cfg.f1_gap_tolerance,
        v_threshold: cfg.v_threshold,
        alpha: cfg.alpha,
        accepted,
    })
}

/// One line of the flat validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub tier: String,
    pub item: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl ValidationReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = vec![
            ReportRow {
                tier: "global".into(),
                item: "rmsea".into(),
                statistic: self.fit.rmsea,
                threshold: self.rmsea_threshold,
                pass: self.fit.rmsea <= self.rmsea_threshold,
            },
            ReportRow {
                tier: "global".into(),
                item: "chi2".into(),
                statistic: self.fit.chi2,
                threshold: f64::NAN,
                pass: true,
            },
            ReportRow {
                tier: "global".into(),
                item: "df".into(),
                statistic: self.fit.df as f64,
                threshold: f64::NAN,
                pass: !self.dof.clamped,
            },
        ];
        for m in &self.marginals {
            let (item, threshold) = match m.test {
                MarginalTest::Ks => (format!("{}:ks_p", m.column), self.alpha),
                MarginalTest::CramersV => (format!("{}:cramers_v", m.column), self.v_threshold),
            };
            let statistic = match m.test {
                MarginalTest::Ks => m.p_value,
                MarginalTest::CramersV => m.statistic,
            };
            rows.push(ReportRow {
                tier: "marginal".into(),
                item,
                statistic,
                threshold,
                pass: m.pass,
            });
        }
        for (label, pc) in &self.predictive {
            for name in METRIC_NAMES {
                if let Some(gap) = pc.gaps[name] {
                    let gated = name == "f1";
                    rows.push(ReportRow {
                        tier: "predictive".into(),
                        item: format!("{label}:{name}_gap"),
                        statistic: gap,
                        threshold: if gated { self.f1_gap_tolerance } else { f64::NAN },
                        pass: !gated || gap <= self.f1_gap_tolerance,
                    });
                }
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_is_zero() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let f = chi2_rmsea(&s, &s, 50, 3).unwrap();
        assert!(f.chi2.abs() < 1e-12);
        assert_eq!(f.rmsea, 0.0);
    }

    #[test]
    fn two_by_two_oracle() {
        // Reference values from an independent numpy evaluation.
        let s = DMatrix::identity(2, 2);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let f = chi2_rmsea(&s, &sigma, 101, 1).unwrap();
        assert!((f.chi2 - 37.898459421488575).abs() < 1e-9);
        assert!((f.rmsea - 0.6074410211822097).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = DMatrix::identity(2, 2);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(chi2_rmsea(&singular, &s, 10, 1).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(chi2_rmsea(&s, &indefinite, 10, 1).is_err());
        assert!(chi2_rmsea(&s, &s, 1, 1).is_err());
    }

    #[test]
    fn cramers_v_extremes() {
        assert!((cramers_v(&[10, 0], &[0, 10]).0 - 1.0).abs() < 1e-12);
        assert_eq!(cramers_v(&[5, 5], &[5, 5]).0, 0.0);
        assert_eq!(cramers_v(&[7, 0], &[9, 0]), (0.0, 1.0));
    }
}
