//! Structural causal model: per-node mechanisms fitted on a fixed DAG,
//! ancestral sampling and parametric interventions.
//!
//! Every cell is handled in encoded space: numeric nodes hold their
//! (normalized) value and categorical nodes their level index. Parent values
//! enter the regression mechanisms as plain numbers in that space, so each
//! edge owns a single coefficient (or a coefficient column for multinomial
//! children) that an intervention can scale.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope;
use crate::graph::MixedGraph;
use crate::stats::{self, rng_for};
use crate::tabular::{ColumnKind, ColumnSpec, Dataset};
use crate::{Error, Result};

pub const SCM_FORMAT_VERSION: u32 = 1;
const SCM_KIND: &str = "scm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianMech {
    pub parents: Vec<String>,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub sigma: f64,
    /// Parent values the coefficients are measured from (empty: zero).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parent_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogisticMech {
    pub parents: Vec<String>,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub noise_sigma: f64,
    /// Parent values the coefficients are measured from (empty: zero).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parent_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialSoftmaxMech {
    pub parents: Vec<String>,
    /// One row per class, one column per parent.
    pub coef: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub noise_sigma: f64,
    /// Parent values the coefficients are measured from (empty: zero).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parent_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmRootMech {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRootMech {
    pub levels: Vec<String>,
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Mechanism {
    LinearGaussian(LinearGaussianMech),
    BinaryLogistic(BinaryLogisticMech),
    MultinomialSoftmax(MultinomialSoftmaxMech),
    GmmRoot(GmmRootMech),
    EmpiricalRoot(EmpiricalRootMech),
}

impl Mechanism {
    pub fn parents(&self) -> &[String] {
        match self {
            Mechanism::LinearGaussian(m) => &m.parents,
            Mechanism::BinaryLogistic(m) => &m.parents,
            Mechanism::MultinomialSoftmax(m) => &m.parents,
            Mechanism::GmmRoot(_) | Mechanism::EmpiricalRoot(_) => &[],
        }
    }

    pub fn is_root(&self) -> bool {
        matches!(self, Mechanism::GmmRoot(_) | Mechanism::EmpiricalRoot(_))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Mechanism::LinearGaussian(_) => "linear_gaussian",
            Mechanism::BinaryLogistic(_) => "binary_logistic",
            Mechanism::MultinomialSoftmax(_) => "multinomial_softmax",
            Mechanism::GmmRoot(_) => "gmm_root",
            Mechanism::EmpiricalRoot(_) => "empirical_root",
        }
    }

    /// Free parameters: coefficients, intercepts, noise scales, mixture
    /// parameters with one weight fixed by the simplex, frequencies likewise.
    pub fn n_free_parameters(&self) -> usize {
        match self {
            Mechanism::LinearGaussian(m) => m.beta.len() + 2,
            Mechanism::BinaryLogistic(m) => m.beta.len() + 2,
            Mechanism::MultinomialSoftmax(m) => {
                m.coef.iter().map(Vec::len).sum::<usize>() + m.intercepts.len() + 1
            }
            Mechanism::GmmRoot(m) => 3 * m.weights.len() - 1,
            Mechanism::EmpiricalRoot(m) => m.frequencies.len() - 1,
        }
    }
}

/// How noisy scores become categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinkNoise {
    /// Gaussian noise added to each score, then the largest score wins
    /// (binary: level 1 iff the noisy score is positive).
    #[default]
    GaussianThreshold,
    /// Noise-free scores; the category is drawn from the softmax/sigmoid
    /// probabilities.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub seed: u64,
    pub max_components: usize,
    pub em_restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub variance_floor: f64,
    /// Pre-link noise scale for binary mechanisms.
    pub noise_sigma: f64,
    /// Pre-link noise scale for multinomial mechanisms.
    pub multinomial_noise_sigma: f64,
    /// Ridge penalty on logistic/softmax coefficients (not intercepts).
    pub l2: f64,
    pub link_noise: LinkNoise,
    /// Regress on parent values minus their sample means. The intercept is
    /// then the score at the parents' means, and scaling a coefficient
    /// leaves that score where it was.
    pub center_parents: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            seed: 0,
            max_components: 5,
            em_restarts: 5,
            max_iter: 500,
            tol: 1e-8,
            variance_floor: 1e-6,
            noise_sigma: 1.0,
            multinomial_noise_sigma: 1.0,
            l2: 1.0,
            link_noise: LinkNoise::GaussianThreshold,
            center_parents: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub residual_std: Option<f64>,
    pub n_components: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scm {
    graph: MixedGraph,
    /// Column layout of generated data (the training data's order).
    columns: Vec<ColumnSpec>,
    mechanisms: BTreeMap<String, Mechanism>,
    link_noise: LinkNoise,
    diagnostics: BTreeMap<String, NodeDiagnostics>,
}

/// Edit of a root distribution. Unset fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RootEdit {
    pub weights: Option<Vec<f64>>,
    pub means: Option<Vec<f64>>,
    pub variances: Option<Vec<f64>>,
    pub mean_shift: Option<f64>,
    pub frequencies: Option<Vec<f64>>,
}

/// One coefficient-scaling target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTarget {
    pub child: String,
    pub parent: String,
    pub delta: f64,
}

impl ScaleTarget {
    pub fn new(child: impl Into<String>, parent: impl Into<String>, delta: f64) -> Self {
        ScaleTarget {
            child: child.into(),
            parent: parent.into(),
            delta,
        }
    }
}

pub fn fit_scm(ds: &Dataset, g: &MixedGraph, cfg: &FitConfig) -> Result<Scm> {
    if !g.is_dag() {
        return Err(Error::Graph("fit_scm needs a fully directed acyclic graph".into()));
    }
    g.topological_order()?;
    let names = ds.column_names();
    if g.n() != names.len() || names.iter().any(|n| g.index_of(n).is_err()) {
        return Err(Error::Graph("graph nodes must match the dataset columns".into()));
    }
    if cfg.max_components == 0 || cfg.em_restarts == 0 || cfg.max_iter == 0 {
        return Err(Error::Config("max_components, em_restarts and max_iter must be positive".into()));
    }
    if cfg.noise_sigma < 0.0 || cfg.multinomial_noise_sigma < 0.0 {
        return Err(Error::Config("noise scales must be non-negative".into()));
    }

    let fitted: Vec<Result<(String, Mechanism, NodeDiagnostics)>> = (0..g.n())
        .into_par_iter()
        .map(|node| {
            let name = g.name(node).to_string();
            let parents: Vec<String> = g.parents(node).into_iter().map(|p| g.name(p).to_string()).collect();
            let (mech, diag) = fit_node(ds, &name, &parents, cfg, node as u64)?;
            Ok((name, mech, diag))
        })
        .collect();
    let mut mechanisms = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    for item in fitted {
        let (name, mech, diag) = item?;
        mechanisms.insert(name.clone(), mech);
        diagnostics.insert(name, diag);
    }
    Ok(Scm {
        graph: g.clone(),
        columns: ds.columns().to_vec(),
        mechanisms,
        link_noise: cfg.link_noise,
        diagnostics,
    })
}

fn fit_node(
    ds: &Dataset,
    name: &str,
    parents: &[String],
    cfg: &FitConfig,
    stream: u64,
) -> Result<(Mechanism, NodeDiagnostics)> {
    let spec = ds.spec(name)?;
    let y = ds.column_by_name(name)?;
    let fit_err = |message: String| Error::Fit {
        node: name.to_string(),
        message,
    };
    if parents.is_empty() {
        return match spec.kind {
            ColumnKind::Numeric => {
                let mut rng = rng_for(stats::mix_seed(cfg.seed, 0x6d6d), stream);
                let (mech, ll, iters) = fit_gmm(&y, cfg, &mut rng).map_err(fit_err)?;
                let k = mech.weights.len();
                Ok((
                    Mechanism::GmmRoot(mech),
                    NodeDiagnostics {
                        log_likelihood: ll,
                        iterations: iters,
                        residual_std: None,
                        n_components: Some(k),
                    },
                ))
            }
            ColumnKind::Categorical => {
                let mut counts = vec![0usize; spec.n_levels()];
                for &v in &y {
                    counts[v as usize] += 1;
                }
                let n = y.len() as f64;
                let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
                let ll = counts
                    .iter()
                    .zip(&frequencies)
                    .filter(|(&c, _)| c > 0)
                    .map(|(&c, &f)| c as f64 * f.ln())
                    .sum();
                Ok((
                    Mechanism::EmpiricalRoot(EmpiricalRootMech {
                        levels: spec.levels.clone(),
                        frequencies,
                    }),
                    NodeDiagnostics {
                        log_likelihood: ll,
                        iterations: 0,
                        residual_std: None,
                        n_components: None,
                    },
                ))
            }
        };
    }

    let cols: Vec<Vec<f64>> = parents.iter().map(|p| ds.column_by_name(p)).collect::<Result<_>>()?;
    let n = y.len();
    let parent_means: Vec<f64> = if cfg.center_parents {
        cols.iter().map(|c| stats::mean(c)).collect()
    } else {
        Vec::new()
    };
    let offset = |j: usize| parent_means.get(j).copied().unwrap_or(0.0);
    let x = DMatrix::from_fn(n, parents.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] - offset(j - 1) });
    match spec.kind {
        ColumnKind::Numeric => {
            let (coef, sigma, ll) = fit_linear(&x, &y).map_err(fit_err)?;
            Ok((
                Mechanism::LinearGaussian(LinearGaussianMech {
                    parents: parents.to_vec(),
                    beta: coef[1..].to_vec(),
                    intercept: coef[0],
                    sigma,
                    parent_means,
                }),
                NodeDiagnostics {
                    log_likelihood: ll,
                    iterations: 1,
                    residual_std: Some(sigma),
                    n_components: None,
                },
            ))
        }
        ColumnKind::Categorical => {
            let k = spec.n_levels();
            let observed = {
                let mut seen = vec![false; k];
                for &v in &y {
                    seen[v as usize] = true;
                }
                seen.iter().filter(|&&s| s).count()
            };
            if k < 2 || observed < 2 {
                return Err(fit_err("regression target has a single observed level".into()));
            }
            if k == 2 {
                let (coef, ll, iters) = fit_logistic(&x, &y, cfg).map_err(fit_err)?;
                Ok((
                    Mechanism::BinaryLogistic(BinaryLogisticMech {
                        parents: parents.to_vec(),
                        beta: coef[1..].to_vec(),
                        intercept: coef[0],
                        noise_sigma: cfg.noise_sigma,
                        parent_means,
                    }),
                    NodeDiagnostics {
                        log_likelihood: ll,
                        iterations: iters,
                        residual_std: None,
                        n_components: None,
                    },
                ))
            } else {
                let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
                let (w, ll, iters) = fit_softmax(&x, &labels, k, cfg).map_err(fit_err)?;
                Ok((
                    Mechanism::MultinomialSoftmax(MultinomialSoftmaxMech {
                        parents: parents.to_vec(),
                        coef: (0..k).map(|c| (1..x.ncols()).map(|j| w[(c, j)]).collect()).collect(),
                        intercepts: (0..k).map(|c| w[(c, 0)]).collect(),
                        noise_sigma: cfg.multinomial_noise_sigma,
                        parent_means,
                    }),
                    NodeDiagnostics {
                        log_likelihood: ll,
                        iterations: iters,
                        residual_std: None,
                        n_components: None,
                    },
                ))
            }
        }
    }
}

/// Ordinary least squares with σ the residual root-mean-square.
fn fit_linear(x: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, f64, f64), String> {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let coef = svd.solve(&yv, 1e-12).map_err(|e| e.to_string())?;
    let resid = &yv - x * &coef;
    let ssr = resid.norm_squared();
    let sigma = (ssr / n as f64).sqrt();
    let ll = if sigma > 0.0 {
        -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * sigma * sigma).ln() + 1.0)
    } else {
        f64::INFINITY
    };
    Ok((coef.iter().copied().collect(), sigma, ll))
}

/// Ridge-penalized logistic regression by Newton/IRLS.
fn fit_logistic(x: &DMatrix<f64>, y: &[f64], cfg: &FitConfig) -> Result<(Vec<f64>, f64, usize), String> {
    let (n, d) = x.shape();
    let mut w = DVector::zeros(d);
    let penalty = DVector::from_fn(d, |j, _| if j == 0 { 1e-10 } else { cfg.l2 });
    for iter in 1..=cfg.max_iter {
        let eta = x * &w;
        let mut grad = DVector::<f64>::zeros(d);
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let p = stats::sigmoid(eta[i]);
            let r = y[i] - p;
            let wt = (p * (1.0 - p)).max(1e-12);
            let row = x.row(i);
            for a in 0..d {
                grad[a] += r * row[a];
                for b in a..d {
                    hess[(a, b)] += wt * row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            grad[a] -= penalty[a] * w[a];
            hess[(a, a)] += penalty[a];
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let step = hess
            .cholesky()
            .ok_or("logistic Hessian is not positive definite")?
            .solve(&grad);
        w += &step;
        if step.amax() < cfg.tol.max(1e-10) {
            return Ok((w.iter().copied().collect(), logistic_ll(x, y, &w), iter));
        }
    }
    Err(format!("logistic regression did not converge in {} iterations", cfg.max_iter))
}

fn logistic_ll(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>) -> f64 {
    let eta = x * w;
    (0..y.len())
        .map(|i| {
            let p = stats::sigmoid(eta[i]).clamp(1e-300, 1.0 - 1e-16);
            if y[i] > 0.5 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Ridge-penalized multinomial logistic regression by Newton's method,
/// one full coefficient row per class.
fn fit_softmax(
    x: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    cfg: &FitConfig,
) -> Result<(DMatrix<f64>, f64, usize), String> {
    let (n, d) = x.shape();
    let m = k * d;
    let mut w = DMatrix::<f64>::zeros(k, d);
    let mut probs = vec![0.0; k];
    for iter in 1..=cfg.max_iter {
        let mut grad = DVector::<f64>::zeros(m);
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            let row = x.row(i);
            for c in 0..k {
                probs[c] = (0..d).map(|j| w[(c, j)] * row[j]).sum();
            }
            stats::softmax_in_place(&mut probs);
            for c in 0..k {
                let r = (labels[i] == c) as u8 as f64 - probs[c];
                for a in 0..d {
                    grad[c * d + a] += r * row[a];
                }
                for c2 in c..k {
                    let h = probs[c] * ((c == c2) as u8 as f64 - probs[c2]);
                    for a in 0..d {
                        for b in 0..d {
                            hess[(c * d + a, c2 * d + b)] += h * row[a] * row[b];
                        }
                    }
                }
            }
        }
        for c in 0..k {
            for a in 0..d {
                // Intercepts get a tiny ridge so the shift-invariant softmax
                // has a unique optimum.
                let lam = if a == 0 { 1e-6 } else { cfg.l2 };
                let idx = c * d + a;
                grad[idx] -= lam * w[(c, a)];
                hess[(idx, idx)] += lam;
            }
        }
        for r in 0..m {
            for s in 0..r {
                hess[(r, s)] = hess[(s, r)];
            }
        }
        let step = hess
            .cholesky()
            .ok_or("softmax Hessian is not positive definite")?
            .solve(&grad);
        for c in 0..k {
            for a in 0..d {
                w[(c, a)] += step[c * d + a];
            }
        }
        if step.amax() < cfg.tol.max(1e-10) {
            let mut ll = 0.0;
            for i in 0..n {
                let row = x.row(i);
                for c in 0..k {
                    probs[c] = (0..d).map(|j| w[(c, j)] * row[j]).sum();
                }
                let lse = stats::softmax_in_place(&mut probs);
                let z: f64 = (0..d).map(|j| w[(labels[i], j)] * row[j]).sum();
                ll += z - lse;
            }
            return Ok((w, ll, iter));
        }
    }
    Err(format!("softmax regression did not converge in {} iterations", cfg.max_iter))
}

/// One-dimensional Gaussian mixture by EM; component count by BIC.
fn fit_gmm(y: &[f64], cfg: &FitConfig, rng: &mut ChaCha8Rng) -> Result<(GmmRootMech, f64, usize), String> {
    let n = y.len();
    if n == 0 {
        return Err("empty column".into());
    }
    let mut best: Option<(f64, GmmRootMech, f64, usize)> = None;
    let mut any_failed = false;
    for k in 1..=cfg.max_components.min(n) {
        let restarts = if k == 1 { 1 } else { cfg.em_restarts };
        let mut best_k: Option<(GmmRootMech, f64, usize)> = None;
        for _ in 0..restarts {
            match em_once(y, k, cfg, rng) {
                Some((mech, ll, it)) => {
                    if best_k.as_ref().is_none_or(|b| ll > b.1) {
                        best_k = Some((mech, ll, it));
                    }
                }
                None => any_failed = true,
            }
        }
        if let Some((mech, ll, it)) = best_k {
            let bic = -2.0 * ll + (3 * k - 1) as f64 * (n as f64).ln();
            if best.as_ref().is_none_or(|b| bic < b.0) {
                best = Some((bic, mech, ll, it));
            }
        }
    }
    match best {
        Some((_, mech, ll, it)) => Ok((mech, ll, it)),
        None if any_failed => Err(format!("EM did not converge in {} iterations", cfg.max_iter)),
        None => Err("no mixture could be fitted".into()),
    }
}

fn em_once(y: &[f64], k: usize, cfg: &FitConfig, rng: &mut ChaCha8Rng) -> Option<(GmmRootMech, f64, usize)> {
    let n = y.len();
    let total_var = stats::variance(y, 0).max(cfg.variance_floor);
    let mut means: Vec<f64> = if k == 1 {
        vec![stats::mean(y)]
    } else {
        (0..k).map(|_| y[rng.random_range(0..n)]).collect()
    };
    means.sort_by(f64::total_cmp);
    let mut vars = vec![total_var; k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut resp = vec![0.0; n * k];
    let mut prev_ll = f64::NEG_INFINITY;
    for iter in 1..=cfg.max_iter {
        // E step
        let mut ll = 0.0;
        for i in 0..n {
            let mut dens = [0.0f64; 16];
            let dens = &mut dens[..k];
            let mut max = f64::NEG_INFINITY;
            for c in 0..k {
                let lp = weights[c].max(1e-300).ln() - 0.5 * (2.0 * std::f64::consts::PI * vars[c]).ln()
                    - 0.5 * (y[i] - means[c]).powi(2) / vars[c];
                dens[c] = lp;
                max = max.max(lp);
            }
            let s: f64 = dens.iter().map(|lp| (lp - max).exp()).sum();
            let lse = max + s.ln();
            ll += lse;
            for c in 0..k {
                resp[i * k + c] = (dens[c] - lse).exp();
            }
        }
        // M step
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if nk < 1e-10 {
                return None;
            }
            let mu = (0..n).map(|i| resp[i * k + c] * y[i]).sum::<f64>() / nk;
            let var = (0..n).map(|i| resp[i * k + c] * (y[i] - mu).powi(2)).sum::<f64>() / nk;
            weights[c] = nk / n as f64;
            means[c] = mu;
            vars[c] = var.max(cfg.variance_floor);
        }
        if !ll.is_finite() {
            return None;
        }
        if (ll - prev_ll).abs() <= cfg.tol * ll.abs().max(1.0) {
            let mech = GmmRootMech {
                weights: normalize(&weights)?,
                means,
                variances: vars,
            };
            let ll = gmm_log_likelihood(&mech, y);
            return Some((mech, ll, iter));
        }
        prev_ll = ll;
    }
    None
}

pub fn gmm_log_likelihood(m: &GmmRootMech, y: &[f64]) -> f64 {
    y.iter().map(|&v| gmm_pdf(m, v).max(1e-300).ln()).sum()
}

pub fn gmm_pdf(m: &GmmRootMech, v: f64) -> f64 {
    m.weights
        .iter()
        .zip(&m.means)
        .zip(&m.variances)
        .map(|((w, mu), var)| w * (-(v - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
        .sum()
}

pub fn gmm_cdf(m: &GmmRootMech, v: f64) -> f64 {
    m.weights
        .iter()
        .zip(&m.means)
        .zip(&m.variances)
        .map(|((w, mu), var)| w * stats::normal_cdf((v - mu) / var.sqrt()))
        .sum()
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let s: f64 = v.iter().sum();
    if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || !(s > 0.0) {
        return None;
    }
    Some(v.iter().map(|x| x / s).collect())
}

impl Scm {
    /// Assembles an SCM from explicit mechanisms, checking consistency with
    /// the graph.
    pub fn from_parts(
        graph: MixedGraph,
        columns: Vec<ColumnSpec>,
        mechanisms: BTreeMap<String, Mechanism>,
        link_noise: LinkNoise,
    ) -> Result<Self> {
        let scm = Scm {
            graph,
            columns,
            mechanisms,
            link_noise,
            diagnostics: BTreeMap::new(),
        };
        scm.validate()?;
        Ok(scm)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.graph.is_dag() {
            return Err(Error::Model("SCM graph is not a DAG".into()));
        }
        self.graph.topological_order()?;
        if self.columns.len() != self.graph.n() || self.mechanisms.len() != self.graph.n() {
            return Err(Error::Model("SCM columns, graph and mechanisms disagree in size".into()));
        }
        for spec in &self.columns {
            let node = self.graph.index_of(&spec.name)?;
            let mech = self
                .mechanisms
                .get(&spec.name)
                .ok_or_else(|| Error::Model(format!("no mechanism for `{}`", spec.name)))?;
            let expected: Vec<&str> = self.graph.parents(node).into_iter().map(|p| self.graph.name(p)).collect();
            let mut got: Vec<&str> = mech.parents().iter().map(String::as_str).collect();
            got.sort();
            let mut exp_sorted = expected.clone();
            exp_sorted.sort();
            if got != exp_sorted {
                return Err(Error::Model(format!("mechanism parents of `{}` differ from the graph", spec.name)));
            }
            let ok = match (mech, spec.kind) {
                (Mechanism::GmmRoot(m), ColumnKind::Numeric) => {
                    expected.is_empty()
                        && !m.weights.is_empty()
                        && m.weights.len() == m.means.len()
                        && m.weights.len() == m.variances.len()
                        && (m.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9
                        && m.variances.iter().all(|&v| v > 0.0)
                }
                (Mechanism::EmpiricalRoot(m), ColumnKind::Categorical) => {
                    expected.is_empty()
                        && m.frequencies.len() == spec.n_levels()
                        && (m.frequencies.iter().sum::<f64>() - 1.0).abs() <= 1e-9
                }
                (Mechanism::LinearGaussian(m), ColumnKind::Numeric) => {
                    !expected.is_empty()
                        && m.beta.len() == m.parents.len()
                        && m.sigma >= 0.0
                        && means_ok(&m.parent_means, m.parents.len())
                }
                (Mechanism::BinaryLogistic(m), ColumnKind::Categorical) => {
                    !expected.is_empty()
                        && spec.n_levels() == 2
                        && m.beta.len() == m.parents.len()
                        && m.noise_sigma >= 0.0
                        && means_ok(&m.parent_means, m.parents.len())
                }
                (Mechanism::MultinomialSoftmax(m), ColumnKind::Categorical) => {
                    !expected.is_empty()
                        && spec.n_levels() >= 3
                        && m.coef.len() == spec.n_levels()
                        && m.intercepts.len() == spec.n_levels()
                        && m.coef.iter().all(|r| r.len() == m.parents.len())
                        && m.noise_sigma >= 0.0
                        && means_ok(&m.parent_means, m.parents.len())
                }
                _ => false,
            };
            if !ok {
                return Err(Error::Model(format!(
                    "mechanism {} is inconsistent with column `{}`",
                    mech.kind_name(),
                    spec.name
                )));
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &MixedGraph {
        &self.graph
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn mechanisms(&self) -> &BTreeMap<String, Mechanism> {
        &self.mechanisms
    }

    pub fn mechanism(&self, node: &str) -> Result<&Mechanism> {
        self.mechanisms.get(node).ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    pub fn diagnostics(&self) -> &BTreeMap<String, NodeDiagnostics> {
        &self.diagnostics
    }

    pub fn link_noise(&self) -> LinkNoise {
        self.link_noise
    }

    pub fn with_link_noise(&self, link_noise: LinkNoise) -> Scm {
        let mut out = self.clone();
        out.link_noise = link_noise;
        out
    }

    /// Total free parameters over all mechanisms.
    pub fn n_free_parameters(&self) -> usize {
        self.mechanisms.values().map(Mechanism::n_free_parameters).sum()
    }

    /// Ancestral sampling. Each node draws its noise from its own stream,
    /// so changing one mechanism never perturbs the draws of its
    /// non-descendants.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        let p = self.columns.len();
        let col_of: BTreeMap<&str, usize> = self.columns.iter().enumerate().map(|(j, c)| (c.name.as_str(), j)).collect();
        let mut data: Vec<Vec<f64>> = vec![Vec::new(); p];
        for node in self.graph.topological_order()? {
            let name = self.graph.name(node);
            let j = col_of[name];
            let mech = &self.mechanisms[name];
            let parent_cols: Vec<&[f64]> = mech.parents().iter().map(|pn| data[col_of[pn.as_str()]].as_slice()).collect();
            let mut rng = rng_for(seed, node as u64);
            data[j] = sample_node(mech, &parent_cols, n, self.link_noise, &mut rng);
        }
        let mut values = Vec::with_capacity(n * p);
        for i in 0..n {
            for col in &data {
                values.push(col[i]);
            }
        }
        Dataset::new(self.columns.clone(), values)
    }

    /// Scales coefficients: β' = (1 + δ)β for every listed edge. Applied in
    /// order, so repeated edges compose multiplicatively.
    pub fn intervene_scale(&self, targets: &[ScaleTarget]) -> Result<Scm> {
        let mut out = self.clone();
        for t in targets {
            if !t.delta.is_finite() {
                return Err(Error::Intervention(format!("non-finite delta for {} -> {}", t.parent, t.child)));
            }
            let (c, p) = (self.graph.index_of(&t.child)?, self.graph.index_of(&t.parent)?);
            if !self.graph.has_directed(p, c) {
                return Err(Error::Intervention(format!("{} -> {} is not an edge of the graph", t.parent, t.child)));
            }
            let factor = 1.0 + t.delta;
            let mech = out.mechanisms.get_mut(&t.child).expect("validated node");
            let pos = |parents: &[String]| parents.iter().position(|q| q == &t.parent);
            match mech {
                Mechanism::LinearGaussian(m) => {
                    let j = pos(&m.parents).ok_or_else(|| missing_parent(t))?;
                    m.beta[j] *= factor;
                }
                Mechanism::BinaryLogistic(m) => {
                    let j = pos(&m.parents).ok_or_else(|| missing_parent(t))?;
                    m.beta[j] *= factor;
                }
                Mechanism::MultinomialSoftmax(m) => {
                    let j = pos(&m.parents).ok_or_else(|| missing_parent(t))?;
                    for row in &mut m.coef {
                        row[j] *= factor;
                    }
                }
                Mechanism::GmmRoot(_) | Mechanism::EmpiricalRoot(_) => {
                    return Err(Error::Intervention(format!("`{}` has a root mechanism", t.child)));
                }
            }
        }
        Ok(out)
    }

    pub fn adjust_root(&self, node: &str, edit: &RootEdit) -> Result<Scm> {
        let mut out = self.clone();
        let mech = out.mechanisms.get_mut(node).ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        let bad = |msg: &str| Error::Intervention(format!("root edit for `{node}`: {msg}"));
        match mech {
            Mechanism::GmmRoot(m) => {
                if edit.frequencies.is_some() {
                    return Err(bad("frequencies apply to categorical roots only"));
                }
                let k = m.weights.len();
                if let Some(w) = &edit.weights {
                    if w.len() != k {
                        return Err(bad("weight vector has the wrong length"));
                    }
                    m.weights = normalize(w).ok_or_else(|| bad("weights cannot be normalized"))?;
                }
                if let Some(mu) = &edit.means {
                    if mu.len() != k {
                        return Err(bad("mean vector has the wrong length"));
                    }
                    m.means = mu.clone();
                }
                if let Some(v) = &edit.variances {
                    if v.len() != k {
                        return Err(bad("variance vector has the wrong length"));
                    }
                    if v.iter().any(|&x| !(x > 0.0)) {
                        return Err(bad("variances must be positive"));
                    }
                    m.variances = v.clone();
                }
                if let Some(shift) = edit.mean_shift {
                    for mu in &mut m.means {
                        *mu += shift;
                    }
                }
            }
            Mechanism::EmpiricalRoot(m) => {
                if edit.weights.is_some() || edit.means.is_some() || edit.variances.is_some() || edit.mean_shift.is_some() {
                    return Err(bad("mixture edits apply to numeric roots only"));
                }
                if let Some(f) = &edit.frequencies {
                    if f.len() != m.frequencies.len() {
                        return Err(bad("frequency vector has the wrong length"));
                    }
                    m.frequencies = normalize(f).ok_or_else(|| bad("frequencies cannot be normalized"))?;
                }
            }
            _ => return Err(bad("node is not a root")),
        }
        Ok(out)
    }

    pub fn to_string_versioned(&self) -> Result<String> {
        envelope::encode(SCM_KIND, SCM_FORMAT_VERSION, self)
    }

    pub fn from_str_versioned(text: &str) -> Result<Scm> {
        let scm: Scm = envelope::decode(SCM_KIND, SCM_FORMAT_VERSION, text)?;
        scm.validate()?;
        Ok(scm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        envelope::write_file(path, SCM_KIND, SCM_FORMAT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Scm> {
        let scm: Scm = envelope::read_file(path, SCM_KIND, SCM_FORMAT_VERSION)?;
        scm.validate()?;
        Ok(scm)
    }
}

fn means_ok(means: &[f64], n_parents: usize) -> bool {
    (means.is_empty() || means.len() == n_parents) && means.iter().all(|m| m.is_finite())
}

fn missing_parent(t: &ScaleTarget) -> Error {
    Error::Intervention(format!("`{}` is not a parent in the mechanism of `{}`", t.parent, t.child))
}

fn linear_score(beta: &[f64], intercept: f64, means: &[f64], parents: &[&[f64]], i: usize) -> f64 {
    intercept
        + beta
            .iter()
            .zip(parents)
            .enumerate()
            .map(|(j, (b, col))| b * (col[i] - means.get(j).copied().unwrap_or(0.0)))
            .sum::<f64>()
}

fn sample_node(mech: &Mechanism, parents: &[&[f64]], n: usize, link: LinkNoise, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    match mech {
        Mechanism::LinearGaussian(m) => (0..n)
            .map(|i| linear_score(&m.beta, m.intercept, &m.parent_means, parents, i) + m.sigma * normal())
            .collect(),
        Mechanism::BinaryLogistic(m) => (0..n)
            .map(|i| {
                let eta = linear_score(&m.beta, m.intercept, &m.parent_means, parents, i);
                let one = match link {
                    LinkNoise::GaussianThreshold => stats::sigmoid(eta + m.noise_sigma * normal()) > 0.5,
                    LinkNoise::Bernoulli => {
                        let u: f64 = uniform(&mut normal);
                        u < stats::sigmoid(eta)
                    }
                };
                one as u8 as f64
            })
            .collect(),
        Mechanism::MultinomialSoftmax(m) => {
            let k = m.intercepts.len();
            let mut scores = vec![0.0; k];
            (0..n)
                .map(|i| {
                    for c in 0..k {
                        scores[c] = linear_score(&m.coef[c], m.intercepts[c], &m.parent_means, parents, i);
                    }
                    match link {
                        LinkNoise::GaussianThreshold => {
                            for s in scores.iter_mut() {
                                *s += m.noise_sigma * normal();
                            }
                            argmax(&scores) as f64
                        }
                        LinkNoise::Bernoulli => {
                            stats::softmax_in_place(&mut scores);
                            let u = uniform(&mut normal);
                            categorical_draw(&scores, u) as f64
                        }
                    }
                })
                .collect()
        }
        Mechanism::GmmRoot(m) => (0..n)
            .map(|_| {
                let c = categorical_draw(&m.weights, uniform(&mut normal));
                m.means[c] + m.variances[c].sqrt() * normal()
            })
            .collect(),
        Mechanism::EmpiricalRoot(m) => (0..n).map(|_| categorical_draw(&m.frequencies, uniform(&mut normal)) as f64).collect(),
    }
}

/// Uniform(0,1) from a standard normal draw, keeping one stream per node.
fn uniform(normal: &mut impl FnMut() -> f64) -> f64 {
    stats::normal_cdf(normal())
}

fn categorical_draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (c, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    // Rounding can leave `acc` a hair below 1; take the last positive level.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Probability of level 1 under a binary mechanism's sampling rule.
pub fn binary_probability(m: &BinaryLogisticMech, eta: f64, link: LinkNoise) -> f64 {
    match link {
        LinkNoise::GaussianThreshold if m.noise_sigma > 0.0 => stats::normal_cdf(eta / m.noise_sigma),
        LinkNoise::GaussianThreshold => (eta > 0.0) as u8 as f64,
        LinkNoise::Bernoulli => stats::sigmoid(eta),
    }
}

impl BinaryLogisticMech {
    pub fn score(&self, parent_values: &[f64]) -> f64 {
        let cols: Vec<[f64; 1]> = parent_values.iter().map(|&v| [v]).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        linear_score(&self.beta, self.intercept, &self.parent_means, &refs, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_data(n: usize) -> Dataset {
        let cols = vec![ColumnSpec::numeric("x", None), ColumnSpec::numeric("y", None)];
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 4.0 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        Dataset::from_columns(cols, &[x, y]).unwrap()
    }

    #[test]
    fn exact_linear_fit() {
        let ds = chain_data(200);
        let g = MixedGraph::from_edges(&["x", "y"], &[("x", "y")]).unwrap();
        let cfg = FitConfig {
            center_parents: false,
            ..FitConfig::default()
        };
        let scm = fit_scm(&ds, &g, &cfg).unwrap();
        let Mechanism::LinearGaussian(m) = scm.mechanism("y").unwrap() else {
            panic!("expected a linear mechanism")
        };
        assert!((m.beta[0] - 2.0).abs() < 1e-6);
        assert!((m.intercept - 1.0).abs() < 1e-6);
        assert!(m.sigma < 1e-6);
    }

    #[test]
    fn empirical_root_frequencies() {
        let cols = vec![ColumnSpec::categorical("c", ["a", "b"])];
        let col: Vec<f64> = (0..100).map(|i| if i < 30 { 0.0 } else { 1.0 }).collect();
        let ds = Dataset::from_columns(cols, &[col]).unwrap();
        let g = MixedGraph::new(["c"]).unwrap();
        let scm = fit_scm(&ds, &g, &FitConfig::default()).unwrap();
        let Mechanism::EmpiricalRoot(m) = scm.mechanism("c").unwrap() else {
            panic!()
        };
        assert!((m.frequencies[0] - 0.3).abs() < 1e-12);
        assert!((m.frequencies[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn intervene_arithmetic() {
        let ds = chain_data(50);
        let g = MixedGraph::from_edges(&["x", "y"], &[("x", "y")]).unwrap();
        let scm = fit_scm(&ds, &g, &FitConfig::default()).unwrap();
        let s = scm.intervene_scale(&[ScaleTarget::new("y", "x", -0.35)]).unwrap();
        let Mechanism::LinearGaussian(m) = s.mechanism("y").unwrap() else { panic!() };
        assert!((m.beta[0] - 1.3).abs() < 1e-9);
        let zero = scm.intervene_scale(&[ScaleTarget::new("y", "x", -1.0)]).unwrap();
        let Mechanism::LinearGaussian(m) = zero.mechanism("y").unwrap() else { panic!() };
        assert_eq!(m.beta[0], 0.0);
        assert_eq!(scm.intervene_scale(&[ScaleTarget::new("y", "x", 0.0)]).unwrap(), scm);
        assert!(matches!(
            scm.intervene_scale(&[ScaleTarget::new("x", "y", 0.5)]),
            Err(Error::Intervention(_))
        ));
    }

    #[test]
    fn categorical_draw_edges() {
        assert_eq!(categorical_draw(&[1.0, 0.0], 0.999999), 0);
        assert_eq!(categorical_draw(&[0.5, 0.5], 0.7), 1);
        assert_eq!(categorical_draw(&[0.3, 0.7, 0.0], 1.0), 1);
    }

    #[test]
    fn gmm_picks_two_components_for_bimodal_data() {
        let mut rng = rng_for(3, 0);
        let y: Vec<f64> = (0..1000)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if i % 2 == 0 { z * 0.1 } else { 5.0 + z * 0.1 }
            })
            .collect();
        let (m, _, _) = fit_gmm(&y, &FitConfig::default(), &mut rng).unwrap();
        assert_eq!(m.weights.len(), 2);
        let mut means = m.means.clone();
        means.sort_by(f64::total_cmp);
        assert!(means[0].abs() < 0.05 && (means[1] - 5.0).abs() < 0.05);
    }
}
