//! Reference classifiers under test and the evaluation metric suite.
//!
//! Both ensembles grow binary trees on pre-binned features: each feature's
//! sorted distinct training values define its candidate thresholds (midpoints
//! between neighbours), so split search is exact while costing one pass over
//! the node's rows per feature. A row goes left when `x < threshold`.

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope;
use crate::stats::{self, rng_for};
use crate::tabular::{ColumnKind, ColumnSpec, Dataset};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_KIND: &str = "model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[serde(alias = "xgb", alias = "xgboost")]
    Gbt,
    #[serde(alias = "rf")]
    RandomForest,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbt" | "xgb" | "xgboost" => Ok(ClassifierKind::Gbt),
            "rf" | "random_forest" => Ok(ClassifierKind::RandomForest),
            other => Err(Error::Config(format!("unknown classifier kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    /// Shrinkage (boosting only).
    pub learning_rate: f64,
    /// L2 penalty on leaf weights (boosting only).
    pub lambda: f64,
    /// Minimum hessian sum per child (boosting only).
    pub min_child_weight: f64,
    /// Minimum rows per leaf (forest only).
    pub min_samples_leaf: usize,
}

impl Hyperparameters {
    pub fn defaults_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Gbt => Hyperparameters {
                n_estimators: 100,
                max_depth: Some(6),
                learning_rate: 0.1,
                lambda: 1.0,
                min_child_weight: 1.0,
                min_samples_leaf: 1,
            },
            ClassifierKind::RandomForest => Hyperparameters {
                n_estimators: 100,
                max_depth: None,
                learning_rate: 1.0,
                lambda: 0.0,
                min_child_weight: 0.0,
                min_samples_leaf: 1,
            },
        }
    }
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters::defaults_for(ClassifierKind::Gbt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] < threshold { left } else { right },
            }
        }
    }

    fn uses_feature(&self, f: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, TreeNode::Split { feature, .. } if *feature == f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    kind: ClassifierKind,
    hp: Hyperparameters,
    target: String,
    features: Vec<ColumnSpec>,
    fingerprint: String,
    trees: Vec<Tree>,
    base_margin: f64,
    /// Mean training log-loss after each boosting round (empty for forests).
    train_loss: Vec<f64>,
}

/// Digest of feature names, kinds and level lists.
pub fn schema_fingerprint(features: &[ColumnSpec]) -> String {
    let mut text = String::new();
    for f in features {
        let kind = match f.kind {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
        };
        text.push_str(&format!("{}|{}|{}\n", f.name, kind, f.levels.join("\u{1f}")));
    }
    envelope::sha256_hex(text.as_bytes())
}

/// Reads a binary target column as booleans (level index 1 / value 1 = positive).
pub fn binary_target(ds: &Dataset, target: &str) -> Result<Vec<bool>> {
    let spec = ds.spec(target)?;
    if spec.kind == ColumnKind::Categorical && spec.n_levels() != 2 {
        return Err(Error::Data(format!("target `{target}` has {} levels, expected 2", spec.n_levels())));
    }
    let col = ds.column_by_name(target)?;
    col.iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::Data(format!("target `{target}` is not binary (value {v})")))
            }
        })
        .collect()
}

/// Feature matrix laid out row-major, in `features` order.
fn feature_rows(ds: &Dataset, features: &[ColumnSpec]) -> Result<Vec<f64>> {
    let idx: Vec<usize> = features.iter().map(|f| ds.column_index(&f.name)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(ds.n_rows() * idx.len());
    for row in ds.rows() {
        out.extend(idx.iter().map(|&j| row[j]));
    }
    Ok(out)
}

/// Per-feature bins over the distinct training values.
struct Binned {
    n: usize,
    p: usize,
    /// bin index per (row, feature), row-major.
    codes: Vec<u32>,
    /// Distinct sorted values per feature.
    values: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: &[f64], n: usize, p: usize) -> Self {
        let mut values = Vec::with_capacity(p);
        let mut codes = vec![0u32; n * p];
        for j in 0..p {
            let mut v: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            for i in 0..n {
                let val = x[i * p + j];
                codes[i * p + j] = v.partition_point(|&u| u < val) as u32;
            }
            values.push(v);
        }
        Binned { n, p, codes, values }
    }

    fn code(&self, i: usize, j: usize) -> usize {
        self.codes[i * self.p + j] as usize
    }

    /// Threshold separating bin `b` from bin `b + 1`.
    fn threshold(&self, j: usize, b: usize) -> f64 {
        let v = &self.values[j];
        v[b] + (v[b + 1] - v[b]) / 2.0
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: usize,
    threshold: f64,
}

fn better(a: &Candidate, b: &Option<Candidate>) -> bool {
    match b {
        None => true,
        Some(b) => match a.gain.partial_cmp(&b.gain).unwrap_or(Ordering::Equal) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (a.feature, a.threshold.total_cmp(&b.threshold)) < (b.feature, Ordering::Equal),
        },
    }
}

pub fn train(ds: &Dataset, target: &str, kind: ClassifierKind, hp: &Hyperparameters, seed: u64) -> Result<Classifier> {
    let y = binary_target(ds, target)?;
    if ds.n_rows() < 20 {
        return Err(Error::Data(format!("training needs at least 20 rows, got {}", ds.n_rows())));
    }
    let positives = y.iter().filter(|&&b| b).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Data(format!("target `{target}` has a single class")));
    }
    if hp.n_estimators == 0 {
        return Err(Error::Config("n_estimators must be positive".into()));
    }
    let features: Vec<ColumnSpec> = ds.columns().iter().filter(|c| c.name != target).cloned().collect();
    if features.is_empty() {
        return Err(Error::Data("no feature columns".into()));
    }
    let x = feature_rows(ds, &features)?;
    let binned = Binned::new(&x, ds.n_rows(), features.len());
    let mut model = Classifier {
        kind,
        hp: hp.clone(),
        target: target.to_string(),
        fingerprint: schema_fingerprint(&features),
        features,
        trees: Vec::new(),
        base_margin: 0.0,
        train_loss: Vec::new(),
    };
    match kind {
        ClassifierKind::Gbt => train_gbt(&mut model, &binned, &y),
        ClassifierKind::RandomForest => train_forest(&mut model, &binned, &y, seed),
    }
    Ok(model)
}

fn train_gbt(model: &mut Classifier, data: &Binned, y: &[bool]) {
    let hp = model.hp.clone();
    let n = data.n;
    let mut margin = vec![model.base_margin; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let rows: Vec<usize> = (0..n).collect();
    for _ in 0..hp.n_estimators {
        for i in 0..n {
            let p = stats::sigmoid(margin[i]);
            grad[i] = p - y[i] as u8 as f64;
            hess[i] = p * (1.0 - p);
        }
        let mut tree = Tree { nodes: Vec::new() };
        grow_gbt(&mut tree, data, &grad, &hess, &rows, 0, &hp);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict_binned(data, i);
        }
        model.trees.push(tree);
        let loss = (0..n)
            .map(|i| {
                let p = stats::sigmoid(margin[i]).clamp(1e-15, 1.0 - 1e-15);
                if y[i] {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / n as f64;
        model.train_loss.push(loss);
    }
}

impl Tree {
    /// Prediction for a training row using its bin codes.
    fn predict_binned(&self, data: &Binned, i: usize) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = data.values[feature][data.code(i, feature)];
                    k = if v < threshold { left } else { right };
                }
            }
        }
    }
}

fn grow_gbt(
    tree: &mut Tree,
    data: &Binned,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    depth: usize,
    hp: &Hyperparameters,
) -> usize {
    let id = tree.nodes.len();
    let g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h: f64 = rows.iter().map(|&i| hess[i]).sum();
    let leaf = TreeNode::Leaf {
        value: -hp.learning_rate * g / (h + hp.lambda),
    };
    tree.nodes.push(leaf);
    if hp.max_depth.is_some_and(|d| depth >= d) || rows.len() < 2 {
        return id;
    }
    let parent_score = g * g / (h + hp.lambda);
    let mut best: Option<Candidate> = None;
    for j in 0..data.p {
        let nb = data.values[j].len();
        if nb < 2 {
            continue;
        }
        let mut gs = vec![0.0; nb];
        let mut hs = vec![0.0; nb];
        for &i in rows {
            let b = data.code(i, j);
            gs[b] += grad[i];
            hs[b] += hess[i];
        }
        let (mut gl, mut hl) = (0.0, 0.0);
        for b in 0..nb - 1 {
            gl += gs[b];
            hl += hs[b];
            let (gr, hr) = (g - gl, h - hl);
            if hl < hp.min_child_weight || hr < hp.min_child_weight {
                continue;
            }
            let gain = 0.5 * (gl * gl / (hl + hp.lambda) + gr * gr / (hr + hp.lambda) - parent_score);
            if gain > 1e-12 {
                let c = Candidate {
                    gain,
                    feature: j,
                    bin: b,
                    threshold: data.threshold(j, b),
                };
                if better(&c, &best) {
                    best = Some(c);
                }
            }
        }
    }
    let Some(best) = best else { return id };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| data.code(i, best.feature) <= best.bin);
    if left_rows.is_empty() || right_rows.is_empty() {
        return id;
    }
    let left = grow_gbt(tree, data, grad, hess, &left_rows, depth + 1, hp);
    let right = grow_gbt(tree, data, grad, hess, &right_rows, depth + 1, hp);
    tree.nodes[id] = TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
    id
}

fn train_forest(model: &mut Classifier, data: &Binned, y: &[bool], seed: u64) {
    let hp = model.hp.clone();
    let mtry = ((data.p as f64).sqrt() as usize).max(1);
    model.trees = (0..hp.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, t as u64);
            let mut weight = vec![0u32; data.n];
            for _ in 0..data.n {
                weight[rng.random_range(0..data.n)] += 1;
            }
            let rows: Vec<usize> = (0..data.n).filter(|&i| weight[i] > 0).collect();
            let mut tree = Tree { nodes: Vec::new() };
            grow_forest_tree(&mut tree, data, y, &weight, &rows, 0, &hp, mtry, &mut rng);
            tree
        })
        .collect();
}

#[allow(clippy::too_many_arguments)]
fn grow_forest_tree(
    tree: &mut Tree,
    data: &Binned,
    y: &[bool],
    weight: &[u32],
    rows: &[usize],
    depth: usize,
    hp: &Hyperparameters,
    mtry: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> usize {
    let id = tree.nodes.len();
    let total: f64 = rows.iter().map(|&i| weight[i] as f64).sum();
    let pos: f64 = rows.iter().filter(|&&i| y[i]).map(|&i| weight[i] as f64).sum();
    tree.nodes.push(TreeNode::Leaf { value: pos / total });
    if pos == 0.0 || pos == total || hp.max_depth.is_some_and(|d| depth >= d) || total < 2.0 * hp.min_samples_leaf as f64 {
        return id;
    }
    let parent_gini = total * gini(pos, total);
    let mut order: Vec<usize> = (0..data.p).collect();
    order.shuffle(rng);
    let mut best: Option<Candidate> = None;
    for (visited, &j) in order.iter().enumerate() {
        // Keep drawing features past `mtry` only while nothing splits.
        if visited >= mtry && best.is_some() {
            break;
        }
        let nb = data.values[j].len();
        if nb < 2 {
            continue;
        }
        let mut ws = vec![0.0; nb];
        let mut ps = vec![0.0; nb];
        for &i in rows {
            let b = data.code(i, j);
            ws[b] += weight[i] as f64;
            if y[i] {
                ps[b] += weight[i] as f64;
            }
        }
        let (mut wl, mut pl) = (0.0, 0.0);
        let min_leaf = hp.min_samples_leaf.max(1) as f64;
        for b in 0..nb - 1 {
            wl += ws[b];
            pl += ps[b];
            let (wr, pr) = (total - wl, pos - pl);
            if wl < min_leaf || wr < min_leaf || ws[b + 1..].iter().all(|&w| w == 0.0) {
                continue;
            }
            // Skip thresholds between two empty bins; the next occupied bin
            // gives the same partition.
            if ws[b] == 0.0 {
                continue;
            }
            let gain = parent_gini - wl * gini(pl, wl) - wr * gini(pr, wr);
            if gain > 1e-12 {
                let next = (b + 1..nb).find(|&k| ws[k] > 0.0).unwrap_or(b + 1);
                let v = &data.values[j];
                let c = Candidate {
                    gain,
                    feature: j,
                    bin: b,
                    threshold: v[b] + (v[next] - v[b]) / 2.0,
                };
                if better(&c, &best) {
                    best = Some(c);
                }
            }
        }
    }
    let Some(best) = best else { return id };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| data.code(i, best.feature) <= best.bin);
    let left = grow_forest_tree(tree, data, y, weight, &left_rows, depth + 1, hp, mtry, rng);
    let right = grow_forest_tree(tree, data, y, weight, &right_rows, depth + 1, hp, mtry, rng);
    tree.nodes[id] = TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
    id
}

fn gini(pos: f64, total: f64) -> f64 {
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn features(&self) -> &[ColumnSpec] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    /// Whether any tree splits on feature `f` (index into `features`).
    pub fn uses_feature(&self, f: usize) -> bool {
        self.trees.iter().any(|t| t.uses_feature(f))
    }

    fn check_schema(&self, ds: &Dataset) -> Result<()> {
        let mut specs = Vec::with_capacity(self.features.len());
        for f in &self.features {
            specs.push(ds.spec(&f.name).map_err(|_| {
                Error::Model(format!("schema mismatch: data lacks feature `{}`", f.name))
            })?.clone());
        }
        if schema_fingerprint(&specs) != self.fingerprint {
            return Err(Error::Model("schema mismatch: feature fingerprint differs from training".into()));
        }
        Ok(())
    }

    /// Positive-class probability for one feature row in `features` order.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.kind {
            ClassifierKind::Gbt => {
                stats::sigmoid(self.base_margin + self.trees.iter().map(|t| t.predict(row)).sum::<f64>())
            }
            ClassifierKind::RandomForest => {
                self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
            }
        }
    }

    /// Per-tree raw outputs for one row (margins for boosting, leaf
    /// frequencies for forests).
    pub fn tree_outputs(&self, row: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(row)).collect()
    }

    pub fn predict_proba(&self, ds: &Dataset) -> Result<Vec<f64>> {
        self.check_schema(ds)?;
        let x = feature_rows(ds, &self.features)?;
        let p = self.features.len();
        Ok(x.par_chunks(p.max(1)).map(|row| self.predict_row(row)).collect())
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<bool>> {
        Ok(self.predict_proba(ds)?.into_iter().map(|p| p >= 0.5).collect())
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<MetricsVector> {
        let y = binary_target(ds, &self.target)?;
        let scores = self.predict_proba(ds)?;
        MetricsVector::from_scores(&y, &scores)
    }

    pub fn to_string_versioned(&self) -> Result<String> {
        envelope::encode(MODEL_KIND, MODEL_FORMAT_VERSION, self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        envelope::write_file(path, MODEL_KIND, MODEL_FORMAT_VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Classifier> {
        envelope::read_file(path, MODEL_KIND, MODEL_FORMAT_VERSION)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(y: &[bool], pred: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&t, &p) in y.iter().zip(pred) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Threshold metrics at 0.5 plus ranking metrics. Undefined ratios are 0;
/// AUROC and PR-AUC are `None` when only one class is present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsVector {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub auroc: Option<f64>,
    pub pr_auc: Option<f64>,
}

pub const METRIC_NAMES: [&str; 8] = [
    "accuracy",
    "balanced_accuracy",
    "recall",
    "specificity",
    "precision",
    "f1",
    "auroc",
    "pr_auc",
];

impl MetricsVector {
    pub fn from_confusion(c: &Confusion) -> Self {
        let recall = ratio(c.tp, c.tp + c.fn_);
        let specificity = ratio(c.tn, c.tn + c.fp);
        let precision = ratio(c.tp, c.tp + c.fp);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsVector {
            accuracy: ratio(c.tp + c.tn, c.total()),
            balanced_accuracy: (recall + specificity) / 2.0,
            recall,
            specificity,
            precision,
            f1,
            auroc: None,
            pr_auc: None,
        }
    }

    pub fn from_scores(y: &[bool], scores: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Data("cannot evaluate on an empty dataset".into()));
        }
        if y.len() != scores.len() {
            return Err(Error::Data("label and score counts differ".into()));
        }
        let pred: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
        let mut m = MetricsVector::from_confusion(&Confusion::from_labels(y, &pred));
        m.auroc = auroc(y, scores);
        m.pr_auc = average_precision(y, scores);
        Ok(m)
    }

    pub fn get(&self, name: &str) -> Result<Option<f64>> {
        Ok(match name {
            "accuracy" => Some(self.accuracy),
            "balanced_accuracy" => Some(self.balanced_accuracy),
            "recall" => Some(self.recall),
            "specificity" => Some(self.specificity),
            "precision" => Some(self.precision),
            "f1" => Some(self.f1),
            "auroc" => self.auroc,
            "pr_auc" => self.pr_auc,
            other => return Err(Error::Config(format!("unknown metric `{other}`"))),
        })
    }
}

pub fn validate_metric_name(name: &str) -> Result<()> {
    if METRIC_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown metric `{name}`")))
    }
}

/// Mann–Whitney AUROC with midranks for tied scores.
pub fn auroc(y: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = y.iter().filter(|&&b| b).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if y[k] {
                rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Step-wise area under the precision–recall curve (average precision).
pub fn average_precision(y: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = y.iter().filter(|&&b| b).count();
    if n_pos == 0 || n_pos == y.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            if y[k] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Some(ap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = rng_for(seed, 1);
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| (a + b > 1.0) as u8 as f64).collect();
        Dataset::from_columns(
            vec![
                ColumnSpec::numeric("a", None),
                ColumnSpec::numeric("b", None),
                ColumnSpec::categorical("y", ["no", "yes"]),
            ],
            &[a, b, y],
        )
        .unwrap()
    }

    #[test]
    fn separable_training_accuracy() {
        let ds = toy(300, 1);
        for kind in [ClassifierKind::Gbt, ClassifierKind::RandomForest] {
            let m = train(&ds, "y", kind, &Hyperparameters::defaults_for(kind), 4).unwrap();
            assert!(m.evaluate(&ds).unwrap().accuracy >= 0.99, "{kind:?}");
        }
    }

    #[test]
    fn gbt_loss_non_increasing() {
        let ds = toy(300, 2);
        let m = train(&ds, "y", ClassifierKind::Gbt, &Hyperparameters::default(), 0).unwrap();
        for w in m.train_loss().windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn perfect_predictions() {
        let y = [true, false, true, false];
        let m = MetricsVector::from_scores(&y, &[0.9, 0.1, 0.8, 0.2]).unwrap();
        for name in METRIC_NAMES {
            assert_eq!(m.get(name).unwrap(), Some(1.0), "{name}");
        }
    }

    #[test]
    fn auroc_ties_use_midranks() {
        assert_eq!(auroc(&[true, false], &[0.5, 0.5]), Some(0.5));
        assert_eq!(auroc(&[true, true], &[0.5, 0.4]), None);
    }

    #[test]
    fn average_precision_by_hand() {
        // Ranked: +, -, +  → precision 1 at recall .5, 2/3 at recall 1.
        let ap = average_precision(&[true, false, true], &[0.9, 0.8, 0.7]).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let ds = toy(100, 3);
        let m = train(&ds, "y", ClassifierKind::Gbt, &Hyperparameters::default(), 0).unwrap();
        let other = ds.select_columns(&["a", "y"]).unwrap();
        assert!(matches!(m.predict_proba(&other), Err(Error::Model(_))));
    }

    #[test]
    fn single_class_rejected() {
        let ds = Dataset::from_columns(
            vec![ColumnSpec::numeric("a", None), ColumnSpec::categorical("y", ["n", "y"])],
            &[(0..30).map(|i| i as f64).collect(), vec![1.0; 30]],
        )
        .unwrap();
        assert!(train(&ds, "y", ClassifierKind::Gbt, &Hyperparameters::default(), 0).is_err());
    }
}
