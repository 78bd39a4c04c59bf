//! PC causal discovery: conditional-independence tests, stable skeleton
//! search, collider orientation, Meek propagation and background knowledge.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{BackgroundKnowledge, EdgeState, MixedGraph};
use crate::stats;
use crate::tabular::{ColumnKind, Dataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiTestKind {
    GSquaredDiscrete,
    FisherZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcConfig {
    pub alpha: f64,
    pub max_cond_set: usize,
    pub ci_test: CiTestKind,
    /// Quantile bins used for numeric columns under the G² test.
    pub n_bins: usize,
    pub collider_rule: ColliderRule,
}

/// How unshielded triples `a – c – b` are judged colliders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColliderRule {
    /// Collider iff `c` is absent from the separating set the skeleton
    /// search happened to find first.
    Sepset,
    /// Re-test `a ⟂ b` given every subset of `adj(a)` and of `adj(b)` up to
    /// `max_cond_set`; collider iff the subset with the largest p-value
    /// excludes `c`.
    MaxP,
}

impl Default for PcConfig {
    fn default() -> Self {
        PcConfig {
            alpha: 0.05,
            max_cond_set: 3,
            ci_test: CiTestKind::GSquaredDiscrete,
            n_bins: 5,
            collider_rule: ColliderRule::MaxP,
        }
    }
}

impl PcConfig {
    pub fn validate(&self, n_vars: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_bins < 2 {
            return Err(Error::Config("n_bins must be at least 2".into()));
        }
        if n_vars >= 2 && self.max_cond_set > n_vars - 2 {
            return Err(Error::Config(format!(
                "max_cond_set {} exceeds p - 2 = {}",
                self.max_cond_set,
                n_vars - 2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub x: String,
    pub y: String,
    pub given: Vec<String>,
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// Dataset prepared once for repeated CI tests.
pub struct CiTester {
    kind: CiTestKind,
    alpha: f64,
    n: usize,
    /// Discrete codes per column (G² test).
    codes: Vec<Vec<u32>>,
    cards: Vec<usize>,
    /// Correlation matrix (Fisher z test).
    corr: DMatrix<f64>,
}

impl CiTester {
    pub fn new(ds: &Dataset, cfg: &PcConfig) -> Result<Self> {
        let p = ds.n_cols();
        let mut codes = Vec::new();
        let mut cards = Vec::new();
        let mut corr = DMatrix::zeros(0, 0);
        match cfg.ci_test {
            CiTestKind::GSquaredDiscrete => {
                for (j, spec) in ds.columns().iter().enumerate() {
                    let col = ds.column(j);
                    let (c, k) = match spec.kind {
                        ColumnKind::Categorical => {
                            (col.iter().map(|&v| v as u32).collect(), spec.n_levels())
                        }
                        ColumnKind::Numeric => quantile_bins(&col, cfg.n_bins),
                    };
                    codes.push(c);
                    cards.push(k);
                }
            }
            CiTestKind::FisherZ => {
                let cov = crate::tabular::covariance_matrix(ds)?;
                corr = DMatrix::from_fn(p, p, |a, b| {
                    let d = (cov.matrix[(a, a)] * cov.matrix[(b, b)]).sqrt();
                    if d > 0.0 {
                        cov.matrix[(a, b)] / d
                    } else if a == b {
                        1.0
                    } else {
                        0.0
                    }
                });
            }
        }
        Ok(CiTester {
            kind: cfg.ci_test,
            alpha: cfg.alpha,
            n: ds.n_rows(),
            codes,
            cards,
            corr,
        })
    }

    /// Returns `(statistic, df, p_value)`.
    pub fn test(&self, x: usize, y: usize, given: &[usize]) -> Result<(f64, f64, f64)> {
        if x == y || given.contains(&x) || given.contains(&y) {
            return Err(Error::Config("CI test needs distinct x, y outside the conditioning set".into()));
        }
        match self.kind {
            CiTestKind::GSquaredDiscrete => self.g_squared(x, y, given),
            CiTestKind::FisherZ => self.fisher_z(x, y, given),
        }
    }

    pub fn is_independent(&self, p_value: f64) -> bool {
        p_value > self.alpha
    }

    fn g_squared(&self, x: usize, y: usize, given: &[usize]) -> Result<(f64, f64, f64)> {
        let (rx, ry) = (self.cards[x], self.cards[y]);
        let mut strata: HashMap<u64, Vec<u32>> = HashMap::new();
        for i in 0..self.n {
            let mut key = 0u64;
            for &z in given {
                key = key * self.cards[z] as u64 + self.codes[z][i] as u64;
            }
            let cell = strata.entry(key).or_insert_with(|| vec![0; rx * ry]);
            cell[self.codes[x][i] as usize * ry + self.codes[y][i] as usize] += 1;
        }
        let mut g2 = 0.0;
        let mut df = 0usize;
        for table in strata.values() {
            let mut row = vec![0u32; rx];
            let mut col = vec![0u32; ry];
            let mut total = 0u32;
            for a in 0..rx {
                for b in 0..ry {
                    let c = table[a * ry + b];
                    row[a] += c;
                    col[b] += c;
                    total += c;
                }
            }
            let r_obs = row.iter().filter(|&&c| c > 0).count();
            let c_obs = col.iter().filter(|&&c| c > 0).count();
            // Empty rows/columns (and strata) carry no information.
            df += (r_obs.saturating_sub(1)) * (c_obs.saturating_sub(1));
            for a in 0..rx {
                for b in 0..ry {
                    let c = table[a * ry + b];
                    if c > 0 {
                        let expected = row[a] as f64 * col[b] as f64 / total as f64;
                        g2 += c as f64 * (c as f64 / expected).ln();
                    }
                }
            }
        }
        g2 *= 2.0;
        if df == 0 {
            return Err(Error::DegenerateTest(format!(
                "no degrees of freedom testing columns {x} and {y} given {given:?}"
            )));
        }
        let p = stats::chi2_sf(g2, df as f64)?;
        Ok((g2, df as f64, p))
    }

    fn fisher_z(&self, x: usize, y: usize, given: &[usize]) -> Result<(f64, f64, f64)> {
        let vars: Vec<usize> = [x, y].into_iter().chain(given.iter().copied()).collect();
        let k = vars.len();
        let sub = DMatrix::from_fn(k, k, |a, b| self.corr[(vars[a], vars[b])]);
        let prec = sub
            .clone()
            .try_inverse()
            .or_else(|| sub.pseudo_inverse(1e-12).ok())
            .ok_or_else(|| Error::Numerical("singular correlation submatrix".into()))?;
        let denom = (prec[(0, 0)] * prec[(1, 1)]).sqrt();
        if !(denom > 0.0) {
            return Err(Error::DegenerateTest("zero partial variance".into()));
        }
        let r = (-prec[(0, 1)] / denom).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        let dof = self.n as f64 - given.len() as f64 - 3.0;
        if dof <= 0.0 {
            return Err(Error::DegenerateTest("too few rows for the Fisher z test".into()));
        }
        let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln() * dof.sqrt();
        let p = 2.0 * (1.0 - stats::normal_cdf(z.abs()));
        Ok((z, dof, p.clamp(0.0, 1.0)))
    }
}

/// Quantile binning of a numeric column; returns codes and bin count.
fn quantile_bins(col: &[f64], n_bins: usize) -> (Vec<u32>, usize) {
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..n_bins)
        .map(|k| stats::quantile_sorted(&sorted, k as f64 / n_bins as f64))
        .collect();
    cuts.dedup();
    let codes = col.iter().map(|&v| cuts.partition_point(|&c| c < v) as u32).collect();
    (codes, cuts.len() + 1)
}

/// One conditional-independence test by column name.
pub fn ci_test(ds: &Dataset, x: &str, y: &str, given: &[&str], cfg: &PcConfig) -> Result<CiResult> {
    if given.len() > cfg.max_cond_set {
        return Err(Error::Config(format!(
            "conditioning set of {} exceeds max_cond_set {}",
            given.len(),
            cfg.max_cond_set
        )));
    }
    let tester = CiTester::new(ds, cfg)?;
    let xi = ds.column_index(x)?;
    let yi = ds.column_index(y)?;
    let gi: Vec<usize> = given.iter().map(|g| ds.column_index(g)).collect::<Result<_>>()?;
    let (statistic, df, p_value) = tester.test(xi, yi, &gi)?;
    Ok(CiResult {
        x: x.to_string(),
        y: y.to_string(),
        given: given.iter().map(|s| s.to_string()).collect(),
        statistic,
        df,
        p_value,
        independent: tester.is_independent(p_value),
    })
}

/// Diagnostics from a discovery run.
#[derive(Debug, Clone, Default)]
pub struct PcReport {
    pub tests_run: usize,
    pub degenerate_tests: usize,
    /// Separating sets by unordered node-name pair.
    pub sepsets: BTreeMap<(String, String), Vec<String>>,
    /// Pairs removed up front because background knowledge rules out both
    /// directions.
    pub pruned_by_knowledge: Vec<(String, String)>,
}

pub fn pc_discover(ds: &Dataset, bk: &BackgroundKnowledge, cfg: &PcConfig) -> Result<MixedGraph> {
    pc_discover_with_report(ds, bk, cfg).map(|(g, _)| g)
}

/// Stable PC. Adjacency sets are frozen at the start of each conditioning
/// level and candidate sets are enumerated in node-name order, so the result
/// does not depend on column order.
pub fn pc_discover_with_report(
    ds: &Dataset,
    bk: &BackgroundKnowledge,
    cfg: &PcConfig,
) -> Result<(MixedGraph, PcReport)> {
    let names: Vec<String> = ds.column_names().iter().map(|s| s.to_string()).collect();
    cfg.validate(names.len())?;
    bk.validate(&names)?;
    let tester = CiTester::new(ds, cfg)?;
    let p = names.len();

    // rank[i] = position of node i in name order.
    let mut by_name: Vec<usize> = (0..p).collect();
    by_name.sort_by(|&a, &b| names[a].cmp(&names[b]));
    let mut rank = vec![0; p];
    for (r, &i) in by_name.iter().enumerate() {
        rank[i] = r;
    }

    let mut report = PcReport::default();
    let mut graph = MixedGraph::complete(names.clone())?;
    for a in 0..p {
        for b in a + 1..p {
            let (na, nb) = (&names[a], &names[b]);
            let required = bk.requires(na, nb) || bk.requires(nb, na);
            if !required && !bk.allows(na, nb) && !bk.allows(nb, na) {
                graph.remove_edge(a, b);
                report.pruned_by_knowledge.push(ordered_pair(na, nb));
            }
        }
    }

    let mut sepsets: HashMap<(usize, usize), (Vec<usize>, f64)> = HashMap::new();
    for level in 0..=cfg.max_cond_set {
        let adj: Vec<Vec<usize>> = (0..p)
            .map(|i| {
                let mut a = graph.adjacent(i);
                a.sort_by_key(|&j| rank[j]);
                a
            })
            .collect();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for &a in &by_name {
            for &b in &adj[a] {
                if rank[a] < rank[b]
                    && (adj[a].len() > level || adj[b].len() > level)
                    && !bk.requires(&names[a], &names[b])
                    && !bk.requires(&names[b], &names[a])
                {
                    pairs.push((a, b));
                }
            }
        }
        if pairs.is_empty() {
            break;
        }
        let outcomes: Vec<Result<PairOutcome>> = pairs
            .par_iter()
            .map(|&(a, b)| search_separating_set(&tester, &adj, a, b, level))
            .collect();
        for (&(a, b), outcome) in pairs.iter().zip(outcomes) {
            let outcome = outcome?;
            report.tests_run += outcome.tests;
            report.degenerate_tests += outcome.degenerate;
            if let Some(sep) = outcome.separating {
                graph.remove_edge(a, b);
                sepsets.insert((a.min(b), a.max(b)), sep);
            }
        }
    }

    if cfg.collider_rule == ColliderRule::MaxP {
        let pairs: Vec<(usize, usize)> = (0..p)
            .flat_map(|a| (a + 1..p).map(move |b| (a, b)))
            .filter(|&(a, b)| {
                !graph.is_adjacent(a, b) && graph.adjacent(a).iter().any(|&c| graph.is_adjacent(c, b))
            })
            .collect();
        let adj: Vec<Vec<usize>> = (0..p)
            .map(|i| {
                let mut a = graph.adjacent(i);
                a.sort_by_key(|&j| rank[j]);
                a
            })
            .collect();
        let best: Vec<Result<(Vec<usize>, f64, usize)>> = pairs
            .par_iter()
            .map(|&(a, b)| max_p_set(&tester, &adj, a, b, cfg.max_cond_set))
            .collect();
        let mut collider_sets = HashMap::new();
        for (&(a, b), r) in pairs.iter().zip(best) {
            let (set, pv, tests) = r?;
            report.tests_run += tests;
            collider_sets.insert((a, b), (set, pv));
        }
        let triples = collider_candidates(&graph, &collider_sets, &rank);
        orient_colliders(&mut graph, &triples)?;
    } else {
        let triples = collider_candidates(&graph, &sepsets, &rank);
        orient_colliders(&mut graph, &triples)?;
    }
    graph.meek_closure(|_, _| true);
    apply_knowledge(&mut graph, bk)?;
    graph.meek_closure(|a, b| bk.allows(&names[a], &names[b]));

    for ((a, b), (set, _)) in sepsets {
        let mut set: Vec<String> = set.into_iter().map(|i| names[i].clone()).collect();
        set.sort();
        report.sepsets.insert(ordered_pair(&names[a], &names[b]), set);
    }
    Ok((graph, report))
}

fn ordered_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

struct PairOutcome {
    separating: Option<(Vec<usize>, f64)>,
    tests: usize,
    degenerate: usize,
}

fn search_separating_set(
    tester: &CiTester,
    adj: &[Vec<usize>],
    a: usize,
    b: usize,
    level: usize,
) -> Result<PairOutcome> {
    let mut outcome = PairOutcome {
        separating: None,
        tests: 0,
        degenerate: 0,
    };
    let mut tried: Vec<Vec<usize>> = Vec::new();
    for (from, other) in [(a, b), (b, a)] {
        let pool: Vec<usize> = adj[from].iter().copied().filter(|&j| j != other).collect();
        if pool.len() < level {
            continue;
        }
        for subset in Combinations::new(pool.len(), level) {
            let mut set: Vec<usize> = subset.iter().map(|&k| pool[k]).collect();
            set.sort_unstable();
            if tried.contains(&set) {
                continue;
            }
            outcome.tests += 1;
            let pv = match tester.test(a, b, &set) {
                Ok((_, _, pv)) => pv,
                // No degrees of freedom: nothing contradicts independence.
                Err(Error::DegenerateTest(_)) => {
                    outcome.degenerate += 1;
                    1.0
                }
                Err(e) => return Err(e),
            };
            if tester.is_independent(pv) {
                outcome.separating = Some((set, pv));
                return Ok(outcome);
            }
            tried.push(set);
        }
    }
    Ok(outcome)
}

/// Conditioning set with the largest p-value for `a ⟂ b` among subsets of
/// either endpoint's neighbours. Earlier sets win ties.
fn max_p_set(
    tester: &CiTester,
    adj: &[Vec<usize>],
    a: usize,
    b: usize,
    max_size: usize,
) -> Result<(Vec<usize>, f64, usize)> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut tried: Vec<Vec<usize>> = Vec::new();
    for (from, other) in [(a, b), (b, a)] {
        let pool: Vec<usize> = adj[from].iter().copied().filter(|&j| j != other).collect();
        for level in 0..=max_size.min(pool.len()) {
            for subset in Combinations::new(pool.len(), level) {
                let mut set: Vec<usize> = subset.iter().map(|&k| pool[k]).collect();
                set.sort_unstable();
                if tried.contains(&set) {
                    continue;
                }
                let pv = match tester.test(a, b, &set) {
                    Ok((_, _, pv)) => pv,
                    Err(Error::DegenerateTest(_)) => 1.0,
                    Err(e) => return Err(e),
                };
                if best.as_ref().is_none_or(|(bp, _)| pv > *bp) {
                    best = Some((pv, set.clone()));
                }
                tried.push(set);
            }
        }
    }
    let n = tried.len();
    let (pv, set) = best.unwrap_or((1.0, Vec::new()));
    Ok((set, pv, n))
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    first: bool,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            first: true,
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.first {
            self.first = false;
            return Some(self.idx.clone());
        }
        let k = self.idx.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(self.idx.clone());
            }
        }
        self.done = true;
        None
    }
}

/// Unshielded triples `(a, c, b)` judged colliders, strongest evidence first
/// (larger separating p-value), then canonical order.
fn collider_candidates(
    graph: &MixedGraph,
    sepsets: &HashMap<(usize, usize), (Vec<usize>, f64)>,
    rank: &[usize],
) -> Vec<(usize, usize, usize)> {
    let mut order: Vec<usize> = (0..graph.n()).collect();
    order.sort_by_key(|&i| rank[i]);
    let mut found = Vec::new();
    for &c in &order {
        let mut nb = graph.adjacent(c);
        nb.sort_by_key(|&i| rank[i]);
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                if graph.is_adjacent(a, b) {
                    continue;
                }
                match sepsets.get(&(a.min(b), a.max(b))) {
                    Some((set, p)) if !set.contains(&c) => found.push((*p, a, c, b)),
                    None => found.push((1.0, a, c, b)),
                    _ => {}
                }
            }
        }
    }
    // stable sort keeps canonical order among equal p-values
    found.sort_by(|x, y| y.0.total_cmp(&x.0));
    found.into_iter().map(|(_, a, c, b)| (a, c, b)).collect()
}

/// A triple whose centre already points at one of its ends contradicts an
/// earlier, better-supported collider and is skipped.
fn orient_colliders(graph: &mut MixedGraph, triples: &[(usize, usize, usize)]) -> Result<()> {
    for &(a, c, b) in triples {
        if graph.has_directed(c, a) || graph.has_directed(c, b) {
            continue;
        }
        for end in [a, b] {
            if graph.edge_state(end, c) == EdgeState::Undirected {
                graph.orient(end, c)?;
            }
        }
    }
    Ok(())
}

fn apply_knowledge(graph: &mut MixedGraph, bk: &BackgroundKnowledge) -> Result<()> {
    let names: Vec<String> = graph.nodes().to_vec();
    let directed: Vec<(usize, usize)> = graph.directed_index_edges().collect();
    for (a, b) in directed {
        if !bk.allows(&names[a], &names[b]) {
            if bk.allows(&names[b], &names[a]) {
                graph.orient(b, a)?;
            } else {
                graph.remove_edge(a, b);
            }
        }
    }
    let undirected: Vec<(usize, usize)> = graph.undirected_index_edges().collect();
    for (a, b) in undirected {
        match (bk.allows(&names[a], &names[b]), bk.allows(&names[b], &names[a])) {
            (true, false) => graph.orient(a, b)?,
            (false, true) => graph.orient(b, a)?,
            (false, false) => graph.remove_edge(a, b),
            (true, true) => {}
        }
    }
    for (from, to) in &bk.required {
        let (a, b) = (graph.index_of(from)?, graph.index_of(to)?);
        graph.orient(a, b)?;
    }
    for (from, to) in &bk.required {
        let (a, b) = (graph.index_of(from)?, graph.index_of(to)?);
        if !graph.has_directed(a, b) {
            return Err(Error::Contradiction(format!("required edge {from} -> {to} could not be kept")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalizePolicy {
    Fail,
    Lexicographic,
}

/// Turns a partially directed graph into a DAG, or reports what is left.
pub fn finalize_dag(g: &MixedGraph, policy: FinalizePolicy) -> Result<MixedGraph> {
    let mut out = g.clone();
    if out.undirected_index_edges().next().is_some() {
        match policy {
            FinalizePolicy::Fail => {
                return Err(Error::UnresolvedEdges(
                    out.undirected_edges().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
                ))
            }
            FinalizePolicy::Lexicographic => orient_remaining(&mut out)?,
        }
    }
    out.topological_order()?;
    Ok(out)
}

fn orient_remaining(g: &mut MixedGraph) -> Result<()> {
    loop {
        let mut pending: Vec<(usize, usize)> = g
            .undirected_index_edges()
            .map(|(a, b)| if g.name(a) <= g.name(b) { (a, b) } else { (b, a) })
            .collect();
        pending.sort_by(|x, y| (g.name(x.0), g.name(x.1)).cmp(&(g.name(y.0), g.name(y.1))));
        let Some(&(a, b)) = pending.first() else {
            return Ok(());
        };
        let forward_cycle = g.creates_cycle(a, b);
        let backward_cycle = g.creates_cycle(b, a);
        let choice = match (forward_cycle, backward_cycle) {
            (true, true) => {
                return Err(Error::Graph(format!(
                    "edge {}--{} cannot be oriented without a cycle",
                    g.name(a),
                    g.name(b)
                )))
            }
            (true, false) => (b, a),
            (false, true) => (a, b),
            (false, false) => {
                if new_collider(g, a, b) && !new_collider(g, b, a) {
                    (b, a)
                } else {
                    (a, b)
                }
            }
        };
        g.orient(choice.0, choice.1)?;
        g.meek_closure(|_, _| true);
    }
}

/// Would `a -> b` create an unshielded collider at `b`?
fn new_collider(g: &MixedGraph, a: usize, b: usize) -> bool {
    g.parents(b).into_iter().any(|c| c != a && !g.is_adjacent(c, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerate_all() {
        let all: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 1]);
        assert_eq!(all[5], vec![2, 3]);
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }

    #[test]
    fn quantile_bins_collapse_ties() {
        let (codes, k) = quantile_bins(&[1.0, 1.0, 1.0, 2.0, 3.0], 5);
        assert!(k <= 5);
        assert_eq!(codes[0], codes[1]);
        assert!(codes[4] > codes[0]);
    }

    #[test]
    fn finalize_identity_on_dag() {
        let g = MixedGraph::from_edges(&["a", "b"], &[("a", "b")]).unwrap();
        assert_eq!(finalize_dag(&g, FinalizePolicy::Fail).unwrap(), g);
    }

    #[test]
    fn finalize_fail_names_edge() {
        let mut g = MixedGraph::new(["A", "B"]).unwrap();
        g.add_undirected(0, 1).unwrap();
        match finalize_dag(&g, FinalizePolicy::Fail) {
            Err(Error::UnresolvedEdges(e)) => assert_eq!(e, vec![("A".into(), "B".into())]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn finalize_lexicographic() {
        let mut g = MixedGraph::new(["B", "A"]).unwrap();
        g.add_undirected(0, 1).unwrap();
        let dag = finalize_dag(&g, FinalizePolicy::Lexicographic).unwrap();
        assert!(dag.has_directed(1, 0), "expected A -> B");
    }

    #[test]
    fn finalize_avoids_cycles_and_new_colliders() {
        // B -> C -> A, plus A -- B: A -> B would close a cycle.
        let mut g = MixedGraph::from_edges(&["A", "B", "C"], &[("B", "C"), ("C", "A")]).unwrap();
        g.add_undirected(0, 1).unwrap();
        let dag = finalize_dag(&g, FinalizePolicy::Lexicographic).unwrap();
        assert!(dag.has_directed(1, 0));

        // D -> B, A -- B with A, D non-adjacent: A -> B would add a collider.
        let mut g = MixedGraph::from_edges(&["A", "B", "D"], &[("D", "B")]).unwrap();
        g.add_undirected(0, 1).unwrap();
        let dag = finalize_dag(&g, FinalizePolicy::Lexicographic).unwrap();
        assert!(dag.has_directed(1, 0));
    }
}
