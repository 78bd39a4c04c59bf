//! Mixed (partially directed) graphs, background knowledge and graph metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// State of the edge between an ordered pair `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeState {
    None,
    /// `a -> b`
    Forward,
    /// `b -> a`
    Backward,
    /// `a -- b`
    Undirected,
}

/// Graph over named nodes with a directed and an undirected edge set. Node
/// indices are positions in `nodes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GraphFile", try_from = "GraphFile")]
pub struct MixedGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    directed: BTreeSet<(usize, usize)>,
    /// Stored with the smaller index first.
    undirected: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<String>,
    #[serde(default)]
    directed: Vec<[String; 2]>,
    #[serde(default)]
    undirected: Vec<[String; 2]>,
}

impl From<MixedGraph> for GraphFile {
    fn from(g: MixedGraph) -> Self {
        GraphFile {
            directed: g.directed_edges().map(|(a, b)| [a.to_string(), b.to_string()]).collect(),
            undirected: g.undirected_edges().map(|(a, b)| [a.to_string(), b.to_string()]).collect(),
            nodes: g.nodes,
        }
    }
}

impl TryFrom<GraphFile> for MixedGraph {
    type Error = Error;

    fn try_from(f: GraphFile) -> Result<Self> {
        let mut g = MixedGraph::new(f.nodes)?;
        for [a, b] in &f.directed {
            g.add_directed(g.index_of(a)?, g.index_of(b)?)?;
        }
        for [a, b] in &f.undirected {
            g.add_undirected(g.index_of(a)?, g.index_of(b)?)?;
        }
        Ok(g)
    }
}

impl MixedGraph {
    pub fn new<S: Into<String>>(nodes: impl IntoIterator<Item = S>) -> Result<Self> {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Graph(format!("duplicate node `{n}`")));
            }
        }
        Ok(MixedGraph {
            nodes,
            index,
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
        })
    }

    /// Builds a DAG from `(from, to)` name pairs.
    pub fn from_edges<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Self> {
        let mut g = MixedGraph::new(nodes.iter().map(|s| s.as_ref().to_string()))?;
        for (a, b) in edges {
            let (a, b) = (g.index_of(a.as_ref())?, g.index_of(b.as_ref())?);
            g.add_directed(a, b)?;
        }
        Ok(g)
    }

    /// Complete undirected graph over `nodes`.
    pub fn complete<S: Into<String>>(nodes: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut g = MixedGraph::new(nodes)?;
        for a in 0..g.n() {
            for b in a + 1..g.n() {
                g.undirected.insert((a, b));
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn name(&self, i: usize) -> &str {
        &self.nodes[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn edge_state(&self, a: usize, b: usize) -> EdgeState {
        if self.directed.contains(&(a, b)) {
            EdgeState::Forward
        } else if self.directed.contains(&(b, a)) {
            EdgeState::Backward
        } else if self.undirected.contains(&(a.min(b), a.max(b))) {
            EdgeState::Undirected
        } else {
            EdgeState::None
        }
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.edge_state(a, b) != EdgeState::None
    }

    pub fn has_directed(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&(a, b))
    }

    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&(a.min(b), a.max(b)))
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        if a >= self.n() || b >= self.n() {
            return Err(Error::Graph(format!("node index out of range ({a}, {b})")));
        }
        if a == b {
            return Err(Error::Graph(format!("self-loop on `{}`", self.nodes[a])));
        }
        Ok(())
    }

    pub fn add_directed(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_pair(a, b)?;
        if self.is_adjacent(a, b) {
            return Err(Error::Graph(format!(
                "`{}` and `{}` are already connected",
                self.nodes[a], self.nodes[b]
            )));
        }
        self.directed.insert((a, b));
        Ok(())
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_pair(a, b)?;
        if self.is_adjacent(a, b) {
            return Err(Error::Graph(format!(
                "`{}` and `{}` are already connected",
                self.nodes[a], self.nodes[b]
            )));
        }
        self.undirected.insert((a.min(b), a.max(b)));
        Ok(())
    }

    /// Removes whatever edge joins `a` and `b`.
    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.directed.remove(&(a, b));
        self.directed.remove(&(b, a));
        self.undirected.remove(&(a.min(b), a.max(b)));
    }

    /// Replaces the edge between `a` and `b` (if any) with `a -> b`.
    pub fn orient(&mut self, a: usize, b: usize) -> Result<()> {
        self.remove_edge(a, b);
        self.add_directed(a, b)
    }

    pub fn parents(&self, i: usize) -> Vec<usize> {
        self.directed.iter().filter(|&&(_, b)| b == i).map(|&(a, _)| a).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        self.directed.iter().filter(|&&(a, _)| a == i).map(|&(_, b)| b).collect()
    }

    pub fn undirected_neighbors(&self, i: usize) -> Vec<usize> {
        self.undirected
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// All nodes adjacent to `i` through any edge, ascending.
    pub fn adjacent(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| j != i && self.is_adjacent(i, j)).collect()
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.directed.iter().map(|&(a, b)| (self.nodes[a].as_str(), self.nodes[b].as_str()))
    }

    pub fn undirected_edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.undirected.iter().map(|&(a, b)| (self.nodes[a].as_str(), self.nodes[b].as_str()))
    }

    pub fn directed_index_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    pub fn undirected_index_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.undirected.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    pub fn is_dag(&self) -> bool {
        self.undirected.is_empty() && self.topological_indices().is_ok()
    }

    /// Kahn's algorithm over the directed part, ready nodes taken in
    /// lexicographic name order.
    fn topological_indices(&self) -> Result<Vec<usize>> {
        let mut indegree = vec![0usize; self.n()];
        for &(_, b) in &self.directed {
            indegree[b] += 1;
        }
        let mut ready: BTreeSet<(&str, usize)> = (0..self.n())
            .filter(|&i| indegree[i] == 0)
            .map(|i| (self.nodes[i].as_str(), i))
            .collect();
        let mut order = Vec::with_capacity(self.n());
        while let Some(&(name, i)) = ready.iter().next() {
            ready.remove(&(name, i));
            order.push(i);
            for c in self.children(i) {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert((self.nodes[c].as_str(), c));
                }
            }
        }
        if order.len() != self.n() {
            let stuck = (0..self.n())
                .filter(|&i| indegree[i] > 0)
                .map(|i| self.nodes[i].clone())
                .collect();
            return Err(Error::Cycle(stuck));
        }
        Ok(order)
    }

    /// Deterministic topological order (node indices); ties broken by name.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        if !self.undirected.is_empty() {
            return Err(Error::UnresolvedEdges(
                self.undirected_edges().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            ));
        }
        self.topological_indices()
    }

    pub fn topological_names(&self) -> Result<Vec<String>> {
        Ok(self.topological_order()?.into_iter().map(|i| self.nodes[i].clone()).collect())
    }

    /// Would adding `a -> b` close a directed cycle?
    pub fn creates_cycle(&self, a: usize, b: usize) -> bool {
        self.has_directed_path(b, a)
    }

    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        self.directed_distance(from, to).is_some()
    }

    fn directed_distance(&self, from: usize, to: usize) -> Option<usize> {
        if from == to {
            return Some(0);
        }
        let mut dist = vec![usize::MAX; self.n()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for v in self.children(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    if v == to {
                        return Some(dist[v]);
                    }
                    queue.push_back(v);
                }
            }
        }
        None
    }

    /// Length of the shortest directed path `from -> ... -> to`; `None`
    /// stands for an infinite distance.
    pub fn causal_distance(&self, from: &str, to: &str) -> Result<Option<usize>> {
        let (a, b) = (self.index_of(from)?, self.index_of(to)?);
        if !self.undirected.is_empty() {
            return Err(Error::Graph("causal distance needs a fully directed graph".into()));
        }
        Ok(self.directed_distance(a, b))
    }

    /// Nodes reachable from `i` through directed edges, excluding `i`.
    pub fn descendants(&self, i: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = self.children(i);
        while let Some(u) = stack.pop() {
            if seen.insert(u) {
                stack.extend(self.children(u));
            }
        }
        seen
    }

    /// Structural Hamming distance: per unordered pair, one unit for any
    /// difference in edge presence, direction or directedness.
    pub fn shd(&self, other: &MixedGraph) -> Result<usize> {
        let mine: BTreeSet<&String> = self.nodes.iter().collect();
        let theirs: BTreeSet<&String> = other.nodes.iter().collect();
        if mine != theirs {
            return Err(Error::Graph("structural Hamming distance needs identical node sets".into()));
        }
        let mut count = 0;
        for a in 0..self.n() {
            for b in a + 1..self.n() {
                let (oa, ob) = (other.index[&self.nodes[a]], other.index[&self.nodes[b]]);
                if self.edge_state(a, b) != other.edge_state(oa, ob) {
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    /// Unshielded colliders `a -> c <- b` of the directed part, with `a < b`.
    pub fn v_structures(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for c in 0..self.n() {
            let pa = self.parents(c);
            for (x, &a) in pa.iter().enumerate() {
                for &b in &pa[x + 1..] {
                    if !self.is_adjacent(a, b) {
                        out.push((a.min(b), c, a.max(b)));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Markov-equivalence class representative (CPDAG) of a DAG: keeps the
    /// v-structures and every edge compelled by them.
    pub fn to_cpdag(&self) -> Result<MixedGraph> {
        self.topological_order()?;
        let mut g = MixedGraph::new(self.nodes.clone())?;
        for &(a, b) in &self.directed {
            g.undirected.insert((a.min(b), a.max(b)));
        }
        for (a, c, b) in self.v_structures() {
            g.orient(a, c)?;
            g.orient(b, c)?;
        }
        g.meek_closure(|_, _| true);
        Ok(g)
    }

    /// Applies Meek's orientation rules R1–R4 until nothing changes. An
    /// orientation `a -> b` is only made when `allowed(a, b)` holds.
    pub fn meek_closure(&mut self, allowed: impl Fn(usize, usize) -> bool) -> usize {
        let mut oriented = 0;
        loop {
            let mut changed = false;
            let candidates: Vec<(usize, usize)> = self.undirected.iter().copied().collect();
            for (x, y) in candidates {
                for (a, b) in [(x, y), (y, x)] {
                    if !self.has_undirected(a, b) || !allowed(a, b) {
                        continue;
                    }
                    if self.meek_applies(a, b) && !self.creates_cycle(a, b) {
                        self.undirected.remove(&(a.min(b), a.max(b)));
                        self.directed.insert((a, b));
                        oriented += 1;
                        changed = true;
                    }
                }
            }
            if !changed {
                return oriented;
            }
        }
    }

    fn meek_applies(&self, a: usize, b: usize) -> bool {
        // R1: c -> a -- b, c and b not adjacent.
        if self.parents(a).into_iter().any(|c| c != b && !self.is_adjacent(c, b)) {
            return true;
        }
        // R2: a -> c -> b.
        if self.children(a).into_iter().any(|c| self.has_directed(c, b)) {
            return true;
        }
        // R3: a -- c -> b and a -- d -> b with c, d not adjacent.
        let und = self.undirected_neighbors(a);
        let into_b: Vec<usize> = und.iter().copied().filter(|&c| c != b && self.has_directed(c, b)).collect();
        for (i, &c) in into_b.iter().enumerate() {
            if into_b[i + 1..].iter().any(|&d| !self.is_adjacent(c, d)) {
                return true;
            }
        }
        // R4: a -- d, d -> c -> b, a adjacent to c, d and b not adjacent.
        for d in und.iter().copied().filter(|&d| d != b && !self.is_adjacent(d, b)) {
            for c in self.children(d) {
                if c != a && self.has_directed(c, b) && self.is_adjacent(a, c) {
                    return true;
                }
            }
        }
        false
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph causal {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for (a, b) in self.directed_edges() {
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
        }
        for (a, b) in self.undirected_edges() {
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\" [dir=none];");
        }
        out.push_str("}\n");
        out
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&GraphFile::from(self.clone())).map_err(|e| Error::Parse {
            what: "graph file",
            message: e.to_string(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GraphFile = toml::from_str(text).map_err(|e| Error::Parse {
            what: "graph file",
            message: e.to_string(),
        })?;
        MixedGraph::try_from(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Domain constraints injected into discovery.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundKnowledge {
    /// Nodes that may not receive edges.
    #[serde(default)]
    pub exogenous: BTreeSet<String>,
    /// Nodes that may not emit edges.
    #[serde(default)]
    pub sinks: BTreeSet<String>,
    #[serde(default)]
    pub forbidden: BTreeSet<(String, String)>,
    #[serde(default)]
    pub required: BTreeSet<(String, String)>,
}

impl BackgroundKnowledge {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "constraint file",
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "constraint file",
            message: e.to_string(),
        })
    }

    fn mentioned(&self) -> impl Iterator<Item = &String> {
        self.exogenous
            .iter()
            .chain(&self.sinks)
            .chain(self.forbidden.iter().flat_map(|(a, b)| [a, b]))
            .chain(self.required.iter().flat_map(|(a, b)| [a, b]))
    }

    /// Checks internal consistency and that every mentioned node exists.
    pub fn validate(&self, nodes: &[String]) -> Result<()> {
        if let Some(missing) = self.mentioned().find(|n| !nodes.contains(n)) {
            return Err(Error::UnknownNode(missing.clone()));
        }
        for (a, b) in &self.required {
            if self.forbidden.contains(&(a.clone(), b.clone())) {
                return Err(Error::Contradiction(format!("{a} -> {b} is both required and forbidden")));
            }
            if self.exogenous.contains(b) {
                return Err(Error::Contradiction(format!(
                    "required edge {a} -> {b} points into exogenous `{b}`"
                )));
            }
            if self.sinks.contains(a) {
                return Err(Error::Contradiction(format!("required edge {a} -> {b} leaves sink `{a}`")));
            }
            if self.required.contains(&(b.clone(), a.clone())) {
                return Err(Error::Contradiction(format!("{a} -> {b} is required in both directions")));
            }
        }
        Ok(())
    }

    /// May an edge `from -> to` exist?
    pub fn allows(&self, from: &str, to: &str) -> bool {
        !(self.exogenous.contains(to)
            || self.sinks.contains(from)
            || self.forbidden.contains(&(from.to_string(), to.to_string())))
    }

    pub fn requires(&self, from: &str, to: &str) -> bool {
        self.required.contains(&(from.to_string(), to.to_string()))
    }
}

/// Counts edges by kind; handy for summaries.
pub fn edge_summary(g: &MixedGraph) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([("directed", g.directed.len()), ("undirected", g.undirected.len())])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> MixedGraph {
        MixedGraph::from_edges(&["X", "Y", "Z"], &[("X", "Y"), ("Y", "Z")]).unwrap()
    }

    #[test]
    fn topological_chain_and_ties() {
        assert_eq!(chain().topological_names().unwrap(), ["X", "Y", "Z"]);
        let g = MixedGraph::new(["c", "a", "b"]).unwrap();
        assert_eq!(g.topological_names().unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn topological_errors() {
        let g = MixedGraph::from_edges(&["a", "b"], &[("a", "b")]).unwrap();
        let mut cyc = g.clone();
        cyc.directed.insert((1, 0));
        assert!(matches!(cyc.topological_order(), Err(Error::Cycle(_))));
        let mut und = MixedGraph::new(["a", "b"]).unwrap();
        und.add_undirected(0, 1).unwrap();
        assert!(matches!(und.topological_order(), Err(Error::UnresolvedEdges(_))));
    }

    #[test]
    fn structural_invariants() {
        let mut g = MixedGraph::new(["a", "b"]).unwrap();
        assert!(g.add_directed(0, 0).is_err());
        g.add_directed(0, 1).unwrap();
        assert!(g.add_undirected(0, 1).is_err());
        assert!(g.add_directed(1, 0).is_err());
        assert!(MixedGraph::new(["a", "a"]).is_err());
    }

    #[test]
    fn distances() {
        let g = chain();
        assert_eq!(g.causal_distance("X", "Y").unwrap(), Some(1));
        assert_eq!(g.causal_distance("X", "Z").unwrap(), Some(2));
        assert_eq!(g.causal_distance("Z", "X").unwrap(), None);
        assert_eq!(g.causal_distance("X", "X").unwrap(), Some(0));
        assert!(g.causal_distance("X", "Q").is_err());
    }

    #[test]
    fn shd_basics() {
        let a = chain();
        assert_eq!(a.shd(&a).unwrap(), 0);
        let flipped = MixedGraph::from_edges(&["X", "Y", "Z"], &[("Y", "X"), ("Y", "Z")]).unwrap();
        assert_eq!(a.shd(&flipped).unwrap(), 1);
        assert_eq!(flipped.shd(&a).unwrap(), 1);
        let other = MixedGraph::new(["X", "Y"]).unwrap();
        assert!(a.shd(&other).is_err());
    }

    #[test]
    fn shd_ignores_node_order() {
        let a = chain();
        let b = MixedGraph::from_edges(&["Z", "Y", "X"], &[("X", "Y"), ("Y", "Z")]).unwrap();
        assert_eq!(a.shd(&b).unwrap(), 0);
    }

    #[test]
    fn cpdag_of_collider_and_chain() {
        let collider = MixedGraph::from_edges(&["X", "Y", "Z"], &[("X", "Z"), ("Y", "Z")]).unwrap();
        assert_eq!(collider.to_cpdag().unwrap(), collider);
        let cp = chain().to_cpdag().unwrap();
        assert_eq!(cp.undirected_edges().count(), 2);
        // Collider followed by a chain: the chain edge is compelled by R1.
        let g = MixedGraph::from_edges(&["A", "B", "C", "D"], &[("A", "C"), ("B", "C"), ("C", "D")]).unwrap();
        assert_eq!(g.to_cpdag().unwrap(), g);
    }

    #[test]
    fn graph_file_round_trip() {
        let mut g = chain();
        g.add_undirected(0, 2).unwrap();
        let text = g.to_toml_string().unwrap();
        assert_eq!(MixedGraph::from_toml_str(&text).unwrap(), g);
        assert!(g.to_dot().contains("\"X\" -> \"Y\""));
        assert!(g.to_dot().contains("dir=none"));
    }

    #[test]
    fn background_knowledge_checks() {
        let nodes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut bk = BackgroundKnowledge::default();
        bk.exogenous.insert("a".into());
        bk.sinks.insert("c".into());
        assert!(bk.validate(&nodes).is_ok());
        assert!(!bk.allows("b", "a"));
        assert!(!bk.allows("c", "b"));
        assert!(bk.allows("a", "b"));

        let mut bad = bk.clone();
        bad.required.insert(("b".into(), "a".into()));
        assert!(matches!(bad.validate(&nodes), Err(Error::Contradiction(_))));
        let mut bad = bk.clone();
        bad.required.insert(("a".into(), "b".into()));
        bad.forbidden.insert(("a".into(), "b".into()));
        assert!(bad.validate(&nodes).is_err());
        let mut unknown = bk;
        unknown.sinks.insert("zz".into());
        assert!(matches!(unknown.validate(&nodes), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn constraint_file_parses() {
        let bk = BackgroundKnowledge::from_toml_str(
            r#"
            exogenous = ["Age", "Gender"]
            sinks = ["treatment"]
            forbidden = [["treatment", "Age"]]
            required = [["Age", "treatment"]]
            "#,
        )
        .unwrap();
        assert!(bk.exogenous.contains("Gender"));
        assert!(bk.requires("Age", "treatment"));
        assert!(!bk.allows("treatment", "Age"));
    }
}
