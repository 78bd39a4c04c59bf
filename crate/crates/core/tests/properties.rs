use std::collections::BTreeSet;
use std::sync::OnceLock;

use causal_twin::attribution::{shapley_exhaustive, FnPredictor};
use causal_twin::graph::MixedGraph;
use causal_twin::monitors::{js_divergence, ks_two_sample};
use causal_twin::scm::{fit_scm, FitConfig, ScaleTarget, Scm};
use causal_twin::stats::mix_seed;
use causal_twin::tabular::{split, ColumnSpec, Dataset, SplitSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

/// DAG over NAMES with edges i -> j (i < j) wherever the mask bit is set.
fn dag_from_mask(mask: u16) -> MixedGraph {
    let mut edges = Vec::new();
    let mut bit = 0;
    for i in 0..NAMES.len() {
        for j in i + 1..NAMES.len() {
            if mask >> bit & 1 == 1 {
                edges.push((NAMES[i], NAMES[j]));
            }
            bit += 1;
        }
    }
    MixedGraph::from_edges(&NAMES, &edges).unwrap()
}

fn skeleton(g: &MixedGraph) -> BTreeSet<(usize, usize)> {
    (0..g.n())
        .flat_map(|i| (i + 1..g.n()).map(move |j| (i, j)))
        .filter(|&(i, j)| g.is_adjacent(i, j))
        .collect()
}

fn distribution(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

// x -> y -> t, z -> t, with numeric and categorical nodes.
fn toy_scm() -> &'static Scm {
    static SCM: OnceLock<Scm> = OnceLock::new();
    SCM.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1500;
        let (mut x, mut y, mut z, mut t) = (vec![], vec![], vec![], vec![]);
        for _ in 0..n {
            let xv: f64 = rng.random::<f64>() * 4.0;
            let yv = 0.8 * xv + rng.random::<f64>();
            let zv = f64::from(rng.random::<f64>() < 0.3);
            let tv = f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-(yv - 2.0 + zv)).exp()));
            x.push(xv);
            y.push(yv);
            z.push(zv);
            t.push(tv);
        }
        let specs = vec![
            ColumnSpec::numeric("x", None),
            ColumnSpec::numeric("y", None),
            ColumnSpec::categorical("z", ["0", "1"]),
            ColumnSpec::categorical("t", ["0", "1"]),
        ];
        let ds = Dataset::from_columns(specs, &[x, y, z, t]).unwrap();
        let g = MixedGraph::from_edges(&["x", "y", "z", "t"], &[("x", "y"), ("y", "t"), ("z", "t")]).unwrap();
        fit_scm(&ds, &g, &FitConfig::default()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cpdag_keeps_skeleton_and_colliders(mask in 0u16..(1 << 15)) {
        let dag = dag_from_mask(mask);
        let cpdag = dag.to_cpdag().unwrap();
        prop_assert_eq!(skeleton(&dag), skeleton(&cpdag));
        prop_assert_eq!(dag.v_structures(), cpdag.v_structures());
        let order = dag.topological_order().unwrap();
        let pos = |v: usize| order.iter().position(|&u| u == v).unwrap();
        for (a, b) in dag.directed_index_edges() {
            prop_assert!(pos(a) < pos(b));
        }
    }

    #[test]
    fn shd_is_a_metric_on_dags(m1 in 0u16..(1 << 15), m2 in 0u16..(1 << 15)) {
        let (g, h) = (dag_from_mask(m1), dag_from_mask(m2));
        prop_assert_eq!(g.shd(&g).unwrap(), 0);
        prop_assert_eq!(g.shd(&h).unwrap(), h.shd(&g).unwrap());
        prop_assert_eq!(g.shd(&h).unwrap() == 0, m1 == m2);
    }

    #[test]
    fn js_is_bounded_and_symmetric(raw in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0), 2..12)) {
        let p = distribution(&raw.iter().map(|r| r.0).collect::<Vec<_>>());
        let q = distribution(&raw.iter().map(|r| r.1).collect::<Vec<_>>());
        let js = js_divergence(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&js));
        prop_assert!((js - js_divergence(&q, &p).unwrap()).abs() < 1e-12);
        prop_assert!(js_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ks_statistic_is_a_probability(a in prop::collection::vec(-5.0f64..5.0, 5..60), b in prop::collection::vec(-5.0f64..5.0, 5..60)) {
        let (d, p) = ks_two_sample(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&p));
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap().0, 0.0);
    }

    #[test]
    fn shapley_is_efficient(w in prop::collection::vec(-2.0f64..2.0, 4), x in prop::collection::vec(-3.0f64..3.0, 4), bg in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..5)) {
        let wc = w.clone();
        let model = FnPredictor { n: 4, f: move |r: &[f64]| wc[0] * r[0] + wc[1] * r[1] * r[2] + wc[2] * r[3].sin() + wc[3] * r[0] * r[3] };
        let phi = shapley_exhaustive(&model, &bg, &x).unwrap();
        let base = bg.iter().map(|r| (model.f)(r)).sum::<f64>() / bg.len() as f64;
        prop_assert!((phi.iter().sum::<f64>() - ((model.f)(&x) - base)).abs() < 1e-9);
    }

    #[test]
    fn scaling_only_moves_descendants(delta in -1.0f64..1.0, seed in any::<u64>()) {
        let scm = toy_scm();
        let drifted = scm.intervene_scale(&[ScaleTarget::new("t", "y", delta)]).unwrap();
        let (a, b) = (scm.sample(200, seed).unwrap(), drifted.sample(200, seed).unwrap());
        for name in ["x", "y", "z"] {
            prop_assert_eq!(a.column_by_name(name).unwrap(), b.column_by_name(name).unwrap());
        }
        let same = scm.intervene_scale(&[ScaleTarget::new("t", "y", 0.0)]).unwrap();
        let c = same.sample(200, seed).unwrap();
        prop_assert_eq!(c.values(), a.values());
    }

    #[test]
    fn stratified_split_partitions_rows(n in 20usize..300, frac in 0.2f64..0.9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<f64>() < 0.4)).collect();
        let id: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ds = Dataset::from_columns(vec![ColumnSpec::numeric("id", None), ColumnSpec::categorical("y", ["0", "1"])], &[id, y]).unwrap();
        let spec = SplitSpec { train_fraction: frac, seed, stratify_on: Some("y".into()) };
        let (tr, va) = split(&ds, &spec).unwrap();
        prop_assert_eq!(tr.n_rows() + va.n_rows(), n);
        let mut ids: Vec<f64> = tr.column(0).into_iter().chain(va.column(0)).collect();
        ids.sort_by(f64::total_cmp);
        prop_assert_eq!(ids, (0..n).map(|i| i as f64).collect::<Vec<_>>());
        let (tr2, _) = split(&ds, &spec).unwrap();
        prop_assert_eq!(tr.values(), tr2.values());
    }
}
