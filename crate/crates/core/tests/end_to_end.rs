use causal_twin::classifier::{train, Classifier, ClassifierKind, Hyperparameters};
use causal_twin::discovery::{finalize_dag, pc_discover, FinalizePolicy, PcConfig};
use causal_twin::drift::{bootstrap_breaking_point, breaking_point, run_scenario, BreakingRule, DriftScenario};
use causal_twin::graph::{BackgroundKnowledge, MixedGraph};
use causal_twin::scm::{fit_scm, FitConfig, Scm};
use causal_twin::tabular::{ColumnSpec, Dataset};
use causal_twin::validation::{validate_twin, ValidationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// A -> C <- B, C -> D, D -> Y, A -> Y
fn toy(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); 5];
    let bern = |rng: &mut ChaCha8Rng, p: f64| if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    for _ in 0..n {
        let a = bern(&mut rng, 0.4);
        let b = bern(&mut rng, 0.5);
        let c = bern(&mut rng, 0.1 + 0.4 * a + 0.4 * b);
        let d = bern(&mut rng, 0.2 + 0.6 * c);
        let y = bern(&mut rng, 0.05 + 0.45 * d + 0.45 * a);
        for (col, v) in cols.iter_mut().zip([a, b, c, d, y]) {
            col.push(v);
        }
    }
    let specs = ["A", "B", "C", "D", "Y"].map(|s| ColumnSpec::categorical(s, ["0", "1"])).to_vec();
    Dataset::from_columns(specs, &cols).unwrap()
}

fn truth() -> MixedGraph {
    MixedGraph::from_edges(
        &["A", "B", "C", "D", "Y"],
        &[("A", "C"), ("B", "C"), ("C", "D"), ("D", "Y"), ("A", "Y")],
    )
    .unwrap()
}

fn scenario() -> DriftScenario {
    DriftScenario::from_toml_str(
        r#"
name = "weaken"
k_steps = 10
baseline_n = 1000
step_n = 100
final_n = 1000
step_eval_n = 400
window = 200

[[targets]]
child = "Y"
parent = "D"
delta_max = -1.0

[threshold]
metric = "precision"
value = 0.7
"#,
    )
    .unwrap()
}

#[test]
fn pc_recovers_the_toy_graph() {
    let ds = toy(4000, 1);
    let cpdag = pc_discover(&ds, &BackgroundKnowledge::default(), &PcConfig::default()).unwrap();
    assert_eq!(cpdag.shd(&truth().to_cpdag().unwrap()).unwrap(), 0, "{}", cpdag.to_dot());
    let dag = finalize_dag(&cpdag, FinalizePolicy::Fail).unwrap();
    assert_eq!(dag.shd(&truth()).unwrap(), 0);
}

#[test]
fn artifacts_round_trip_through_files() {
    let ds = toy(2000, 2);
    let scm = fit_scm(&ds, &truth(), &FitConfig::default()).unwrap();
    let model = train(&ds, "Y", ClassifierKind::Gbt, &Hyperparameters::defaults_for(ClassifierKind::Gbt), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (sp, mp) = (dir.path().join("scm.json"), dir.path().join("model.json"));
    scm.save(&sp).unwrap();
    model.save(&mp).unwrap();
    let (scm2, model2) = (Scm::load(&sp).unwrap(), Classifier::load(&mp).unwrap());
    assert_eq!(scm, scm2);
    let gen = scm2.sample(500, 9).unwrap();
    assert_eq!(gen.values(), scm.sample(500, 9).unwrap().values());
    assert_eq!(model.predict_proba(&gen).unwrap(), model2.predict_proba(&gen).unwrap());
}

#[test]
fn twin_of_its_own_data_is_accepted() {
    let ds = toy(3000, 4);
    // Probit-scale noise so threshold sampling matches the fitted logits.
    let fc = FitConfig {
        noise_sigma: 1.702,
        ..FitConfig::default()
    };
    let scm = fit_scm(&ds, &truth(), &fc).unwrap();
    let model = train(&ds, "Y", ClassifierKind::RandomForest, &Hyperparameters::defaults_for(ClassifierKind::RandomForest), 5).unwrap();
    let cfg = ValidationConfig {
        n_mc: 20_000,
        ..ValidationConfig::default()
    };
    let report = validate_twin(&scm, &ds, &toy(1000, 6), &[("rf".into(), &model)], &cfg, 7).unwrap();
    assert!(report.accepted, "{:?}", report.rows().iter().filter(|r| !r.pass).collect::<Vec<_>>());
}

#[test]
fn weakening_the_driver_breaks_precision_reproducibly() {
    let ds = toy(3000, 8);
    let scm = fit_scm(&ds, &truth(), &FitConfig::default()).unwrap();
    let model = train(&ds, "Y", ClassifierKind::Gbt, &Hyperparameters::defaults_for(ClassifierKind::Gbt), 9).unwrap();
    let sc = scenario();
    let curve = run_scenario(&scm, &model, &sc, 10).unwrap();
    let first = curve.steps.first().unwrap().metrics.precision;
    let last = curve.steps.last().unwrap().metrics.precision;
    assert!(last < first - 0.05, "precision {first} -> {last}");
    let bp = breaking_point(&curve, &sc.threshold, BreakingRule::ConsecutiveSteps(3)).unwrap();
    if let Some(d) = bp.delta_crit {
        assert!((-1.0..=0.0).contains(&d));
    }
    let a = bootstrap_breaking_point(&scm, &model, &sc, 4, 11, 3).unwrap();
    let b = bootstrap_breaking_point(&scm, &model, &sc, 4, 11, 3).unwrap();
    assert_eq!(a, b);
}
