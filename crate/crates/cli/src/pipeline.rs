use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use causal_twin::attribution::{per_feature_drift_sweep, rank_features};
use causal_twin::classifier::{self, Classifier};
use causal_twin::discovery::{finalize_dag, pc_discover_with_report};
use causal_twin::drift::{
    bootstrap_breaking_point, breaking_point, noise_vs_causal, run_scenario, step_datasets, BreakingRule, DriftScenario,
};
use causal_twin::graph::{BackgroundKnowledge, MixedGraph};
use causal_twin::monitors::monitor_stream;
use causal_twin::scm::{fit_scm, Scm};
use causal_twin::stats::mix_seed;
use causal_twin::tabular::{ingest_csv, split, Dataset, Schema, SplitSpec};
use causal_twin::validation::validate_twin;
use log::info;

use crate::config::{kind_label, FitData, PipelineConfig};
use crate::errors::{ConfigError, GateFailure};
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::output::Artifacts;
use crate::plot;
use crate::tables;

/// Seed tags per stage; every stage seed is derived from the one global seed.
pub mod tag {
    pub const FIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const VALIDATE: u64 = 3;
    pub const SIMULATE: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const REFERENCE: u64 = 6;
    pub const RANK: u64 = 7;
    pub const SWEEP: u64 = 8;
}

/// Loads a TOML-backed input, mapping failures to configuration errors.
pub fn load_input<T>(what: &str, path: &Path, f: impl FnOnce(&Path) -> causal_twin::Result<T>) -> Result<T> {
    if !path.exists() {
        return Err(ConfigError(format!("{what} file not found: {}", path.display())).into());
    }
    f(path).with_context(|| format!("cannot load {what} {}", path.display()))
}

struct State {
    data: Dataset,
    train: Dataset,
    valid: Dataset,
    graph: Option<MixedGraph>,
    scm: Option<Scm>,
    models: BTreeMap<&'static str, Classifier>,
    scenario: Option<DriftScenario>,
}

pub fn run(cfg: &PipelineConfig, config_bytes: &[u8], command: Vec<String>) -> Result<RunManifest> {
    let mut manifest = ManifestBuilder::new(command, config_bytes);
    manifest.seed("global", cfg.seed);
    manifest.seed("split", cfg.split.seed);
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let manifest_path = cfg.out_dir.join("manifest.json");
    let mut art = Artifacts::default();
    let result = run_stages(cfg, &mut manifest, &mut art);
    manifest.outputs(art.digests());
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed: {e:#}"),
    };
    let m = manifest.finish(&status);
    m.write(&manifest_path)?;
    result.map(|()| m)
}

fn out(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn run_stages(cfg: &PipelineConfig, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let schema = load_input("schema", &cfg.data.schema, Schema::load)?;
    manifest.input(&cfg.data.schema)?;
    let data = load_input("data", &cfg.data.csv, |p| ingest_csv(p, &schema))?;
    manifest.input(&cfg.data.csv)?;
    data.column_index(&cfg.data.target)
        .map_err(|_| ConfigError(format!("target `{}` is not a column of the data", cfg.data.target)))?;
    let (train_rows, valid_rows) = split(
        &data,
        &SplitSpec {
            train_fraction: cfg.split.train_fraction,
            seed: cfg.split.seed,
            stratify_on: cfg.split.stratify.then(|| cfg.data.target.clone()),
        },
    )?;
    let mut st = State {
        data,
        train: train_rows,
        valid: valid_rows,
        graph: None,
        scm: None,
        models: BTreeMap::new(),
        scenario: None,
    };
    if let Some(p) = &cfg.simulate.scenario {
        st.scenario = Some(load_input("scenario", p, DriftScenario::load)?);
        manifest.input(p)?;
    }
    let n = cfg.stage_count()?;
    for stage in &crate::config::STAGES[..n] {
        info!("stage {stage}");
        let r = match *stage {
            "discover" => discover(cfg, &mut st, manifest, art),
            "fit" => fit(cfg, &mut st, manifest, art),
            "train" => train(cfg, &mut st, manifest, art),
            "validate" => validate(cfg, &mut st, manifest, art),
            "simulate" => simulate(cfg, &mut st, manifest, art),
            "bootstrap" => bootstrap(cfg, &mut st, manifest, art),
            "monitor" => monitor(cfg, &mut st, manifest, art),
            "attribute" => attribute(cfg, &mut st, manifest, art),
            _ => unreachable!(),
        };
        r.with_context(|| format!("stage `{stage}` failed"))?;
    }
    Ok(())
}

fn discover(cfg: &PipelineConfig, st: &mut State, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let d = &cfg.discover;
    let bk = match &d.constraints {
        Some(p) => {
            manifest.input(p)?;
            load_input("constraints", p, BackgroundKnowledge::load)?
        }
        None => BackgroundKnowledge::default(),
    };
    let (cpdag, report) = pc_discover_with_report(&st.data, &bk, &d.pc)?;
    let dag = finalize_dag(&cpdag, d.policy)?;
    let mut rows = vec![
        ("nodes", cpdag.n().to_string()),
        ("edges", cpdag.n_edges().to_string()),
        ("undirected_in_cpdag", cpdag.undirected_edges().count().to_string()),
        ("tests_run", report.tests_run.to_string()),
        ("degenerate_tests", report.degenerate_tests.to_string()),
    ];
    if let Some(p) = &d.truth {
        manifest.input(p)?;
        let truth = load_input("reference graph", p, MixedGraph::load)?;
        rows.push(("shd_cpdag_vs_truth_cpdag", cpdag.shd(&truth.to_cpdag()?)?.to_string()));
        rows.push(("shd_dag_vs_truth", dag.shd(&truth)?.to_string()));
    }
    art.write(&out(cfg, "cpdag.toml"), cpdag.to_toml_string()?.as_bytes())?;
    art.write(&out(cfg, "graph.toml"), dag.to_toml_string()?.as_bytes())?;
    art.write_csv(&out(cfg, "structure.csv"), &tables::key_values(&rows))?;
    art.commit()?;
    st.graph = Some(dag);
    Ok(())
}

fn fit(cfg: &PipelineConfig, st: &mut State, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let graph = match (&cfg.fit.graph, &st.graph) {
        (Some(p), _) => {
            manifest.input(p)?;
            load_input("graph", p, MixedGraph::load)?
        }
        (None, Some(g)) => g.clone(),
        (None, None) => return Err(ConfigError("fit needs fit.graph or the discover stage".into()).into()),
    };
    let mut fc = cfg.fit.config.clone();
    fc.seed = mix_seed(cfg.seed, tag::FIT);
    manifest.seed("fit", fc.seed);
    let data = match cfg.fit.data {
        FitData::All => &st.data,
        FitData::Train => &st.train,
    };
    let scm = fit_scm(data, &graph, &fc)?;
    art.write(&out(cfg, "scm.json"), scm.to_string_versioned()?.as_bytes())?;
    art.write_csv(&out(cfg, "fit_diagnostics.csv"), &tables::fit_diagnostics(&scm))?;
    art.commit()?;
    st.scm = Some(scm);
    Ok(())
}

fn train(cfg: &PipelineConfig, st: &mut State, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let seed = mix_seed(cfg.seed, tag::TRAIN);
    manifest.seed("train", seed);
    let mut metrics = Vec::new();
    for &kind in &cfg.train.kinds {
        let label = kind_label(kind);
        let hp = cfg.train.hyperparameters_for(kind);
        let m = classifier::train(&st.train, &cfg.data.target, kind, &hp, seed)?;
        metrics.push((label.to_string(), "train".to_string(), m.evaluate(&st.train)?));
        metrics.push((label.to_string(), "valid".to_string(), m.evaluate(&st.valid)?));
        art.write(&out(cfg, &format!("model_{label}.json")), m.to_string_versioned()?.as_bytes())?;
        st.models.insert(label, m);
    }
    art.write_csv(&out(cfg, "model_metrics.csv"), &tables::model_metrics(&metrics))?;
    art.commit()
}

fn primary<'a>(cfg: &PipelineConfig, st: &'a State) -> Result<&'a Classifier> {
    st.models
        .get(kind_label(cfg.train.primary))
        .ok_or_else(|| ConfigError("no trained primary model".into()).into())
}

fn need_scm(st: &State) -> Result<&Scm> {
    st.scm.as_ref().ok_or_else(|| ConfigError("no fitted SCM".into()).into())
}

fn need_scenario(st: &State) -> Result<&DriftScenario> {
    st.scenario
        .as_ref()
        .ok_or_else(|| ConfigError("this stage needs simulate.scenario".into()).into())
}

fn validate(cfg: &PipelineConfig, st: &mut State, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let seed = mix_seed(cfg.seed, tag::VALIDATE);
    manifest.seed("validate", seed);
    let scm = need_scm(st)?;
    let models: Vec<(String, &Classifier)> = st.models.iter().map(|(k, m)| (k.to_string(), m)).collect();
    let report = validate_twin(scm, &st.data, &st.valid, &models, &cfg.validate.config, seed)?;
    art.write_csv(&out(cfg, "validation.csv"), &tables::validation(&report))?;
    art.commit()?;
    if !report.accepted && cfg.validate.gate {
        let failed: Vec<String> = report.rows().into_iter().filter(|r| !r.pass).map(|r| r.item).collect();
        return Err(GateFailure(failed.join(", ")).into());
    }
    Ok(())
}

fn simulate(cfg: &PipelineConfig, st: &mut State, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let seed = mix_seed(cfg.seed, tag::SIMULATE);
    manifest.seed("simulate", seed);
    let (scm, model, sc) = (need_scm(st)?, primary(cfg, st)?, need_scenario(st)?);
    let curve = run_scenario(scm, model, sc, seed)?;
    let estimates = [
        breaking_point(&curve, &sc.threshold, BreakingRule::ConsecutiveSteps(cfg.bootstrap.consecutive))?,
        breaking_point(&curve, &sc.threshold, BreakingRule::RwaConsistent)?,
    ];
    let curve_table = tables::curve(&curve);
    art.write_csv(&out(cfg, "curve.csv"), &curve_table)?;
    art.write_csv(&out(cfg, "steps.csv"), &tables::steps(&curve.steps))?;
    art.write_csv(&out(cfg, "breaking_points.csv"), &tables::breaking_points(&sc.threshold, &estimates))?;
    let series = plot::read_curve(&curve_table.to_csv_bytes()?, &[sc.threshold.metric.clone()])?;
    art.write_csv(&out(cfg, "curve_plot.csv"), &plot::long_format(&series))?;
    art.write(&out(cfg, "curve.svg"), plot::svg(&series, Some(sc.threshold.value)).as_bytes())?;
    if let Some(feature) = &cfg.simulate.noise_feature {
        let n = cfg.simulate.noise_n.unwrap_or(sc.step_eval_n);
        let records = noise_vs_causal(scm, model, sc, feature, n, seed)?;
        art.write_csv(&out(cfg, "noise.csv"), &tables::noise(&records))?;
    }
    art.commit()
}

fn bootstrap(cfg: &PipelineConfig, st: &mut State, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let seed = mix_seed(cfg.seed, tag::BOOTSTRAP);
    manifest.seed("bootstrap", seed);
    let (scm, model, sc) = (need_scm(st)?, primary(cfg, st)?, need_scenario(st)?);
    let b = &cfg.bootstrap;
    let summary = bootstrap_breaking_point(scm, model, sc, b.replications, seed, b.consecutive)?;
    art.write_csv(&out(cfg, "bootstrap.csv"), &tables::bootstrap(&summary, seed))?;
    art.write_csv(&out(cfg, "bootstrap_summary.csv"), &tables::bootstrap_summary(&summary))?;
    art.commit()
}

fn monitor(cfg: &PipelineConfig, st: &mut State, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let ref_seed = mix_seed(cfg.seed, tag::REFERENCE);
    manifest.seed("reference", ref_seed);
    let (scm, model, sc) = (need_scm(st)?, primary(cfg, st)?, need_scenario(st)?);
    let mc = &cfg.monitor.config;
    let reference = scm.sample(mc.reference_n, ref_seed)?;
    let steps = step_datasets(scm, sc, mix_seed(cfg.seed, tag::SIMULATE))?;
    let report = monitor_stream(&steps, &reference, &cfg.data.target, Some(model), mc)?;
    art.write_csv(&out(cfg, "monitors.csv"), &tables::monitors(&report))?;
    art.commit()
}

fn attribute(cfg: &PipelineConfig, st: &mut State, manifest: &mut ManifestBuilder, art: &mut Artifacts) -> Result<()> {
    let a = &cfg.attribute;
    let rank_seed = mix_seed(cfg.seed, tag::RANK);
    manifest.seed("rank", rank_seed);
    let (scm, model) = (need_scm(st)?, primary(cfg, st)?);
    let ranked = rank_features(model, &st.train, a.n_rows.min(st.train.n_rows()), a.n_perms, rank_seed)?;
    let mut sweep = a.sweep.clone();
    sweep.seed = mix_seed(cfg.seed, tag::SWEEP);
    manifest.seed("sweep", sweep.seed);
    let top: Vec<_> = ranked.iter().take(a.top_k).cloned().collect();
    let report = per_feature_drift_sweep(scm, model, &top, &cfg.data.target, &sweep)?;
    let mut imp = crate::output::Table::new(["rank", "feature", "mean_abs_attribution"]);
    for (i, f) in ranked.iter().enumerate() {
        imp.push(vec![(i + 1).to_string(), f.feature.clone(), crate::output::num(f.mean_abs_attribution)]);
    }
    art.write_csv(&out(cfg, "importance.csv"), &imp)?;
    art.write_csv(&out(cfg, "attribution.csv"), &tables::attribution(&report))?;
    art.commit()
}
