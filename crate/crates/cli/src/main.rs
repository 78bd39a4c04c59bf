mod config;
mod errors;
mod manifest;
mod output;
mod pipeline;
mod plot;
mod tables;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use causal_twin::attribution::{per_feature_drift_sweep, rank_features, SweepConfig};
use causal_twin::classifier::{self, Classifier, ClassifierKind, Hyperparameters};
use causal_twin::discovery::{finalize_dag, pc_discover, ColliderRule, FinalizePolicy, PcConfig};
use causal_twin::drift::{
    bootstrap_breaking_point, breaking_point, noise_vs_causal, run_scenario, step_datasets, BreakingRule, DriftScenario,
};
use causal_twin::graph::{BackgroundKnowledge, MixedGraph};
use causal_twin::monitors::{monitor_stream, MonitorConfig};
use causal_twin::scm::{fit_scm, FitConfig, Scm};
use causal_twin::stats::mix_seed;
use causal_twin::tabular::{ingest_csv, split, Dataset, Schema, SplitSpec};
use causal_twin::validation::{validate_twin, ValidationConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use crate::config::PipelineConfig;
use crate::errors::{exit_code, ConfigError, GateFailure};
use crate::manifest::ManifestBuilder;
use crate::output::Artifacts;
use crate::pipeline::{load_input, tag};

#[derive(Parser)]
#[command(name = "twin", version, about = "Causal digital twins for stress-testing classifiers under concept drift")]
struct Cli {
    /// Seed for every random draw of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a causal graph with the PC algorithm.
    Discover(DiscoverArgs),
    /// Fit per-node mechanisms on a fixed graph.
    Fit(FitArgs),
    /// Train a classifier under test.
    Train(TrainArgs),
    /// Run the three-tier fidelity check on a fitted twin.
    Validate(ValidateArgs),
    /// Stream drifted data through a model and record its robustness curve.
    Simulate(SimulateArgs),
    /// Bootstrap the breaking point over independent replications.
    Bootstrap(BootstrapArgs),
    /// Run the unsupervised and delayed supervised drift monitors.
    Monitor(MonitorArgs),
    /// Rank features by attribution and sweep drift on the top ones.
    Attribute(AttributeArgs),
    /// Run the configured stages end to end.
    Pipeline(PipelineArgs),
    /// Turn a curve CSV into long-format plot data and an SVG chart.
    Plot(PlotArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fail,
    Lexicographic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ColliderArg {
    Sepset,
    MaxP,
}

#[derive(Args)]
struct DiscoverArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    max_cond_set: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Lexicographic)]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = ColliderArg::MaxP)]
    collider_rule: ColliderArg,
    /// Also write the partially directed graph here.
    #[arg(long)]
    cpdag_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    graph: PathBuf,
    /// TOML file with fit settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "gbt")]
    kind: ClassifierKind,
    /// TOML file with hyperparameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train on this share of rows (stratified, seeded) instead of all.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    scm: PathBuf,
    /// Model file; repeat for several classifiers.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    #[arg(long)]
    target: String,
    /// Held-out rows for predictive consistency (defaults to --data).
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000)]
    nmc: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scm: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: ScenarioArgs,
    /// Consecutive steps below τ for the per-step rule.
    #[arg(long, default_value_t = 3)]
    consecutive: usize,
    /// Also run the replacement-noise baseline on this feature.
    #[arg(long)]
    noise_feature: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    run: ScenarioArgs,
    #[arg(long, default_value_t = 50)]
    replications: usize,
    #[arg(long, default_value_t = 3)]
    consecutive: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MonitorArgs {
    #[command(flatten)]
    run: ScenarioArgs,
    /// Reference rows; drawn from the undrifted twin when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Schema for --reference (defaults to the twin's columns).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// TOML file with monitor settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttributeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Schema for --data (defaults to the twin's columns).
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    scm: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 100)]
    n_rows: usize,
    #[arg(long, default_value_t = 200)]
    n_perms: usize,
    /// TOML file with sweep settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Write artifacts here instead of the configured out_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Comma-separated metric columns (default: all).
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(errors::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: cannot set up {} threads: {e}", cli.threads);
            return ExitCode::from(errors::EXIT_RUNTIME);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn command_line() -> Vec<String> {
    std::env::args().skip(1).collect()
}

/// Manifest path written next to a single-command output.
fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `<dir>/<stem>_<suffix>.<ext>` next to `out`.
fn sibling(out: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>, what: &str) -> Result<T> {
    let Some(p) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read {what} {}: {e}", p.display())))?;
    toml::from_str(&text).map_err(|e| ConfigError(format!("cannot parse {what} {}: {e}", p.display())).into())
}

fn load_data(input: &DataArgs, m: &mut ManifestBuilder) -> Result<Dataset> {
    let schema = load_input("schema", &input.schema, Schema::load)?;
    let ds = load_input("data", &input.data, |p| ingest_csv(p, &schema))?;
    m.input(&input.schema)?;
    m.input(&input.data)?;
    Ok(ds)
}

fn load_with_schema(data: &Path, schema: Option<&Path>, scm: &Scm, m: &mut ManifestBuilder) -> Result<Dataset> {
    let schema = match schema {
        Some(p) => {
            m.input(p)?;
            load_input("schema", p, Schema::load)?
        }
        None => Schema {
            columns: scm.columns().to_vec(),
            ..Schema::default()
        },
    };
    m.input(data)?;
    load_input("data", data, |p| ingest_csv(p, &schema))
}

fn load_scm(path: &Path, m: &mut ManifestBuilder) -> Result<Scm> {
    m.input(path)?;
    load_input("SCM", path, Scm::load)
}

fn load_model(path: &Path, m: &mut ManifestBuilder) -> Result<Classifier> {
    m.input(path)?;
    load_input("model", path, Classifier::load)
}

fn load_scenario(run: &ScenarioArgs, m: &mut ManifestBuilder) -> Result<(Scm, Classifier, DriftScenario)> {
    let scm = load_scm(&run.scm, m)?;
    let model = load_model(&run.model, m)?;
    m.input(&run.scenario)?;
    let sc = load_input("scenario", &run.scenario, DriftScenario::load)?;
    Ok((scm, model, sc))
}

/// Runs `body`, commits its artifacts and writes the manifest next to `out`.
fn single(out: &Path, seed: u64, body: impl FnOnce(&mut ManifestBuilder, &mut Artifacts) -> Result<()>) -> Result<()> {
    let args = command_line();
    let mut m = ManifestBuilder::new(args.clone(), args.join("\0").as_bytes());
    m.seed("global", seed);
    let mut art = Artifacts::default();
    let result = body(&mut m, &mut art);
    let committed = match result {
        Ok(()) => art.commit(),
        Err(e) if e.is::<GateFailure>() => art.commit().and(Err(e)),
        Err(e) => Err(e),
    };
    m.outputs(art.digests());
    let status = match &committed {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed: {e:#}"),
    };
    m.finish(&status).write(&manifest_path(out))?;
    committed
}

fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Discover(a) => single(&a.out, seed, |m, art| {
            let ds = load_data(&a.input, m)?;
            let bk = match &a.constraints {
                Some(p) => {
                    m.input(p)?;
                    load_input("constraints", p, BackgroundKnowledge::load)?
                }
                None => BackgroundKnowledge::default(),
            };
            let cfg = PcConfig {
                alpha: a.alpha,
                max_cond_set: a.max_cond_set,
                collider_rule: match a.collider_rule {
                    ColliderArg::Sepset => ColliderRule::Sepset,
                    ColliderArg::MaxP => ColliderRule::MaxP,
                },
                ..PcConfig::default()
            };
            let cpdag = pc_discover(&ds, &bk, &cfg)?;
            let policy = match a.policy {
                PolicyArg::Fail => FinalizePolicy::Fail,
                PolicyArg::Lexicographic => FinalizePolicy::Lexicographic,
            };
            if let Some(p) = &a.cpdag_out {
                art.write(p, cpdag.to_toml_string()?.as_bytes())?;
            }
            let dag = finalize_dag(&cpdag, policy)?;
            art.write(&a.out, dag.to_toml_string()?.as_bytes())?;
            Ok(())
        }),
        Command::Fit(a) => single(&a.out, seed, |m, art| {
            let ds = load_data(&a.input, m)?;
            m.input(&a.graph)?;
            let g = load_input("graph", &a.graph, MixedGraph::load)?;
            let mut cfg: FitConfig = load_toml(a.config.as_deref(), "fit config")?;
            cfg.seed = seed;
            let scm = fit_scm(&ds, &g, &cfg)?;
            art.write(&a.out, scm.to_string_versioned()?.as_bytes())?;
            if let Some(p) = &a.diagnostics {
                art.write_csv(p, &tables::fit_diagnostics(&scm))?;
            }
            Ok(())
        }),
        Command::Train(a) => single(&a.out, seed, |m, art| {
            let ds = load_data(&a.input, m)?;
            let hp: Hyperparameters = match &a.config {
                Some(p) => load_toml(Some(p), "hyperparameters")?,
                None => Hyperparameters::defaults_for(a.kind),
            };
            let train_ds = match a.train_fraction {
                Some(f) => {
                    let spec = SplitSpec {
                        train_fraction: f,
                        seed,
                        stratify_on: Some(a.target.clone()),
                    };
                    split(&ds, &spec)?.0
                }
                None => ds,
            };
            let model = classifier::train(&train_ds, &a.target, a.kind, &hp, seed)?;
            art.write(&a.out, model.to_string_versioned()?.as_bytes())?;
            Ok(())
        }),
        Command::Validate(a) => single(&a.out, seed, |m, art| {
            let ds = load_data(&a.input, m)?;
            let scm = load_scm(&a.scm, m)?;
            let valid = match &a.valid {
                Some(p) => load_data(
                    &DataArgs {
                        data: p.clone(),
                        schema: a.input.schema.clone(),
                    },
                    m,
                )?,
                None => ds.clone(),
            };
            let models: Vec<Classifier> = a.model.iter().map(|p| load_model(p, m)).collect::<Result<_>>()?;
            for model in &models {
                if model.target() != a.target {
                    return Err(ConfigError(format!("model predicts `{}`, not `{}`", model.target(), a.target)).into());
                }
            }
            let labelled: Vec<(String, &Classifier)> = a
                .model
                .iter()
                .zip(&models)
                .map(|(p, model)| (p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string(), model))
                .collect();
            let cfg = ValidationConfig {
                n_mc: a.nmc,
                ..ValidationConfig::default()
            };
            let report = validate_twin(&scm, &ds, &valid, &labelled, &cfg, seed)?;
            art.write_csv(&a.out, &tables::validation(&report))?;
            if !report.accepted {
                let failed: Vec<String> = report.rows().into_iter().filter(|r| !r.pass).map(|r| r.item).collect();
                return Err(GateFailure(failed.join(", ")).into());
            }
            Ok(())
        }),
        Command::Simulate(a) => single(&a.out, seed, |m, art| {
            let (scm, model, sc) = load_scenario(&a.run, m)?;
            let curve = run_scenario(&scm, &model, &sc, seed)?;
            let estimates = [
                breaking_point(&curve, &sc.threshold, BreakingRule::ConsecutiveSteps(a.consecutive))?,
                breaking_point(&curve, &sc.threshold, BreakingRule::RwaConsistent)?,
            ];
            art.write_csv(&a.out, &tables::curve(&curve))?;
            art.write_csv(&sibling(&a.out, "steps", "csv"), &tables::steps(&curve.steps))?;
            art.write_csv(
                &sibling(&a.out, "breaking_points", "csv"),
                &tables::breaking_points(&sc.threshold, &estimates),
            )?;
            if let Some(f) = &a.noise_feature {
                let records = noise_vs_causal(&scm, &model, &sc, f, sc.step_eval_n, seed)?;
                art.write_csv(&sibling(&a.out, "noise", "csv"), &tables::noise(&records))?;
            }
            Ok(())
        }),
        Command::Bootstrap(a) => single(&a.out, seed, |m, art| {
            let (scm, model, sc) = load_scenario(&a.run, m)?;
            let summary = bootstrap_breaking_point(&scm, &model, &sc, a.replications, seed, a.consecutive)?;
            art.write_csv(&a.out, &tables::bootstrap(&summary, seed))?;
            art.write_csv(&sibling(&a.out, "summary", "csv"), &tables::bootstrap_summary(&summary))?;
            Ok(())
        }),
        Command::Monitor(a) => single(&a.out, seed, |m, art| {
            let (scm, model, sc) = load_scenario(&a.run, m)?;
            let cfg: MonitorConfig = load_toml(a.config.as_deref(), "monitor config")?;
            if let Some(p) = &a.config {
                m.input(p)?;
            }
            let reference = match &a.reference {
                Some(p) => load_with_schema(p, a.schema.as_deref(), &scm, m)?,
                None => scm.sample(cfg.reference_n, mix_seed(seed, tag::REFERENCE))?,
            };
            let steps = step_datasets(&scm, &sc, seed)?;
            let report = monitor_stream(&steps, &reference, model.target(), Some(&model), &cfg)?;
            art.write_csv(&a.out, &tables::monitors(&report))?;
            Ok(())
        }),
        Command::Attribute(a) => single(&a.out, seed, |m, art| {
            let scm = load_scm(&a.scm, m)?;
            let model = load_model(&a.model, m)?;
            let ds = load_with_schema(&a.data, a.schema.as_deref(), &scm, m)?;
            let mut sweep: SweepConfig = load_toml(a.config.as_deref(), "sweep config")?;
            sweep.seed = mix_seed(seed, tag::SWEEP);
            let ranked = rank_features(&model, &ds, a.n_rows.min(ds.n_rows()), a.n_perms, mix_seed(seed, tag::RANK))?;
            let top: Vec<_> = ranked.into_iter().take(a.top_k).collect();
            let report = per_feature_drift_sweep(&scm, &model, &top, &a.target, &sweep)?;
            art.write_csv(&a.out, &tables::attribution(&report))?;
            Ok(())
        }),
        Command::Pipeline(a) => {
            let (cfg, bytes) = PipelineConfig::load(&a.config).map_err(|e| ConfigError(format!("{e:#}")))?;
            let mut cfg = cfg;
            if seed != 0 {
                cfg.seed = seed;
            }
            if let Some(d) = &a.out_dir {
                cfg.out_dir = d.clone();
            }
            pipeline::run(&cfg, &bytes, command_line()).map(|_| ())
        }
        Command::Plot(a) => single(&a.out, seed, |m, art| {
            m.input(&a.curve)?;
            let bytes = std::fs::read(&a.curve).map_err(|e| ConfigError(format!("cannot read {}: {e}", a.curve.display())))?;
            let series = plot::read_curve(&bytes, &a.metrics).with_context(|| format!("in {}", a.curve.display()))?;
            art.write_csv(&a.out, &plot::long_format(&series))?;
            if let Some(p) = &a.svg {
                art.write(p, plot::svg(&series, a.tau).as_bytes())?;
            }
            Ok(())
        }),
    }
}
