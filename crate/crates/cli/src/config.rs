use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use causal_twin::attribution::SweepConfig;
use causal_twin::classifier::{ClassifierKind, Hyperparameters};
use causal_twin::discovery::{FinalizePolicy, PcConfig};
use causal_twin::monitors::MonitorConfig;
use causal_twin::scm::FitConfig;
use causal_twin::validation::ValidationConfig;
use serde::{Deserialize, Serialize};

/// Stages in dependency order. A pipeline runs a prefix of this list.
pub const STAGES: [&str; 8] = [
    "discover",
    "fit",
    "train",
    "validate",
    "simulate",
    "bootstrap",
    "monitor",
    "attribute",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub stages: Vec<String>,
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub discover: DiscoverSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub monitor: MonitorSection,
    #[serde(default)]
    pub attribute: AttributeSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub csv: PathBuf,
    pub schema: PathBuf,
    pub target: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_fraction: 0.8,
            seed: 7,
            stratify: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoverSection {
    pub constraints: Option<PathBuf>,
    pub policy: FinalizePolicy,
    /// Reference graph; when set the structural Hamming distance is reported.
    pub truth: Option<PathBuf>,
    pub pc: PcConfig,
}

impl Default for DiscoverSection {
    fn default() -> Self {
        DiscoverSection {
            constraints: None,
            policy: FinalizePolicy::Lexicographic,
            truth: None,
            pc: PcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitData {
    All,
    Train,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Fit on this graph instead of the discovered one.
    pub graph: Option<PathBuf>,
    pub data: FitData,
    pub config: FitConfig,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            graph: None,
            data: FitData::All,
            config: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub kinds: Vec<ClassifierKind>,
    /// The model used by every stage after validation.
    pub primary: ClassifierKind,
    pub hyperparameters: BTreeMap<String, Hyperparameters>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            kinds: vec![ClassifierKind::Gbt, ClassifierKind::RandomForest],
            primary: ClassifierKind::Gbt,
            hyperparameters: BTreeMap::new(),
        }
    }
}

impl TrainSection {
    pub fn hyperparameters_for(&self, kind: ClassifierKind) -> Hyperparameters {
        self.hyperparameters
            .get(kind_label(kind))
            .cloned()
            .unwrap_or_else(|| Hyperparameters::defaults_for(kind))
    }
}

pub fn kind_label(kind: ClassifierKind) -> &'static str {
    match kind {
        ClassifierKind::Gbt => "gbt",
        ClassifierKind::RandomForest => "rf",
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    /// Stop the pipeline with the gate exit code when the twin is rejected.
    pub gate: bool,
    pub config: ValidationConfig,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            gate: true,
            config: ValidationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub scenario: Option<PathBuf>,
    /// Feature shuffled by the replacement-noise baseline; none skips it.
    pub noise_feature: Option<String>,
    pub noise_n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub replications: usize,
    pub consecutive: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            replications: 50,
            consecutive: 3,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub config: MonitorConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributeSection {
    pub top_k: usize,
    pub n_rows: usize,
    pub n_perms: usize,
    pub sweep: SweepConfig,
}

impl Default for AttributeSection {
    fn default() -> Self {
        AttributeSection {
            top_k: 5,
            n_rows: 100,
            n_perms: 200,
            sweep: SweepConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(text).with_context(|| format!("cannot parse config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.data.csv);
        fix(&mut self.data.schema);
        for p in [
            &mut self.discover.constraints,
            &mut self.discover.truth,
            &mut self.fit.graph,
            &mut self.simulate.scenario,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// The configured stages must be a prefix of `STAGES`.
    pub fn stage_count(&self) -> Result<usize> {
        for s in &self.stages {
            if !STAGES.contains(&s.as_str()) {
                bail!("unknown stage `{s}` (expected one of {})", STAGES.join(", "));
            }
        }
        let n = self.stages.len();
        let mut sorted: Vec<&str> = self.stages.iter().map(String::as_str).collect();
        sorted.sort_by_key(|s| STAGES.iter().position(|t| t == s));
        sorted.dedup();
        if sorted.len() != n || sorted != STAGES[..n] {
            bail!("stages must be a prefix of: {}", STAGES.join(" -> "));
        }
        Ok(n)
    }

    pub fn runs(&self, stage: &str) -> bool {
        self.stages.iter().any(|s| s == stage)
    }

    fn validate(&self) -> Result<()> {
        self.stage_count()?;
        if !self.train.kinds.contains(&self.train.primary) {
            bail!("train.primary must be one of train.kinds");
        }
        if self.runs("simulate") && self.simulate.scenario.is_none() {
            bail!("the simulate stage needs simulate.scenario");
        }
        if self.bootstrap.replications < 2 {
            bail!("bootstrap.replications must be at least 2");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(stages: &str) -> String {
        format!(
            "name = \"t\"\nout_dir = \"out\"\nseed = 1\nstages = {stages}\n\
             [data]\ncsv = \"d.csv\"\nschema = \"s.toml\"\ntarget = \"y\"\n"
        )
    }

    #[test]
    fn stage_prefixes() {
        let ok: PipelineConfig = toml::from_str(&minimal("[\"fit\", \"discover\"]")).unwrap();
        assert_eq!(ok.stage_count().unwrap(), 2);
        let gap: PipelineConfig = toml::from_str(&minimal("[\"discover\", \"train\"]")).unwrap();
        assert!(gap.stage_count().is_err());
        let dup: PipelineConfig = toml::from_str(&minimal("[\"discover\", \"discover\"]")).unwrap();
        assert!(dup.stage_count().is_err());
    }

    #[test]
    fn nested_defaults() {
        let text = minimal("[\"discover\"]") + "[discover.pc]\nalpha = 0.2\n[fit.config]\nnoise_sigma = 1.5\n";
        let cfg: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg.discover.pc.alpha, 0.2);
        assert_eq!(cfg.discover.pc.max_cond_set, PcConfig::default().max_cond_set);
        assert_eq!(cfg.fit.config.noise_sigma, 1.5);
        assert_eq!(cfg.bootstrap.replications, 50);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal("[\"discover\"]") + "[split]\ntrain_frac = 0.5\n";
        assert!(toml::from_str::<PipelineConfig>(&text).is_err());
    }
}
