use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chartrec::{RecConfig, RecTrainConfig};
use crate::drattacks::{default_sweep, InversionConfig, DEFAULT_MAGNITUDE, PROBE_DELTA};
use crate::error::{Error, Result};
use crate::paradr::{ProjectorConfig, DEFAULT_K};
use crate::substitute::SubstituteConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    TrainDr,
    FitSubstitute,
    TrainRec,
    Attack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    OneAttr,
    Invert,
    Overwrite,
    Outlier,
    Blank,
    Shuffle,
    Pipeline,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::OneAttr => "one-attr",
            AttackKind::Invert => "invert",
            AttackKind::Overwrite => "overwrite",
            AttackKind::Outlier => "outlier",
            AttackKind::Blank => "blank",
            AttackKind::Shuffle => "shuffle",
            AttackKind::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// `wine`, `gapminder`, or a CSV path.
    pub name: String,
    /// Label column kept out of the attributes.
    pub label: Option<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "wine".into(),
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectorSection {
    pub hidden: Vec<usize>,
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ProjectorSection {
    fn default() -> Self {
        let p = ProjectorConfig::default();
        Self {
            hidden: vec![100, 100, 100],
            k: DEFAULT_K,
            epochs: p.epochs,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
        }
    }
}

impl ProjectorSection {
    pub fn training(&self, seed: u64) -> ProjectorConfig {
        ProjectorConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            ..ProjectorConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubstituteSection {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    /// Extra target queries at uniform random rows of the widened unit box.
    pub queries: usize,
    /// Query box is `[-margin, 1 + margin]` per normalized attribute.
    pub query_margin: f64,
}

impl Default for SubstituteSection {
    fn default() -> Self {
        let s = SubstituteConfig::default();
        Self {
            hidden: vec![50, 50, 50],
            epochs: s.epochs,
            batch_size: s.batch_size,
            learning_rate: s.learning_rate,
            holdout_fraction: s.holdout_fraction,
            queries: 0,
            query_margin: 0.0,
        }
    }
}

impl SubstituteSection {
    pub fn training(&self, seed: u64) -> SubstituteConfig {
        SubstituteConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            holdout_fraction: self.holdout_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderSection {
    pub corpus_size: usize,
    pub corpus_seed: u64,
    pub hidden: usize,
    pub type_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub shuffle_columns: bool,
    pub ablate_column_index: bool,
    /// Table attacked by `blank` and `shuffle`: `gapminder`, `wine`, or a CSV path.
    pub table: String,
}

impl Default for RecommenderSection {
    fn default() -> Self {
        let m = RecConfig::default();
        let t = RecTrainConfig::default();
        Self {
            corpus_size: 500,
            corpus_seed: 7,
            hidden: m.hidden,
            type_hidden: m.type_hidden,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            holdout_fraction: t.holdout_fraction,
            shuffle_columns: t.shuffle_columns,
            ablate_column_index: m.ablate_column_index,
            table: "gapminder".into(),
        }
    }
}

impl RecommenderSection {
    pub fn model(&self, seed: u64) -> RecConfig {
        RecConfig {
            hidden: self.hidden,
            type_hidden: self.type_hidden,
            ablate_column_index: self.ablate_column_index,
            seed,
        }
    }

    pub fn training(&self, seed: u64) -> RecTrainConfig {
        RecTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            shuffle_columns: self.shuffle_columns,
            holdout_fraction: self.holdout_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    /// Row attacked by `one-attr`; default is the first row of `base_label`.
    pub base: Option<usize>,
    /// Class whose rows serve as bases (`one-attr`, `overwrite`).
    pub base_label: Option<String>,
    /// Class whose hull is overwritten.
    pub target_label: Option<String>,
    pub delta: f64,
    pub magnitude: f64,
    pub magnitudes: Vec<f64>,
    /// Number of seeded aims for `invert`.
    pub aims: usize,
    /// Limit crafting to the `mask_top` most influential attributes.
    pub mask_top: Option<usize>,
    pub inversion: InversionConfig,
    /// Hull points sampled by `overwrite`.
    pub targets: usize,
    pub scale: f64,
    pub budget: usize,
    pub samples: usize,
    pub index_rank_gate: Option<usize>,
    pub grid: Vec<f64>,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            kind: AttackKind::OneAttr,
            base: None,
            base_label: None,
            target_label: None,
            delta: PROBE_DELTA,
            magnitude: DEFAULT_MAGNITUDE,
            magnitudes: default_sweep(),
            aims: 10,
            mask_top: None,
            inversion: InversionConfig::default(),
            targets: 30,
            scale: 10.0,
            budget: 500,
            samples: 1000,
            index_rank_gate: Some(3),
            grid: crate::chartrec::attacks::PIPELINE_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub projector: ProjectorSection,
    #[serde(default)]
    pub substitute: SubstituteSection,
    #[serde(default)]
    pub recommender: RecommenderSection,
    #[serde(default)]
    pub attack: AttackSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.projector.hidden.is_empty() || self.substitute.hidden.is_empty() {
            return bad("hidden layer list must not be empty");
        }
        if self.projector.k == 0 {
            return bad("projector.k must be positive");
        }
        if !(0.0..1.0).contains(&self.substitute.holdout_fraction)
            || !(0.0..1.0).contains(&self.recommender.holdout_fraction)
        {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        if self.attack.scale < 1.0 {
            return bad("attack.scale must be at least 1");
        }
        if self.attack.magnitudes.windows(2).any(|w| w[1] <= w[0]) {
            return bad("attack.magnitudes must be strictly increasing");
        }
        Ok(())
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.attack.kind.as_str().to_string())
    }
}
