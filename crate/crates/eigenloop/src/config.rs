//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use eigenloop_core::clustering::KMeansConfig;
use eigenloop_core::contrastive::PretrainConfig;
use eigenloop_core::synth::{BenchmarkSpec, MixtureSpec};
use eigenloop_core::transfer::{AdapterConfig, AnchorPolicy, Budget, FinetuneConfig};
use eigenloop_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One run per seed; `--seed` replaces the list.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub data: DataSource,
    pub pretrain: PretrainConfig,
    pub transfer: TransferConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            out_dir: PathBuf::from("out"),
            data: DataSource::Synthetic(SyntheticData::default()),
            pretrain: PretrainConfig::default(),
            transfer: TransferConfig::default(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic(SyntheticData),
    Files(FileData),
}

/// Source/target benchmark; the run seed picks the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticData {
    pub classes: usize,
    pub dim: usize,
    pub source_per_class: usize,
    pub target_per_class: usize,
    pub test_per_class: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub rotation_angle: f64,
    pub translation_norm: f64,
    pub scale: f64,
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self::from_spec(&BenchmarkSpec::standard(0))
    }
}

impl SyntheticData {
    pub fn from_spec(b: &BenchmarkSpec) -> Self {
        Self {
            classes: b.source.classes,
            dim: b.source.dim,
            source_per_class: b.source.per_class,
            target_per_class: b.target.per_class,
            test_per_class: b.test_per_class,
            center_scale: b.source.center_scale,
            noise_sigma: b.source.noise_sigma,
            rotation_angle: b.rotation_angle,
            translation_norm: b.translation_norm,
            scale: b.scale,
        }
    }

    pub fn spec(&self, seed: u64) -> BenchmarkSpec {
        let base = BenchmarkSpec::standard(seed);
        let source = MixtureSpec {
            classes: self.classes,
            per_class: self.source_per_class,
            dim: self.dim,
            center_scale: self.center_scale,
            noise_sigma: self.noise_sigma,
            seed,
        };
        let target = MixtureSpec {
            per_class: self.target_per_class,
            seed: base.target.seed,
            ..source.clone()
        };
        BenchmarkSpec {
            source,
            target,
            test_per_class: self.test_per_class,
            rotation_angle: self.rotation_angle,
            translation_norm: self.translation_norm,
            scale: self.scale,
        }
    }
}

/// EMB1 (`.emb1`) or CSV (`.csv`) feature files with `id,classIndex` sidecars.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    pub target: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    /// Class count; inferred from the target labels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    /// Contrastive pretraining per `[pretrain]`, then encode.
    Pretrained,
    /// The data as given.
    Raw,
    /// Encode with an ENC1 checkpoint.
    Checkpoint(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorRule {
    /// Per class, the sample nearest its ground-truth mean (needs target labels).
    NearestMean,
    /// `id,classIndex` file with one line per class.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Groundtruth,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    /// Labels per class per evolution. Ignored when `b_schedule` is set.
    pub b: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_schedule: Option<Vec<usize>>,
    pub kappa_max: usize,
    /// Optional cross-check of `b * C`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub features: FeatureSource,
    /// L2-normalize base features before the adapter.
    pub normalize: bool,
    pub indicators: IndicatorRule,
    pub oracle: OracleKind,
    pub anchor_policy: AnchorPolicy,
    pub stratified_baseline: bool,
    pub adapter: AdapterConfig,
    pub finetune: FinetuneConfig,
    pub kmeans: KMeansConfig,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            b: 1,
            b_schedule: None,
            kappa_max: 3,
            k: None,
            features: FeatureSource::Pretrained,
            normalize: true,
            indicators: IndicatorRule::NearestMean,
            oracle: OracleKind::Groundtruth,
            anchor_policy: AnchorPolicy::Recompute,
            stratified_baseline: false,
            adapter: AdapterConfig::default(),
            finetune: FinetuneConfig::default(),
            kmeans: KMeansConfig::default(),
        }
    }
}

impl TransferConfig {
    pub fn budget(&self, classes: usize) -> AppResult<Budget> {
        if let Some(schedule) = &self.b_schedule {
            if schedule.len() != self.kappa_max {
                return Err(AppError::config(
                    "transfer.b_schedule",
                    format!(
                        "{} entries but kappa_max = {}",
                        schedule.len(),
                        self.kappa_max
                    ),
                ));
            }
            if self.k.is_some() {
                return Err(AppError::config(
                    "transfer.k",
                    "k is per-evolution and cannot be checked against a schedule",
                ));
            }
            return Ok(Budget::from_schedule(classes, schedule.clone())?);
        }
        if let Some(k) = self.k {
            if k != self.b * classes {
                return Err(AppError::config(
                    "transfer.k",
                    format!("k = {k} but b x C = {} x {classes} = {}", self.b, self.b * classes),
                ));
            }
        }
        Ok(Budget::uniform(self.b, classes, self.kappa_max)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Target re-balance ratio of TUP pretraining.
    P,
    /// Per-evolution label schedule.
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Schedule(Vec<usize>),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Schedule(s) => {
                let parts: Vec<String> = s.iter().map(usize::to_string).collect();
                write!(f, "{}", parts.join("-"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<SweepValue>,
}

fn core_config(prefix: &str, e: CoreError) -> AppError {
    match e {
        CoreError::Config { field, message } if !field.contains('.') => {
            AppError::config(format!("{prefix}.{field}"), message)
        }
        other => AppError::Core(other),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> AppResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = e
                .span()
                .map(|s| locate_key(text, s.start))
                .unwrap_or_else(|| "config".into());
            AppError::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> AppResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.seeds.is_empty() {
            return Err(AppError::config("seeds", "at least one seed is required"));
        }
        self.pretrain.validate().map_err(|e| core_config("pretrain", e))?;
        self.pretrain.mix.validate().map_err(|e| core_config("pretrain.mix", e))?;
        let t = &self.transfer;
        t.finetune.validate().map_err(|e| core_config("transfer.finetune", e))?;
        if t.kmeans.t_max == 0 {
            return Err(AppError::config("transfer.kmeans.t_max", "must be at least 1"));
        }
        if t.adapter.hidden == 0 {
            return Err(AppError::config("transfer.adapter.hidden", "must be positive"));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.spec(0).source.validate().map_err(|e| core_config("data.synthetic", e))?;
            if s.target_per_class == 0 || s.test_per_class == 0 {
                return Err(AppError::config(
                    "data.synthetic.target_per_class",
                    "target and test splits need at least one sample per class",
                ));
            }
            t.budget(s.classes)?;
        } else if let Some(c) = self.classes_hint() {
            t.budget(c)?;
        }
        if let Some(sweep) = &self.sweep {
            validate_sweep(sweep)?;
        }
        Ok(())
    }

    /// Class count when known without reading data files.
    pub fn classes_hint(&self) -> Option<usize> {
        match &self.data {
            DataSource::Synthetic(s) => Some(s.classes),
            DataSource::Files(f) => f.classes,
        }
    }

    /// Copy with the seed list replaced.
    pub fn with_seeds(&self, seeds: Vec<u64>) -> Self {
        Self {
            seeds,
            ..self.clone()
        }
    }
}

pub fn validate_sweep(sweep: &SweepConfig) -> AppResult<()> {
    if sweep.values.is_empty() {
        return Err(AppError::config("sweep.values", "empty value list"));
    }
    for (i, v) in sweep.values.iter().enumerate() {
        let field = format!("sweep.values[{i}]");
        match (sweep.parameter, v) {
            (SweepParameter::P, SweepValue::Number(p)) if (0.0..=1.0).contains(p) => {}
            (SweepParameter::P, _) => {
                return Err(AppError::config(field, "p values are numbers in [0, 1]"))
            }
            (SweepParameter::B, SweepValue::Number(b)) if *b >= 1.0 && b.fract() == 0.0 => {}
            (SweepParameter::B, SweepValue::Schedule(s)) if !s.is_empty() => {}
            (SweepParameter::B, _) => {
                return Err(AppError::config(
                    field,
                    "b values are positive integers or non-empty schedules",
                ))
            }
        }
    }
    Ok(())
}

/// Dotted path of the key whose value starts at or before `offset`.
fn locate_key(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        if pos > offset {
            break;
        }
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            key = k.trim().to_string();
        }
        pos += line.len();
    }
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "config".into(),
        (true, false) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}
