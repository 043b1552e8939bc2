//! The scripted pipeline behind `gen`, `pretrain`, `run` and `sweep`.

use std::path::{Path, PathBuf};

use eigenloop_core::clustering::{bcubed_precision, kmeans_best_of, InitMethod, KMeansConfig};
use eigenloop_core::contrastive::{encode, pretrain, EncoderMLP, PretrainConfig, PretrainMode, PretrainOutcome};
use eigenloop_core::synth::nearest_mean_indicators;
use eigenloop_core::transfer::{
    random_baseline, Budget, Evaluator, LoopConfig, LoopSnapshot, MetricsRow, Oracle,
    ProgressiveLoop, METRIC_RESTARTS,
};
use eigenloop_core::{normalize_rows, EmbeddingSet, Error as CoreError, LabeledSet, RngStream};
use rand::RngCore;
use rayon::prelude::*;

use crate::config::{
    DataSource, ExperimentConfig, FeatureSource, IndicatorRule, OracleKind, SweepParameter,
    SweepValue,
};
use crate::error::{AppError, AppResult};
use crate::formats::{
    import_csv, load_embeddings, load_encoder, load_labels, loss_csv, metrics_csv, save_clusters,
    save_embeddings, save_encoder, save_labels, save_snapshot, write_text,
};

fn next_seed(stream: &RngStream) -> u64 {
    stream.rng().next_u64()
}

/// Target pool (and optional source/test splits) as loaded or generated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub source: Option<EmbeddingSet>,
    pub source_labels: Option<LabeledSet>,
    pub target: EmbeddingSet,
    pub target_labels: Option<LabeledSet>,
    pub test: Option<EmbeddingSet>,
    pub test_labels: Option<LabeledSet>,
    pub classes: usize,
}

fn load_features(path: &Path) -> AppResult<EmbeddingSet> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => import_csv(path),
        _ => load_embeddings(path),
    }
}

pub fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> AppResult<Dataset> {
    match &cfg.data {
        DataSource::Synthetic(s) => {
            let b = s.spec(seed).generate()?;
            Ok(Dataset {
                source: Some(b.source),
                source_labels: Some(b.source_labels),
                target: b.target,
                target_labels: Some(b.target_labels),
                test: Some(b.test),
                test_labels: Some(b.test_labels),
                classes: s.classes,
            })
        }
        DataSource::Files(f) => {
            let target = load_features(&f.target)?;
            let target_labels = f.target_labels.as_ref().map(|p| load_labels(p, f.classes)).transpose()?;
            let classes = f
                .classes
                .or_else(|| target_labels.as_ref().map(LabeledSet::classes))
                .ok_or_else(|| {
                    AppError::config("data.files.classes", "needed when target labels are absent")
                })?;
            let target_labels = target_labels
                .map(|l| LabeledSet::from_pairs(classes, l.iter()))
                .transpose()?;
            let test = f.test.as_deref().map(load_features).transpose()?;
            let test_labels = f
                .test_labels
                .as_ref()
                .map(|p| load_labels(p, Some(classes)))
                .transpose()?;
            let source = f.source.as_deref().map(load_features).transpose()?;
            Ok(Dataset {
                source,
                source_labels: None,
                target,
                target_labels,
                test,
                test_labels,
                classes,
            })
        }
    }
}

/// Pretrains per `cfg.mix.mode`; UF first trains a VUP encoder to continue from.
pub fn pretrain_encoder(cfg: &PretrainConfig, ds: &Dataset, seed: u64) -> AppResult<PretrainOutcome> {
    let mut cfg = PretrainConfig { seed, ..cfg.clone() };
    let source = ds.source.as_ref();
    let target = Some(&ds.target);
    if cfg.mix.mode == PretrainMode::Uf {
        cfg.mix.mode = PretrainMode::Vup;
        let vup = pretrain(source, target, None, &cfg)?;
        cfg.mix.mode = PretrainMode::Uf;
        return Ok(pretrain(source, target, Some(vup.encoder), &cfg)?);
    }
    Ok(pretrain(source, target, None, &cfg)?)
}

/// Base features handed to the transfer loop.
#[derive(Debug, Clone)]
pub struct Features {
    pub pool: EmbeddingSet,
    pub test: Option<EmbeddingSet>,
    pub encoder: Option<EncoderMLP>,
    pub pretrain: Option<PretrainOutcome>,
}

pub fn prepare_features(cfg: &ExperimentConfig, ds: &Dataset, seed: u64) -> AppResult<Features> {
    let encoded = |enc: &EncoderMLP| -> AppResult<(EmbeddingSet, Option<EmbeddingSet>)> {
        let pool = encode(enc, &ds.target)?;
        let test = ds.test.as_ref().map(|t| encode(enc, t)).transpose()?;
        Ok((pool, test))
    };
    match &cfg.transfer.features {
        FeatureSource::Pretrained => {
            let outcome = pretrain_encoder(&cfg.pretrain, ds, seed)?;
            let (pool, test) = encoded(&outcome.encoder)?;
            Ok(Features {
                pool,
                test,
                encoder: Some(outcome.encoder.clone()),
                pretrain: Some(outcome),
            })
        }
        FeatureSource::Checkpoint(path) => {
            let enc = load_encoder(path)?;
            let (pool, test) = encoded(&enc)?;
            Ok(Features {
                pool,
                test,
                encoder: Some(enc),
                pretrain: None,
            })
        }
        FeatureSource::Raw => {
            let prep = |e: &EmbeddingSet| -> AppResult<EmbeddingSet> {
                Ok(if cfg.transfer.normalize { normalize_rows(e)? } else { e.clone() })
            };
            Ok(Features {
                pool: prep(&ds.target)?,
                test: ds.test.as_ref().map(prep).transpose()?,
                encoder: None,
                pretrain: None,
            })
        }
    }
}

/// BCubed precision of a fresh `K = C` clustering of `features`.
pub fn clustering_precision(features: &EmbeddingSet, truth: &LabeledSet, seed: u64) -> AppResult<f64> {
    let km = KMeansConfig {
        init: InitMethod::KmeansPlusPlus,
        seed: next_seed(&RngStream::new(seed, "metric/clustering")),
        ..KMeansConfig::default()
    };
    let state = kmeans_best_of(features, truth.classes().min(features.len()), &km, METRIC_RESTARTS)?;
    Ok(bcubed_precision(&state.assignment, features.ids(), truth)?)
}

/// Everything needed to start a progressive loop.
#[derive(Debug, Clone)]
pub struct LoopInputs {
    pub base: EmbeddingSet,
    pub indicators: LabeledSet,
    pub budget: Budget,
    pub loop_cfg: LoopConfig,
    pub eval: Option<Evaluator>,
    pub truth: Option<LabeledSet>,
    pub oracle: OracleKind,
}

pub fn loop_config(cfg: &ExperimentConfig, seed: u64) -> LoopConfig {
    LoopConfig {
        adapter: cfg.transfer.adapter.clone(),
        finetune: cfg.transfer.finetune.clone(),
        kmeans: cfg.transfer.kmeans.clone(),
        anchor_policy: cfg.transfer.anchor_policy,
        seed,
    }
}

pub fn loop_inputs_from(cfg: &ExperimentConfig, ds: &Dataset, features: &Features, seed: u64) -> AppResult<LoopInputs> {
    let budget = cfg.transfer.budget(ds.classes)?;
    let indicators = match &cfg.transfer.indicators {
        IndicatorRule::NearestMean => {
            let truth = ds.target_labels.as_ref().ok_or_else(|| {
                AppError::config(
                    "transfer.indicators",
                    "nearest-mean needs target labels; supply an indicator file instead",
                )
            })?;
            nearest_mean_indicators(&features.pool, truth)?
        }
        IndicatorRule::File(path) => load_labels(path, Some(ds.classes))?,
    };
    let eval = match (&features.test, &ds.test_labels) {
        (Some(test), Some(test_truth)) => Some(Evaluator {
            test: test.clone(),
            test_truth: test_truth.clone(),
            pool_truth: ds.target_labels.clone(),
        }),
        _ => None,
    };
    Ok(LoopInputs {
        base: features.pool.clone(),
        indicators,
        budget,
        loop_cfg: loop_config(cfg, seed),
        eval,
        truth: ds.target_labels.clone(),
        oracle: cfg.transfer.oracle,
    })
}

pub fn loop_inputs(cfg: &ExperimentConfig, seed: u64) -> AppResult<LoopInputs> {
    let ds = load_dataset(cfg, seed)?;
    let features = prepare_features(cfg, &ds, seed)?;
    loop_inputs_from(cfg, &ds, &features, seed)
}

pub fn start_loop(inputs: &LoopInputs) -> AppResult<ProgressiveLoop> {
    Ok(ProgressiveLoop::start(
        inputs.base.clone(),
        &inputs.indicators,
        inputs.budget.clone(),
        inputs.loop_cfg.clone(),
        inputs.eval.clone(),
    )?)
}

/// One seed of `run`: the loop against the ground-truth oracle and the
/// random baseline at the same label count.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub budget: Budget,
    pub history: Vec<MetricsRow>,
    pub baseline: MetricsRow,
    pub snapshot: LoopSnapshot,
    pub pool: EmbeddingSet,
    pub pretrain_precision: Option<f64>,
}

fn ground_truth(inputs: &LoopInputs) -> AppResult<Oracle> {
    if inputs.oracle == OracleKind::Interactive {
        return Err(AppError::config(
            "transfer.oracle",
            "scripted runs answer from ground truth; use `serve` for interactive labeling",
        ));
    }
    let truth = inputs.truth.clone().ok_or_else(|| {
        AppError::Core(CoreError::Data("the ground-truth oracle needs target labels".into()))
    })?;
    Ok(Oracle::GroundTruth(truth))
}

pub fn run_inputs(cfg: &ExperimentConfig, inputs: &LoopInputs, seed: u64, pretrain_precision: Option<f64>) -> AppResult<SeedOutcome> {
    let oracle = ground_truth(inputs)?;
    let mut lp = start_loop(inputs)?;
    lp.drive(&oracle)?;
    let spent = lp.state().queried.len();
    let baseline = random_baseline(
        &inputs.base,
        &inputs.indicators,
        spent,
        &oracle,
        &inputs.loop_cfg,
        inputs.eval.as_ref(),
        cfg.transfer.stratified_baseline,
    )?;
    Ok(SeedOutcome {
        seed,
        budget: inputs.budget.clone(),
        history: lp.state().history.clone(),
        baseline: baseline.metrics,
        snapshot: lp.snapshot(),
        pool: inputs.base.clone(),
        pretrain_precision,
    })
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> AppResult<SeedOutcome> {
    let ds = load_dataset(cfg, seed)?;
    let features = prepare_features(cfg, &ds, seed)?;
    let precision = match (&features.pretrain, &ds.target_labels) {
        (Some(_), Some(truth)) => Some(clustering_precision(&features.pool, truth, seed)?),
        _ => None,
    };
    let inputs = loop_inputs_from(cfg, &ds, &features, seed)?;
    run_inputs(cfg, &inputs, seed, precision)
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn ensure_dir(dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

/// `gen`: writes each seed's synthetic splits as EMB1 plus label sidecars.
pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> AppResult<Vec<PathBuf>> {
    let DataSource::Synthetic(_) = &cfg.data else {
        return Err(AppError::config("data", "gen needs a synthetic data section"));
    };
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let ds = load_dataset(cfg, seed)?;
        let dir = seed_dir(out, seed);
        ensure_dir(&dir)?;
        let splits = [
            ("source", ds.source.as_ref(), ds.source_labels.as_ref()),
            ("target", Some(&ds.target), ds.target_labels.as_ref()),
            ("test", ds.test.as_ref(), ds.test_labels.as_ref()),
        ];
        for (name, set, labels) in splits {
            if let (Some(set), Some(labels)) = (set, labels) {
                let emb = dir.join(format!("{name}.emb1"));
                let lab = dir.join(format!("{name}.labels"));
                save_embeddings(&emb, set)?;
                save_labels(&lab, labels)?;
                written.extend([emb, lab]);
            }
        }
    }
    Ok(written)
}

/// Per-seed pretraining summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSummary {
    pub seed: u64,
    pub mode: PretrainMode,
    pub final_loss: Option<f64>,
    pub target_precision: Option<f64>,
}

/// `pretrain`: encoder checkpoint and loss history per seed.
pub fn cmd_pretrain(cfg: &ExperimentConfig, out: &Path) -> AppResult<Vec<PretrainSummary>> {
    let results: Vec<AppResult<(u64, PretrainOutcome, Option<f64>)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let ds = load_dataset(cfg, seed)?;
            let outcome = pretrain_encoder(&cfg.pretrain, &ds, seed)?;
            let precision = match &ds.target_labels {
                Some(truth) => Some(clustering_precision(&encode(&outcome.encoder, &ds.target)?, truth, seed)?),
                None => None,
            };
            Ok((seed, outcome, precision))
        })
        .collect();
    let mut summary = Vec::new();
    let mut report = String::from("seed,mode,final_loss,target_bcubed\n");
    for r in results {
        let (seed, outcome, precision) = r?;
        let dir = seed_dir(out, seed);
        ensure_dir(&dir)?;
        save_encoder(dir.join("encoder.enc1"), &outcome.encoder)?;
        write_text(dir.join("loss.csv"), &loss_csv(&outcome.history))?;
        let final_loss = outcome.history.last().map(|h| h.terms.loss);
        report.push_str(&format!(
            "{seed},{},{},{}\n",
            cfg.pretrain.mix.mode.name(),
            opt(final_loss),
            opt(precision)
        ));
        summary.push(PretrainSummary {
            seed,
            mode: cfg.pretrain.mix.mode,
            final_loss,
            target_precision: precision,
        });
    }
    write_text(out.join("pretrain.csv"), &report)?;
    Ok(summary)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPORT_HEADER: &str = "method,seed,kappa,labels_spent,budget,bcubed,top1,mean_per_class";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: &'static str,
    /// `None` for the mean row.
    pub seed: Option<u64>,
    pub kappa: Option<usize>,
    pub labels_spent: f64,
    pub budget: usize,
    pub bcubed: Option<f64>,
    pub top1: Option<f64>,
    pub mean_per_class: Option<f64>,
}

impl ReportRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}\n",
            self.method,
            self.seed.map_or_else(|| "mean".to_string(), |s| s.to_string()),
            self.kappa.map(|k| k.to_string()).unwrap_or_default(),
            self.labels_spent,
            self.budget,
            opt(self.bcubed),
            opt(self.top1),
            opt(self.mean_per_class)
        )
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn mean_row(method: &'static str, rows: &[ReportRow]) -> ReportRow {
    ReportRow {
        method,
        seed: None,
        kappa: rows.first().and_then(|r| r.kappa),
        labels_spent: rows.iter().map(|r| r.labels_spent).sum::<f64>() / rows.len().max(1) as f64,
        budget: rows.first().map_or(0, |r| r.budget),
        bcubed: mean_of(rows.iter().map(|r| r.bcubed)),
        top1: mean_of(rows.iter().map(|r| r.top1)),
        mean_per_class: mean_of(rows.iter().map(|r| r.mean_per_class)),
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcomes: Vec<SeedOutcome>,
    pub rows: Vec<ReportRow>,
}

impl RunReport {
    pub fn csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.csv());
        }
        s
    }

    pub fn mean(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.seed.is_none())
    }
}

pub fn report_rows(outcomes: &[SeedOutcome]) -> Vec<ReportRow> {
    let mut progressive = Vec::new();
    let mut random = Vec::new();
    for o in outcomes {
        let last = o.history.last().expect("history starts with the indicator row");
        progressive.push(ReportRow {
            method: "progressive",
            seed: Some(o.seed),
            kappa: Some(last.kappa),
            labels_spent: last.labels_spent as f64,
            budget: o.budget.total_extra(),
            bcubed: last.bcubed,
            top1: last.top1,
            mean_per_class: last.mean_per_class,
        });
        random.push(ReportRow {
            method: "random",
            seed: Some(o.seed),
            kappa: None,
            labels_spent: o.baseline.labels_spent as f64,
            budget: o.budget.total_extra(),
            bcubed: o.baseline.bcubed,
            top1: o.baseline.top1,
            mean_per_class: o.baseline.mean_per_class,
        });
    }
    let mut rows = progressive.clone();
    rows.push(mean_row("progressive", &progressive));
    rows.extend(random.iter().cloned());
    rows.push(mean_row("random", &random));
    rows
}

/// `run`: loop plus baseline for every seed; per-seed metrics, state and
/// clusters, and a combined `report.csv`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> AppResult<RunReport> {
    let outcomes: Vec<SeedOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect::<AppResult<Vec<_>>>()?;
    for o in &outcomes {
        let dir = seed_dir(out, o.seed);
        ensure_dir(&dir)?;
        write_text(dir.join("metrics.csv"), &metrics_csv(&o.history))?;
        save_snapshot(dir.join("state.json"), &o.snapshot)?;
        if let Some(clusters) = &o.snapshot.last_clusters {
            save_clusters(&dir, &o.pool, clusters)?;
        }
    }
    let report = RunReport {
        rows: report_rows(&outcomes),
        outcomes,
    };
    write_text(out.join("report.csv"), &report.csv())?;
    Ok(report)
}

pub const SWEEP_HEADER: &str =
    "parameter,value,seeds,target_bcubed,final_bcubed,final_top1,final_mean_per_class,labels_spent";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: SweepValue,
    pub seeds: usize,
    pub target_bcubed: Option<f64>,
    pub final_bcubed: Option<f64>,
    pub final_top1: Option<f64>,
    pub final_mean_per_class: Option<f64>,
    pub labels_spent: f64,
}

fn sweep_point(cfg: &ExperimentConfig, parameter: SweepParameter, value: &SweepValue) -> ExperimentConfig {
    let mut c = cfg.clone();
    match (parameter, value) {
        (SweepParameter::P, SweepValue::Number(p)) => {
            c.pretrain.mix.p = *p;
            c.pretrain.mix.mode = PretrainMode::Tup;
        }
        (SweepParameter::B, SweepValue::Number(b)) => {
            c.transfer.b = *b as usize;
            c.transfer.b_schedule = None;
            c.transfer.k = None;
        }
        (SweepParameter::B, SweepValue::Schedule(s)) => {
            c.transfer.kappa_max = s.len();
            c.transfer.b_schedule = Some(s.clone());
            c.transfer.k = None;
        }
        (SweepParameter::P, SweepValue::Schedule(_)) => unreachable!("validated"),
    }
    c
}

/// `sweep`: one experiment per value over the shared seed list.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> AppResult<Vec<SweepRow>> {
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| AppError::config("sweep", "missing [sweep] section"))?;
    crate::config::validate_sweep(&sweep)?;
    let points: Vec<ExperimentConfig> = sweep
        .values
        .iter()
        .map(|v| sweep_point(cfg, sweep.parameter, v))
        .collect();
    for p in &points {
        p.validate()?;
    }
    // b does not touch pretraining, so features are shared across values
    let shared: Option<Vec<(Dataset, Features, Option<f64>)>> = if sweep.parameter == SweepParameter::B {
        Some(
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    let ds = load_dataset(cfg, seed)?;
                    let f = prepare_features(cfg, &ds, seed)?;
                    let prec = precision_of(&ds, &f, seed)?;
                    Ok((ds, f, prec))
                })
                .collect::<AppResult<Vec<_>>>()?,
        )
    } else {
        None
    };
    let rows: Vec<SweepRow> = points
        .par_iter()
        .zip(sweep.values.par_iter())
        .map(|(point, value)| {
            let outcomes: Vec<SeedOutcome> = point
                .seeds
                .par_iter()
                .enumerate()
                .map(|(i, &seed)| match &shared {
                    Some(cache) => {
                        let (ds, f, prec) = &cache[i];
                        let inputs = loop_inputs_from(point, ds, f, seed)?;
                        run_inputs(point, &inputs, seed, *prec)
                    }
                    None => run_seed(point, seed),
                })
                .collect::<AppResult<Vec<_>>>()?;
            let finals: Vec<&MetricsRow> = outcomes.iter().map(|o| o.history.last().expect("non-empty")).collect();
            Ok(SweepRow {
                parameter: sweep.parameter,
                value: value.clone(),
                seeds: outcomes.len(),
                target_bcubed: mean_of(outcomes.iter().map(|o| o.pretrain_precision)),
                final_bcubed: mean_of(finals.iter().map(|r| r.bcubed)),
                final_top1: mean_of(finals.iter().map(|r| r.top1)),
                final_mean_per_class: mean_of(finals.iter().map(|r| r.mean_per_class)),
                labels_spent: finals.iter().map(|r| r.labels_spent as f64).sum::<f64>() / finals.len() as f64,
            })
        })
        .collect::<AppResult<Vec<_>>>()?;
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        let param = match r.parameter {
            SweepParameter::P => "p",
            SweepParameter::B => "b",
        };
        csv.push_str(&format!(
            "{param},{},{},{},{},{},{},{}\n",
            r.value,
            r.seeds,
            opt(r.target_bcubed),
            opt(r.final_bcubed),
            opt(r.final_top1),
            opt(r.final_mean_per_class),
            r.labels_spent
        ));
    }
    write_text(out.join("sweep.csv"), &csv)?;
    Ok(rows)
}

fn precision_of(ds: &Dataset, f: &Features, seed: u64) -> AppResult<Option<f64>> {
    match (&f.pretrain, &ds.target_labels) {
        (Some(_), Some(truth)) => Ok(Some(clustering_precision(&f.pool, truth, seed)?)),
        _ => Ok(None),
    }
}
