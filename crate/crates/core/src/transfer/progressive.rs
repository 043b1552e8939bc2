//! The cluster → annotate → finetune loop.
//!
//! [`ProgressiveLoop`] is a resumable state machine. After construction it
//! has finetuned on the indicator labels and, unless the budget is empty,
//! holds the first evolution's eigen-samples as pending queries. Answers are
//! fed with [`ProgressiveLoop::answer`]; once every query is answered,
//! [`ProgressiveLoop::advance`] finetunes, re-embeds, records metrics and
//! proposes the next evolution's queries.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::RngCore;

use crate::clustering::{
    ackmeans, bcubed_precision, kmeans_best_of, select_eigen_samples, AnchorSet, ClusterState,
    InitMethod,
    KMeansConfig, SkipReason,
};
use crate::embedding::{EmbeddingSet, LabeledSet, SampleId};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::transfer::adapter::{AdapterConfig, AdapterModel};
use crate::transfer::budget::Budget;
use crate::transfer::evaluate::evaluate;
use crate::transfer::finetune::{finetune, reembed, FinetuneConfig};

/// KMeans restarts behind the BCubed column.
pub const METRIC_RESTARTS: usize = 10;

/// Version tag of [`LoopSnapshot`].
pub const SNAPSHOT_VERSION: u32 = 1;

/// How anchors follow the feature space across evolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AnchorPolicy {
    /// Anchors are the current-space features of every labeled sample.
    #[default]
    Recompute,
    /// Each anchor keeps the vector it had when its sample was labeled.
    Freeze,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LoopConfig {
    pub adapter: AdapterConfig,
    /// `seed` is replaced by a per-evolution seed.
    pub finetune: FinetuneConfig,
    /// `seed` is replaced by a per-evolution seed.
    pub kmeans: KMeansConfig,
    pub anchor_policy: AnchorPolicy,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            adapter: AdapterConfig::default(),
            finetune: FinetuneConfig::default(),
            kmeans: KMeansConfig::default(),
            anchor_policy: AnchorPolicy::Recompute,
            seed: 0,
        }
    }
}

/// Ground truth used only for reporting metrics.
#[derive(Debug, Clone)]
pub struct Evaluator {
    /// Held-out split in the base feature space.
    pub test: EmbeddingSet,
    pub test_truth: LabeledSet,
    /// Labels of the clustered pool, for BCubed precision.
    pub pool_truth: Option<LabeledSet>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRow {
    pub kappa: usize,
    /// Extra labels bought so far (indicators excluded).
    pub labels_spent: usize,
    pub bcubed: Option<f64>,
    pub top1: Option<f64>,
    pub mean_per_class: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepSkip {
    pub kappa: usize,
    pub cluster: usize,
    pub reason: SkipReason,
}

/// Ledger of a run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvolutionState {
    /// Completed evolutions.
    pub kappa: usize,
    pub anchors: AnchorSet,
    pub labeled: LabeledSet,
    pub history: Vec<MetricsRow>,
    /// Every oracle query, in order.
    pub queried: Vec<SampleId>,
    pub skipped: Vec<StepSkip>,
    /// Evolutions whose picks were cut short by the remaining budget.
    pub partial_steps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PendingQuery {
    pub cluster: usize,
    pub id: SampleId,
    pub answer: Option<usize>,
}

/// Everything needed to resume a loop, given the same base features.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LoopSnapshot {
    pub version: u32,
    pub budget: Budget,
    pub config: LoopConfig,
    pub model: AdapterModel,
    pub state: EvolutionState,
    pub pending: Vec<PendingQuery>,
    pub last_clusters: Option<ClusterState>,
    pub finished: bool,
}

/// Source of labels for pending queries.
#[derive(Debug, Clone)]
pub enum Oracle {
    GroundTruth(LabeledSet),
    /// A human answers through [`ProgressiveLoop::answer`]; driving suspends.
    Interactive,
}

impl Oracle {
    /// `Ok(None)` means the answer is not available yet.
    pub fn label(&self, id: SampleId) -> Result<Option<usize>> {
        match self {
            Oracle::GroundTruth(truth) => truth
                .get(id)
                .map(Some)
                .ok_or_else(|| Error::Data(format!("ground truth has no label for sample {id}"))),
            Oracle::Interactive => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveOutcome {
    Finished,
    /// Waiting on answers the oracle could not give.
    Suspended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AnswerError {
    #[error("sample {0} is not pending")]
    NotPending(SampleId),
    #[error("class {class} out of range for sample {id}")]
    ClassOutOfRange { id: SampleId, class: usize },
}

#[derive(Debug, Clone)]
pub struct ProgressiveLoop {
    base: EmbeddingSet,
    eval: Option<Evaluator>,
    budget: Budget,
    cfg: LoopConfig,
    model: AdapterModel,
    current: EmbeddingSet,
    state: EvolutionState,
    pending: Vec<PendingQuery>,
    last_clusters: Option<ClusterState>,
    finished: bool,
}

fn step_seed(seed: u64, what: &str, kappa: usize) -> u64 {
    RngStream::new(seed, "loop")
        .derive_indexed(what, kappa as u64)
        .rng()
        .next_u64()
}

/// Adapter initialization shared by the loop and the baselines.
pub(crate) fn initial_model(dim: usize, classes: usize, cfg: &LoopConfig) -> Result<AdapterModel> {
    AdapterModel::new(
        dim,
        classes,
        &cfg.adapter,
        &RngStream::new(cfg.seed, "loop").derive_indexed("init", 0),
    )
}

/// Finetune for evolution `kappa`: fresh head, warm adapter.
pub(crate) fn finetune_step(
    model: &AdapterModel,
    base: &EmbeddingSet,
    labeled: &LabeledSet,
    cfg: &LoopConfig,
    kappa: usize,
) -> Result<AdapterModel> {
    let mut m = model.clone();
    if kappa > 0 {
        m.reset_head(
            cfg.adapter.head_init_std,
            &RngStream::new(cfg.seed, "loop").derive_indexed("head", kappa as u64),
        );
    }
    let ft = FinetuneConfig {
        seed: step_seed(cfg.seed, "finetune", kappa),
        ..cfg.finetune.clone()
    };
    finetune(&m, base, labeled, &ft)
}

/// Metrics of `model` at evolution `kappa`.
pub(crate) fn measure(
    model: &AdapterModel,
    current: &EmbeddingSet,
    eval: Option<&Evaluator>,
    cfg: &LoopConfig,
    kappa: usize,
    labels_spent: usize,
) -> Result<MetricsRow> {
    let mut row = MetricsRow {
        kappa,
        labels_spent,
        bcubed: None,
        top1: None,
        mean_per_class: None,
    };
    let Some(eval) = eval else {
        return Ok(row);
    };
    if let Some(truth) = &eval.pool_truth {
        let classes = model.classes().min(current.len());
        let km = KMeansConfig {
            init: InitMethod::KmeansPlusPlus,
            seed: step_seed(cfg.seed, "metric-kmeans", kappa),
            ..cfg.kmeans.clone()
        };
        let clusters = kmeans_best_of(current, classes, &km, METRIC_RESTARTS)?;
        row.bcubed = Some(bcubed_precision(&clusters.assignment, current.ids(), truth)?);
    }
    let acc = evaluate(model, &eval.test, &eval.test_truth)?;
    row.top1 = Some(acc.top1);
    row.mean_per_class = Some(acc.mean_per_class);
    Ok(row)
}

/// Exactly one indicator per class, each present in `base`.
pub(crate) fn validate_indicators(
    base: &EmbeddingSet,
    indicators: &LabeledSet,
    classes: usize,
) -> Result<()> {
    if indicators.classes() != classes {
        return Err(Error::config(
            "transfer.indicators",
            format!("indicators span {} classes, budget {classes}", indicators.classes()),
        ));
    }
    let mut seen = alloc::vec![false; classes];
    for (id, c) in indicators.iter() {
        if base.position(id).is_none() {
            return Err(Error::Data(format!("indicator {id} is not in the feature set")));
        }
        if core::mem::replace(&mut seen[c], true) {
            return Err(Error::config(
                "transfer.indicators",
                format!("class {c} has more than one indicator"),
            ));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::config(
            "transfer.indicators",
            "every class needs exactly one indicator",
        ));
    }
    Ok(())
}

impl ProgressiveLoop {
    /// Finetunes on the indicators and proposes the first evolution's queries.
    pub fn start(
        base: EmbeddingSet,
        indicators: &LabeledSet,
        budget: Budget,
        cfg: LoopConfig,
        eval: Option<Evaluator>,
    ) -> Result<Self> {
        let classes = budget.classes();
        validate_indicators(&base, indicators, classes)?;

        let model = initial_model(base.dim(), classes, &cfg)?;
        let model = finetune_step(&model, &base, indicators, &cfg, 0)?;
        let current = reembed(&model, &base)?;
        let ids: Vec<SampleId> = indicators.iter().map(|(id, _)| id).collect();
        let anchors = AnchorSet::from_features(&current, &ids)?;
        let row = measure(&model, &current, eval.as_ref(), &cfg, 0, 0)?;
        let mut lp = Self {
            base,
            eval,
            budget,
            cfg,
            model,
            current,
            state: EvolutionState {
                kappa: 0,
                anchors,
                labeled: indicators.clone(),
                history: alloc::vec![row],
                queried: Vec::new(),
                skipped: Vec::new(),
                partial_steps: Vec::new(),
            },
            pending: Vec::new(),
            last_clusters: None,
            finished: false,
        };
        lp.propose_or_finish()?;
        Ok(lp)
    }

    /// Rebuilds a loop from a snapshot and the base features it was run on.
    pub fn resume(base: EmbeddingSet, snapshot: LoopSnapshot, eval: Option<Evaluator>) -> Result<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Data(format!(
                "unsupported snapshot version {}",
                snapshot.version
            )));
        }
        if let Some(c) = &snapshot.last_clusters {
            if c.assignment.len() != base.len() {
                return Err(Error::shape("snapshot does not match the feature set"));
            }
        }
        let current = reembed(&snapshot.model, &base)?;
        Ok(Self {
            base,
            eval,
            budget: snapshot.budget,
            cfg: snapshot.config,
            model: snapshot.model,
            current,
            state: snapshot.state,
            pending: snapshot.pending,
            last_clusters: snapshot.last_clusters,
            finished: snapshot.finished,
        })
    }

    pub fn snapshot(&self) -> LoopSnapshot {
        LoopSnapshot {
            version: SNAPSHOT_VERSION,
            budget: self.budget.clone(),
            config: self.cfg.clone(),
            model: self.model.clone(),
            state: self.state.clone(),
            pending: self.pending.clone(),
            last_clusters: self.last_clusters.clone(),
            finished: self.finished,
        }
    }

    pub fn state(&self) -> &EvolutionState {
        &self.state
    }

    pub fn model(&self) -> &AdapterModel {
        &self.model
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }

    pub fn config(&self) -> &LoopConfig {
        &self.cfg
    }

    pub fn base(&self) -> &EmbeddingSet {
        &self.base
    }

    /// Features in the current (adapter) space.
    pub fn current_features(&self) -> &EmbeddingSet {
        &self.current
    }

    /// Cluster index per sample from the latest anchor-constrained clustering.
    pub fn last_assignment(&self) -> Option<&[usize]> {
        self.last_clusters.as_ref().map(|c| c.assignment.as_slice())
    }

    /// The latest anchor-constrained clustering, in the features it was run on.
    pub fn last_clusters(&self) -> Option<&ClusterState> {
        self.last_clusters.as_ref()
    }

    pub fn pending(&self) -> &[PendingQuery] {
        &self.pending
    }

    pub fn unanswered(&self) -> impl Iterator<Item = &PendingQuery> + '_ {
        self.pending.iter().filter(|q| q.answer.is_none())
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// All pending queries answered and the loop not finished.
    pub fn is_ready(&self) -> bool {
        !self.finished && self.pending.iter().all(|q| q.answer.is_some())
    }

    pub fn answer(&mut self, id: SampleId, class: usize) -> core::result::Result<(), AnswerError> {
        if class >= self.budget.classes() {
            return Err(AnswerError::ClassOutOfRange { id, class });
        }
        let q = self
            .pending
            .iter_mut()
            .find(|q| q.id == id && q.answer.is_none())
            .ok_or(AnswerError::NotPending(id))?;
        q.answer = Some(class);
        Ok(())
    }

    /// Completes the current evolution with the recorded answers.
    pub fn advance(&mut self) -> Result<()> {
        if self.finished {
            return Err(Error::Contract("the loop has already finished".into()));
        }
        if !self.is_ready() {
            return Err(Error::Contract("pending queries are still unanswered".into()));
        }
        let kappa = self.state.kappa + 1;
        let answered: Vec<PendingQuery> = core::mem::take(&mut self.pending);
        let mut labeled = self.state.labeled.clone();
        for q in &answered {
            labeled.insert(q.id, q.answer.expect("ready implies answered"))?;
        }
        let model = finetune_step(&self.model, &self.base, &labeled, &self.cfg, kappa)?;
        let current = reembed(&model, &self.base)?;
        let anchors = match self.cfg.anchor_policy {
            AnchorPolicy::Recompute => {
                let ids: Vec<SampleId> = labeled.iter().map(|(id, _)| id).collect();
                AnchorSet::from_features(&current, &ids)?
            }
            AnchorPolicy::Freeze => {
                let mut vectors = self.state.anchors.vectors().clone();
                let mut origin = self.state.anchors.origin_ids().to_vec();
                for q in &answered {
                    let v = self.current.get(q.id).expect("pending ids come from the pool");
                    vectors.push_row(v)?;
                    origin.push(q.id);
                }
                AnchorSet::new(vectors, origin)?
            }
        };
        self.state.queried.extend(answered.iter().map(|q| q.id));
        let row = measure(
            &model,
            &current,
            self.eval.as_ref(),
            &self.cfg,
            kappa,
            self.state.queried.len(),
        )?;
        self.model = model;
        self.current = current;
        self.state.kappa = kappa;
        self.state.labeled = labeled;
        self.state.anchors = anchors;
        self.state.history.push(row);
        self.propose_or_finish()
    }

    /// Answers pending queries from `oracle` and advances until the loop
    /// finishes or the oracle has no answer.
    pub fn drive(&mut self, oracle: &Oracle) -> Result<DriveOutcome> {
        loop {
            if self.finished {
                return Ok(DriveOutcome::Finished);
            }
            let open: Vec<SampleId> = self.unanswered().map(|q| q.id).collect();
            for id in open {
                match oracle.label(id)? {
                    Some(c) => self
                        .answer(id, c)
                        .map_err(|e| Error::Data(format!("oracle answer rejected: {e}")))?,
                    None => return Ok(DriveOutcome::Suspended),
                }
            }
            self.advance()?;
        }
    }

    fn propose_or_finish(&mut self) -> Result<()> {
        loop {
            let next = self.state.kappa + 1;
            let Some(k) = self.budget.k_at(next) else {
                self.finished = true;
                return Ok(());
            };
            let kcfg = KMeansConfig {
                seed: step_seed(self.cfg.seed, "ackmeans", next),
                ..self.cfg.kmeans.clone()
            };
            let state = ackmeans(&self.current, k, &self.state.anchors, &kcfg)?;
            let labeled: BTreeSet<SampleId> = self.state.labeled.ids();
            let selection = select_eigen_samples(&self.current, &state, &labeled)?;
            self.state.skipped.extend(selection.skipped.iter().map(|s| StepSkip {
                kappa: next,
                cluster: s.cluster,
                reason: s.reason,
            }));
            let remaining = self.budget.total_extra().saturating_sub(self.state.queried.len());
            let mut picks = selection.picks;
            if picks.len() > remaining {
                picks.truncate(remaining);
                self.state.partial_steps.push(next);
            }
            self.last_clusters = Some(state);
            self.pending = picks
                .into_iter()
                .map(|p| PendingQuery {
                    cluster: p.cluster,
                    id: p.id,
                    answer: None,
                })
                .collect();
            if !self.pending.is_empty() {
                return Ok(());
            }
            // nothing to ask: the evolution completes without new labels
            self.advance()?;
            if self.finished || !self.pending.is_empty() {
                return Ok(());
            }
        }
    }
}
