//! Progressive few-label transfer: budget, adapter, finetuning, the loop and
//! its random baseline.

pub mod adapter;
pub mod baseline;
pub mod budget;
pub mod evaluate;
pub mod finetune;
pub mod progressive;

pub use adapter::{cross_entropy_grad, AdapterConfig, AdapterGrads, AdapterModel, AdapterTrace};
pub use baseline::{draw_random_ids, random_baseline, BaselineOutcome};
pub use budget::Budget;
pub use evaluate::{accuracy_from_predictions, evaluate, Accuracy};
pub use finetune::{finetune, reembed, training_accuracy, FinetuneConfig};
pub use progressive::{
    AnchorPolicy, AnswerError, DriveOutcome, EvolutionState, Evaluator, LoopConfig, LoopSnapshot,
    MetricsRow, Oracle, PendingQuery, ProgressiveLoop, StepSkip, METRIC_RESTARTS, SNAPSHOT_VERSION,
};
