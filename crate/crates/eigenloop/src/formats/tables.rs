use std::path::Path;

use eigenloop_core::clustering::ClusterState;
use eigenloop_core::contrastive::EpochRecord;
use eigenloop_core::transfer::MetricsRow;
use eigenloop_core::{EmbeddingSet, Error as CoreError, Matrix};

use crate::error::{AppError, AppResult};
use crate::formats::save_embeddings;

pub const LOSS_HEADER: &str = "epoch,loss,alignment,uniformity";
pub const METRICS_HEADER: &str = "kappa,labels_spent,bcubed,top1,mean_per_class";
pub const CLUSTERS_HEADER: &str = "sample_id,cluster,is_anchor_cluster";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn loss_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{LOSS_HEADER}\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch, r.terms.loss, r.terms.alignment, r.terms.uniformity
        ));
    }
    out
}

/// Empty fields stand for metrics that were not computed.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.kappa,
            r.labels_spent,
            opt(r.bcubed),
            opt(r.top1),
            opt(r.mean_per_class)
        ));
    }
    out
}

pub fn clusters_csv(features: &EmbeddingSet, state: &ClusterState) -> AppResult<String> {
    if state.assignment.len() != features.len() {
        return Err(AppError::Core(CoreError::Shape(
            "cluster assignment does not match the feature set".into(),
        )));
    }
    let mut out = format!("{CLUSTERS_HEADER}\n");
    for (id, &c) in features.ids().iter().zip(&state.assignment) {
        out.push_str(&format!("{id},{c},{}\n", state.is_anchor_cluster(c)));
    }
    Ok(out)
}

/// Writes `clusters.csv` and `centers.emb1` into `dir`.
pub fn save_clusters(dir: impl AsRef<Path>, features: &EmbeddingSet, state: &ClusterState) -> AppResult<()> {
    let dir = dir.as_ref();
    write_text(dir.join("clusters.csv"), &clusters_csv(features, state)?)?;
    let centers = EmbeddingSet::with_sequential_ids(Matrix::clone(&state.centers))?;
    save_embeddings(dir.join("centers.emb1"), &centers)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> AppResult<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}
