//! On-disk formats: EMB1 embeddings, label sidecars, CSV import, ENC1
//! encoder checkpoints, CSV tables and loop-state checkpoints.

mod checkpoint;
mod emb;
mod labels;
mod state;
mod tables;

pub use checkpoint::{load_encoder, read_encoder, save_encoder, write_encoder, ENC1_MAGIC, ENC1_VERSION};
pub use emb::{
    import_csv, load_embeddings, read_embeddings, save_embeddings, write_embeddings, ReadError, WriteError, EMB1_MAGIC,
    EMB1_VERSION,
};
pub use labels::{load_labels, parse_labels, save_labels, write_labels};
pub use state::{load_snapshot, save_snapshot, snapshot_from_json, snapshot_to_json, STATE_FORMAT};
pub use tables::{
    clusters_csv, loss_csv, metrics_csv, save_clusters, write_text, CLUSTERS_HEADER, LOSS_HEADER,
    METRICS_HEADER,
};
