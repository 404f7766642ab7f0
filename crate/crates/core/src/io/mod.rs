//! On-disk formats: embedding files, labels, run configs, metrics CSV and
//! the key=value reports written next to outputs.

mod config;
mod embedding;
mod labels;
mod report;

pub use config::{read_config, RunConfigDocument};
pub use embedding::{
    read_embedding_rows, read_embeddings, write_embedding_rows, write_embeddings, EMBEDDING_MAGIC,
    EMBEDDING_VERSION, HEADER_LEN,
};
pub use labels::{read_labels, read_labels_for, write_labels};
pub use report::{
    cluster_stats_document, hallucination_report_document, write_metrics_csv, write_text,
    METRICS_HEADER,
};
