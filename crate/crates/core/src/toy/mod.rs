//! Desk-scale self-supervised training: synthetic data, a small query/key
//! encoder pair, the combined contrastive + hallucination objective, and kNN
//! evaluation.

pub mod data;
pub mod encoder;
pub mod knn;
pub mod train;

pub use data::{augment, class_means, sample_dataset, test_split, train_split, Dataset, SyntheticDataSpec};
pub use encoder::{
    encode_backward, encode_forward, momentum_update, DenseLayer, EncoderGradient, ForwardCache,
    ToyEncoder,
};
pub use knn::{knn_eval, knn_eval_with};
pub use train::{embed, epochs_to_steps, evaluate_knn, train, StepMetrics, TrainConfig, TrainRun, Trainer};
