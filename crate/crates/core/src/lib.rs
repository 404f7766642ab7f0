//! Hard positive generation on the unit hypersphere for momentum-contrast
//! style self-supervised learning.
//!
//! Positives are synthesized by walking from a key embedding toward a
//! prototype (a spherical k-means centroid of recent keys) and stopping
//! before the walk would leave the key's own cluster. The stopping point has
//! a closed form; see [`hallucinate::t_star`].
//!
//! The numeric core is f64. Batch loops run on rayon when the `parallel`
//! feature is on and [`Execution::Parallel`] is selected; results are
//! identical either way.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
mod exec;
pub mod hallucinate;
pub mod io;
pub mod kmeans;
pub mod losses;
pub mod queue;
pub mod sphere;
pub mod toy;

pub use error::{Error, Result};
pub use exec::Execution;
pub use hallucinate::{
    hallucinate_batch, FilterMode, HallucinatedBatch, HallucinationConfig, HallucinationReport,
};
pub use kmeans::{KMeansConfig, PrototypeSet};
pub use losses::{halp_loss, info_nce, total_loss, LossBreakdown, LossValue, MuSchedule, QueryGradient};
pub use queue::MemoryQueue;
pub use sphere::{cos_sim, exp_map, geodesic_angle, log_map, project, slerp, TangentVector, UnitVector};
