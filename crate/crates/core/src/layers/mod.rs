//! Invertible layers and the composed network.

mod checkpoint;
mod config;
mod coupling;
mod invconv;
mod linalg;
mod model;
mod mscm;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta,
    CHECKPOINT_MAGIC,
};
pub use config::ModelConfig;
pub use coupling::AffineCoupling;
pub use invconv::InvConv1x1;
pub use linalg::orthonormality_error;
pub use model::{init_model, CostReport, InnPar, InvertibleBlock};
pub use mscm::{Conv1d, Mscm};

/// Parameter count reported for the published model, in thousands.
pub const PUBLISHED_PARAMS_K: f64 = 372.0;
/// FLOPs reported for the published model at length 625, in millions.
pub const PUBLISHED_FLOPS_M: f64 = 0.018;
