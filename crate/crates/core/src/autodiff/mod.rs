//! Reverse-mode differentiation over dense matrices, plus the layers,
//! optimizer and gradient checker built on it.

mod checkpoint;
mod gradcheck;
mod nn;
mod optim;
mod params;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckEntry, GradCheckReport, Stencil, DEFAULT_STEP, KINK_THRESHOLD};
pub use nn::{Activation, LayerNorm, Linear, Mlp, MlpSpec, LAYER_NORM_EPS, LEAKY_SLOPE};
pub use optim::{AdamConfig, AdamState};
pub use params::{Bound, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
