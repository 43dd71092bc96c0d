//! Potential network, reverse-mode tape, AdamW, and checkpoints.

pub mod checkpoint;
pub mod model;
pub mod optim;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use model::{
    ActivationPattern, ParamVars, PotentialModel, DEFAULT_CLAMP, DEFAULT_HIDDEN, PARAM_NAMES,
};
pub use optim::{AdamWConfig, NonFiniteUpdate, OptimizerState};
pub use tape::{Gradients, NonFiniteGradient, Tape, Var};
