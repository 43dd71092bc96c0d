//! Fair stochastic re-ranking with learned transport potentials.
//!
//! A pointwise potential network maps a query's min-max scaled scores to a
//! dual potential of an entropic assignment problem between documents and
//! rank positions. The recovered transport plan is Sinkhorn-projected into
//! a doubly-stochastic policy and trained against the entropic dual plus a
//! fairness-of-exposure penalty. An exact LP baseline solves the
//! FOE-constrained problem per query, and two samplers (perturbed
//! assignment and Birkhoff decomposition) draw rankings from any policy.
//!
//! Module map:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`ot`] | costs, log-domain Sinkhorn, duals, Hungarian assignment |
//! | [`fairness`] | exposure, FOE, expected nDCG, utility |
//! | [`net`] | potential MLP, reverse-mode tape, AdamW, checkpoints |
//! | [`comot`] | training loop and policy inference |
//! | [`foe_lp`] | dense simplex and the FOE-constrained baseline |
//! | [`sampler`] | Gumbel matching, Birkhoff decomposition |
//! | [`data`] | JSONL datasets, preprocessing, synthetic generator |

pub mod comot;
pub mod data;
pub mod error;
pub mod fairness;
pub mod foe_lp;
pub mod matrix;
pub mod net;
pub mod numerics;
pub mod ot;
pub mod sampler;

pub use error::{Error, Result};
pub use matrix::Matrix;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
