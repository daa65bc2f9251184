//! Adversarial data augmentation in semantic space.
//!
//! The crate trains small softmax classifiers against fictitious worst-case
//! target distributions that sit within a Wasserstein ball of the source
//! distribution, where distance is measured in the feature space of the
//! network itself. It contains:
//!
//! - [`net`]: a feedforward classifier with analytic derivatives, plus the
//!   binary model format.
//! - [`transport`]: the label-aware transport cost and exact discrete
//!   Wasserstein / penalty-duality oracles.
//! - [`surrogate`]: the robust surrogate loss, its inner maximizers, the
//!   regularized Newton proxy and the bound checkers.
//! - [`trainer`]: the alternating augment-then-train loop.
//! - [`ensemble`]: penalty-grid ensembles with max-logit model selection.
//! - [`data`]: synthetic single-source domains with covariate shifts.
//! - [`verify`]: seeded verification suites emitting JSON records.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod net;
pub mod optim;
pub mod par;
pub mod rng;
pub mod surrogate;
pub mod trainer;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use net::{Activation, LabeledExample, Network};
