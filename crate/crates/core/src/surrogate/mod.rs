//! The robust surrogate `φ_γ(θ; (x0, y0)) = sup_x { ℓ(θ; (x, y0)) - γ c_θ((x, y0), (x0, y0)) }`.
//!
//! Two solver paths exist. Training uses [`ascend_x`], plain fixed-step
//! gradient ascent in input space. Diagnostics work in feature space, where
//! [`maximize_z_exact`] solves the strongly concave problem to a certified
//! tolerance and [`checks`] evaluates the perturbation bounds against it.

pub mod ascent;
pub mod checks;
pub mod lipschitz;
pub mod loss;
pub mod solver;

pub use ascent::{ascend_x, ascend_x_with, AscentTrace, CostSpace};
pub use checks::{
    check_displacement_bound, check_displacement_bound_with, check_newton_bound, check_newton_bound_with, check_sandwich,
    envelope_check, envelope_grad_check, BoundReport, EnvelopeReport, SandwichReport,
};
pub use lipschitz::{lipschitz_constants, lipschitz_constants_with, L2Estimate, LipschitzCertificate, Method};
pub use loss::{LinearLoss, ParametricLoss, PointwiseLoss, QuadraticLoss, SoftmaxLoss};
pub use solver::{maximize_z_exact, newton_proxy, SurrogateResult};
