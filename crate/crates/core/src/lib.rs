//! Robust stabilization of sampled-data loops whose sensor time-stamps carry
//! an unknown constant clock offset.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: matrix exponentials, state-space arithmetic in the
//!   delay-variable convention, H∞ norms.
//! * [`discretization`]: the offset-parameterized discrete plant/estimator
//!   model and the standing assumption checks.
//! * [`factorization`]: doubly coprime factors, the offset residual `R(Δ)`
//!   and the robustness level γ.
//! * [`synthesis`]: Youla-parameter search for multi-input plants plus the
//!   LQR, additive-uncertainty and model-reduction baselines.
//! * [`scalar_exact`]: exact offset bounds and constructive controllers for
//!   first-order plants.
//! * [`analysis`]: offset sweeps, stabilized-interval search and simulation.

pub mod analysis;
pub mod discretization;
pub mod error;
pub mod factorization;
pub mod numerics;
pub mod scalar_exact;
pub mod synthesis;

pub use error::{Error, Result};
pub use numerics::{DiscreteSystem, Mat};
