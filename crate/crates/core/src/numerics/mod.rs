//! Linear-algebra and transfer-function numerics.

pub mod hinf;
pub mod linalg;
pub mod system;

pub use hinf::{hinf_norm, hinf_norm_detail, sup_on_circle, HinfEstimate, DEFAULT_HINF_TOL};
pub use linalg::{
    dare, eigenvalues, exp_integral, expm, norm2, sigma_max, spectral_radius, stein, CMat, Mat,
};
pub use system::{circle_points, max_abs_diff, DiscreteSystem};
