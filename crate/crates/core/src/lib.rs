//! Simulation and drift estimation for diffusions driven by colored noise.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod filtering;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod sgdct;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{estimate_path, Checkpoints, DriftEstimate, EstimatePath, Variant};
pub use filtering::{FilterConfig, FilterScheme};
pub use linalg::Matrix;
pub use model::{
    limit_coefficients, levy_limit, stationary_covariance, validate_filter_width, BasisFunction,
    ColoredModel, DiffusionFunction, Diffusion, DissipativityBounds, DriftBasis, LevyModel,
    LimitCoefficients, LimitModel,
};
pub use sgdct::LearningRate;
pub use simulate::{InitialState, Path, TimeGrid};
