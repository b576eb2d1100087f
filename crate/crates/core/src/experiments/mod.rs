//! Monte Carlo studies: replicated estimator runs, the CLT study, stationary
//! identity checks and the strong convergence rate.

pub mod catalog;
pub mod clt;
pub mod config;
pub mod harness;
pub mod identities;

pub use catalog::{run_experiment, strong_convergence, Bundle, Check, ConvergenceReport, Experiment, Overrides};
pub use clt::{
    clt_variance_mle, clt_variance_sgdct, experiment_clt, optimal_learning_rate, ou_stationary_predictions, CltSample,
    OuPredictions,
};
pub use config::{parse_config_set, RunConfig};
pub use harness::{run_replications, DataModel, MonteCarloSummary, ReplicationPlan};
pub use identities::{identity_residuals, stationary_moments, Identity, IdentityReport, IdentityResidual, MomentEstimate};
