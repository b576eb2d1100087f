//! Asymptotic normality of the filtered estimators on the scalar OU model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Checkpoints, Variant};
use crate::experiments::config::RunConfig;
use crate::experiments::harness::{run_replications, Failure, ReplicationPlan};
use crate::sgdct::LearningRate;
use crate::stats::{self, Histogram};

/// Limit variance `2(1 + δ)` of `√T(θ̂ - θ)` for the filtered MLE.
pub fn clt_variance_mle(delta: f64) -> f64 {
    2.0 * (1.0 + delta)
}

/// Limit variance `a² / (2(a - (1 + δ)))` of `√t(θ̃ - θ)` for filtered SGDCT.
pub fn clt_variance_sgdct(a: f64, delta: f64) -> Result<f64> {
    let threshold = 1.0 + delta;
    if !(a > threshold) {
        return Err(Error::CltCondition { a, threshold });
    }
    Ok(a * a / (2.0 * (a - threshold)))
}

/// The learning-rate scale minimizing [`clt_variance_sgdct`], `2(1 + δ)`.
pub fn optimal_learning_rate(delta: f64) -> f64 {
    2.0 * (1.0 + delta)
}

/// Stationary moments of the unit scalar model with filtered data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuPredictions {
    /// `E[Z Y/ε] = ε² / (2(1 + ε²)(δ + ε²))`
    pub ezy_over_eps: f64,
    /// `E[Z X] = 1 / (2(1 + δ))`
    pub ezx: f64,
    /// `E[Z²] = 1 / (2(1 + δ))`
    pub ez2: f64,
    /// Set when `δ ≤ 0`, where the filter is degenerate.
    pub width_flagged: bool,
}

pub fn ou_stationary_predictions(epsilon: f64, delta: f64) -> OuPredictions {
    let e2 = epsilon * epsilon;
    OuPredictions {
        ezy_over_eps: e2 / (2.0 * (1.0 + e2) * (delta + e2)),
        ezx: 1.0 / (2.0 * (1.0 + delta)),
        ez2: 1.0 / (2.0 * (1.0 + delta)),
        width_flagged: !(delta > 0.0),
    }
}

/// Samples below this size get the wide-confidence flag.
pub const WIDE_CONFIDENCE_BELOW: usize = 100;

/// Scaled errors of one estimator across independent runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltSample {
    pub variant: Variant,
    /// `√T (estimate - truth)`
    pub samples: Vec<f64>,
    pub predicted_variance: f64,
    pub fitted_mean: f64,
    pub fitted_variance: f64,
    pub bins: Histogram,
    pub wide_confidence: bool,
    pub failures: Vec<Failure>,
}

impl CltSample {
    fn new(variant: Variant, samples: Vec<f64>, predicted_variance: f64, failures: Vec<Failure>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "{} completed only {} runs; at least 2 are needed",
                variant.name(),
                samples.len()
            )));
        }
        Ok(CltSample {
            variant,
            fitted_mean: stats::mean(&samples),
            fitted_variance: stats::variance(&samples),
            bins: stats::freedman_diaconis(&samples),
            wide_confidence: samples.len() < WIDE_CONFIDENCE_BELOW,
            predicted_variance,
            samples,
            failures,
        })
    }

    /// Standard error of the fitted mean under the predicted variance.
    pub fn mean_standard_error(&self) -> f64 {
        (self.predicted_variance / self.samples.len() as f64).sqrt()
    }

    pub fn variance_relative_error(&self) -> f64 {
        (self.fitted_variance - self.predicted_variance).abs() / self.predicted_variance
    }
}

/// Runs the filtered MLE and filtered SGDCT on `r` independent scalar
/// colored paths and collects `√T (estimate - θ)` at the final time.
///
/// The configuration must describe a one-dimensional model with a filter;
/// its variant list is ignored. The learning rate defaults to `a = 4, b = 1`.
/// When `a ≤ 1 + δ` only the MLE arm runs and the SGDCT arm reports the
/// violated condition.
pub fn experiment_clt(cfg: &RunConfig, r: usize) -> Result<(CltSample, Result<CltSample>)> {
    if r < 2 {
        return Err(Error::InvalidParameter(format!("the CLT study needs R >= 2, got {r}")));
    }
    let mut cfg = cfg.clone();
    let filter = cfg
        .filter
        .ok_or_else(|| Error::InvalidParameter("the CLT study needs a filter block with delta".into()))?;
    let lr = *cfg.estimator.lr.get_or_insert(LearningRate { a: 4.0, b: 1.0 });
    let sgdct_variance = clt_variance_sgdct(lr.a, filter.delta);
    cfg.estimator.variant = None;
    cfg.estimator.variants = match sgdct_variance {
        Ok(_) => vec![Variant::MleFiltered, Variant::SgdctFiltered],
        Err(_) => vec![Variant::MleFiltered],
    };
    let cfg = cfg.resolve()?;
    let truth = cfg.model.truth()?;
    if truth.len() != 1 {
        return Err(Error::dimension("CLT model", "1x1", format!("{}x{}", truth.nrows(), truth.ncols())));
    }
    let theta = truth[(0, 0)];
    let mut plan = ReplicationPlan::from_config(&cfg)?;
    plan.checkpoints = Checkpoints::final_only(plan.grid.n_steps());
    let horizon = plan.grid.horizon();
    let summaries = run_replications(&plan, r, cfg.experiment.base_seed)?;

    let sample = |i: usize, predicted: f64| -> Result<CltSample> {
        let s = &summaries[i];
        let mut failures = s.failures.clone();
        let mut samples = Vec::with_capacity(s.finals.len());
        for f in &s.finals {
            match &f.value {
                Some(v) => samples.push(horizon.sqrt() * (v[0] - theta)),
                None => failures.push(Failure {
                    seed: f.seed,
                    error: "no estimate at the final time".into(),
                }),
            }
        }
        CltSample::new(s.variant, samples, predicted, failures)
    };
    let mle = sample(0, clt_variance_mle(filter.delta))?;
    let sgdct = sgdct_variance.and_then(|v| sample(1, v));
    Ok((mle, sgdct))
}
