//! JSON run configuration.
//!
//! Every block rejects unknown keys. [`RunConfig::resolve`] materializes all
//! defaults so the echoed configuration reproduces a run on its own.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Checkpoints, Variant};
use crate::filtering::FilterConfig;
use crate::linalg::{self, Matrix};
use crate::model::{default_eta, ColoredModel, Diffusion, DriftBasis, LevyModel, LimitModel};
use crate::sgdct::LearningRate;
use crate::simulate::TimeGrid;

/// Matrices are written as arrays of rows.
pub type Rows = Vec<Vec<f64>>;

pub fn rows_to_matrix(what: &'static str, rows: &Rows) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::dimension(what, "non-empty rectangular array of rows", format!("{rows:?}")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(linalg::from_row_major(r, c, &flat))
}

pub fn matrix_to_rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn default_basis() -> String {
    "neg_identity".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DiffusionSpec {
    Constant(Rows),
    /// `g(x) = sqrt(κ + β‖x‖²) I`
    Radial { kappa: f64, beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// Constant diffusion `G`.
    Additive {
        theta: Rows,
        #[serde(default = "default_basis")]
        basis: String,
        #[serde(rename = "G")]
        g: Rows,
        #[serde(rename = "A")]
        a: Rows,
        sigma: Rows,
        epsilon: f64,
    },
    /// Two-dimensional rotational noise with radial diffusion.
    Levy {
        theta: f64,
        alpha: f64,
        gamma: f64,
        kappa: f64,
        beta: f64,
        #[serde(default = "default_eta")]
        eta: f64,
        epsilon: f64,
    },
    Custom {
        theta: Rows,
        basis: String,
        diffusion: DiffusionSpec,
        #[serde(rename = "A")]
        a: Rows,
        sigma: Rows,
        epsilon: f64,
    },
}

impl ModelSpec {
    /// The scalar model with `θ = G = A = σ = 1`.
    pub fn unit_scalar(epsilon: f64) -> Self {
        ModelSpec::Additive {
            theta: vec![vec![1.0]],
            basis: default_basis(),
            g: vec![vec![1.0]],
            a: vec![vec![1.0]],
            sigma: vec![vec![1.0]],
            epsilon,
        }
    }

    pub fn unit_levy(epsilon: f64) -> Self {
        ModelSpec::Levy {
            theta: 1.0,
            alpha: 1.0,
            gamma: 1.0,
            kappa: 1.0,
            beta: 1.0,
            eta: 1.0,
            epsilon,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            ModelSpec::Additive { epsilon, .. } | ModelSpec::Levy { epsilon, .. } | ModelSpec::Custom { epsilon, .. } => {
                *epsilon
            }
        }
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        match self {
            ModelSpec::Additive { epsilon, .. } | ModelSpec::Levy { epsilon, .. } | ModelSpec::Custom { epsilon, .. } => {
                *epsilon = eps
            }
        }
    }

    pub fn is_levy(&self) -> bool {
        matches!(self, ModelSpec::Levy { .. })
    }

    pub fn levy(&self) -> Option<LevyModel> {
        match self {
            ModelSpec::Levy { theta, alpha, gamma, kappa, beta, eta, .. } => Some(LevyModel {
                theta: *theta,
                alpha: *alpha,
                gamma: *gamma,
                kappa: *kappa,
                beta: *beta,
                eta: *eta,
            }),
            _ => None,
        }
    }

    pub fn colored(&self) -> Result<ColoredModel> {
        match self {
            ModelSpec::Additive { theta, basis, g, a, sigma, epsilon } => {
                let theta = rows_to_matrix("theta", theta)?;
                ColoredModel::new(
                    theta.clone(),
                    DriftBasis::from_name(basis, theta.nrows())?,
                    Diffusion::Constant(rows_to_matrix("G", g)?),
                    rows_to_matrix("A", a)?,
                    rows_to_matrix("sigma", sigma)?,
                    *epsilon,
                )
            }
            ModelSpec::Levy { epsilon, .. } => {
                let levy = self.levy().expect("levy spec");
                levy.validate()?;
                levy.colored(*epsilon)
            }
            ModelSpec::Custom { theta, basis, diffusion, a, sigma, epsilon } => {
                let theta = rows_to_matrix("theta", theta)?;
                let d = theta.nrows();
                let diffusion = match diffusion {
                    DiffusionSpec::Constant(g) => Diffusion::Constant(rows_to_matrix("G", g)?),
                    DiffusionSpec::Radial { kappa, beta } => Diffusion::Radial { dim: d, kappa: *kappa, beta: *beta },
                };
                ColoredModel::new(
                    theta,
                    DriftBasis::from_name(basis, d)?,
                    diffusion,
                    rows_to_matrix("A", a)?,
                    rows_to_matrix("sigma", sigma)?,
                    *epsilon,
                )
            }
        }
    }

    pub fn limit(&self) -> Result<LimitModel> {
        match self.levy() {
            Some(levy) => levy.limit(),
            None => LimitModel::from_colored(&self.colored()?),
        }
    }

    /// The matrix the estimators should recover: `θ`, or `L` for the Lévy model.
    pub fn truth(&self) -> Result<Matrix> {
        match self.levy() {
            Some(levy) => crate::model::levy_limit(&levy),
            None => Ok(self.colored()?.theta().clone()),
        }
    }

    pub fn basis(&self) -> Result<DriftBasis> {
        Ok(self.colored()?.basis().clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `h = ε³`
    EpsCubed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_rule: Option<StepRule>,
    /// Gaussian draws summed per step; a run with `refine = r` at step `h`
    /// shares its Brownian path with a `refine = 1` run at step `h / r`.
    #[serde(default = "one")]
    pub refine: usize,
}

fn one() -> usize {
    1
}

/// Rounds to 15 significant digits so that e.g. `0.1³` becomes `0.001`.
fn tidy(v: f64) -> f64 {
    format!("{v:.14e}").parse().unwrap_or(v)
}

impl GridSpec {
    pub fn eps_cubed(horizon: f64) -> Self {
        GridSpec {
            horizon,
            h: None,
            h_rule: Some(StepRule::EpsCubed),
            refine: 1,
        }
    }

    pub fn fixed(horizon: f64, h: f64) -> Self {
        GridSpec {
            horizon,
            h: Some(h),
            h_rule: None,
            refine: 1,
        }
    }

    /// A step rule, when present, takes precedence over a literal `h`.
    fn resolve(&mut self, epsilon: f64) {
        if self.h.is_none() && self.h_rule.is_none() {
            self.h_rule = Some(StepRule::EpsCubed);
        }
        if let Some(StepRule::EpsCubed) = self.h_rule {
            self.h = Some(tidy(epsilon.powi(3)));
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let h = self
            .h
            .ok_or_else(|| Error::InvalidParameter("grid step unresolved".into()))?;
        TimeGrid::with_horizon(self.horizon, h)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<LearningRate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Rows>,
}

impl EstimatorSpec {
    /// `variant` if given, else `variants`.
    pub fn selected(&self) -> Vec<Variant> {
        match self.variant {
            Some(v) => vec![v],
            None => self.variants.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum CheckpointSpec {
    Final,
    /// `count` times spaced geometrically from `first` to `T`.
    Geometric { first: f64, count: usize },
    Every { interval: f64 },
    Times { times: Vec<f64> },
}

impl Default for CheckpointSpec {
    fn default() -> Self {
        CheckpointSpec::Geometric { first: 1.0, count: 40 }
    }
}

impl CheckpointSpec {
    pub fn resolve(&self, grid: &TimeGrid) -> Result<Checkpoints> {
        let n = grid.n_steps();
        let idx = |t: f64| ((t / grid.step()).round() as usize).clamp(1, n);
        Ok(match self {
            CheckpointSpec::Final => Checkpoints::final_only(n),
            CheckpointSpec::Geometric { first, count } => Checkpoints::geometric(n, idx(*first), *count),
            CheckpointSpec::Every { interval } => Checkpoints::every(n, idx(*interval)),
            CheckpointSpec::Times { times } => Checkpoints::at_times(times, grid.step(), n)?,
        })
    }
}

fn default_m() -> usize {
    20
}
fn default_r() -> usize {
    1000
}
fn default_seed() -> u64 {
    1
}
fn default_batches() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(rename = "M", default = "default_m")]
    pub replications: usize,
    #[serde(rename = "R", default = "default_r")]
    pub clt_samples: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default)]
    pub checkpoints: CheckpointSpec,
    /// Fraction of the horizon discarded before stationary averages.
    #[serde(default)]
    pub burn_in: f64,
    /// Batches per run for batch-means standard errors.
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Correlation scales for the convergence-rate study.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            replications: default_m(),
            clt_samples: default_r(),
            base_seed: default_seed(),
            checkpoints: CheckpointSpec::default(),
            burn_in: 0.0,
            batches: default_batches(),
            epsilons: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "one")]
    pub thinning: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { directory: None, thinning: 1 }
    }
}

/// Which equation generates the data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    #[default]
    Colored,
    Limit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub system: System,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn new(model: ModelSpec, grid: GridSpec) -> Self {
        RunConfig {
            model,
            system: System::Colored,
            grid,
            filter: None,
            estimator: EstimatorSpec::default(),
            experiment: ExperimentSpec::default(),
            output: OutputSpec::default(),
        }
    }

    /// Parses JSON, reporting the line and column of schema errors.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(json_error)
    }

    /// Fills in derived defaults and validates the whole configuration.
    pub fn resolve(mut self) -> Result<Self> {
        self.grid.resolve(self.model.epsilon());
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.colored()?;
        if let Some(levy) = self.model.levy() {
            crate::model::levy_limit(&levy)?;
        }
        let grid = self.grid.grid()?;
        if self.grid.refine == 0 {
            return Err(Error::InvalidParameter("grid.refine must be at least 1".into()));
        }
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        if let Some(lr) = &self.estimator.lr {
            lr.validate()?;
        }
        for v in self.estimator.selected() {
            if v.needs_filter() && self.filter.is_none() {
                return Err(Error::InvalidParameter(format!(
                    "variant {} needs a filter block with delta",
                    v.name()
                )));
            }
            if v.is_sgdct() && self.estimator.lr.is_none() {
                return Err(Error::InvalidParameter(format!("variant {} needs estimator.lr", v.name())));
            }
            if v.is_levy() && self.model.colored()?.dim() != 2 {
                return Err(Error::dimension("Levy estimator state", 2, self.model.colored()?.dim()));
            }
        }
        if self.output.thinning == 0 || grid.n_steps() % self.output.thinning != 0 {
            return Err(Error::InvalidParameter(format!(
                "output.thinning {} must divide the step count {}",
                self.output.thinning,
                grid.n_steps()
            )));
        }
        if !(0.0..1.0).contains(&self.experiment.burn_in) {
            return Err(Error::InvalidParameter("experiment.burn_in must lie in [0, 1)".into()));
        }
        self.experiment.checkpoints.resolve(&grid)?;
        self.theta0()?;
        Ok(())
    }

    pub fn theta0(&self) -> Result<Option<Matrix>> {
        self.estimator
            .theta0
            .as_ref()
            .map(|rows| rows_to_matrix("theta0", rows))
            .transpose()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub(crate) fn json_error(e: serde_json::Error) -> Error {
    Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
}

/// One configuration or a list of them.
pub fn parse_config_set(text: &str) -> Result<Vec<RunConfig>> {
    if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(json_error)
    } else {
        Ok(vec![RunConfig::from_json(text)?])
    }
}

pub fn config_set_to_json(configs: &[RunConfig]) -> String {
    match configs {
        [one] => one.to_json(),
        many => serde_json::to_string_pretty(many).expect("config serializes"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OU: &str = r#"{
        "model": {"kind": "additive", "theta": [[1]], "G": [[1]], "A": [[1]], "sigma": [[1]], "epsilon": 0.1},
        "grid": {"T": 10}
    }"#;

    #[test]
    fn eps_cubed_rule_gives_tidy_step() {
        let cfg = RunConfig::from_json(OU).unwrap().resolve().unwrap();
        assert_eq!(cfg.grid.h, Some(0.001));
        assert_eq!(cfg.grid.grid().unwrap().n_steps(), 10_000);
        let json = cfg.to_json();
        assert!(json.contains("\"h\": 0.001"), "{json}");
        assert!(json.contains("neg_identity"));
        let again = RunConfig::from_json(&json).unwrap().resolve().unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let bad = OU.replace("\"T\": 10", "\"T\": 10, \"bogus\": 1");
        let err = RunConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn filtered_variant_needs_delta() {
        let mut cfg = RunConfig::from_json(OU).unwrap();
        cfg.estimator.variant = Some(Variant::MleFiltered);
        let err = cfg.clone().resolve().unwrap_err().to_string();
        assert!(err.contains("delta"), "{err}");
        cfg.filter = Some(FilterConfig::exact(1.0).unwrap());
        assert!(cfg.resolve().is_ok());
    }

    #[test]
    fn levy_defaults_eta() {
        let text = r#"{"model": {"kind": "levy", "theta": 1, "alpha": 1, "gamma": 1, "kappa": 1, "beta": 1, "epsilon": 0.1},
                       "grid": {"T": 1, "h": 0.0001}}"#;
        let cfg = RunConfig::from_json(text).unwrap().resolve().unwrap();
        assert!(cfg.to_json().contains("\"eta\": 1.0"));
        assert_eq!(cfg.grid.h, Some(1e-4));
        let l = cfg.model.truth().unwrap();
        assert_eq!(l, Matrix::from_row_slice(2, 2, &[0.75, 0.25, -0.25, 0.75]));
    }

    #[test]
    fn levy_variant_on_scalar_model_rejected() {
        let mut cfg = RunConfig::from_json(OU).unwrap();
        cfg.filter = Some(FilterConfig::exact(1.0).unwrap());
        cfg.estimator.variant = Some(Variant::MleLevy);
        assert!(matches!(cfg.resolve(), Err(Error::Dimension { .. })));
    }

    #[test]
    fn config_sets() {
        let list = format!("[{OU}, {OU}]");
        assert_eq!(parse_config_set(&list).unwrap().len(), 2);
        assert_eq!(parse_config_set(OU).unwrap().len(), 1);
    }
}
