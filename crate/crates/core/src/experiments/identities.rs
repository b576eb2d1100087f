//! Monte Carlo checks of stationary moment identities.
//!
//! Under the invariant measure `d/dt E[X ⊗ f(Z)] = 0` and, for `d = 1`,
//! `d/dt E[F(X)] = 0` with `F' = f`. Expanding the time derivatives gives:
//!
//! ```text
//! colored-state      E[(θ f(X) + g(X) Y/ε) f(X)]                               = 0
//! colored-filtered   E[(θ f(X) + g(X) Y/ε) ⊗ f(Z)] + E[X ⊗ ∇f(Z)(X - Z)] / δ   = 0
//! limit-filtered     E[drift(X) ⊗ f(Z)] + E[X ⊗ ∇f(Z)(X - Z)] / δ             = 0
//! ```
//!
//! where `drift` is the full limit drift, `-L x` for the Lévy model. For the
//! scalar OU limit `dX = -θX dt + sqrt(2D) dW` the filtered identity also has
//! the closed value `E[X(X - Z)] / δ = θ E[XZ] = D / (1 + θδ)`.
//!
//! Residuals are time averages over long runs after a burn-in; standard
//! errors come from batch means pooled across runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::config::RunConfig;
use crate::filtering::{ExpFilter, FilterConfig};
use crate::linalg::{self, mat_vec, Matrix};
use crate::model::{ColoredModel, DriftBasis, LimitModel};
use crate::noise::GaussianStream;
use crate::simulate::{drive_colored, drive_limit, DiffusionEval, InitialState, NoiseInit, Observer, TimeGrid};
use crate::stats::{pooled_estimate, BatchMeans};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identity {
    ColoredState,
    ColoredFiltered,
    LimitFiltered,
    LimitFilteredClosedForm,
}

impl Identity {
    pub fn name(&self) -> &'static str {
        match self {
            Identity::ColoredState => "colored-state",
            Identity::ColoredFiltered => "colored-filtered",
            Identity::LimitFiltered => "limit-filtered",
            Identity::LimitFilteredClosedForm => "limit-filtered-closed-form",
        }
    }
}

/// Residual `left - right` of one identity, entrywise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    /// `additive`, `levy` or `custom`
    pub model: String,
    pub identity: Identity,
    pub residual: Vec<f64>,
    pub standard_error: Vec<f64>,
    /// `|residual| ≤ 3 SE` in every entry
    pub pass: bool,
}

impl IdentityResidual {
    fn new(model: &str, identity: Identity, batches: &[Vec<f64>], offset: f64) -> Self {
        let (mean, se) = pooled_estimate(batches);
        let residual: Vec<f64> = mean.iter().map(|m| m - offset).collect();
        let pass = residual.iter().zip(&se).all(|(r, s)| r.abs() <= 3.0 * s);
        IdentityResidual {
            model: model.to_string(),
            identity,
            residual,
            standard_error: se,
            pass,
        }
    }

    /// Largest `|residual| / SE`.
    pub fn z_score(&self) -> f64 {
        self.residual
            .iter()
            .zip(&self.standard_error)
            .map(|(r, s)| r.abs() / s)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub residuals: Vec<IdentityResidual>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.pass)
    }
}

fn require_jacobian(basis: &DriftBasis) -> Result<()> {
    let d = basis.dim_in();
    let mut buf = vec![0.0; basis.dim_out() * d];
    if basis.analytic_jacobian(&vec![0.0; d], &mut buf) {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "the filtered identities need a basis with an analytic jacobian".into(),
        ))
    }
}

/// Shared bookkeeping for the `X ⊗ f(Z)` identities.
struct FilteredTerms {
    basis: DriftBasis,
    inv_delta: f64,
    filter: ExpFilter,
    fz: Vec<f64>,
    jac: Vec<f64>,
    diff: Vec<f64>,
    grad: Vec<f64>,
    out: Vec<f64>,
}

impl FilteredTerms {
    fn new(basis: &DriftBasis, filter: &FilterConfig, step: f64) -> Result<Self> {
        require_jacobian(basis)?;
        let (d, l) = (basis.dim_in(), basis.dim_out());
        Ok(FilteredTerms {
            basis: basis.clone(),
            inv_delta: 1.0 / filter.delta,
            filter: ExpFilter::new(filter, step, d)?,
            fz: vec![0.0; l],
            jac: vec![0.0; l * d],
            diff: vec![0.0; d],
            grad: vec![0.0; l],
            out: vec![0.0; d * l],
        })
    }

    /// `drift ⊗ f(Z) + X ⊗ ∇f(Z)(X - Z) / δ`, row-major `d x ℓ`.
    #[inline]
    fn integrand(&mut self, x: &[f64], drift: &[f64]) -> &[f64] {
        let z = self.filter.state();
        let l = self.fz.len();
        self.basis.eval(z, &mut self.fz);
        self.basis.analytic_jacobian(z, &mut self.jac);
        for (dv, (xi, zi)) in self.diff.iter_mut().zip(x.iter().zip(z)) {
            *dv = xi - zi;
        }
        mat_vec(&self.jac, &self.diff, &mut self.grad);
        for i in 0..x.len() {
            for j in 0..l {
                self.out[i * l + j] = drift[i] * self.fz[j] + self.inv_delta * x[i] * self.grad[j];
            }
        }
        &self.out
    }
}

struct ColoredObserver<'a> {
    theta: Vec<f64>,
    basis: &'a DriftBasis,
    g: DiffusionEval<'a>,
    inv_eps: f64,
    terms: FilteredTerms,
    burn: usize,
    n_steps: usize,
    state: Option<BatchMeans>,
    filtered: BatchMeans,
    fx: Vec<f64>,
    drift: Vec<f64>,
    gy: Vec<f64>,
}

impl Observer for ColoredObserver<'_> {
    fn observe(&mut self, k: usize, x: &[f64], y: Option<&[f64]>) {
        if k >= self.burn && k < self.n_steps {
            let y = y.expect("colored simulation supplies Y");
            self.basis.eval(x, &mut self.fx);
            mat_vec(&self.theta, &self.fx, &mut self.drift);
            self.g.apply(x, y, &mut self.gy);
            for (d, gy) in self.drift.iter_mut().zip(&self.gy) {
                *d += self.inv_eps * gy;
            }
            if let Some(state) = self.state.as_mut() {
                state.push(&[self.drift[0] * self.fx[0]]);
            }
            let v = self.terms.integrand(x, &self.drift);
            self.filtered.push(v);
        }
        self.terms.filter.advance(x);
    }
}

enum LimitDrift {
    Linear(Vec<f64>),
    Basis(Vec<f64>),
}

struct LimitObserver<'a> {
    model: &'a LimitModel,
    drift_kind: LimitDrift,
    terms: FilteredTerms,
    burn: usize,
    n_steps: usize,
    filtered: BatchMeans,
    closed: Option<BatchMeans>,
    fx: Vec<f64>,
    drift: Vec<f64>,
}

impl Observer for LimitObserver<'_> {
    fn observe(&mut self, k: usize, x: &[f64], _y: Option<&[f64]>) {
        if k >= self.burn && k < self.n_steps {
            match &self.drift_kind {
                LimitDrift::Linear(l) => {
                    mat_vec(l, x, &mut self.drift);
                    self.drift.iter_mut().for_each(|v| *v = -*v);
                }
                LimitDrift::Basis(theta) => {
                    self.terms.basis.eval(x, &mut self.fx);
                    mat_vec(theta, &self.fx, &mut self.drift);
                    if let LimitModel::Multiplicative { coefficients, .. } = self.model {
                        for (d, b) in self.drift.iter_mut().zip(coefficients.correction(x).iter()) {
                            *d += b;
                        }
                    }
                }
            }
            if let Some(closed) = self.closed.as_mut() {
                let z = self.terms.filter.state()[0];
                closed.push(&[self.terms.inv_delta * x[0] * (x[0] - z)]);
            }
            let v = self.terms.integrand(x, &self.drift);
            self.filtered.push(v);
        }
        self.terms.filter.advance(x);
    }
}

fn burn_index(grid: &TimeGrid, burn_in: f64) -> usize {
    ((grid.n_steps() as f64 * burn_in).round() as usize).min(grid.n_steps().saturating_sub(1))
}

/// Batch means of the colored identities for one seed: the state identity
/// (scalar models only) and the filtered identity.
fn colored_batches(
    model: &ColoredModel,
    filter: &FilterConfig,
    grid: &TimeGrid,
    seed: u64,
    burn_in: f64,
    batches: usize,
) -> Result<(Option<Vec<Vec<f64>>>, Vec<Vec<f64>>)> {
    let basis = model.basis();
    let (d, l) = (basis.dim_in(), basis.dim_out());
    let burn = burn_index(grid, burn_in);
    let samples = grid.n_steps() - burn;
    let scalar = d == 1 && l == 1;
    let mut obs = ColoredObserver {
        theta: linalg::to_row_major(model.theta()),
        basis,
        g: DiffusionEval::new(model.diffusion()),
        inv_eps: 1.0 / model.epsilon(),
        terms: FilteredTerms::new(basis, filter, grid.step())?,
        burn,
        n_steps: grid.n_steps(),
        state: scalar.then(|| BatchMeans::new(1, samples, batches)),
        filtered: BatchMeans::new(d * l, samples, batches),
        fx: vec![0.0; l],
        drift: vec![0.0; d],
        gy: vec![0.0; d],
    };
    let init = InitialState {
        x: None,
        y: NoiseInit::Stationary,
    };
    drive_colored(model, grid, &mut GaussianStream::new(seed), &init, &mut obs)?;
    Ok((obs.state.map(|s| s.batch_means()), obs.filtered.batch_means()))
}

fn limit_batches(
    model: &LimitModel,
    filter: &FilterConfig,
    grid: &TimeGrid,
    seed: u64,
    burn_in: f64,
    batches: usize,
    closed_form: bool,
) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
    let d = model.dim();
    let (basis, drift_kind) = match model {
        LimitModel::Additive { theta, basis, .. } | LimitModel::Multiplicative { theta, basis, .. } => {
            (basis.clone(), LimitDrift::Basis(linalg::to_row_major(theta)))
        }
        LimitModel::Levy { drift, .. } => (DriftBasis::NegIdentity(d), LimitDrift::Linear(linalg::to_row_major(drift))),
    };
    let l = basis.dim_out();
    let burn = burn_index(grid, burn_in);
    let samples = grid.n_steps() - burn;
    let mut obs = LimitObserver {
        model,
        drift_kind,
        terms: FilteredTerms::new(&basis, filter, grid.step())?,
        burn,
        n_steps: grid.n_steps(),
        filtered: BatchMeans::new(d * l, samples, batches),
        closed: closed_form.then(|| BatchMeans::new(1, samples, batches)),
        fx: vec![0.0; l],
        drift: vec![0.0; d],
    };
    drive_limit(model, grid, &mut GaussianStream::new(seed), None, &mut obs)?;
    Ok((obs.filtered.batch_means(), obs.closed.map(|c| c.batch_means())))
}

/// `D / (1 + θδ)` for a scalar OU limit with `f(x) = -x`, else `None`.
fn closed_form_target(model: &LimitModel, delta: f64) -> Option<f64> {
    match model {
        LimitModel::Additive {
            theta,
            basis: DriftBasis::NegIdentity(1),
            diffusion_sq,
        } => Some(diffusion_sq[(0, 0)] / (1.0 + theta[(0, 0)] * delta)),
        _ => None,
    }
}

/// Runs `M` colored and `M` limit paths (seeds `base_seed + r`) and reports
/// every identity that applies to the configured model.
pub fn identity_residuals(cfg: &RunConfig) -> Result<IdentityReport> {
    let cfg = cfg.clone().resolve()?;
    let filter = cfg
        .filter
        .ok_or_else(|| Error::InvalidParameter("the identity checks need a filter block with delta".into()))?;
    let grid = cfg.grid.grid()?;
    let colored = cfg.model.colored()?;
    let limit = cfg.model.limit()?;
    require_jacobian(colored.basis())?;
    let exp = &cfg.experiment;
    if exp.replications == 0 {
        return Err(Error::InvalidParameter("at least one replication is needed".into()));
    }
    let seeds: Vec<u64> = (0..exp.replications as u64).map(|r| exp.base_seed + r).collect();
    let kind = match &cfg.model {
        crate::experiments::config::ModelSpec::Additive { .. } => "additive",
        crate::experiments::config::ModelSpec::Levy { .. } => "levy",
        crate::experiments::config::ModelSpec::Custom { .. } => "custom",
    };

    let colored_runs = seeds
        .par_iter()
        .map(|&s| colored_batches(&colored, &filter, &grid, s, exp.burn_in, exp.batches))
        .collect::<Result<Vec<_>>>()?;
    let target = closed_form_target(&limit, filter.delta);
    let limit_runs = seeds
        .par_iter()
        .map(|&s| limit_batches(&limit, &filter, &grid, s, exp.burn_in, exp.batches, target.is_some()))
        .collect::<Result<Vec<_>>>()?;

    let mut report = IdentityReport::default();
    let state: Vec<Vec<f64>> = colored_runs.iter().filter_map(|(s, _)| s.clone()).flatten().collect();
    if !state.is_empty() {
        report.residuals.push(IdentityResidual::new(kind, Identity::ColoredState, &state, 0.0));
    }
    let filtered: Vec<Vec<f64>> = colored_runs.into_iter().flat_map(|(_, f)| f).collect();
    report
        .residuals
        .push(IdentityResidual::new(kind, Identity::ColoredFiltered, &filtered, 0.0));
    let (lim, closed): (Vec<_>, Vec<_>) = limit_runs.into_iter().unzip();
    let lim: Vec<Vec<f64>> = lim.into_iter().flatten().collect();
    report.residuals.push(IdentityResidual::new(kind, Identity::LimitFiltered, &lim, 0.0));
    if let Some(target) = target {
        let closed: Vec<Vec<f64>> = closed.into_iter().flatten().flatten().collect();
        report.residuals.push(IdentityResidual::new(
            kind,
            Identity::LimitFilteredClosedForm,
            &closed,
            target,
        ));
    }
    Ok(report)
}

/// Pooled time averages of the joint second moments of `(X, Y)`, row-major
/// `(d + n) x (d + n)`, with batch-means standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
}

impl MomentEstimate {
    pub fn mean_matrix(&self) -> Matrix {
        let k = (self.mean.len() as f64).sqrt() as usize;
        linalg::from_row_major(k, k, &self.mean)
    }

    pub fn se_matrix(&self) -> Matrix {
        let k = (self.standard_error.len() as f64).sqrt() as usize;
        linalg::from_row_major(k, k, &self.standard_error)
    }
}

pub fn stationary_moments(
    model: &ColoredModel,
    grid: &TimeGrid,
    seeds: &[u64],
    burn_in: f64,
    batches: usize,
) -> Result<MomentEstimate> {
    let k = model.dim() + model.noise_dim();
    let burn = burn_index(grid, burn_in);
    let samples = grid.n_steps() + 1 - burn;
    let runs = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<Vec<f64>>> {
            let mut bm = BatchMeans::new(k * k, samples, batches);
            let mut joint = vec![0.0; k];
            let mut prod = vec![0.0; k * k];
            let mut obs = crate::simulate::FnObserver(|step: usize, x: &[f64], y: Option<&[f64]>| {
                if step >= burn {
                    joint[..x.len()].copy_from_slice(x);
                    joint[x.len()..].copy_from_slice(y.expect("colored simulation supplies Y"));
                    for i in 0..k {
                        for j in 0..k {
                            prod[i * k + j] = joint[i] * joint[j];
                        }
                    }
                    bm.push(&prod);
                }
            });
            drive_colored(model, grid, &mut GaussianStream::new(seed), &InitialState::default(), &mut obs)?;
            Ok(bm.batch_means())
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<Vec<f64>> = runs.into_iter().flatten().collect();
    let (mean, standard_error) = pooled_estimate(&all);
    Ok(MomentEstimate { mean, standard_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{GridSpec, ModelSpec};
    use crate::filtering::FilterScheme;
    use crate::simulate::scalar_joint_covariance;

    #[test]
    fn scalar_identities_hold_on_a_short_run() {
        let mut cfg = RunConfig::new(ModelSpec::unit_scalar(0.2), GridSpec::fixed(200.0, 1e-4));
        cfg.filter = Some(FilterConfig::new(1.0, FilterScheme::Euler).unwrap());
        cfg.experiment.replications = 2;
        cfg.experiment.burn_in = 0.1;
        let report = identity_residuals(&cfg).unwrap();
        let names: Vec<Identity> = report.residuals.iter().map(|r| r.identity).collect();
        assert_eq!(
            names,
            vec![
                Identity::ColoredState,
                Identity::ColoredFiltered,
                Identity::LimitFiltered,
                Identity::LimitFilteredClosedForm
            ]
        );
        for r in &report.residuals {
            assert!(r.standard_error[0] > 0.0);
            // loose: this run is far shorter than the acceptance protocol
            assert!(r.z_score() < 5.0, "{r:?}");
        }
    }

    #[test]
    fn identity_integrand_vanishes_in_expectation_for_a_linear_scalar_limit() {
        // with f(x) = -x the limit-filtered integrand is θ x z - x (x - z) / δ,
        // whose stationary mean is θ E[XZ] - E[X(X - Z)] / δ = 0
        let limit = LimitModel::additive(Matrix::from_element(1, 1, 1.0), DriftBasis::NegIdentity(1), Matrix::from_element(1, 1, 0.5)).unwrap();
        assert!((closed_form_target(&limit, 1.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn basis_without_jacobian_rejected() {
        #[derive(Debug)]
        struct Opaque;
        impl crate::model::BasisFunction for Opaque {
            fn dim_in(&self) -> usize {
                1
            }
            fn dim_out(&self) -> usize {
                1
            }
            fn eval(&self, x: &[f64], out: &mut [f64]) {
                out[0] = -x[0].sin();
            }
        }
        let basis = DriftBasis::Custom(std::sync::Arc::new(Opaque));
        assert!(matches!(require_jacobian(&basis), Err(Error::Unsupported(_))));
    }

    #[test]
    fn moments_match_joint_lyapunov() {
        let model = ColoredModel::scalar_ou(1.0, 1.0, 1.0, 1.0, 0.3).unwrap();
        let grid = TimeGrid::with_horizon(300.0, 1e-3).unwrap();
        let est = stationary_moments(&model, &grid, &[1, 2], 0.1, 20).unwrap();
        let exact = scalar_joint_covariance(1.0, 1.0, 1.0, 1.0, 0.3).unwrap();
        let (m, se) = (est.mean_matrix(), est.se_matrix());
        for i in 0..2 {
            for j in 0..2 {
                // Euler bias at h/ε² ≈ 0.01 stays well inside 4 SE here
                assert!((m[(i, j)] - exact[(i, j)]).abs() < 4.0 * se[(i, j)] + 0.01, "{i}{j}: {m} vs {exact}");
            }
        }
    }
}
