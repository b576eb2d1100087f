//! Model definitions for the colored-noise system and its white-noise limit.
//!
//! The slow variable `X ∈ ℝᵈ` is driven by a fast Ornstein–Uhlenbeck process
//! `Y ∈ ℝⁿ` with correlation time `ε²`:
//!
//! ```text
//! dX = θ f(X) dt + g(X) Y/ε dt
//! dY = -A/ε² Y dt + σ/ε dW
//! ```
//!
//! As `ε → 0`, `X` converges to the Itô SDE
//! `dX = (θ f(X) + b(X)) dt + sqrt(2 Dˢ(X)) dW`, whose coefficients are
//! computed by [`limit_coefficients`].

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// A user supplied drift basis `f: ℝᵈ → ℝˡ`.
pub trait BasisFunction: Send + Sync + fmt::Debug {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    /// Writes the row-major `ℓ x d` Jacobian. Returns `false` when no analytic
    /// form exists, in which case callers fall back to finite differences.
    fn jacobian(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

/// The feature map `f` of a drift that is linear in its parameters, `h(x) = θ f(x)`.
#[derive(Clone, Debug)]
pub enum DriftBasis {
    /// `f(x) = -x`
    NegIdentity(usize),
    /// `f(x) = x`
    Identity(usize),
    /// `f(x) = -x³`, componentwise
    NegCubic(usize),
    Custom(Arc<dyn BasisFunction>),
}

impl DriftBasis {
    pub fn dim_in(&self) -> usize {
        match self {
            DriftBasis::NegIdentity(d) | DriftBasis::Identity(d) | DriftBasis::NegCubic(d) => *d,
            DriftBasis::Custom(f) => f.dim_in(),
        }
    }

    pub fn dim_out(&self) -> usize {
        match self {
            DriftBasis::NegIdentity(d) | DriftBasis::Identity(d) | DriftBasis::NegCubic(d) => *d,
            DriftBasis::Custom(f) => f.dim_out(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriftBasis::NegIdentity(_) => "neg_identity",
            DriftBasis::Identity(_) => "identity",
            DriftBasis::NegCubic(_) => "neg_cubic",
            DriftBasis::Custom(_) => "custom",
        }
    }

    pub fn from_name(name: &str, dim: usize) -> Result<Self> {
        match name {
            "neg_identity" => Ok(DriftBasis::NegIdentity(dim)),
            "identity" => Ok(DriftBasis::Identity(dim)),
            "neg_cubic" => Ok(DriftBasis::NegCubic(dim)),
            other => Err(Error::InvalidParameter(format!(
                "unknown basis `{other}` (expected neg_identity, identity or neg_cubic)"
            ))),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DriftBasis::NegIdentity(_) => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v;
                }
            }
            DriftBasis::Identity(_) => out.copy_from_slice(x),
            DriftBasis::NegCubic(_) => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v * v * v;
                }
            }
            DriftBasis::Custom(f) => f.eval(x, out),
        }
    }

    pub fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out()];
        self.eval(x, &mut out);
        out
    }

    /// Row-major `ℓ x d` Jacobian, analytic for the built-in bases.
    pub fn analytic_jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        let d = x.len();
        match self {
            DriftBasis::NegIdentity(_) | DriftBasis::Identity(_) | DriftBasis::NegCubic(_) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..d {
                    out[i * d + i] = match self {
                        DriftBasis::NegIdentity(_) => -1.0,
                        DriftBasis::Identity(_) => 1.0,
                        _ => -3.0 * x[i] * x[i],
                    };
                }
                true
            }
            DriftBasis::Custom(f) => f.jacobian(x, out),
        }
    }

    /// Jacobian from the analytic form when available, central differences otherwise.
    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        let (l, d) = (self.dim_out(), self.dim_in());
        let mut buf = vec![0.0; l * d];
        if self.analytic_jacobian(x, &mut buf) {
            return linalg::from_row_major(l, d, &buf);
        }
        let mut jac = Matrix::zeros(l, d);
        let step = fd_step(x);
        let mut xp = x.to_vec();
        let (mut fp, mut fm) = (vec![0.0; l], vec![0.0; l]);
        for k in 0..d {
            xp[k] = x[k] + step;
            self.eval(&xp, &mut fp);
            xp[k] = x[k] - step;
            self.eval(&xp, &mut fm);
            xp[k] = x[k];
            for i in 0..l {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        jac
    }
}

/// Finite-difference step used wherever an analytic derivative is missing.
pub(crate) fn fd_step(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    1e-5 * (1.0 + norm)
}

/// A user supplied state-dependent diffusion map `g: ℝᵈ → ℝᵈˣⁿ`.
pub trait DiffusionFunction: Send + Sync + fmt::Debug {
    /// `(d, n)`
    fn dims(&self) -> (usize, usize);
    /// Row-major `d x n`.
    fn eval(&self, x: &[f64], out: &mut [f64]);
    /// Writes `∂g_ij/∂x_k` at `out[k*d*n + i*n + j]`; `false` if unavailable.
    fn derivatives(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

/// The matrix `g(x)` multiplying the colored noise.
#[derive(Clone, Debug)]
pub enum Diffusion {
    Constant(Matrix),
    /// `g(x) = sqrt(κ + β‖x‖²) I`
    Radial { dim: usize, kappa: f64, beta: f64 },
    Custom(Arc<dyn DiffusionFunction>),
}

impl Diffusion {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Diffusion::Constant(g) => g.shape(),
            Diffusion::Radial { dim, .. } => (*dim, *dim),
            Diffusion::Custom(g) => g.dims(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Diffusion::Constant(_))
    }

    pub fn eval(&self, x: &[f64]) -> Matrix {
        let (d, n) = self.dims();
        match self {
            Diffusion::Constant(g) => g.clone(),
            Diffusion::Radial { kappa, beta, .. } => {
                Matrix::identity(d, n) * radial_scale(*kappa, *beta, x)
            }
            Diffusion::Custom(g) => {
                let mut buf = vec![0.0; d * n];
                g.eval(x, &mut buf);
                linalg::from_row_major(d, n, &buf)
            }
        }
    }

    /// `∂g/∂x_k` for each `k`, analytic for the built-in maps.
    pub fn derivatives(&self, x: &[f64]) -> Vec<Matrix> {
        let (d, n) = self.dims();
        match self {
            Diffusion::Constant(_) => vec![Matrix::zeros(d, n); d],
            Diffusion::Radial { kappa, beta, .. } => {
                let s = radial_scale(*kappa, *beta, x);
                (0..d)
                    .map(|k| Matrix::identity(d, n) * (beta * x[k] / s))
                    .collect()
            }
            Diffusion::Custom(g) => {
                let mut buf = vec![0.0; d * d * n];
                if g.derivatives(x, &mut buf) {
                    return (0..d)
                        .map(|k| linalg::from_row_major(d, n, &buf[k * d * n..(k + 1) * d * n]))
                        .collect();
                }
                let step = fd_step(x);
                let mut xp = x.to_vec();
                (0..d)
                    .map(|k| {
                        xp[k] = x[k] + step;
                        let plus = self.eval(&xp);
                        xp[k] = x[k] - step;
                        let minus = self.eval(&xp);
                        xp[k] = x[k];
                        (plus - minus) / (2.0 * step)
                    })
                    .collect()
            }
        }
    }
}

#[inline]
pub(crate) fn radial_scale(kappa: f64, beta: f64, x: &[f64]) -> f64 {
    (kappa + beta * x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Full specification of the fast/slow colored-noise system.
#[derive(Clone, Debug)]
pub struct ColoredModel {
    theta: Matrix,
    basis: DriftBasis,
    diffusion: Diffusion,
    ou_drift: Matrix,
    ou_volatility: Matrix,
    epsilon: f64,
}

impl ColoredModel {
    /// Validates dimensions, stability of the OU drift `A`, positive
    /// definiteness of `σσᵀ` and `ε > 0`.
    pub fn new(
        theta: Matrix,
        basis: DriftBasis,
        diffusion: Diffusion,
        ou_drift: Matrix,
        ou_volatility: Matrix,
        epsilon: f64,
    ) -> Result<Self> {
        let d = basis.dim_in();
        let l = basis.dim_out();
        if theta.shape() != (d, l) {
            return Err(Error::dimension(
                "drift matrix theta",
                format!("{d}x{l}"),
                format!("{}x{}", theta.nrows(), theta.ncols()),
            ));
        }
        let (gd, n) = diffusion.dims();
        if gd != d {
            return Err(Error::dimension("diffusion rows", d, gd));
        }
        if ou_drift.shape() != (n, n) {
            return Err(Error::dimension(
                "OU drift matrix",
                format!("{n}x{n}"),
                format!("{}x{}", ou_drift.nrows(), ou_drift.ncols()),
            ));
        }
        if ou_volatility.nrows() != n {
            return Err(Error::dimension("OU volatility rows", n, ou_volatility.nrows()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        linalg::ensure_positive_stable(&ou_drift)?;
        let cov = &ou_volatility * ou_volatility.transpose();
        let min_ev = cov.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if !(min_ev > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma sigma^T must be positive definite (smallest eigenvalue {min_ev:e})"
            )));
        }
        Ok(ColoredModel {
            theta,
            basis,
            diffusion,
            ou_drift,
            ou_volatility,
            epsilon,
        })
    }

    /// The scalar model `dX = -θX dt + G Y/ε dt`, `dY = -A/ε² Y dt + σ/ε dW`.
    pub fn scalar_ou(theta: f64, g: f64, a: f64, sigma: f64, epsilon: f64) -> Result<Self> {
        let m = |v: f64| Matrix::from_element(1, 1, v);
        ColoredModel::new(
            m(theta),
            DriftBasis::NegIdentity(1),
            Diffusion::Constant(m(g)),
            m(a),
            m(sigma),
            epsilon,
        )
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }
    pub fn basis(&self) -> &DriftBasis {
        &self.basis
    }
    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }
    pub fn ou_drift(&self) -> &Matrix {
        &self.ou_drift
    }
    pub fn ou_volatility(&self) -> &Matrix {
        &self.ou_volatility
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Copy of the model with a different correlation scale.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        ColoredModel::new(
            self.theta.clone(),
            self.basis.clone(),
            self.diffusion.clone(),
            self.ou_drift.clone(),
            self.ou_volatility.clone(),
            epsilon,
        )
    }

    /// Slow dimension `d`.
    pub fn dim(&self) -> usize {
        self.basis.dim_in()
    }
    /// Fast dimension `n`.
    pub fn noise_dim(&self) -> usize {
        self.ou_drift.nrows()
    }
    /// Brownian dimension `m`.
    pub fn brownian_dim(&self) -> usize {
        self.ou_volatility.ncols()
    }

    pub fn stationary_covariance(&self) -> Result<Matrix> {
        stationary_covariance(&self.ou_drift, &self.ou_volatility)
    }
}

/// Stationary covariance `Σ∞` of `dY = -A Y dt + σ dW`, i.e. the solution of
/// `A Σ∞ + Σ∞ Aᵀ = σσᵀ`.
///
/// The same matrix is the stationary covariance of the fast process for every
/// `ε`, since the `1/ε²` scalings cancel.
pub fn stationary_covariance(ou_drift: &Matrix, ou_volatility: &Matrix) -> Result<Matrix> {
    let sigma = ou_volatility * ou_volatility.transpose();
    linalg::solve_lyapunov(ou_drift, &sigma)
}

/// Drift and diffusion coefficients of the white-noise limit.
///
/// With `B = gA⁻¹`, `R = gΣ∞` and `D = R Bᵀ = g Σ∞ A⁻ᵀ gᵀ`, the limit drift
/// correction is `b = ∇·Dᵀ - B ∇·Rᵀ`, where the divergence of a matrix is
/// taken row by row: `(∇·M)_i = Σ_j ∂_j M_ij`.
#[derive(Clone, Debug)]
pub struct LimitCoefficients {
    diffusion: Diffusion,
    stationary_cov: Matrix,
    ou_drift_inv: Matrix,
    /// `Σ∞ A⁻ᵀ`
    kernel: Matrix,
}

impl LimitCoefficients {
    pub fn stationary_cov(&self) -> &Matrix {
        &self.stationary_cov
    }

    /// `D(x) = g(x) Σ∞ A⁻ᵀ g(x)ᵀ`
    pub fn diffusion_matrix(&self, x: &[f64]) -> Matrix {
        let g = self.diffusion.eval(x);
        &g * &self.kernel * g.transpose()
    }

    /// `Dˢ(x) = (D + Dᵀ)/2`
    pub fn symmetric_diffusion(&self, x: &[f64]) -> Matrix {
        linalg::symmetrize(&self.diffusion_matrix(x))
    }

    /// The drift correction `b(x)`; identically zero for constant `g`.
    pub fn correction(&self, x: &[f64]) -> DVector<f64> {
        let d = x.len();
        if self.diffusion.is_constant() {
            return DVector::zeros(d);
        }
        let g = self.diffusion.eval(x);
        let dg = self.diffusion.derivatives(x);
        let n = g.ncols();
        let mut div_dt = DVector::zeros(d);
        let mut div_rt = DVector::zeros(n);
        for (j, dgj) in dg.iter().enumerate() {
            // ∂_j D = (∂_j g) K gᵀ + g K (∂_j g)ᵀ, and (∇·Dᵀ)_i = Σ_j (∂_j D)_ji
            let dd = dgj * &self.kernel * g.transpose() + &g * &self.kernel * dgj.transpose();
            for i in 0..d {
                div_dt[i] += dd[(j, i)];
            }
            // (∇·Rᵀ)_a = Σ_j (∂_j g Σ∞)_ja
            let dr = dgj * &self.stationary_cov;
            for a in 0..n {
                div_rt[a] += dr[(j, a)];
            }
        }
        let b = &g * &self.ou_drift_inv;
        div_dt - b * div_rt
    }
}

pub fn limit_coefficients(model: &ColoredModel) -> Result<LimitCoefficients> {
    let stationary_cov = model.stationary_covariance()?;
    let ou_drift_inv = model
        .ou_drift
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("OU drift matrix A".into()))?;
    let kernel = &stationary_cov * ou_drift_inv.transpose();
    Ok(LimitCoefficients {
        diffusion: model.diffusion.clone(),
        stationary_cov,
        ou_drift_inv,
        kernel,
    })
}

/// The white-noise limit SDE.
#[derive(Clone, Debug)]
pub enum LimitModel {
    /// `dX = θ f(X) dt + sqrt(2Dˢ) dW` with constant `Dˢ`.
    Additive {
        theta: Matrix,
        basis: DriftBasis,
        diffusion_sq: Matrix,
    },
    /// `dX = -L X dt + sqrt(κ₀ + β₀‖X‖²) dW` in two dimensions.
    Levy { drift: Matrix, kappa0: f64, beta0: f64 },
    /// General multiplicative case, coefficients evaluated pointwise.
    Multiplicative {
        theta: Matrix,
        basis: DriftBasis,
        coefficients: LimitCoefficients,
    },
}

impl LimitModel {
    pub fn additive(theta: Matrix, basis: DriftBasis, diffusion_sq: Matrix) -> Result<Self> {
        let d = basis.dim_in();
        if diffusion_sq.shape() != (d, d) {
            return Err(Error::dimension(
                "limit diffusion",
                format!("{d}x{d}"),
                format!("{}x{}", diffusion_sq.nrows(), diffusion_sq.ncols()),
            ));
        }
        let asym = (&diffusion_sq - diffusion_sq.transpose()).amax();
        if asym > 1e-12 * (1.0 + diffusion_sq.amax()) {
            return Err(Error::InvalidParameter(format!(
                "limit diffusion must be symmetric (asymmetry {asym:e})"
            )));
        }
        let min_ev = linalg::min_symmetric_eigenvalue(&diffusion_sq);
        if min_ev < -1e-12 {
            return Err(Error::IndefiniteDiffusion { eigenvalue: min_ev });
        }
        Ok(LimitModel::Additive {
            theta,
            basis,
            diffusion_sq,
        })
    }

    /// Limit of a colored model; constant `g` yields the additive form.
    pub fn from_colored(model: &ColoredModel) -> Result<Self> {
        let coefficients = limit_coefficients(model)?;
        match model.diffusion() {
            Diffusion::Constant(_) => {
                let ds = coefficients.symmetric_diffusion(&vec![0.0; model.dim()]);
                LimitModel::additive(model.theta().clone(), model.basis().clone(), ds)
            }
            _ => Ok(LimitModel::Multiplicative {
                theta: model.theta().clone(),
                basis: model.basis().clone(),
                coefficients,
            }),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LimitModel::Additive { basis, .. } | LimitModel::Multiplicative { basis, .. } => {
                basis.dim_in()
            }
            LimitModel::Levy { drift, .. } => drift.nrows(),
        }
    }
}

/// The two-dimensional multiplicative example with `A = αI + γJ`,
/// `σ = sqrt(η) I`, `h(x) = -θx` and `g(x) = sqrt(κ + β‖x‖²) I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModel {
    pub theta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub beta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

pub(crate) fn default_eta() -> f64 {
    1.0
}

impl LevyModel {
    pub fn new(theta: f64, alpha: f64, gamma: f64, kappa: f64, beta: f64, eta: f64) -> Result<Self> {
        let model = LevyModel {
            theta,
            alpha,
            gamma,
            kappa,
            beta,
            eta,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta", self.theta),
            ("alpha", self.alpha),
            ("kappa", self.kappa),
            ("eta", self.eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        self.alpha * self.alpha + self.gamma * self.gamma
    }
    pub fn kappa0(&self) -> f64 {
        self.kappa * self.eta / self.rho()
    }
    pub fn beta0(&self) -> f64 {
        self.beta * self.eta / self.rho()
    }

    /// `A = αI + γJ`
    pub fn ou_drift(&self) -> Matrix {
        Matrix::identity(2, 2) * self.alpha + linalg::rotation_generator() * self.gamma
    }

    pub fn colored(&self, epsilon: f64) -> Result<ColoredModel> {
        self.validate()?;
        ColoredModel::new(
            Matrix::identity(2, 2) * self.theta,
            DriftBasis::NegIdentity(2),
            Diffusion::Radial {
                dim: 2,
                kappa: self.kappa,
                beta: self.beta,
            },
            self.ou_drift(),
            Matrix::identity(2, 2) * self.eta.sqrt(),
            epsilon,
        )
    }

    pub fn limit(&self) -> Result<LimitModel> {
        Ok(LimitModel::Levy {
            drift: levy_limit(self)?,
            kappa0: self.kappa0(),
            beta0: self.beta0(),
        })
    }
}

/// The drift matrix `L = (θ - β₀/2) I + (γβ₀/(2α)) J` of the limit equation
/// `dX = -L X dt + sqrt(κ₀ + β₀‖X‖²) dW`.
pub fn levy_limit(model: &LevyModel) -> Result<Matrix> {
    model.validate()?;
    let beta0 = model.beta0();
    if !(model.theta > beta0 / 2.0) {
        return Err(Error::Ergodicity {
            theta: model.theta,
            half_beta0: beta0 / 2.0,
        });
    }
    let diag = model.theta - beta0 / 2.0;
    let rot = model.gamma * beta0 / (2.0 * model.alpha);
    Ok(Matrix::identity(2, 2) * diag + linalg::rotation_generator() * rot)
}

/// Dissipativity constants: `θf(x)·x ≤ a - b‖x‖²` and `Ay·y ≥ c‖y‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipativityBounds {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Whether the filter width satisfies `δ > c / (2bc - ‖G‖²)`.
///
/// Errors when `2bc ≤ ‖G‖²`, since then no width is admissible.
pub fn validate_filter_width(bounds: DissipativityBounds, g_norm: f64, delta: f64) -> Result<bool> {
    if !(bounds.a > 0.0 && bounds.b > 0.0 && bounds.c > 0.0) {
        return Err(Error::InvalidParameter(
            "dissipativity constants must be positive".into(),
        ));
    }
    let margin = 2.0 * bounds.b * bounds.c - g_norm * g_norm;
    if !(margin > 0.0) {
        return Err(Error::Assumption(format!(
            "2bc - |G|^2 = {margin} must be positive"
        )));
    }
    Ok(delta > bounds.c / margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_2_1(alpha: f64, gamma: f64, eta: f64) -> (Matrix, Matrix) {
        let a = Matrix::identity(2, 2) * alpha + linalg::rotation_generator() * gamma;
        (a, Matrix::identity(2, 2) * eta.sqrt())
    }

    #[test]
    fn rotational_ou_covariance_is_isotropic() {
        let (a, s) = example_2_1(1.0, 1.0, 1.0);
        let cov = stationary_covariance(&a, &s).unwrap();
        assert!((cov - Matrix::identity(2, 2) * 0.5).amax() < 1e-14);

        let (a, s) = example_2_1(2.0, 0.7, 3.0);
        let cov = stationary_covariance(&a, &s).unwrap();
        assert!((cov - Matrix::identity(2, 2) * (3.0 / 4.0)).amax() < 1e-14);
    }

    #[test]
    fn scaled_identity_covariance() {
        let a = Matrix::identity(3, 3);
        let s = Matrix::identity(3, 3) * 2f64.sqrt();
        let cov = stationary_covariance(&a, &s).unwrap();
        assert!((cov - Matrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn constant_diffusion_has_no_correction() {
        let (a, s) = example_2_1(1.0, 1.0, 1.0);
        let g = Matrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 2.0]);
        let model = ColoredModel::new(
            Matrix::identity(2, 2),
            DriftBasis::NegIdentity(2),
            Diffusion::Constant(g.clone()),
            a.clone(),
            s,
            0.1,
        )
        .unwrap();
        let coeffs = limit_coefficients(&model).unwrap();
        for x in [[0.0, 0.0], [1.0, -2.0], [3.5, 0.25]] {
            assert_eq!(coeffs.correction(&x), DVector::zeros(2));
        }
        let cov = Matrix::identity(2, 2) * 0.5;
        let expected = linalg::symmetrize(&(&g * cov * a.try_inverse().unwrap().transpose() * g.transpose()));
        assert!((coeffs.symmetric_diffusion(&[0.4, 0.1]) - expected).amax() < 1e-14);
    }

    #[derive(Debug)]
    struct Skewed;

    impl DiffusionFunction for Skewed {
        fn dims(&self) -> (usize, usize) {
            (2, 2)
        }
        fn eval(&self, x: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&[1.0 + x[0] * x[0], x[1], (x[0] * x[1]).sin(), 2.0 + x[1].cos()]);
        }
    }

    #[test]
    fn rotational_symmetric_diffusion_matches_closed_form() {
        // Dˢ(x) = η/(2ρ) g gᵀ for A = αI + γJ, σ = sqrt(η) I and any g.
        let (alpha, gamma, eta) = (1.3, 0.6, 2.0);
        let (a, s) = example_2_1(alpha, gamma, eta);
        let rho = alpha * alpha + gamma * gamma;
        let model = ColoredModel::new(
            Matrix::identity(2, 2),
            DriftBasis::NegIdentity(2),
            Diffusion::Custom(Arc::new(Skewed)),
            a,
            s,
            0.1,
        )
        .unwrap();
        let coeffs = limit_coefficients(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let g = model.diffusion().eval(&x);
            let expected = &g * g.transpose() * (eta / (2.0 * rho));
            assert!((coeffs.symmetric_diffusion(&x) - expected).amax() < 1e-12);
        }
    }

    /// Divergence terms of `b` by central differences of `D` and `R` directly.
    fn correction_by_differences(coeffs: &LimitCoefficients, model: &ColoredModel, x: &[f64]) -> DVector<f64> {
        let d = x.len();
        let h = 1e-5;
        let r = |p: &[f64]| model.diffusion().eval(p) * coeffs.stationary_cov();
        let mut div_dt = DVector::zeros(d);
        let mut div_rt = DVector::zeros(model.noise_dim());
        let mut xp = x.to_vec();
        for j in 0..d {
            xp[j] = x[j] + h;
            let (dp, rp) = (coeffs.diffusion_matrix(&xp), r(&xp));
            xp[j] = x[j] - h;
            let (dm, rm) = (coeffs.diffusion_matrix(&xp), r(&xp));
            xp[j] = x[j];
            let dd = (dp - dm) / (2.0 * h);
            let dr = (rp - rm) / (2.0 * h);
            for i in 0..d {
                div_dt[i] += dd[(j, i)];
            }
            for a in 0..model.noise_dim() {
                div_rt[a] += dr[(j, a)];
            }
        }
        let b = model.diffusion().eval(x) * model.ou_drift().clone().try_inverse().unwrap();
        div_dt - b * div_rt
    }

    #[test]
    fn levy_correction_reproduces_limit_drift() {
        let levy = LevyModel::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let model = levy.colored(0.1).unwrap();
        let coeffs = limit_coefficients(&model).unwrap();
        let l = levy_limit(&levy).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let xv = DVector::from_column_slice(&x);
            let b = coeffs.correction(&x);
            let fd = correction_by_differences(&coeffs, &model, &x);
            assert!((&b - &fd).amax() < 1e-6, "analytic {b} vs differences {fd}");
            let drift = -(model.theta() * &xv) + &b;
            assert!((drift + &l * &xv).amax() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_fallback_matches_analytic() {
        #[derive(Debug)]
        struct Radial;
        impl DiffusionFunction for Radial {
            fn dims(&self) -> (usize, usize) {
                (2, 2)
            }
            fn eval(&self, x: &[f64], out: &mut [f64]) {
                let s = radial_scale(0.5, 2.0, x);
                out.copy_from_slice(&[s, 0.0, 0.0, s]);
            }
        }
        let analytic = Diffusion::Radial { dim: 2, kappa: 0.5, beta: 2.0 };
        let custom = Diffusion::Custom(Arc::new(Radial));
        for x in [[0.3, -1.2], [2.0, 0.5]] {
            for (a, c) in analytic.derivatives(&x).iter().zip(custom.derivatives(&x)) {
                assert!((a - c).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn levy_limit_unit_parameters() {
        let levy = LevyModel::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(levy.rho(), 2.0);
        assert_eq!(levy.beta0(), 0.5);
        let l = levy_limit(&levy).unwrap();
        assert_eq!(l, Matrix::from_row_slice(2, 2, &[0.75, 0.25, -0.25, 0.75]));
    }

    #[test]
    fn levy_limit_degenerate_cases() {
        let no_rotation = LevyModel::new(1.0, 1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let l = levy_limit(&no_rotation).unwrap();
        assert_eq!(l, Matrix::identity(2, 2) * 0.5);

        let additive = LevyModel::new(1.7, 1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(levy_limit(&additive).unwrap(), Matrix::identity(2, 2) * 1.7);
    }

    #[test]
    fn levy_limit_rejects_non_ergodic() {
        let levy = LevyModel::new(0.2, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(levy_limit(&levy), Err(Error::Ergodicity { .. })));
    }

    #[test]
    fn filter_width_condition() {
        let unit = DissipativityBounds { a: 1.0, b: 1.0, c: 1.0 };
        assert!(validate_filter_width(unit, 1.0, 1.01).unwrap());
        assert!(!validate_filter_width(unit, 1.0, 0.5).unwrap());
        assert!(matches!(
            validate_filter_width(unit, 2f64.sqrt(), 10.0),
            Err(Error::Assumption(_))
        ));
        assert!(validate_filter_width(unit, 3.0, 10.0).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(ColoredModel::scalar_ou(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(matches!(
            ColoredModel::scalar_ou(1.0, 1.0, -1.0, 1.0, 0.1),
            Err(Error::UnstableMatrix { .. })
        ));
        assert!(ColoredModel::scalar_ou(1.0, 1.0, 1.0, 0.0, 0.1).is_err());
        let bad_theta = ColoredModel::new(
            Matrix::identity(2, 2),
            DriftBasis::NegIdentity(1),
            Diffusion::Constant(Matrix::identity(1, 1)),
            Matrix::identity(1, 1),
            Matrix::identity(1, 1),
            0.1,
        );
        assert!(matches!(bad_theta, Err(Error::Dimension { .. })));
    }

    #[test]
    fn singular_ou_drift_rejected() {
        let a = Matrix::zeros(1, 1);
        assert!(stationary_covariance(&a, &Matrix::identity(1, 1)).is_err());
    }

    #[test]
    fn additive_limit_of_scalar_model() {
        let model = ColoredModel::scalar_ou(1.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        match LimitModel::from_colored(&model).unwrap() {
            LimitModel::Additive { diffusion_sq, .. } => {
                // Dˢ = G²σ²/(2A²)
                assert!((diffusion_sq[(0, 0)] - 0.5).abs() < 1e-15);
            }
            other => panic!("expected additive limit, got {other:?}"),
        }
    }

    #[test]
    fn indefinite_limit_rejected() {
        let ds = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            LimitModel::additive(Matrix::identity(2, 2), DriftBasis::NegIdentity(2), ds),
            Err(Error::IndefiniteDiffusion { .. })
        ));
    }
}
