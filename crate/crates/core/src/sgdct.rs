//! Stochastic gradient descent in continuous time, discretized on the data grid.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Checkpoints, EstimatePath, Learner, Regressor, Transition};
use crate::linalg::Matrix;
use crate::model::DriftBasis;
use crate::simulate::Path;

/// `ξ(t) = a / (b + t)`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningRate {
    pub a: f64,
    pub b: f64,
}

impl LearningRate {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let lr = LearningRate { a, b };
        lr.validate()?;
        Ok(lr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate needs a > 0 and b > 0, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn rate(&self, t: f64) -> f64 {
        self.a / (self.b + t)
    }

    /// Whether `a > 1 + δ`, the regime in which the filtered estimator is
    /// asymptotically normal on the scalar OU model.
    pub fn in_clt_regime(&self, delta: f64) -> bool {
        self.a > 1.0 + delta
    }
}

/// Current estimate and time of an SGDCT run.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdctState {
    pub theta: Matrix,
    pub t: f64,
}

/// Online SGDCT learner.
///
/// For [`Regressor::State`] and [`Regressor::Filtered`]:
/// `θ_{k+1} = θ_k + ξ(t_k) [ΔX_k - θ_k f(X_k) h] ⊗ w_k` with `w_k = f(X_k)`
/// or `f(Z_k)`; the innovation always uses `f(X_k)`.
///
/// For [`Regressor::Levy`] the state is `L` and
/// `L_{k+1} = L_k - ξ(t_k) L_k (X_k ⊗ Z_k) h - ξ(t_k) ΔX_k ⊗ Z_k`.
#[derive(Clone, Debug)]
pub struct SgdctLearner {
    regressor: Regressor,
    lr: LearningRate,
    d: usize,
    l: usize,
    theta: Vec<f64>,
    innovation: Vec<f64>,
    t: f64,
    failed_at: Option<usize>,
    warned: bool,
    path: EstimatePath,
}

impl SgdctLearner {
    pub fn new(regressor: Regressor, basis: &DriftBasis, lr: LearningRate, theta0: Option<&Matrix>) -> Result<Self> {
        lr.validate()?;
        let d = basis.dim_in();
        let l = match regressor {
            Regressor::Levy if d != 2 => return Err(Error::dimension("Levy estimator state", 2, d)),
            Regressor::Levy => d,
            _ => basis.dim_out(),
        };
        let theta = match theta0 {
            None => vec![0.0; d * l],
            Some(m) if m.shape() == (d, l) => crate::linalg::to_row_major(m),
            Some(m) => {
                return Err(Error::dimension(
                    "initial estimate",
                    format!("{d}x{l}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ))
            }
        };
        Ok(SgdctLearner {
            regressor,
            lr,
            d,
            l,
            theta,
            innovation: vec![0.0; d],
            t: 0.0,
            failed_at: None,
            warned: false,
            path: EstimatePath::new(d, l),
        })
    }

    pub fn state(&self) -> SgdctState {
        SgdctState {
            theta: crate::linalg::from_row_major(self.d, self.l, &self.theta),
            t: self.t,
        }
    }
}

impl Learner for SgdctLearner {
    #[inline]
    fn update(&mut self, tr: &Transition) {
        if self.failed_at.is_some() {
            return;
        }
        let (d, l, h) = (self.d, self.l, tr.h);
        let xi = self.lr.rate(tr.t);
        match self.regressor {
            Regressor::State | Regressor::Filtered => {
                let w = if self.regressor == Regressor::State { tr.fx } else { tr.require_fz() };
                for i in 0..d {
                    let row = &self.theta[i * l..(i + 1) * l];
                    let pred: f64 = row.iter().zip(tr.fx).map(|(a, b)| a * b).sum();
                    self.innovation[i] = tr.x_next[i] - tr.x[i] - pred * h;
                }
                for i in 0..d {
                    let gain = xi * self.innovation[i];
                    for (th, wj) in self.theta[i * l..(i + 1) * l].iter_mut().zip(w) {
                        *th += gain * wj;
                    }
                }
                if !self.warned {
                    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if xi * norm(tr.fx) * norm(w) * h >= 1.0 {
                        warn!("SGDCT step at t = {} has xi |f|^2 h >= 1; the discretization may be unstable", tr.t);
                        self.warned = true;
                    }
                }
            }
            Regressor::Levy => {
                let z = tr.require_z();
                // innovation slot holds L_k X_k
                for i in 0..d {
                    let row = &self.theta[i * l..(i + 1) * l];
                    self.innovation[i] = row.iter().zip(tr.x).map(|(a, b)| a * b).sum();
                }
                for i in 0..d {
                    let lx = self.innovation[i] * h;
                    let dx = tr.x_next[i] - tr.x[i];
                    for (th, zj) in self.theta[i * l..(i + 1) * l].iter_mut().zip(z) {
                        *th -= xi * lx * zj + xi * dx * zj;
                    }
                }
            }
        }
        self.t = tr.t + h;
        if !self.theta.iter().all(|v| v.is_finite()) {
            self.failed_at = Some(tr.k + 1);
        }
    }

    fn record(&mut self, t: f64) {
        let value = crate::linalg::from_row_major(self.d, self.l, &self.theta);
        let ok = self.failed_at.is_none();
        self.path.push(t, ok.then_some(&value), f64::NAN);
    }

    fn take_path(&mut self) -> Result<EstimatePath> {
        if let Some(step) = self.failed_at {
            return Err(Error::NonFinite { what: "SGDCT estimate", step });
        }
        Ok(std::mem::replace(&mut self.path, EstimatePath::new(self.d, self.l)))
    }
}

/// Runs SGDCT over a stored path. `Regressor::Filtered` and `Regressor::Levy`
/// read the path's `Z` channel.
pub fn sgdct_run(
    path: &Path,
    basis: &DriftBasis,
    regressor: Regressor,
    lr: LearningRate,
    theta0: Option<&Matrix>,
    checkpoints: &Checkpoints,
) -> Result<EstimatePath> {
    if regressor != Regressor::State && path.z.is_none() {
        return Err(Error::MissingChannel("Z"));
    }
    let mut learner = SgdctLearner::new(regressor, basis, lr, theta0)?;
    crate::estimators::Feed::new(basis.clone(), path.stored_step(), None, checkpoints, vec![&mut learner])?
        .run_path(path)?;
    learner.take_path()
}

/// The Lévy-area SGDCT estimator `L̃` on two-dimensional data with a `Z` channel.
pub fn sgdct_levy(path: &Path, lr: LearningRate, l0: Option<&Matrix>, checkpoints: &Checkpoints) -> Result<EstimatePath> {
    sgdct_run(path, &DriftBasis::Identity(path.dim()), Regressor::Levy, lr, l0, checkpoints)
}

/// Which scalar SGDCT estimator the closed form reproduces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormVariant {
    /// White-noise data; noise increment `ΔX - θ f(X) h`.
    Base,
    /// Colored data; noise increment `G Y/ε h`.
    Colored,
    /// White-noise data with filtered regressor.
    Filtered,
    /// Colored data with filtered regressor.
    FilteredColored,
}

impl ClosedFormVariant {
    fn filtered(self) -> bool {
        matches!(self, ClosedFormVariant::Filtered | ClosedFormVariant::FilteredColored)
    }
    fn colored(self) -> bool {
        matches!(self, ClosedFormVariant::Colored | ClosedFormVariant::FilteredColored)
    }
}

/// True scalar parameters entering the closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarTruth {
    pub theta: f64,
    /// Only used by the colored variants.
    pub g: f64,
    pub epsilon: f64,
}

/// Scalar SGDCT estimate written as
/// `θ̃_t = θ + (θ₀ - θ) e^{-E_t} + ∫₀ᵗ ξ_s e^{-(E_t - E_s)} ψ_s dN_s`,
/// where `E_t = ∫₀ᵗ ξ φ ψ dr`, `φ = f(X)`, `ψ = f(X)` or `f(Z)` and `dN` is the
/// noise part of `dX`. The exponent uses the trapezoidal rule and the outer
/// integral the left-point rule. `checkpoints` index the stored grid.
pub fn sgdct_closed_form_1d(
    path: &Path,
    basis: &DriftBasis,
    variant: ClosedFormVariant,
    truth: ScalarTruth,
    lr: LearningRate,
    theta0: f64,
    checkpoints: &Checkpoints,
) -> Result<EstimatePath> {
    lr.validate()?;
    if path.dim() != 1 || basis.dim_in() != 1 || basis.dim_out() != 1 {
        return Err(Error::Unsupported("closed form needs scalar data and basis".into()));
    }
    let z = if variant.filtered() {
        Some(path.z.as_ref().ok_or(Error::MissingChannel("Z"))?)
    } else {
        None
    };
    let y = if variant.colored() {
        let y = path.y.as_ref().ok_or(Error::MissingChannel("Y"))?;
        if y.dim() != 1 {
            return Err(Error::dimension("Y channel", 1, y.dim()));
        }
        Some(y)
    } else {
        None
    };
    let h = path.stored_step();
    let f = |v: f64| basis.eval_vec(&[v])[0];
    let phi_psi = |j: usize| {
        let phi = f(path.x.row(j)[0]);
        let psi = match z {
            Some(z) => f(z.row(j)[0]),
            None => phi,
        };
        (phi, psi)
    };

    let mut out = EstimatePath::new(1, 1);
    let mut cps = checkpoints.indices().iter().peekable();
    let mut emit = |j: usize, value: f64, out: &mut EstimatePath| {
        while cps.peek() == Some(&&j) {
            out.push(path.time(j), Some(&Matrix::from_element(1, 1, value)), f64::NAN);
            cps.next();
        }
    };
    emit(0, theta0, &mut out);

    let (mut e, mut integral) = (0.0, 0.0);
    let (mut phi, mut psi) = phi_psi(0);
    for j in 0..path.len() - 1 {
        let t = path.time(j);
        let (xi, xi_next) = (lr.rate(t), lr.rate(path.time(j + 1)));
        let dn = match y {
            Some(y) => truth.g * y.row(j)[0] / truth.epsilon * h,
            None => path.x.row(j + 1)[0] - path.x.row(j)[0] - truth.theta * phi * h,
        };
        let (phi_next, psi_next) = phi_psi(j + 1);
        let de = 0.5 * (xi * phi * psi + xi_next * phi_next * psi_next) * h;
        integral = (-de).exp() * (integral + xi * psi * dn);
        e += de;
        (phi, psi) = (phi_next, psi_next);
        let value = truth.theta + (theta0 - truth.theta) * (-e).exp() + integral;
        if !value.is_finite() {
            return Err(Error::NonFinite { what: "closed-form estimate", step: j + 1 });
        }
        emit(j + 1, value, &mut out);
    }
    Ok(out)
}
