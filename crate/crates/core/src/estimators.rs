//! Drift estimators driven by a stream of transitions `(X_k, X_{k+1})`.
//!
//! A [`Feed`] turns grid states into [`Transition`]s (computing `f(X_k)`, the
//! filtered `Z_k` and `f(Z_k)`) and hands each one to a set of [`Learner`]s.
//! The same feed serves streaming use during simulation and batch use on a
//! stored [`Path`], so the two agree bit for bit.
//!
//! All stochastic integrals are left-point (Itô) sums.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{ExpFilter, FilterConfig};
use crate::linalg::{self, Matrix};
use crate::model::DriftBasis;
use crate::sgdct::{LearningRate, SgdctLearner};
use crate::simulate::{Observer, Path};

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// One step of data seen by a learner.
#[derive(Clone, Copy, Debug)]
pub struct Transition<'a> {
    pub k: usize,
    /// `t_k`
    pub t: f64,
    pub h: f64,
    pub x: &'a [f64],
    pub x_next: &'a [f64],
    /// `f(X_k)`
    pub fx: &'a [f64],
    /// `Z_k`, when a filter is attached
    pub z: Option<&'a [f64]>,
    /// `f(Z_k)`
    pub fz: Option<&'a [f64]>,
    /// `Y_k`, for colored data
    pub y: Option<&'a [f64]>,
}

impl Transition<'_> {
    pub(crate) fn require_z(&self) -> &[f64] {
        self.z.expect("learner needs filtered data but the feed has no filter")
    }
    pub(crate) fn require_fz(&self) -> &[f64] {
        self.fz.expect("learner needs filtered data but the feed has no filter")
    }
}

/// An online estimator consuming transitions.
pub trait Learner {
    fn update(&mut self, tr: &Transition);
    /// Snapshot the current estimate at time `t`.
    fn record(&mut self, t: f64);
    /// The recorded snapshots; errors if the run broke down.
    fn take_path(&mut self) -> Result<EstimatePath>;
}

/// Grid indices at which learners snapshot their estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoints {
    indices: Vec<usize>,
}

impl Checkpoints {
    /// Sorted, deduplicated, all `≤ n_steps`.
    pub fn new(mut indices: Vec<usize>, n_steps: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last > n_steps {
                return Err(Error::InvalidParameter(format!(
                    "checkpoint {last} beyond the final step {n_steps}"
                )));
            }
        }
        Ok(Checkpoints { indices })
    }

    pub fn final_only(n_steps: usize) -> Self {
        Checkpoints { indices: vec![n_steps] }
    }

    /// Every `stride` steps, always including the final step.
    pub fn every(n_steps: usize, stride: usize) -> Self {
        let stride = stride.max(1);
        let mut indices: Vec<usize> = (stride..=n_steps).step_by(stride).collect();
        if indices.last() != Some(&n_steps) {
            indices.push(n_steps);
        }
        Checkpoints { indices }
    }

    /// `count` points spaced geometrically from `first` to the final step.
    pub fn geometric(n_steps: usize, first: usize, count: usize) -> Self {
        let first = first.clamp(1, n_steps);
        let count = count.max(2);
        let ratio = (n_steps as f64 / first as f64).powf(1.0 / (count - 1) as f64);
        let mut indices: Vec<usize> = (0..count)
            .map(|i| ((first as f64) * ratio.powi(i as i32)).round() as usize)
            .map(|k| k.min(n_steps))
            .collect();
        indices.push(n_steps);
        indices.sort_unstable();
        indices.dedup();
        Checkpoints { indices }
    }

    /// Checkpoints at the given times, which must lie on the grid.
    pub fn at_times(times: &[f64], step: f64, n_steps: usize) -> Result<Self> {
        let mut indices = Vec::with_capacity(times.len());
        for &t in times {
            let k = (t / step).round();
            if (k * step - t).abs() > 1e-9 * (1.0 + t.abs()) || k < 0.0 {
                return Err(Error::InvalidParameter(format!("checkpoint time {t} is not a grid time")));
            }
            indices.push(k as usize);
        }
        Checkpoints::new(indices, n_steps)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// The same times on a grid `factor` times finer.
    pub fn refined(&self, factor: usize) -> Self {
        Checkpoints {
            indices: self.indices.iter().map(|k| k * factor).collect(),
        }
    }
}

/// Feeds grid states to learners. Implements [`Observer`] for streaming use.
pub struct Feed<'a> {
    basis: DriftBasis,
    step: f64,
    filter: Option<ExpFilter>,
    checkpoints: Vec<usize>,
    next_checkpoint: usize,
    learners: Vec<&'a mut dyn Learner>,
    prev_x: Vec<f64>,
    prev_fx: Vec<f64>,
    prev_z: Vec<f64>,
    prev_fz: Vec<f64>,
    prev_y: Vec<f64>,
    has_y: bool,
    has_z: bool,
    next_k: usize,
}

impl<'a> Feed<'a> {
    pub fn new(
        basis: DriftBasis,
        step: f64,
        filter: Option<&FilterConfig>,
        checkpoints: &Checkpoints,
        learners: Vec<&'a mut dyn Learner>,
    ) -> Result<Self> {
        let d = basis.dim_in();
        let l = basis.dim_out();
        let filter = filter.map(|cfg| ExpFilter::new(cfg, step, d)).transpose()?;
        Ok(Feed {
            basis,
            step,
            filter,
            checkpoints: checkpoints.indices.clone(),
            next_checkpoint: 0,
            learners,
            prev_x: vec![0.0; d],
            prev_fx: vec![0.0; l],
            prev_z: vec![0.0; d],
            prev_fz: vec![0.0; l],
            prev_y: Vec::new(),
            has_y: false,
            has_z: false,
            next_k: 0,
        })
    }

    /// Pushes the state at grid index `k`; states must arrive in order.
    /// `z` supplies pre-filtered data when the feed has no filter of its own.
    pub fn push(&mut self, k: usize, x: &[f64], y: Option<&[f64]>, z: Option<&[f64]>) {
        assert_eq!(k, self.next_k, "states must be pushed in grid order");
        self.next_k += 1;
        if k > 0 {
            let tr = Transition {
                k: k - 1,
                t: (k - 1) as f64 * self.step,
                h: self.step,
                x: &self.prev_x,
                x_next: x,
                fx: &self.prev_fx,
                z: self.has_z.then_some(self.prev_z.as_slice()),
                fz: self.has_z.then_some(self.prev_fz.as_slice()),
                y: self.has_y.then_some(self.prev_y.as_slice()),
            };
            for learner in self.learners.iter_mut() {
                learner.update(&tr);
            }
        }
        while self.next_checkpoint < self.checkpoints.len() && self.checkpoints[self.next_checkpoint] == k {
            let t = k as f64 * self.step;
            for learner in self.learners.iter_mut() {
                learner.record(t);
            }
            self.next_checkpoint += 1;
        }

        self.prev_x.copy_from_slice(x);
        self.basis.eval(x, &mut self.prev_fx);
        if let Some(y) = y {
            self.prev_y.clear();
            self.prev_y.extend_from_slice(y);
            self.has_y = true;
        }
        let z = match self.filter.as_mut() {
            Some(f) => {
                self.prev_z.copy_from_slice(f.state());
                f.advance(x);
                Some(())
            }
            None => z.map(|z| self.prev_z.copy_from_slice(z)),
        };
        self.has_z = z.is_some();
        if self.has_z {
            self.basis.eval(&self.prev_z, &mut self.prev_fz);
        }
    }

    /// Feeds every stored point of `path`, using its `Z` channel unless the
    /// feed filters on its own.
    pub fn run_path(&mut self, path: &Path) -> Result<()> {
        if path.dim() != self.basis.dim_in() {
            return Err(Error::dimension("path X", self.basis.dim_in(), path.dim()));
        }
        for j in 0..path.len() {
            let y = path.y.as_ref().map(|c| c.row(j));
            let z = path.z.as_ref().map(|c| c.row(j));
            self.push(j, path.x.row(j), y, z);
        }
        Ok(())
    }
}

impl Observer for Feed<'_> {
    fn observe(&mut self, k: usize, x: &[f64], y: Option<&[f64]>) {
        self.push(k, x, y, None);
    }
}

/// A point estimate of the drift matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftEstimate {
    pub value: Matrix,
    pub at_time: f64,
    /// Condition number of the inverted Gram matrix.
    pub condition_number: f64,
    /// Smallest eigenvalue of the symmetric part of the time-averaged Gram
    /// matrix, an empirical stand-in for the coercivity constant.
    pub gram_min_eigenvalue: f64,
}

/// Estimates over time; `None` where the estimate was not available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatePath {
    pub rows: usize,
    pub cols: usize,
    pub times: Vec<f64>,
    /// Row-major entries per checkpoint.
    pub values: Vec<Option<Vec<f64>>>,
    /// Gram condition number per checkpoint (NaN for estimators without one).
    pub condition: Vec<f64>,
}

impl EstimatePath {
    pub fn new(rows: usize, cols: usize) -> Self {
        EstimatePath {
            rows,
            cols,
            times: Vec::new(),
            values: Vec::new(),
            condition: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, value: Option<&Matrix>, condition: f64) {
        self.times.push(t);
        self.values.push(value.map(linalg::to_row_major));
        self.condition.push(condition);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, i: usize) -> Option<Matrix> {
        self.values[i]
            .as_ref()
            .map(|v| linalg::from_row_major(self.rows, self.cols, v))
    }

    pub fn last(&self) -> Option<Matrix> {
        self.values.len().checked_sub(1).and_then(|i| self.value(i))
    }

    /// Writes `t,theta_11,...,theta_dl,cond`; unavailable entries are `NaN`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        for i in 1..=self.rows {
            for j in 1..=self.cols {
                header.push(format!("theta_{i}{j}"));
            }
        }
        header.push("cond".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            let mut fields = vec![format!("{t:.16e}")];
            match &self.values[i] {
                Some(v) => fields.extend(v.iter().map(|x| format!("{x:.16e}"))),
                None => fields.extend(std::iter::repeat_n("NaN".to_string(), self.rows * self.cols)),
            }
            fields.push(format!("{:.16e}", self.condition[i]));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// What multiplies the increment in the regression numerator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regressor {
    /// `f(X_k)`
    State,
    /// `f(Z_k)`
    Filtered,
    /// `Z_k` with `X_k` in the Gram matrix and an overall minus sign.
    Levy,
}

/// Running sums of the MLE numerator `Σ ΔX ⊗ w_k` and Gram matrix
/// `Σ u_k ⊗ w_k`, where `(u, w)` is `(f(X), f(X))`, `(f(X), f(Z))` or `(X, Z)`.
#[derive(Clone, Debug)]
pub struct RegressionAccumulator {
    regressor: Regressor,
    d: usize,
    l: usize,
    numerator: Vec<f64>,
    gram: Vec<f64>,
    step: f64,
    count: usize,
    path: EstimatePath,
}

impl RegressionAccumulator {
    pub fn new(regressor: Regressor, basis: &DriftBasis) -> Result<Self> {
        let d = basis.dim_in();
        let l = match regressor {
            Regressor::Levy => {
                if d != 2 {
                    return Err(Error::dimension("Levy estimator state", 2, d));
                }
                d
            }
            _ => basis.dim_out(),
        };
        Ok(RegressionAccumulator {
            regressor,
            d,
            l,
            numerator: vec![0.0; d * l],
            gram: vec![0.0; l * l],
            step: 0.0,
            count: 0,
            path: EstimatePath::new(d, l),
        })
    }

    /// `N · (G h)⁻¹`, negated for the Lévy regressor.
    pub fn estimate(&self, at_time: f64) -> Result<DriftEstimate> {
        if self.count == 0 {
            return Err(Error::SingularGram {
                time: at_time,
                condition: f64::INFINITY,
            });
        }
        let gram = linalg::from_row_major(self.l, self.l, &self.gram) * self.step;
        let numerator = linalg::from_row_major(self.d, self.l, &self.numerator);
        let condition = linalg::condition_number(&gram);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularGram { time: at_time, condition });
        }
        let solved = gram
            .transpose()
            .lu()
            .solve(&numerator.transpose())
            .ok_or(Error::SingularGram { time: at_time, condition })?;
        let mut value = solved.transpose();
        if self.regressor == Regressor::Levy {
            value = -value;
        }
        let horizon = self.count as f64 * self.step;
        Ok(DriftEstimate {
            value,
            at_time,
            condition_number: condition,
            gram_min_eigenvalue: linalg::min_symmetric_eigenvalue(&(gram / horizon)),
        })
    }
}

impl Learner for RegressionAccumulator {
    #[inline]
    fn update(&mut self, tr: &Transition) {
        let (u, w) = match self.regressor {
            Regressor::State => (tr.fx, tr.fx),
            Regressor::Filtered => (tr.fx, tr.require_fz()),
            Regressor::Levy => (tr.x, tr.require_z()),
        };
        let l = self.l;
        for i in 0..self.d {
            let dx = tr.x_next[i] - tr.x[i];
            let row = &mut self.numerator[i * l..(i + 1) * l];
            for (n, wj) in row.iter_mut().zip(w) {
                *n += dx * wj;
            }
        }
        for (i, ui) in u.iter().enumerate() {
            let row = &mut self.gram[i * l..(i + 1) * l];
            for (g, wj) in row.iter_mut().zip(w) {
                *g += ui * wj;
            }
        }
        self.step = tr.h;
        self.count += 1;
    }

    fn record(&mut self, t: f64) {
        match self.estimate(t) {
            Ok(est) => self.path.push(t, Some(&est.value), est.condition_number),
            Err(_) => self.path.push(t, None, f64::INFINITY),
        }
    }

    fn take_path(&mut self) -> Result<EstimatePath> {
        Ok(std::mem::replace(&mut self.path, EstimatePath::new(self.d, self.l)))
    }
}

fn batch_regression(path: &Path, basis: &DriftBasis, regressor: Regressor) -> Result<DriftEstimate> {
    let mut acc = RegressionAccumulator::new(regressor, basis)?;
    if regressor != Regressor::State && path.z.is_none() {
        return Err(Error::MissingChannel("Z"));
    }
    let none = Checkpoints::new(vec![], path.grid().n_steps())?;
    Feed::new(basis.clone(), path.stored_step(), None, &none, vec![&mut acc])?.run_path(path)?;
    acc.estimate(path.time(path.len() - 1))
}

/// `[Σ ΔX ⊗ f(X_k)] [Σ f(X_k) ⊗ f(X_k) h]⁻¹`, for white or colored data alike.
pub fn mle(path: &Path, basis: &DriftBasis) -> Result<DriftEstimate> {
    batch_regression(path, basis, Regressor::State)
}

/// `[Σ ΔX ⊗ f(Z_k)] [Σ f(X_k) ⊗ f(Z_k) h]⁻¹` using the path's `Z` channel.
pub fn mle_filtered(path: &Path, basis: &DriftBasis) -> Result<DriftEstimate> {
    batch_regression(path, basis, Regressor::Filtered)
}

/// `L̂ = -[Σ ΔX ⊗ Z_k] [Σ X_k ⊗ Z_k h]⁻¹` for two-dimensional data.
pub fn mle_levy(path: &Path) -> Result<DriftEstimate> {
    batch_regression(path, &DriftBasis::Identity(path.dim()), Regressor::Levy)
}

/// Estimator variants addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Mle,
    MleFiltered,
    Sgdct,
    SgdctFiltered,
    MleLevy,
    SgdctLevy,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Mle,
        Variant::MleFiltered,
        Variant::Sgdct,
        Variant::SgdctFiltered,
        Variant::MleLevy,
        Variant::SgdctLevy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Mle => "mle",
            Variant::MleFiltered => "mle-filtered",
            Variant::Sgdct => "sgdct",
            Variant::SgdctFiltered => "sgdct-filtered",
            Variant::MleLevy => "mle-levy",
            Variant::SgdctLevy => "sgdct-levy",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::InvalidParameter(format!("unknown variant `{name}` (expected one of {})", names.join(", ")))
            })
    }

    pub fn needs_filter(&self) -> bool {
        !matches!(self, Variant::Mle | Variant::Sgdct)
    }

    pub fn is_levy(&self) -> bool {
        matches!(self, Variant::MleLevy | Variant::SgdctLevy)
    }

    pub fn is_sgdct(&self) -> bool {
        matches!(self, Variant::Sgdct | Variant::SgdctFiltered | Variant::SgdctLevy)
    }

    /// Builds the learner; SGDCT variants need a learning rate, and `theta0`
    /// defaults to zero.
    pub fn learner(
        &self,
        basis: &DriftBasis,
        lr: Option<LearningRate>,
        theta0: Option<&Matrix>,
    ) -> Result<Box<dyn Learner + Send>> {
        let regression = |r| -> Result<Box<dyn Learner + Send>> {
            Ok(Box::new(RegressionAccumulator::new(r, basis)?))
        };
        let lr = || lr.ok_or_else(|| Error::InvalidParameter(format!("variant {} needs a learning rate", self.name())));
        match self {
            Variant::Mle => regression(Regressor::State),
            Variant::MleFiltered => regression(Regressor::Filtered),
            Variant::MleLevy => regression(Regressor::Levy),
            Variant::Sgdct => Ok(Box::new(SgdctLearner::new(Regressor::State, basis, lr()?, theta0)?)),
            Variant::SgdctFiltered => Ok(Box::new(SgdctLearner::new(Regressor::Filtered, basis, lr()?, theta0)?)),
            Variant::SgdctLevy => Ok(Box::new(SgdctLearner::new(Regressor::Levy, basis, lr()?, theta0)?)),
        }
    }
}

/// Runs several estimator variants over a stored path in one pass. Filtered
/// variants use the path's `Z` channel when present, otherwise `filter`.
pub fn estimate_path(
    path: &Path,
    basis: &DriftBasis,
    variants: &[Variant],
    lr: Option<LearningRate>,
    theta0: Option<&Matrix>,
    filter: Option<&FilterConfig>,
    checkpoints: &Checkpoints,
) -> Result<Vec<EstimatePath>> {
    if variants.iter().any(|v| v.needs_filter()) && path.z.is_none() && filter.is_none() {
        return Err(Error::MissingChannel("Z"));
    }
    let filter = if path.z.is_some() { None } else { filter };
    let mut learners = variants
        .iter()
        .map(|v| v.learner(basis, lr, theta0))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&mut dyn Learner> = learners.iter_mut().map(|l| &mut **l as &mut dyn Learner).collect();
    Feed::new(basis.clone(), path.stored_step(), filter, checkpoints, refs)?.run_path(path)?;
    learners.iter_mut().map(|l| l.take_path()).collect()
}
