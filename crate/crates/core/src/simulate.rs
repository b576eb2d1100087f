//! Euler–Maruyama integration of the colored system and its white-noise limit.
//!
//! Simulations are streaming: the integrator hands every grid state to an
//! [`Observer`], and [`PathRecorder`] is just one observer among others
//! (estimators and moment accumulators consume the full-resolution stream
//! without storing it).

use std::io::{BufRead, Write};

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{self, mat_vec, Matrix};
use crate::model::{radial_scale, ColoredModel, Diffusion, LimitModel};
use crate::noise::GaussianStream;

/// Uniform grid `t_k = k h`, `k = 0..=N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    step: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(step: f64, n_steps: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {step}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        Ok(TimeGrid { step, n_steps })
    }

    /// Grid covering `[0, horizon]` with `N = round(horizon / step)`.
    pub fn with_horizon(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        TimeGrid::new(step, (horizon / step).round() as usize)
    }

    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }
    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }
}

/// Receives the state at every grid point `k = 0..=N`, in order.
pub trait Observer {
    fn observe(&mut self, k: usize, x: &[f64], y: Option<&[f64]>);
}

impl Observer for () {
    fn observe(&mut self, _: usize, _: &[f64], _: Option<&[f64]>) {}
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn observe(&mut self, k: usize, x: &[f64], y: Option<&[f64]>) {
        (**self).observe(k, x, y)
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn observe(&mut self, k: usize, x: &[f64], y: Option<&[f64]>) {
        self.0.observe(k, x, y);
        self.1.observe(k, x, y);
    }
}

/// Adapts a closure into an [`Observer`].
pub struct FnObserver<F>(pub F);

impl<F: FnMut(usize, &[f64], Option<&[f64]>)> Observer for FnObserver<F> {
    fn observe(&mut self, k: usize, x: &[f64], y: Option<&[f64]>) {
        (self.0)(k, x, y)
    }
}

/// A sampled multi-dimensional series stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    dim: usize,
    data: Vec<f64>,
}

impl Channel {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::dimension("channel data", format!("multiple of {dim}"), data.len()));
        }
        Ok(Channel { dim, data })
    }

    pub(crate) fn with_capacity(dim: usize, rows: usize) -> Self {
        Channel {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub(crate) fn push(&mut self, row: &[f64]) {
        self.data.extend_from_slice(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    /// The scalar series of component `i`.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }
}

/// A trajectory stored every `thinning` steps of its simulation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    thinning: usize,
    seed: Option<u64>,
    pub x: Channel,
    pub y: Option<Channel>,
    pub z: Option<Channel>,
}

impl Path {
    pub fn new(grid: TimeGrid, thinning: usize, seed: Option<u64>, x: Channel) -> Result<Self> {
        let path = Path {
            grid,
            thinning,
            seed,
            x,
            y: None,
            z: None,
        };
        path.check_len("X", &path.x)?;
        Ok(path)
    }

    fn check_len(&self, name: &str, c: &Channel) -> Result<()> {
        if c.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "{name} channel has {} rows, grid expects {}",
                c.len(),
                self.len()
            )));
        }
        Ok(())
    }

    pub fn with_y(mut self, y: Channel) -> Result<Self> {
        self.check_len("Y", &y)?;
        self.y = Some(y);
        Ok(self)
    }

    pub fn with_z(mut self, z: Channel) -> Result<Self> {
        self.check_len("Z", &z)?;
        self.z = Some(z);
        Ok(self)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }
    pub fn thinning(&self) -> usize {
        self.thinning
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
    /// Number of stored points.
    pub fn len(&self) -> usize {
        self.grid.n_steps / self.thinning + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Spacing of the stored points.
    pub fn stored_step(&self) -> f64 {
        self.grid.step * self.thinning as f64
    }
    pub fn time(&self, j: usize) -> f64 {
        self.grid.time(j * self.thinning)
    }
    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// Writes `t,X1..Xd[,Y1..Yn][,Z1..Zd]` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        let channels: Vec<(&str, &Channel)> = [("X", Some(&self.x)), ("Y", self.y.as_ref()), ("Z", self.z.as_ref())]
            .into_iter()
            .filter_map(|(n, c)| c.map(|c| (n, c)))
            .collect();
        for (name, c) in &channels {
            header.extend((1..=c.dim()).map(|i| format!("{name}{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for j in 0..self.len() {
            line.clear();
            push_float(&mut line, self.time(j));
            for (_, c) in &channels {
                for v in c.row(j) {
                    line.push(',');
                    push_float(&mut line, *v);
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the CSV layout produced by [`Path::write_csv`]. The stored step is
    /// taken from the second time stamp and must be uniform.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(Error::Parse("line 1: first column must be `t`".into()));
        }
        let count = |p: char| -> Result<usize> {
            let idx: Vec<usize> = cols
                .iter()
                .enumerate()
                .filter(|(_, c)| c.starts_with(p) && c[1..].parse::<usize>().is_ok())
                .map(|(i, _)| i)
                .collect();
            for (n, i) in idx.iter().enumerate() {
                if cols[*i] != format!("{p}{}", n + 1) {
                    return Err(Error::Parse(format!("line 1: unexpected column `{}`", cols[*i])));
                }
            }
            Ok(idx.len())
        };
        let (dx, dy, dz) = (count('X')?, count('Y')?, count('Z')?);
        if dx == 0 {
            return Err(Error::Parse("line 1: no X columns".into()));
        }
        if 1 + dx + dy + dz != cols.len() {
            return Err(Error::Parse(format!("line 1: unrecognised columns in `{header}`")));
        }
        let mut times = Vec::new();
        let mut x = Channel::with_capacity(dx, 0);
        let mut y = Channel::with_capacity(dy.max(1), 0);
        let mut z = Channel::with_capacity(dz.max(1), 0);
        let mut row = Vec::with_capacity(cols.len());
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            row.clear();
            for field in line.trim().split(',') {
                row.push(field.parse::<f64>().map_err(|e| {
                    Error::Parse(format!("line {}: `{field}`: {e}", i + 2))
                })?);
            }
            if row.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    i + 2,
                    cols.len(),
                    row.len()
                )));
            }
            times.push(row[0]);
            x.push(&row[1..1 + dx]);
            if dy > 0 {
                y.push(&row[1 + dx..1 + dx + dy]);
            }
            if dz > 0 {
                z.push(&row[1 + dx + dy..]);
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse("need at least two rows".into()));
        }
        let step = times[1] - times[0];
        for (j, t) in times.iter().enumerate() {
            if (t - times[0] - j as f64 * step).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(Error::GridMismatch(format!("row {} at t = {t} is off the uniform grid", j + 1)));
            }
        }
        let grid = TimeGrid::new(step, times.len() - 1)?;
        let mut path = Path::new(grid, 1, None, x)?;
        if dy > 0 {
            path = path.with_y(y)?;
        }
        if dz > 0 {
            path = path.with_z(z)?;
        }
        Ok(path)
    }
}

fn push_float(s: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(s, "{v:.16e}");
}

/// Stores every `thinning`-th state; memory is `O(N / thinning)`.
#[derive(Debug)]
pub struct PathRecorder {
    thinning: usize,
    x: Channel,
    y: Option<Channel>,
}

impl PathRecorder {
    pub fn new(grid: &TimeGrid, thinning: usize, dim: usize, noise_dim: Option<usize>) -> Result<Self> {
        if thinning == 0 || grid.n_steps % thinning != 0 {
            return Err(Error::InvalidParameter(format!(
                "thinning {thinning} must divide the step count {}",
                grid.n_steps
            )));
        }
        let rows = grid.n_steps / thinning + 1;
        Ok(PathRecorder {
            thinning,
            x: Channel::with_capacity(dim, rows),
            y: noise_dim.map(|n| Channel::with_capacity(n, rows)),
        })
    }

    pub fn into_path(self, grid: TimeGrid, seed: u64) -> Result<Path> {
        let path = Path::new(grid, self.thinning, Some(seed), self.x)?;
        match self.y {
            Some(y) => path.with_y(y),
            None => Ok(path),
        }
    }
}

impl Observer for PathRecorder {
    fn observe(&mut self, k: usize, x: &[f64], y: Option<&[f64]>) {
        if k % self.thinning == 0 {
            self.x.push(x);
            if let (Some(c), Some(y)) = (self.y.as_mut(), y) {
                c.push(y);
            }
        }
    }
}

/// Initial value of the fast process.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum NoiseInit {
    #[default]
    Zero,
    Given(Vec<f64>),
    /// A draw from `N(0, Σ∞)`, taken from the head of the Gaussian stream
    /// before the first step.
    Stationary,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InitialState {
    /// `None` means the origin.
    pub x: Option<Vec<f64>>,
    pub y: NoiseInit,
}

impl InitialState {
    pub fn at(x: Vec<f64>) -> Self {
        InitialState {
            x: Some(x),
            y: NoiseInit::Zero,
        }
    }

    fn x0(&self, d: usize) -> Result<Vec<f64>> {
        match &self.x {
            None => Ok(vec![0.0; d]),
            Some(x) if x.len() == d => Ok(x.clone()),
            Some(x) => Err(Error::dimension("initial X", d, x.len())),
        }
    }
}

/// Largest step for which Euler on `dY = -A/ε² Y dt` is mean-square stable:
/// every eigenvalue `λ` of `A` needs `|1 - hλ/ε²| < 1`, i.e.
/// `h < 2ε² Re λ / |λ|²`.
pub fn euler_step_bound(model: &ColoredModel) -> f64 {
    let eps2 = model.epsilon() * model.epsilon();
    linalg::eigenvalues(model.ou_drift())
        .iter()
        .map(|ev| 2.0 * eps2 * ev.re / ev.norm_sqr())
        .fold(f64::INFINITY, f64::min)
}

fn check_colored_step(model: &ColoredModel, grid: &TimeGrid) -> Result<()> {
    let bound = euler_step_bound(model);
    let h = grid.step();
    if h >= bound {
        return Err(Error::UnstableStep {
            step: h,
            bound,
            reason: "Euler scheme for the fast OU process diverges",
        });
    }
    let eps2 = model.epsilon() * model.epsilon();
    if h > eps2 / 10.0 {
        warn!("step {h} does not resolve the fast time scale eps^2 = {eps2}; use h <= eps^2/10");
    }
    Ok(())
}

#[inline]
fn check_finite(what: &'static str, v: &[f64], step: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what, step })
    }
}

/// Per-step evaluation of `g(x) v`.
pub(crate) struct DiffusionEval<'a> {
    diffusion: &'a Diffusion,
    constant: Option<Vec<f64>>,
    buf: Vec<f64>,
}

impl<'a> DiffusionEval<'a> {
    pub(crate) fn new(diffusion: &'a Diffusion) -> Self {
        let (d, n) = diffusion.dims();
        DiffusionEval {
            diffusion,
            constant: match diffusion {
                Diffusion::Constant(g) => Some(linalg::to_row_major(g)),
                _ => None,
            },
            buf: vec![0.0; d * n],
        }
    }

    #[inline]
    pub(crate) fn apply(&mut self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match (self.diffusion, &self.constant) {
            (_, Some(g)) => mat_vec(g, v, out),
            (Diffusion::Radial { kappa, beta, .. }, _) => {
                let s = radial_scale(*kappa, *beta, x);
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = s * vi;
                }
            }
            (Diffusion::Custom(g), _) => {
                g.eval(x, &mut self.buf);
                mat_vec(&self.buf, v, out);
            }
            (Diffusion::Constant(_), None) => unreachable!(),
        }
    }
}

/// Integrates the colored system, feeding each state to `obs`:
///
/// ```text
/// X_{k+1} = X_k + θ f(X_k) h + g(X_k) Y_k/ε h
/// Y_{k+1} = Y_k - A/ε² Y_k h + σ/ε sqrt(h) ξ_k
/// ```
///
/// Each step consumes `m` draws from `noise` (the columns of `σ`).
pub fn drive_colored<O: Observer>(
    model: &ColoredModel,
    grid: &TimeGrid,
    noise: &mut GaussianStream,
    init: &InitialState,
    obs: &mut O,
) -> Result<()> {
    check_colored_step(model, grid)?;
    let (d, n, m) = (model.dim(), model.noise_dim(), model.brownian_dim());
    let l = model.basis().dim_out();
    let h = grid.step();
    let eps = model.epsilon();
    let theta = linalg::to_row_major(model.theta());
    let ou_drift = linalg::to_row_major(model.ou_drift());
    let sigma = linalg::to_row_major(model.ou_volatility());
    let mut g = DiffusionEval::new(model.diffusion());

    let mut x = init.x0(d)?;
    let mut y = match &init.y {
        NoiseInit::Zero => vec![0.0; n],
        NoiseInit::Given(y) if y.len() == n => y.clone(),
        NoiseInit::Given(y) => return Err(Error::dimension("initial Y", n, y.len())),
        NoiseInit::Stationary => {
            let root = linalg::psd_sqrt(&model.stationary_covariance()?, 1e-12)?;
            let mut xi = vec![0.0; n];
            noise.fill(&mut xi);
            let mut y0 = vec![0.0; n];
            mat_vec(&linalg::to_row_major(&root), &xi, &mut y0);
            y0
        }
    };

    let (mut fx, mut drift, mut gy) = (vec![0.0; l], vec![0.0; d], vec![0.0; d]);
    let (mut xi, mut ay, mut sxi) = (vec![0.0; m], vec![0.0; n], vec![0.0; n]);
    let (cx, cy, cw) = (h / eps, h / (eps * eps), h.sqrt() / eps);

    obs.observe(0, &x, Some(&y));
    for k in 0..grid.n_steps() {
        model.basis().eval(&x, &mut fx);
        mat_vec(&theta, &fx, &mut drift);
        g.apply(&x, &y, &mut gy);
        noise.fill(&mut xi);
        mat_vec(&ou_drift, &y, &mut ay);
        mat_vec(&sigma, &xi, &mut sxi);
        for i in 0..d {
            x[i] += h * drift[i] + cx * gy[i];
        }
        for i in 0..n {
            y[i] += -cy * ay[i] + cw * sxi[i];
        }
        check_finite("X", &x, k + 1)?;
        check_finite("Y", &y, k + 1)?;
        obs.observe(k + 1, &x, Some(&y));
    }
    Ok(())
}

pub fn simulate_colored(
    model: &ColoredModel,
    grid: &TimeGrid,
    seed: u64,
    init: &InitialState,
    thinning: usize,
) -> Result<Path> {
    let mut rec = PathRecorder::new(grid, thinning, model.dim(), Some(model.noise_dim()))?;
    drive_colored(model, grid, &mut GaussianStream::new(seed), init, &mut rec)?;
    rec.into_path(*grid, seed)
}

/// Integrates the limit SDE, consuming `d` draws per step:
/// `X_{k+1} = X_k + (θf(X_k) + b(X_k)) h + S sqrt(h) ξ_k` with `S Sᵀ = 2Dˢ`.
pub fn drive_limit<O: Observer>(
    model: &LimitModel,
    grid: &TimeGrid,
    noise: &mut GaussianStream,
    x0: Option<&[f64]>,
    obs: &mut O,
) -> Result<()> {
    let d = model.dim();
    let h = grid.step();
    let sh = h.sqrt();
    let mut x = InitialState { x: x0.map(|v| v.to_vec()), y: NoiseInit::Zero }.x0(d)?;
    let mut xi = vec![0.0; d];
    let mut drift = vec![0.0; d];
    let mut kick = vec![0.0; d];
    obs.observe(0, &x, None);
    match model {
        LimitModel::Additive { theta, basis, diffusion_sq } => {
            let root = linalg::to_row_major(&linalg::psd_sqrt(&(diffusion_sq * 2.0), 1e-12)?);
            let theta = linalg::to_row_major(theta);
            let mut fx = vec![0.0; basis.dim_out()];
            for k in 0..grid.n_steps() {
                basis.eval(&x, &mut fx);
                mat_vec(&theta, &fx, &mut drift);
                noise.fill(&mut xi);
                mat_vec(&root, &xi, &mut kick);
                for i in 0..d {
                    x[i] += h * drift[i] + sh * kick[i];
                }
                check_finite("X", &x, k + 1)?;
                obs.observe(k + 1, &x, None);
            }
        }
        LimitModel::Levy { drift: l, kappa0, beta0 } => {
            let l = linalg::to_row_major(l);
            for k in 0..grid.n_steps() {
                mat_vec(&l, &x, &mut drift);
                let s = radial_scale(*kappa0, *beta0, &x);
                noise.fill(&mut xi);
                for i in 0..d {
                    x[i] += -h * drift[i] + sh * s * xi[i];
                }
                check_finite("X", &x, k + 1)?;
                obs.observe(k + 1, &x, None);
            }
        }
        LimitModel::Multiplicative { theta, basis, coefficients } => {
            let theta = linalg::to_row_major(theta);
            let mut fx = vec![0.0; basis.dim_out()];
            for k in 0..grid.n_steps() {
                basis.eval(&x, &mut fx);
                mat_vec(&theta, &fx, &mut drift);
                let b = coefficients.correction(&x);
                let root = linalg::psd_sqrt(&(coefficients.symmetric_diffusion(&x) * 2.0), 1e-10)?;
                noise.fill(&mut xi);
                mat_vec(&linalg::to_row_major(&root), &xi, &mut kick);
                for i in 0..d {
                    x[i] += h * (drift[i] + b[i]) + sh * kick[i];
                }
                check_finite("X", &x, k + 1)?;
                obs.observe(k + 1, &x, None);
            }
        }
    }
    Ok(())
}

pub fn simulate_limit(
    model: &LimitModel,
    grid: &TimeGrid,
    seed: u64,
    x0: Option<&[f64]>,
    thinning: usize,
) -> Result<Path> {
    let mut rec = PathRecorder::new(grid, thinning, model.dim(), None)?;
    drive_limit(model, grid, &mut GaussianStream::new(seed), x0, &mut rec)?;
    rec.into_path(*grid, seed)
}

/// Drives the scalar colored model and its limit with one Gaussian stream.
///
/// The colored system consumes `ξ_k` through `Y`; the limit
/// `dX = θ f(X) dt + (Gσ/A) dW` uses the same `ξ_k` as its Brownian increment.
/// Both start from `x0` with `Y_0 = 0`.
pub fn drive_coupled<O: Observer, P: Observer>(
    model: &ColoredModel,
    grid: &TimeGrid,
    noise: &mut GaussianStream,
    x0: f64,
    colored: &mut O,
    limit: &mut P,
) -> Result<()> {
    let g = match model.diffusion() {
        Diffusion::Constant(g) if model.dim() == 1 && model.noise_dim() == 1 && model.brownian_dim() == 1 => {
            g[(0, 0)]
        }
        _ => {
            return Err(Error::Unsupported(
                "coupled simulation needs d = n = m = 1 with constant diffusion".into(),
            ))
        }
    };
    if model.basis().dim_out() != 1 {
        return Err(Error::Unsupported("coupled simulation needs a scalar basis".into()));
    }
    check_colored_step(model, grid)?;
    let h = grid.step();
    let eps = model.epsilon();
    let theta = model.theta()[(0, 0)];
    let a = model.ou_drift()[(0, 0)];
    let sigma = model.ou_volatility()[(0, 0)];
    let limit_vol = g * sigma / a;
    let (cx, cy, cw, sh) = (h / eps, h / (eps * eps), h.sqrt() / eps, h.sqrt());
    let (mut xe, mut ye, mut x) = ([x0], [0.0], [x0]);
    let mut f = [0.0];
    colored.observe(0, &xe, Some(&ye));
    limit.observe(0, &x, None);
    for k in 0..grid.n_steps() {
        let xi = noise.next();
        model.basis().eval(&xe, &mut f);
        xe[0] += h * theta * f[0] + cx * g * ye[0];
        ye[0] += -cy * a * ye[0] + cw * sigma * xi;
        model.basis().eval(&x, &mut f);
        x[0] += h * theta * f[0] + sh * limit_vol * xi;
        check_finite("X", &xe, k + 1)?;
        check_finite("X", &x, k + 1)?;
        colored.observe(k + 1, &xe, Some(&ye));
        limit.observe(k + 1, &x, None);
    }
    Ok(())
}

pub fn simulate_coupled(
    model: &ColoredModel,
    grid: &TimeGrid,
    seed: u64,
    x0: f64,
    thinning: usize,
) -> Result<(Path, Path)> {
    let mut rc = PathRecorder::new(grid, thinning, 1, Some(1))?;
    let mut rl = PathRecorder::new(grid, thinning, 1, None)?;
    drive_coupled(model, grid, &mut GaussianStream::new(seed), x0, &mut rc, &mut rl)?;
    Ok((rc.into_path(*grid, seed)?, rl.into_path(*grid, seed)?))
}

/// The colored model's stationary covariance of `(X, Y)` in the scalar OU
/// case, solved from the joint Lyapunov equation of the linear system.
pub fn scalar_joint_covariance(theta: f64, g: f64, a: f64, sigma: f64, eps: f64) -> Result<Matrix> {
    let drift = Matrix::from_row_slice(2, 2, &[theta, -g / eps, 0.0, a / (eps * eps)]);
    let vol = Matrix::from_row_slice(2, 1, &[0.0, sigma / eps]);
    linalg::solve_lyapunov(&drift, &(&vol * vol.transpose()))
}
