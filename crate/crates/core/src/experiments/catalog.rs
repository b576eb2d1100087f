//! Named experiments: default configurations, runners and pass/fail checks.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Variant;
use crate::experiments::clt::experiment_clt;
use crate::experiments::config::{
    config_set_to_json, matrix_to_rows, CheckpointSpec, GridSpec, ModelSpec, RunConfig, System,
};
use crate::experiments::harness::{run_replications, MonteCarloSummary, ReplicationPlan};
use crate::experiments::identities::identity_residuals;
use crate::filtering::{FilterConfig, FilterScheme};
use crate::linalg::{self, Matrix};
use crate::model::{limit_coefficients, LevyModel};
use crate::noise::GaussianStream;
use crate::sgdct::LearningRate;
use crate::simulate::{drive_coupled, FnObserver};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Additive1d,
    Additive2d,
    Levy,
    Clt,
    Identities,
    ConvergenceRate,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Additive1d,
        Experiment::Additive2d,
        Experiment::Levy,
        Experiment::Clt,
        Experiment::Identities,
        Experiment::ConvergenceRate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Additive1d => "additive-1d",
            Experiment::Additive2d => "additive-2d",
            Experiment::Levy => "levy",
            Experiment::Clt => "clt",
            Experiment::Identities => "identities",
            Experiment::ConvergenceRate => "convergence-rate",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == name).ok_or_else(|| {
            let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            Error::InvalidParameter(format!(
                "unknown experiment `{name}` (available: {})",
                names.join(", ")
            ))
        })
    }

    /// Desk-scale defaults.
    pub fn default_configs(&self) -> Vec<RunConfig> {
        match self {
            Experiment::Additive1d => additive_1d(),
            Experiment::Additive2d => vec![
                additive_2d(System::Limit, &[Variant::Mle, Variant::Sgdct, Variant::MleFiltered, Variant::SgdctFiltered]),
                additive_2d(System::Colored, &[Variant::MleFiltered, Variant::SgdctFiltered]),
            ],
            Experiment::Levy => vec![levy()],
            Experiment::Clt => vec![clt()],
            Experiment::Identities => identities(),
            Experiment::ConvergenceRate => vec![convergence_rate()],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn exact_filter() -> Option<FilterConfig> {
    Some(FilterConfig {
        delta: 1.0,
        scheme: FilterScheme::ExactExponential,
    })
}

fn with_estimators(mut cfg: RunConfig, variants: &[Variant], lr: (f64, f64)) -> RunConfig {
    cfg.estimator.variants = variants.to_vec();
    cfg.estimator.lr = Some(LearningRate { a: lr.0, b: lr.1 });
    cfg
}

/// Plain estimators at `ε = 0.1`, filtered ones at `ε = 0.1` and `ε = 0.05`.
/// The `ε = 0.1` runs sum 8 draws per step so they share Brownian paths with
/// the `ε = 0.05` run.
fn additive_1d() -> Vec<RunConfig> {
    let base = |eps: f64, refine: usize| {
        let mut grid = GridSpec::eps_cubed(1000.0);
        grid.refine = refine;
        let mut cfg = RunConfig::new(ModelSpec::unit_scalar(eps), grid);
        cfg.filter = exact_filter();
        cfg
    };
    vec![
        with_estimators(base(0.1, 8), &[Variant::Mle, Variant::Sgdct], (1.0, 0.1)),
        with_estimators(base(0.1, 8), &[Variant::MleFiltered, Variant::SgdctFiltered], (4.0, 1.0)),
        with_estimators(base(0.05, 1), &[Variant::MleFiltered, Variant::SgdctFiltered], (4.0, 1.0)),
    ]
}

fn additive_2d(system: System, variants: &[Variant]) -> RunConfig {
    let a = LevyModel::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).expect("unit Levy parameters").ou_drift();
    let model = ModelSpec::Additive {
        theta: vec![vec![2.0, 1.0], vec![1.0, 2.0]],
        basis: "neg_identity".into(),
        g: matrix_to_rows(&Matrix::identity(2, 2)),
        a: matrix_to_rows(&a),
        sigma: matrix_to_rows(&Matrix::identity(2, 2)),
        epsilon: 0.1,
    };
    let mut cfg = RunConfig::new(model, GridSpec::eps_cubed(2000.0));
    cfg.system = system;
    cfg.filter = exact_filter();
    with_estimators(cfg, variants, (100.0, 0.1))
}

fn levy() -> RunConfig {
    let mut cfg = RunConfig::new(ModelSpec::unit_levy(0.1), GridSpec::eps_cubed(4000.0));
    cfg.filter = exact_filter();
    with_estimators(cfg, &[Variant::MleLevy, Variant::SgdctLevy], (10.0, 0.1))
}

fn clt() -> RunConfig {
    let mut cfg = RunConfig::new(ModelSpec::unit_scalar(0.1), GridSpec::eps_cubed(1000.0));
    cfg.filter = exact_filter();
    cfg.experiment.checkpoints = CheckpointSpec::Final;
    with_estimators(cfg, &[Variant::MleFiltered, Variant::SgdctFiltered], (4.0, 1.0))
}

/// Long runs with a step well below `ε²` and the Euler filter, whose update
/// matches the generator of `Z` exactly.
fn identities() -> Vec<RunConfig> {
    [ModelSpec::unit_scalar(0.1), ModelSpec::unit_levy(0.1)]
        .into_iter()
        .map(|model| {
            let mut cfg = RunConfig::new(model, GridSpec::fixed(500.0, 1e-5));
            cfg.filter = Some(FilterConfig {
                delta: 1.0,
                scheme: FilterScheme::Euler,
            });
            cfg.experiment.replications = 4;
            cfg.experiment.burn_in = 0.1;
            cfg.experiment.checkpoints = CheckpointSpec::Final;
            cfg
        })
        .collect()
}

fn convergence_rate() -> RunConfig {
    let mut cfg = RunConfig::new(ModelSpec::unit_scalar(0.1), GridSpec::fixed(10.0, 1.25e-4));
    cfg.experiment.replications = 200;
    cfg.experiment.epsilons = vec![0.2, 0.1, 0.05];
    cfg.experiment.checkpoints = CheckpointSpec::Final;
    cfg
}

/// Command-line overrides applied on top of configuration files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    /// `M`, and `R` for the CLT study.
    pub replications: Option<usize>,
    pub base_seed: Option<u64>,
    pub variant: Option<Variant>,
}

impl Overrides {
    pub fn apply(&self, configs: Vec<RunConfig>) -> Result<Vec<RunConfig>> {
        let mut out = Vec::with_capacity(configs.len());
        for mut cfg in configs {
            if let Some(eps) = self.epsilon {
                cfg.model.set_epsilon(eps);
            }
            if let Some(m) = self.replications {
                cfg.experiment.replications = m;
                cfg.experiment.clt_samples = m;
            }
            if let Some(seed) = self.base_seed {
                cfg.experiment.base_seed = seed;
            }
            if let Some(v) = self.variant {
                let selected = cfg.estimator.selected();
                if !selected.is_empty() {
                    if !selected.contains(&v) {
                        continue;
                    }
                    cfg.estimator.variant = None;
                    cfg.estimator.variants = vec![v];
                }
            }
            out.push(cfg);
        }
        if out.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no configuration runs variant {}",
                self.variant.map_or("?", |v| v.name())
            )));
        }
        Ok(out)
    }
}

/// One pass/fail verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Serialize)]
struct Verdict<'a> {
    experiment: Experiment,
    tag: &'a str,
    passed: bool,
    checks: &'a [Check],
}

/// The files and verdicts produced by one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub experiment: Experiment,
    /// Correlation scales covered, e.g. `eps=0.05`.
    pub tag: String,
    pub configs: Vec<RunConfig>,
    pub files: BTreeMap<String, Vec<u8>>,
    pub checks: Vec<Check>,
}

impl Bundle {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn verdict_json(&self) -> String {
        let v = Verdict {
            experiment: self.experiment,
            tag: &self.tag,
            passed: self.passed(),
            checks: &self.checks,
        };
        serde_json::to_string_pretty(&v).expect("verdict serializes") + "\n"
    }

    pub fn config_json(&self) -> String {
        config_set_to_json(&self.configs) + "\n"
    }

    /// Writes the data files, `config.json` and `verdict.json` into `dir`.
    pub fn write_to(&self, dir: &FsPath) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        std::fs::write(dir.join("config.json"), self.config_json())?;
        std::fs::write(dir.join("verdict.json"), self.verdict_json())?;
        Ok(())
    }
}

fn fmt_eps(eps: f64) -> String {
    format!("{eps}")
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s.into_bytes()
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config: &'a RunConfig,
    #[serde(flatten)]
    summary: &'a MonteCarloSummary,
}

/// Runs a named experiment on the given configurations, normally
/// [`Experiment::default_configs`] with overrides applied.
pub fn run_experiment(experiment: Experiment, configs: Vec<RunConfig>) -> Result<Bundle> {
    let configs = configs.into_iter().map(|c| c.resolve()).collect::<Result<Vec<_>>>()?;
    if configs.is_empty() {
        return Err(Error::InvalidParameter("no configuration given".into()));
    }
    let mut eps: Vec<f64> = configs.iter().map(|c| c.model.epsilon()).collect();
    if experiment == Experiment::ConvergenceRate {
        eps = configs.iter().flat_map(|c| c.experiment.epsilons.clone()).collect();
    }
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let tag = eps.iter().map(|e| format!("eps={}", fmt_eps(*e))).collect::<Vec<_>>().join(",");
    let mut bundle = Bundle {
        experiment,
        tag,
        configs: configs.clone(),
        files: BTreeMap::new(),
        checks: Vec::new(),
    };
    match experiment {
        Experiment::Additive1d | Experiment::Additive2d | Experiment::Levy => monte_carlo(experiment, &configs, &mut bundle)?,
        Experiment::Clt => clt_study(&configs, &mut bundle)?,
        Experiment::Identities => identity_study(&configs, &mut bundle)?,
        Experiment::ConvergenceRate => convergence_study(&configs, &mut bundle)?,
    }
    Ok(bundle)
}

struct McResult {
    cfg: RunConfig,
    truth: Matrix,
    summary: MonteCarloSummary,
}

fn max_entry_error(mean: &Matrix, truth: &Matrix) -> f64 {
    (mean - truth).amax()
}

fn monte_carlo(experiment: Experiment, configs: &[RunConfig], bundle: &mut Bundle) -> Result<()> {
    let mut results = Vec::new();
    for cfg in configs {
        let plan = ReplicationPlan::from_config(cfg)?;
        let summaries = run_replications(&plan, cfg.experiment.replications, cfg.experiment.base_seed)?;
        let truth = cfg.model.truth()?;
        for summary in summaries {
            let system = match cfg.system {
                System::Colored => "colored",
                System::Limit => "limit",
            };
            let mut stem = format!("{system}_eps{}_{}", fmt_eps(cfg.model.epsilon()), summary.variant.name());
            if bundle.files.contains_key(&format!("{stem}.csv")) {
                stem = format!("{stem}_{}", results.len());
            }
            let mut csv = Vec::new();
            summary.write_csv(&mut csv)?;
            bundle.files.insert(format!("{stem}.csv"), csv);
            bundle.files.insert(
                format!("{stem}_summary.json"),
                json_bytes(&SummaryFile {
                    config: cfg,
                    summary: &summary,
                }),
            );
            results.push(McResult {
                cfg: cfg.clone(),
                truth: truth.clone(),
                summary,
            });
        }
    }
    for r in &results {
        let s = &r.summary;
        let label = format!(
            "{}-{}-eps{}",
            match r.cfg.system {
                System::Colored => "colored",
                System::Limit => "limit",
            },
            s.variant.name(),
            fmt_eps(r.cfg.model.epsilon())
        );
        if !s.failures.is_empty() {
            bundle.checks.push(Check::new(
                format!("completed-{label}"),
                false,
                format!("{} of {} replications failed", s.failures.len(), s.replications),
            ));
        }
        let Some(mean) = s.final_mean() else { continue };
        let plain_colored = r.cfg.system == System::Colored && !s.variant.needs_filter();
        let (name, target, tol) = match (experiment, plain_colored, s.variant) {
            // plain estimators on colored data converge to zero, not θ
            (Experiment::Additive1d, true, _) => ("bias", Matrix::zeros(mean.nrows(), mean.ncols()), 0.1),
            (Experiment::Additive1d, false, _) => ("debias", r.truth.clone(), 0.15),
            (Experiment::Levy, _, Variant::MleLevy) => ("recovery", r.truth.clone(), 0.15),
            (_, _, _) => ("recovery", r.truth.clone(), 0.2),
        };
        let err = max_entry_error(&mean, &target);
        bundle.checks.push(Check::new(
            format!("{name}-{label}"),
            err <= tol,
            format!("max |mean final - target| = {err:.4} (tolerance {tol})"),
        ));
    }
    if experiment == Experiment::Additive1d {
        eps_ordering(&results, bundle);
    }
    if experiment == Experiment::Levy {
        for cfg in configs {
            if let Some(levy) = cfg.model.levy() {
                bundle.checks.push(levy_limit_check(&levy, cfg.model.epsilon())?);
            }
        }
    }
    Ok(())
}

/// Filtered colored runs at the smallest `ε` must beat those at the largest
/// in mean absolute error of the final estimate.
fn eps_ordering(results: &[McResult], bundle: &mut Bundle) {
    for variant in [Variant::MleFiltered, Variant::SgdctFiltered] {
        let runs: Vec<&McResult> = results
            .iter()
            .filter(|r| r.cfg.system == System::Colored && r.summary.variant == variant)
            .collect();
        let by_eps = |pick: fn(f64, f64) -> bool| {
            runs.iter()
                .copied()
                .reduce(|a, b| if pick(b.cfg.model.epsilon(), a.cfg.model.epsilon()) { b } else { a })
        };
        let (Some(small), Some(large)) = (by_eps(|b, a| b < a), by_eps(|b, a| b > a)) else {
            continue;
        };
        if small.cfg.model.epsilon() == large.cfg.model.epsilon() {
            continue;
        }
        let (es, el) = (
            small.summary.final_mean_abs_error(&small.truth),
            large.summary.final_mean_abs_error(&large.truth),
        );
        let mut detail = format!(
            "MAE {es:.4} at eps={} vs {el:.4} at eps={}",
            fmt_eps(small.cfg.model.epsilon()),
            fmt_eps(large.cfg.model.epsilon())
        );
        if let Some((shift, se)) = paired_shift(small, large) {
            detail.push_str(&format!("; paired mean shift of the first entry {shift:+.4} (SE {se:.4})"));
        }
        bundle
            .checks
            .push(Check::new(format!("eps-ordering-{}", variant.name()), es < el, detail));
    }
}

/// Mean and standard error over seeds present in both runs of the change in
/// the first estimated entry from `large` to `small`.
fn paired_shift(small: &McResult, large: &McResult) -> Option<(f64, f64)> {
    let first = |r: &McResult| -> BTreeMap<u64, f64> {
        r.summary
            .finals
            .iter()
            .filter_map(|f| f.value.as_ref().map(|v| (f.seed, v[0])))
            .collect()
    };
    let (s, l) = (first(small), first(large));
    let diffs: Vec<f64> = s.iter().filter_map(|(seed, v)| l.get(seed).map(|w| v - w)).collect();
    (diffs.len() >= 2).then(|| (stats::mean(&diffs), stats::std_dev(&diffs) / (diffs.len() as f64).sqrt()))
}

/// `L` from the closed form against `L` rebuilt from the generic limit
/// coefficients: `-L e_j = θ f(e_j) + b(e_j)`.
pub fn levy_limit_check(levy: &LevyModel, epsilon: f64) -> Result<Check> {
    let closed = crate::model::levy_limit(levy)?;
    let model = levy.colored(epsilon)?;
    let coeffs = limit_coefficients(&model)?;
    let mut generic = Matrix::zeros(2, 2);
    for j in 0..2 {
        let mut e = [0.0; 2];
        e[j] = 1.0;
        let f = model.basis().eval_vec(&e);
        let drift = model.theta() * nalgebra::DVector::from_vec(f) + coeffs.correction(&e);
        for i in 0..2 {
            generic[(i, j)] = -drift[i];
        }
    }
    let gap = (&closed - &generic).amax();
    Ok(Check::new(
        "levy-limit-closed-form",
        gap <= 1e-6,
        format!("closed form {:?} vs generic route, max gap {gap:.2e}", linalg::to_row_major(&closed)),
    ))
}

fn clt_study(configs: &[RunConfig], bundle: &mut Bundle) -> Result<()> {
    for (i, cfg) in configs.iter().enumerate() {
        let r = cfg.experiment.clt_samples;
        let prefix = if configs.len() > 1 { format!("{i}_") } else { String::new() };
        let (mle, sgdct) = experiment_clt(cfg, r)?;
        let tol = if r >= 1000 { 0.25 } else { 0.35 };
        let mut columns = vec![("mle-filtered", &mle.samples)];
        for (name, arm) in [("mle-filtered", Ok(&mle)), ("sgdct-filtered", sgdct.as_ref())] {
            match arm {
                Ok(s) => {
                    bundle.files.insert(format!("{prefix}clt_{name}.json"), json_bytes(s));
                    let rel = s.variance_relative_error();
                    bundle.checks.push(Check::new(
                        format!("clt-variance-{name}"),
                        rel <= tol,
                        format!(
                            "fitted variance {:.4} vs predicted {:.4} (relative error {rel:.3}, tolerance {tol})",
                            s.fitted_variance, s.predicted_variance
                        ),
                    ));
                    let bound = 3.0 * s.mean_standard_error();
                    bundle.checks.push(Check::new(
                        format!("clt-mean-{name}"),
                        s.fitted_mean.abs() <= bound,
                        format!("fitted mean {:.4} (bound {bound:.4})", s.fitted_mean),
                    ));
                }
                Err(e) => bundle.checks.push(Check::new(format!("clt-{name}"), false, e.to_string())),
            }
        }
        if let Ok(s) = &sgdct {
            columns.push(("sgdct-filtered", &s.samples));
        }
        let mut csv = format!("index,{}\n", columns.iter().map(|c| c.0).collect::<Vec<_>>().join(","));
        for k in 0..mle.samples.len().max(columns.last().map_or(0, |c| c.1.len())) {
            let cells: Vec<String> = columns
                .iter()
                .map(|(_, v)| v.get(k).map_or(String::new(), |x| format!("{x:.16e}")))
                .collect();
            csv.push_str(&format!("{k},{}\n", cells.join(",")));
        }
        bundle.files.insert(format!("{prefix}clt_samples.csv"), csv.into_bytes());
    }
    Ok(())
}

fn identity_study(configs: &[RunConfig], bundle: &mut Bundle) -> Result<()> {
    let mut reports = Vec::new();
    for cfg in configs {
        let report = identity_residuals(cfg)?;
        for r in &report.residuals {
            bundle.checks.push(Check::new(
                format!("{}-{}", r.model, r.identity.name()),
                r.pass,
                format!(
                    "residual {:?}, SE {:?}, max |r|/SE = {:.2}",
                    r.residual.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
                    r.standard_error.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
                    r.z_score()
                ),
            ));
        }
        reports.push(report);
    }
    bundle.files.insert("identities.json".into(), json_bytes(&reports));
    Ok(())
}

/// Root mean square of `X^ε_T - X_T` over coupled runs, one entry per `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub rms: Vec<f64>,
    pub slope: f64,
}

pub fn strong_convergence(cfg: &RunConfig) -> Result<ConvergenceReport> {
    let cfg = cfg.clone().resolve()?;
    let epsilons = cfg.experiment.epsilons.clone();
    if epsilons.len() < 2 {
        return Err(Error::InvalidParameter(
            "the convergence study needs at least two values in experiment.epsilons".into(),
        ));
    }
    let grid = cfg.grid.grid()?;
    let base = cfg.model.colored()?;
    let seeds: Vec<u64> = (0..cfg.experiment.replications as u64)
        .map(|r| cfg.experiment.base_seed + r)
        .collect();
    let mut rms = Vec::with_capacity(epsilons.len());
    for &eps in &epsilons {
        let model = base.with_epsilon(eps)?;
        let sq: Vec<f64> = {
            use rayon::prelude::*;
            seeds
                .par_iter()
                .map(|&seed| -> Result<f64> {
                    let (mut xe, mut x) = (0.0, 0.0);
                    drive_coupled(
                        &model,
                        &grid,
                        &mut GaussianStream::with_refinement(seed, cfg.grid.refine),
                        0.0,
                        &mut FnObserver(|_: usize, v: &[f64], _: Option<&[f64]>| xe = v[0]),
                        &mut FnObserver(|_: usize, v: &[f64], _: Option<&[f64]>| x = v[0]),
                    )?;
                    Ok((xe - x) * (xe - x))
                })
                .collect::<Result<Vec<_>>>()?
        };
        rms.push(stats::mean(&sq).sqrt());
    }
    let slope = stats::log_log_slope(&epsilons, &rms);
    Ok(ConvergenceReport { epsilons, rms, slope })
}

fn convergence_study(configs: &[RunConfig], bundle: &mut Bundle) -> Result<()> {
    for (i, cfg) in configs.iter().enumerate() {
        let prefix = if configs.len() > 1 { format!("{i}_") } else { String::new() };
        let report = strong_convergence(cfg)?;
        let mut csv = String::from("epsilon,rms\n");
        for (e, r) in report.epsilons.iter().zip(&report.rms) {
            csv.push_str(&format!("{e:.16e},{r:.16e}\n"));
        }
        bundle.files.insert(format!("{prefix}convergence.csv"), csv.into_bytes());
        bundle.files.insert(format!("{prefix}convergence.json"), json_bytes(&report));
        bundle.checks.push(Check::new(
            "convergence-slope",
            (0.6..=1.4).contains(&report.slope),
            format!("log-log slope {:.3} (accepted [0.6, 1.4])", report.slope),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_unknown_lists_all() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::parse(e.name()).unwrap(), e);
        }
        let err = Experiment::parse("bogus").unwrap_err().to_string();
        for e in Experiment::ALL {
            assert!(err.contains(e.name()), "{err}");
        }
    }

    #[test]
    fn defaults_resolve() {
        for e in Experiment::ALL {
            for cfg in e.default_configs() {
                cfg.resolve().unwrap_or_else(|err| panic!("{e}: {err}"));
            }
        }
        let cfg = additive_1d()[0].clone().resolve().unwrap();
        assert_eq!(cfg.grid.h, Some(0.001));
    }

    #[test]
    fn levy_limit_matches_generic_route() {
        let check = levy_limit_check(&LevyModel::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap(), 0.1).unwrap();
        assert!(check.pass, "{check}");
        let other = levy_limit_check(&LevyModel::new(2.0, 0.7, 1.3, 0.5, 0.4, 2.0).unwrap(), 0.1).unwrap();
        assert!(other.pass, "{other}");
    }

    #[test]
    fn overrides() {
        let o = Overrides {
            epsilon: Some(0.05),
            replications: Some(3),
            base_seed: Some(9),
            variant: Some(Variant::SgdctFiltered),
        };
        let out = o.apply(Experiment::Additive1d.default_configs()).unwrap();
        assert_eq!(out.len(), 2);
        for cfg in &out {
            assert_eq!(cfg.model.epsilon(), 0.05);
            assert_eq!(cfg.experiment.replications, 3);
            assert_eq!(cfg.experiment.base_seed, 9);
            assert_eq!(cfg.estimator.selected(), vec![Variant::SgdctFiltered]);
        }
        let none = Overrides {
            variant: Some(Variant::MleLevy),
            ..Default::default()
        };
        assert!(none.apply(Experiment::Additive1d.default_configs()).is_err());
    }

    #[test]
    fn reduced_bundle_is_deterministic_and_tagged() {
        let shrink = |mut cfg: RunConfig| {
            cfg.grid.horizon = 2.0;
            cfg.experiment.replications = 2;
            cfg.model.set_epsilon(0.2);
            cfg
        };
        let configs: Vec<RunConfig> = Experiment::Additive2d.default_configs().into_iter().map(shrink).collect();
        let a = run_experiment(Experiment::Additive2d, configs.clone()).unwrap();
        let b = run_experiment(Experiment::Additive2d, configs).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tag, "eps=0.2");
        assert!(a.files.contains_key("colored_eps0.2_mle-filtered.csv"));
        assert!(a.files.contains_key("limit_eps0.2_sgdct_summary.json"));
        assert_eq!(a.checks.len(), 6);
        let echoed = crate::experiments::config::parse_config_set(&a.config_json()).unwrap();
        assert_eq!(run_experiment(Experiment::Additive2d, echoed).unwrap().files, a.files);
    }
}
