//! Monte Carlo replication of estimator runs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Checkpoints, EstimatePath, Feed, Learner, Variant};
use crate::experiments::config::{RunConfig, System};
use crate::filtering::FilterConfig;
use crate::linalg::Matrix;
use crate::model::{ColoredModel, DriftBasis, LimitModel};
use crate::noise::GaussianStream;
use crate::sgdct::LearningRate;
use crate::simulate::{drive_colored, drive_limit, InitialState, TimeGrid};
use crate::stats;

/// The equation generating the data.
#[derive(Clone, Debug)]
pub enum DataModel {
    Colored(ColoredModel),
    Limit(LimitModel),
}

/// Everything one replication needs apart from its seed.
#[derive(Clone, Debug)]
pub struct ReplicationPlan {
    pub data: DataModel,
    pub grid: TimeGrid,
    pub refine: usize,
    pub basis: DriftBasis,
    pub filter: Option<FilterConfig>,
    pub variants: Vec<Variant>,
    pub lr: Option<LearningRate>,
    pub theta0: Option<Matrix>,
    pub checkpoints: Checkpoints,
}

impl ReplicationPlan {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let cfg = cfg.clone().resolve()?;
        let colored = cfg.model.colored()?;
        let data = match cfg.system {
            System::Colored => DataModel::Colored(colored.clone()),
            System::Limit => DataModel::Limit(cfg.model.limit()?),
        };
        let grid = cfg.grid.grid()?;
        let variants = cfg.estimator.selected();
        if variants.is_empty() {
            return Err(Error::InvalidParameter("no estimator variant selected".into()));
        }
        Ok(ReplicationPlan {
            data,
            grid,
            refine: cfg.grid.refine,
            basis: colored.basis().clone(),
            filter: cfg.filter,
            checkpoints: cfg.experiment.checkpoints.resolve(&grid)?,
            variants,
            lr: cfg.estimator.lr,
            theta0: cfg.theta0()?,
        })
    }

    /// Simulates one path and streams it through every variant. The outer
    /// error means the simulation itself failed; inner errors are per variant.
    pub fn run_one(&self, seed: u64) -> Result<Vec<Result<EstimatePath>>> {
        let mut learners = self
            .variants
            .iter()
            .map(|v| v.learner(&self.basis, self.lr, self.theta0.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        {
            let refs: Vec<&mut dyn Learner> = learners.iter_mut().map(|l| &mut **l as &mut dyn Learner).collect();
            let mut feed = Feed::new(
                self.basis.clone(),
                self.grid.step(),
                self.filter.as_ref(),
                &self.checkpoints,
                refs,
            )?;
            let mut noise = GaussianStream::with_refinement(seed, self.refine);
            match &self.data {
                DataModel::Colored(m) => drive_colored(m, &self.grid, &mut noise, &InitialState::default(), &mut feed)?,
                DataModel::Limit(m) => drive_limit(m, &self.grid, &mut noise, None, &mut feed)?,
            }
        }
        Ok(learners.iter_mut().map(|l| l.take_path()).collect())
    }
}

/// A replication excluded from a summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub error: String,
}

/// Final estimate of one replication, `null` when unavailable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalValue {
    pub seed: u64,
    pub value: Option<Vec<f64>>,
}

/// Entrywise mean and standard deviation across replications at each
/// checkpoint. Matrices are flattened row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub variant: Variant,
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "M")]
    pub replications: usize,
    pub base_seed: u64,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    /// Replications with an estimate at each checkpoint.
    pub available: Vec<usize>,
    pub failures: Vec<Failure>,
    pub finals: Vec<FinalValue>,
}

impl MonteCarloSummary {
    fn from_runs(variant: Variant, rows: usize, cols: usize, base_seed: u64, runs: &[(u64, Result<&EstimatePath>)]) -> Self {
        let mut failures = Vec::new();
        let mut ok: Vec<(u64, &EstimatePath)> = Vec::new();
        for (seed, run) in runs {
            match run {
                Ok(p) => ok.push((*seed, *p)),
                Err(e) => failures.push(Failure {
                    seed: *seed,
                    error: e.to_string(),
                }),
            }
        }
        let times = ok.first().map(|(_, p)| p.times.clone()).unwrap_or_default();
        let entries = rows * cols;
        let (mut mean, mut std, mut available) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..times.len() {
            let present: Vec<&Vec<f64>> = ok.iter().filter_map(|(_, p)| p.values[i].as_ref()).collect();
            available.push(present.len());
            let (m, s): (Vec<f64>, Vec<f64>) = (0..entries)
                .map(|e| {
                    let col: Vec<f64> = present.iter().map(|v| v[e]).collect();
                    (stats::mean(&col), stats::std_dev(&col))
                })
                .unzip();
            mean.push(m);
            std.push(s);
        }
        let finals = ok
            .iter()
            .map(|(seed, p)| FinalValue {
                seed: *seed,
                value: p.values.last().cloned().flatten(),
            })
            .collect();
        MonteCarloSummary {
            variant,
            rows,
            cols,
            replications: runs.len(),
            base_seed,
            times,
            mean,
            std,
            available,
            failures,
            finals,
        }
    }

    /// Successful replications.
    pub fn completed(&self) -> usize {
        self.replications - self.failures.len()
    }

    pub fn final_mean(&self) -> Option<Matrix> {
        self.mean.last().map(|m| crate::linalg::from_row_major(self.rows, self.cols, m))
    }

    pub fn final_std(&self) -> Option<Matrix> {
        self.std.last().map(|m| crate::linalg::from_row_major(self.rows, self.cols, m))
    }

    /// Mean over replications of the largest entrywise error of the final
    /// estimate; replications without one are skipped.
    pub fn final_mean_abs_error(&self, truth: &Matrix) -> f64 {
        let truth = crate::linalg::to_row_major(truth);
        let errs: Vec<f64> = self
            .finals
            .iter()
            .filter_map(|f| f.value.as_ref())
            .map(|v| v.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect();
        stats::mean(&errs)
    }

    /// Header `t,mean_11..,std_11..,available`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        for prefix in ["mean", "std"] {
            for i in 1..=self.rows {
                for j in 1..=self.cols {
                    header.push(format!("{prefix}_{i}{j}"));
                }
            }
        }
        header.push("available".into());
        writeln!(w, "{}", header.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let mut line = format!("{t:.16e}");
            for v in self.mean[k].iter().chain(&self.std[k]) {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{line},{}", self.available[k])?;
        }
        Ok(())
    }
}

/// Runs `m` replications with seeds `base_seed + r` and summarizes each
/// variant. Replications run in parallel; results are reduced in seed order.
pub fn run_replications(plan: &ReplicationPlan, m: usize, base_seed: u64) -> Result<Vec<MonteCarloSummary>> {
    if m == 0 {
        return Err(Error::InvalidParameter("at least one replication is needed".into()));
    }
    let seeds: Vec<u64> = (0..m as u64).map(|r| base_seed + r).collect();
    let runs: Vec<(u64, Result<Vec<Result<EstimatePath>>>)> =
        seeds.par_iter().map(|&seed| (seed, plan.run_one(seed))).collect();
    let (rows, cols) = (plan.basis.dim_in(), plan.basis.dim_out());
    Ok(plan
        .variants
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let per_seed: Vec<(u64, Result<&EstimatePath>)> = runs
                .iter()
                .map(|(seed, run)| {
                    let r = match run {
                        Ok(paths) => paths[i].as_ref().map_err(clone_error),
                        Err(e) => Err(clone_error(e)),
                    };
                    (*seed, r)
                })
                .collect();
            let (rows, cols) = if variant.is_levy() { (2, 2) } else { (rows, cols) };
            MonteCarloSummary::from_runs(variant, rows, cols, base_seed, &per_seed)
        })
        .collect())
}

fn clone_error(e: &Error) -> Error {
    Error::InvalidParameter(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{CheckpointSpec, GridSpec, ModelSpec};

    fn config(m: usize) -> RunConfig {
        let mut cfg = RunConfig::new(ModelSpec::unit_scalar(0.1), GridSpec::eps_cubed(5.0));
        cfg.filter = Some(FilterConfig::exact(1.0).unwrap());
        cfg.estimator.variants = vec![Variant::Mle, Variant::MleFiltered, Variant::SgdctFiltered];
        cfg.estimator.lr = Some(LearningRate::new(4.0, 1.0).unwrap());
        cfg.experiment.replications = m;
        cfg.experiment.checkpoints = CheckpointSpec::Every { interval: 1.0 };
        cfg
    }

    #[test]
    fn single_replication_has_zero_spread() {
        let plan = ReplicationPlan::from_config(&config(1)).unwrap();
        let out = run_replications(&plan, 1, 7).unwrap();
        assert_eq!(out.len(), 3);
        for s in &out {
            assert_eq!(s.times, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
            assert!(s.std.iter().flatten().all(|&v| v == 0.0));
            assert_eq!(s.finals[0].seed, 7);
        }
    }

    #[test]
    fn summaries_are_reproducible_and_match_single_runs() {
        let plan = ReplicationPlan::from_config(&config(3)).unwrap();
        let a = run_replications(&plan, 3, 11).unwrap();
        let b = run_replications(&plan, 3, 11).unwrap();
        assert_eq!(a, b);
        let solo = plan.run_one(12).unwrap();
        let last = solo[0].as_ref().unwrap().values.last().unwrap().clone().unwrap();
        assert_eq!(a[0].finals[1].value.as_ref().unwrap(), &last);
        let finals: Vec<f64> = a[0].finals.iter().map(|f| f.value.as_ref().unwrap()[0]).collect();
        assert_eq!(a[0].mean.last().unwrap()[0], stats::mean(&finals));
        assert!(a[0].std.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn failed_replications_are_reported() {
        let mut cfg = config(2);
        cfg.estimator.variants = vec![Variant::Sgdct];
        // a learning rate this large blows up the explicit update
        cfg.estimator.lr = Some(LearningRate::new(1e9, 1e-9).unwrap());
        cfg.model = ModelSpec::Additive {
            theta: vec![vec![1.0]],
            basis: "neg_identity".into(),
            g: vec![vec![1.0]],
            a: vec![vec![1.0]],
            sigma: vec![vec![1.0]],
            epsilon: 0.1,
        };
        let plan = ReplicationPlan::from_config(&cfg).unwrap();
        let out = run_replications(&plan, 2, 1).unwrap();
        assert_eq!(out[0].failures.len(), 2);
        assert_eq!(out[0].completed(), 0);
        assert!(out[0].failures[0].error.contains("non-finite"), "{}", out[0].failures[0].error);
    }
}
