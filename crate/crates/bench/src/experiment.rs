//! Replicated experiments over methods.

use std::sync::Arc;
use std::time::{Duration, Instant};

use cmeta::conformal::{self, ItemInterval, ScoreKind};
use cmeta::dgp::{self, CausalDataset, CsvSchema, Propensity, SplitIndices, SynthConfig};
use cmeta::metalearner::{self, Learner, NuisanceModel};
use cmeta::regress::GbmConfig;
use cmeta::stochord::{self, AveragedEcdf, OrderReport, AVERAGED_GRID};
use cmeta::wcp::{self, WcpNested};
use cmeta::Matrix;
use rayon::prelude::*;

use crate::config::{DataSection, ExperimentConfig, Method};
use crate::error::{BenchError, Result};
use crate::metrics::{self, mean_se};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `r`, independent of scheduling.
pub fn replication_seed(master_seed: u64, r: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(r as u64))
}

enum DataSource {
    Synthetic(SynthConfig),
    Fixed(Arc<CausalDataset>),
}

impl DataSource {
    fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.data {
            DataSection::Synthetic { n, d, .. } => {
                let setup = cfg.data.setup()?.expect("synthetic data has a setup");
                Ok(DataSource::Synthetic(SynthConfig::new(setup, *n, *d, 0)))
            }
            DataSection::Csv { path, propensity } => {
                let schema = CsvSchema {
                    propensity: propensity.map(Propensity::Constant),
                };
                let ds = dgp::load_csv(path, &schema).map_err(BenchError::Data)?;
                Ok(DataSource::Fixed(Arc::new(ds)))
            }
        }
    }

    fn dataset(&self, seed: u64) -> Result<Arc<CausalDataset>> {
        match self {
            DataSource::Synthetic(template) => {
                let cfg = SynthConfig {
                    seed,
                    ..template.clone()
                };
                Ok(Arc::new(dgp::generate_synthetic(&cfg)?))
            }
            DataSource::Fixed(ds) => Ok(Arc::clone(ds)),
        }
    }
}

/// Metrics of one method on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    /// Present only when true ITEs are known.
    pub coverage: Option<f64>,
    /// Mean over bounded intervals.
    pub avg_len: f64,
    pub vacuous: usize,
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

impl MethodOutcome {
    fn failed(method: Method, err: impl ToString) -> Self {
        Self {
            method,
            coverage: None,
            avg_len: f64::NAN,
            vacuous: 0,
            rmse: None,
            error: Some(err.to_string()),
        }
    }
}

/// Calibration scores of one meta-learner against the oracle scores of the
/// same fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerScores {
    pub learner: Learner,
    pub pseudo: Vec<f64>,
    pub oracle: Vec<f64>,
    pub report: OrderReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub index: usize,
    pub seed: u64,
    pub outcomes: Vec<MethodOutcome>,
    pub scores: Vec<LearnerScores>,
}

impl ReplicationResult {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub coverage: f64,
    pub coverage_se: f64,
    pub avg_len: f64,
    pub avg_len_se: f64,
    pub rmse: f64,
    pub rmse_se: f64,
    pub vacuous: usize,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub replications: Vec<ReplicationResult>,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn summary(&self) -> Vec<MethodSummary> {
        self.methods
            .iter()
            .map(|&method| {
                let outcomes: Vec<&MethodOutcome> =
                    self.replications.iter().filter_map(|r| r.outcome(method)).collect();
                let ok: Vec<&&MethodOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
                let (coverage, coverage_se) = mean_se(ok.iter().map(|o| o.coverage.unwrap_or(f64::NAN)));
                let (avg_len, avg_len_se) = mean_se(ok.iter().map(|o| o.avg_len));
                let (rmse, rmse_se) = mean_se(ok.iter().map(|o| o.rmse.unwrap_or(f64::NAN)));
                MethodSummary {
                    method,
                    coverage,
                    coverage_se,
                    avg_len,
                    avg_len_se,
                    rmse,
                    rmse_se,
                    vacuous: ok.iter().map(|o| o.vacuous).sum(),
                    failures: outcomes.len() - ok.len(),
                }
            })
            .collect()
    }

    /// Learners with order diagnostics, in method order.
    pub fn learners(&self) -> Vec<Learner> {
        self.methods.iter().filter_map(|m| m.learner()).collect()
    }

    /// Per-replication ECDFs of `learner`'s scores averaged on a shared grid;
    /// `None` without oracle scores.
    pub fn averaged_ecdf(&self, learner: Learner) -> Result<Option<AveragedEcdf>> {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = self
            .replications
            .iter()
            .flat_map(|r| r.scores.iter().filter(|s| s.learner == learner))
            .map(|s| (s.pseudo.clone(), s.oracle.clone()))
            .collect();
        if pairs.is_empty() {
            return Ok(None);
        }
        Ok(Some(stochord::averaged_ecdfs(&pairs, AVERAGED_GRID)?))
    }
}

/// Shared per-replication inputs.
struct Context<'a> {
    ds: &'a CausalDataset,
    splits: &'a SplitIndices,
    x_test: Matrix,
    test: Vec<usize>,
    ites: Option<Vec<f64>>,
    tau: Option<Vec<f64>>,
    alpha: f64,
    kind: ScoreKind,
    gbm: &'a GbmConfig,
}

impl Context<'_> {
    fn evaluate(&self, method: Method, intervals: Vec<ItemInterval>, points: Vec<f64>) -> Result<MethodOutcome> {
        let len = metrics::length_summary(&intervals);
        let coverage = match &self.ites {
            Some(ites) => Some(metrics::metric_coverage(&intervals, ites)?),
            None => None,
        };
        let rmse = match &self.tau {
            Some(tau) => Some(metrics::metric_rmse(&points, tau)?),
            None => None,
        };
        Ok(MethodOutcome {
            method,
            coverage,
            avg_len: len.finite_mean,
            vacuous: len.vacuous,
            rmse,
            error: None,
        })
    }

    fn conformal_meta_learner(
        &self,
        method: Method,
        learner: Learner,
        nuisance: &NuisanceModel,
    ) -> Result<(MethodOutcome, Option<LearnerScores>)> {
        let fit = conformal::conformal_meta_learner_with_nuisance(
            self.ds,
            self.splits,
            nuisance,
            learner,
            self.kind,
            self.alpha,
            self.gbm,
        )?;
        let intervals = fit.intervals(&self.x_test)?;
        let points = fit.cate.predict(&self.x_test)?;
        let outcome = self.evaluate(method, intervals, points)?;
        let scores = if self.ites.is_some() {
            let pseudo = fit.calib_scores.values().to_vec();
            let oracle = fit.oracle_scores(self.ds, &self.splits.calib)?.values().to_vec();
            let report = stochord::order_report(&pseudo, &oracle)?;
            Some(LearnerScores {
                learner,
                pseudo,
                oracle,
                report,
            })
        } else {
            None
        };
        Ok((outcome, scores))
    }

    fn oracle(&self) -> Result<MethodOutcome> {
        let fit = conformal::oracle_conformal(self.ds, self.splits, self.kind, self.alpha, self.gbm)?;
        let intervals = fit.intervals(&self.x_test)?;
        let points = fit.cate.predict(&self.x_test)?;
        self.evaluate(Method::Oracle, intervals, points)
    }

    fn wcp_naive(&self) -> Result<MethodOutcome> {
        let naive = wcp::wcp_naive(self.ds, self.splits, self.alpha, self.gbm)?;
        let intervals = self
            .test
            .iter()
            .map(|&i| naive.interval(self.ds.x().row(i), self.ds.pi(i)))
            .collect::<cmeta::Result<Vec<_>>>()?;
        let points = intervals.iter().map(ItemInterval::midpoint).collect();
        self.evaluate(Method::WcpNaive, intervals, points)
    }

    fn wcp_nested(&self, method: Method, nested: &WcpNested) -> Result<MethodOutcome> {
        let intervals = self
            .x_test
            .iter_rows()
            .map(|row| match method {
                Method::WcpExact => nested.exact_interval(row),
                _ => nested.inexact_interval(row),
            })
            .collect::<cmeta::Result<Vec<_>>>()?;
        let points = intervals.iter().map(ItemInterval::midpoint).collect();
        self.evaluate(method, intervals, points)
    }
}

/// A configured experiment with its data source resolved.
pub struct Experiment {
    cfg: ExperimentConfig,
    source: DataSource,
    gbm: GbmConfig,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let source = DataSource::from_config(&cfg)?;
        let gbm = cfg.gbm.to_config();
        Ok(Self { cfg, source, gbm })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Runs replication `r` at miscoverage `alpha`. Method failures are
    /// recorded in the result; data and split failures are returned.
    pub fn run_replication(&self, r: usize, alpha: f64) -> Result<ReplicationResult> {
        let seed = replication_seed(self.cfg.experiment.master_seed, r);
        let ds = self.source.dataset(splitmix64(seed ^ 1))?;
        let splits = dgp::split(ds.n(), self.cfg.splits.fractions(), splitmix64(seed ^ 2))?;
        let test = splits.held_out(ds.n());
        if test.is_empty() {
            return Err(BenchError::Config("test split is empty".into()));
        }
        let ctx = Context {
            ds: &ds,
            splits: &splits,
            x_test: ds.x().select_rows(&test),
            ites: ds.ites(&test),
            tau: ds.tau_true().map(|t| test.iter().map(|&i| t[i]).collect()),
            test,
            alpha,
            kind: self.cfg.score_kind(),
            gbm: &self.gbm,
        };

        let methods = &self.cfg.experiment.methods;
        let nuisance = methods
            .iter()
            .any(|m| m.learner().is_some())
            .then(|| metalearner::fit_nuisance(&ds, &splits.phi, &self.gbm).map_err(|e| e.to_string()));
        let nested = methods
            .iter()
            .any(|m| matches!(m, Method::WcpExact | Method::WcpInexact))
            .then(|| wcp::wcp_nested(&ds, &splits, alpha, &self.gbm).map_err(|e| e.to_string()));

        let mut outcomes = Vec::with_capacity(methods.len());
        let mut scores = Vec::new();
        for &method in methods {
            let result = match (method, method.learner()) {
                (_, Some(learner)) => match nuisance.as_ref().expect("nuisance fitted") {
                    Ok(nu) => ctx.conformal_meta_learner(method, learner, nu).map(|(o, s)| {
                        scores.extend(s);
                        o
                    }),
                    Err(e) => Ok(MethodOutcome::failed(method, e)),
                },
                (Method::Oracle, _) if ctx.ites.is_none() => Ok(MethodOutcome::failed(method, "no true ITEs")),
                (Method::Oracle, _) => ctx.oracle(),
                (Method::WcpNaive, _) => ctx.wcp_naive(),
                _ => match nested.as_ref().expect("nested fitted") {
                    Ok(n) => ctx.wcp_nested(method, n),
                    Err(e) => Ok(MethodOutcome::failed(method, e)),
                },
            };
            let outcome = result.unwrap_or_else(|e| MethodOutcome::failed(method, e));
            if let Some(e) = &outcome.error {
                log::warn!("replication {r}: {method} failed: {e}");
            }
            outcomes.push(outcome);
        }
        Ok(ReplicationResult {
            index: r,
            seed,
            outcomes,
            scores,
        })
    }

    /// Runs every replication on `jobs` threads. Results are ordered by
    /// replication index whatever the schedule.
    pub fn run(&self, alpha: f64, jobs: usize) -> Result<RunResult> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(BenchError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let start = Instant::now();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
        let reps = self.cfg.experiment.replications;
        let replications = pool.install(|| {
            (0..reps)
                .into_par_iter()
                .map(|r| self.run_replication(r, alpha))
                .collect::<Result<Vec<_>>>()
        })?;
        let wall_time = start.elapsed();
        log::info!("alpha {alpha}: {reps} replications in {:.2?}", wall_time);
        Ok(RunResult {
            alpha,
            methods: self.cfg.experiment.methods.clone(),
            replications,
            wall_time,
        })
    }

    /// One run per level of the sweep grid, on the same replication seeds.
    pub fn sweep(&self, jobs: usize) -> Result<Vec<RunResult>> {
        self.cfg.sweep.alphas.iter().map(|&a| self.run(a, jobs)).collect()
    }
}

/// Convenience wrapper around [`Experiment`].
pub fn run_experiment(cfg: ExperimentConfig, jobs: usize) -> Result<RunResult> {
    let alpha = cfg.experiment.alpha;
    Experiment::new(cfg)?.run(alpha, jobs)
}
