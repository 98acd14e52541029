//! Experiment orchestration: building learners from a config, running seeds in
//! parallel and the tune-then-replicate grid protocol.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::data::{scale_features, Dataset, Example};
use super::game::{run_game, run_regression_game, Forecaster, RegretReport};
use super::grid::{aggregate_quantiles, grid_search, product, GridOutcome, GridPoint, QuantileTable};
use super::oracle::{comparator_oracle, projected_gradient, Comparator, SquaredObjective};
use crate::baselines::{Ogd, Ons, ONS_EPSILON};
use crate::error::{Error, Result};
use crate::gaf::{theorem_bound, Gaf, LearnerConfig, VawRidge, VawTerm};
use crate::losses::{params_for, AssumptionParams, LossKind};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "GAF_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    Gaf,
    Ons,
    Ogd,
    Vaw,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Gaf => "gaf",
            Algo::Ons => "ons",
            Algo::Ogd => "ogd",
            Algo::Vaw => "vaw",
        }
    }

    /// Only GAF draws random numbers; the others give the same run for every seed.
    pub fn is_randomized(self) -> bool {
        self == Algo::Gaf
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaf" => Ok(Algo::Gaf),
            "ons" => Ok(Algo::Ons),
            "ogd" => Ok(Algo::Ogd),
            "vaw" => Ok(Algo::Vaw),
            _ => Err(Error::Config(format!("unknown algorithm `{s}` (gaf, ons, ogd, vaw)"))),
        }
    }
}

/// Settings of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    /// Comparator radius `B`.
    pub radius: f64,
    /// Features are rescaled so the largest row norm equals this `R`.
    pub feature_bound: f64,
    pub lambda: f64,
    pub beta: f64,
    /// ONS `η` or OGD `η₀`; `None` picks the default for the algorithm.
    pub eta: Option<f64>,
    /// GAF smoothing; `None` means `1/n`.
    pub mu: Option<f64>,
    pub samples: usize,
    pub seeds: Vec<u64>,
    /// Compute the comparator for the regret column.
    pub oracle: bool,
    pub oracle_tol: f64,
    pub vaw_term: VawTerm,
}

impl RunConfig {
    pub fn new(algo: Algo) -> Self {
        Self {
            algo,
            radius: 1.0,
            feature_bound: 1.0,
            lambda: 1.0,
            beta: 1.0,
            eta: None,
            mu: None,
            samples: 100,
            seeds: vec![0],
            oracle: true,
            oracle_tol: super::oracle::ORACLE_TOL,
            vaw_term: VawTerm::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut positive = vec![
            ("B", self.radius),
            ("R", self.feature_bound),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("oracle tolerance", self.oracle_tol),
        ];
        if let Some(eta) = self.eta {
            positive.push(("eta", eta));
        }
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(mu) = self.mu {
            if !(0.0..=0.5).contains(&mu) {
                return Err(Error::Config(format!("mu must lie in [0, 1/2], got {mu}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }

    /// Default `η`: `B/(2R)` for OGD, `½·min{1/(4GD), e^{−B}}` with `G = 2R`,
    /// `D = 2B` for ONS.
    pub fn resolved_eta(&self) -> f64 {
        self.eta.unwrap_or(match self.algo {
            Algo::Ogd => Ogd::default_step_scale(self.radius, self.feature_bound),
            _ => 0.5 * (1.0 / (16.0 * self.feature_bound * self.radius)).min((-self.radius).exp()),
        })
    }

    pub fn point(&self) -> GridPoint {
        GridPoint {
            lambda: self.lambda,
            beta: self.beta,
            eta: self.resolved_eta(),
        }
    }
}

/// A dataset scaled and converted for the learners.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub examples: Vec<Example>,
    pub pairs: Vec<(nalgebra::DVector<f64>, f64)>,
    pub dprime: usize,
    pub classes: usize,
    pub feature_bound: f64,
}

impl PreparedData {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn from_examples(examples: Vec<Example>, feature_bound: f64) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::EmptyDataset("<memory>".into()))?;
        let (dprime, classes) = (first.feat.dprime(), first.feat.classes());
        let pairs = examples
            .iter()
            .map(|e| (e.feat.x().clone(), e.label as f64))
            .collect();
        Ok(Self {
            examples,
            pairs,
            dprime,
            classes,
            feature_bound,
        })
    }

    /// Largest `|y|` among the regression targets.
    pub fn target_bound(&self) -> f64 {
        self.pairs.iter().map(|(_, y)| y.abs()).fold(0.0, f64::max)
    }
}

/// Rescales to `‖x‖ ≤ feature_bound` and builds classification and regression views.
pub fn prepare(ds: &Dataset, feature_bound: f64) -> Result<PreparedData> {
    let scaled = scale_features(ds, feature_bound)?;
    let examples = scaled.examples(feature_bound * (1.0 + 1e-12))?;
    Ok(PreparedData {
        examples,
        pairs: scaled.regression_pairs(),
        dprime: scaled.dprime,
        classes: scaled.classes,
        feature_bound,
    })
}

/// Best fixed parameter for the loss the algorithm is evaluated on.
pub fn comparator_for(algo: Algo, data: &PreparedData, radius: f64, tol: f64) -> Result<Comparator> {
    match algo {
        Algo::Vaw => projected_gradient(
            &SquaredObjective(&data.pairs),
            radius,
            tol,
            super::oracle::ORACLE_MAX_ITER,
        ),
        _ => comparator_oracle(&data.examples, radius, tol),
    }
}

fn bound_params(cfg: &RunConfig, point: &GridPoint, data: &PreparedData) -> Result<Option<(AssumptionParams, usize)>> {
    let r = data.feature_bound;
    match cfg.algo {
        Algo::Gaf => {
            let defaults = LearnerConfig::new(data.dprime, data.classes);
            Ok(Some((
                AssumptionParams {
                    alpha: defaults.alpha,
                    beta: point.beta,
                    gamma: r * r,
                    stated_gamma: r * r,
                    zeta: 4.0 * r * r,
                    lambda: point.lambda,
                },
                data.dprime * data.classes,
            )))
        }
        Algo::Vaw => {
            let y = data.target_bound();
            if y == 0.0 {
                return Ok(None);
            }
            let p = params_for(LossKind::Squared, cfg.radius, r, Some(y), data.dprime, 1)?;
            Ok(Some((
                AssumptionParams {
                    lambda: point.lambda,
                    ..p
                },
                data.dprime,
            )))
        }
        Algo::Ons | Algo::Ogd => Ok(None),
    }
}

/// One run of `cfg.algo` at `point` with `seed`.
pub fn run_single(
    cfg: &RunConfig,
    point: &GridPoint,
    data: &PreparedData,
    comparator: Option<&Comparator>,
    seed: u64,
) -> Result<RegretReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("<memory>".into()));
    }
    let d = data.dprime * data.classes;
    let bp = bound_params(cfg, point, data)?;
    let norm = comparator.map_or(f64::NAN, |c| c.theta.norm());
    let bound_fn = bp.map(|(p, dim)| move |t: usize| theorem_bound(&p, dim, t, norm));
    let bound = bound_fn.as_ref().map(|f| f as &dyn Fn(usize) -> f64);
    match cfg.algo {
        Algo::Vaw => {
            let mut v = VawRidge::new(data.dprime, point.lambda, cfg.vaw_term)?;
            run_regression_game(&mut v, &data.pairs, comparator, bound, seed)
        }
        algo => {
            let mut learner: Box<dyn Forecaster> = match algo {
                Algo::Gaf => {
                    let mut lc = LearnerConfig::new(data.dprime, data.classes);
                    lc.lambda = point.lambda;
                    lc.beta = point.beta;
                    lc.mu = cfg.mu.unwrap_or((1.0 / data.len().max(2) as f64).min(0.5));
                    lc.samples = cfg.samples;
                    lc.b = cfg.radius;
                    lc.r = data.feature_bound;
                    lc.seed = seed;
                    Box::new(Gaf::new(lc)?)
                }
                Algo::Ons => Box::new(Ons::new(d, cfg.radius, point.eta, ONS_EPSILON)?),
                _ => Box::new(Ogd::new(d, cfg.radius, point.eta)?),
            };
            run_game(learner.as_mut(), &data.examples, comparator, bound, seed)
        }
    }
}

/// Runs every seed in `cfg.seeds` (in parallel). Deterministic algorithms are
/// run once and the report is relabelled per seed.
pub fn run_seeds(
    cfg: &RunConfig,
    point: &GridPoint,
    data: &PreparedData,
    comparator: Option<&Comparator>,
) -> Result<Vec<RegretReport>> {
    if cfg.algo.is_randomized() {
        cfg.seeds
            .par_iter()
            .map(|&s| run_single(cfg, point, data, comparator, s))
            .collect()
    } else {
        let base = run_single(cfg, point, data, comparator, cfg.seeds[0])?;
        Ok(cfg
            .seeds
            .iter()
            .map(|&seed| RegretReport { seed, ..base.clone() })
            .collect())
    }
}

/// Validates `cfg`, computes the comparator if requested and runs all seeds.
pub fn run(cfg: &RunConfig, data: &PreparedData) -> Result<Vec<RegretReport>> {
    cfg.validate()?;
    let comparator = if cfg.oracle {
        Some(comparator_for(cfg.algo, data, cfg.radius, cfg.oracle_tol)?)
    } else {
        None
    };
    run_seeds(cfg, &cfg.point(), data, comparator.as_ref())
}

/// Worker count from `GAF_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// A rayon pool honouring `GAF_THREADS` (default: hardware count).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads_from_env() {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Grid protocol: tune each algorithm on the first `tuning_seeds` seeds by
/// final average loss, then replicate the best point over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Shared settings; `base.algo` is ignored.
    pub base: RunConfig,
    pub algos: Vec<Algo>,
    pub grid_lambda: Vec<f64>,
    pub grid_beta: Vec<f64>,
    pub grid_eta: Vec<f64>,
    pub tuning_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct AlgoSummary {
    pub algo: Algo,
    pub grid: GridOutcome,
    pub reports: Vec<RegretReport>,
    pub quantiles: QuantileTable,
}

impl AlgoSummary {
    pub fn median_final_average_loss(&self) -> f64 {
        self.quantiles.final_median()
    }
}

/// The points searched for `algo`: `λ × β` for GAF, `η` for ONS/OGD, `λ` for VAW.
pub fn grid_points(algo: Algo, cfg: &ProtocolConfig) -> Vec<GridPoint> {
    match algo {
        Algo::Gaf => product(&cfg.grid_lambda, &cfg.grid_beta, &[1.0]),
        Algo::Ons | Algo::Ogd => product(&[1.0], &[1.0], &cfg.grid_eta),
        Algo::Vaw => product(&cfg.grid_lambda, &[1.0], &[1.0]),
    }
}

pub fn grid_protocol(cfg: &ProtocolConfig, data: &PreparedData) -> Result<Vec<AlgoSummary>> {
    cfg.base.validate()?;
    if cfg.tuning_seeds == 0 {
        return Err(Error::Config("need at least one tuning seed".into()));
    }
    cfg.algos
        .iter()
        .map(|&algo| {
            let run_cfg = RunConfig {
                algo,
                ..cfg.base.clone()
            };
            let comparator = if run_cfg.oracle {
                Some(comparator_for(algo, data, run_cfg.radius, run_cfg.oracle_tol)?)
            } else {
                None
            };
            let tune_cfg = RunConfig {
                seeds: run_cfg.seeds.iter().copied().take(cfg.tuning_seeds).collect(),
                oracle: false,
                ..run_cfg.clone()
            };
            let grid = grid_search(&grid_points(algo, cfg), |p| {
                match run_seeds(&tune_cfg, p, data, None) {
                    Ok(rs) => Ok(rs.iter().map(RegretReport::final_average_loss).sum::<f64>() / rs.len() as f64),
                    Err(e) => {
                        log::warn!("{algo} at {p:?} failed: {e}");
                        Ok(f64::NAN)
                    }
                }
            })?;
            let reports = run_seeds(&run_cfg, &grid.best, data, comparator.as_ref())?;
            let quantiles = aggregate_quantiles(&reports)?;
            Ok(AlgoSummary {
                algo,
                grid,
                reports,
                quantiles,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::parse_libsvm_str;

    fn toy() -> PreparedData {
        let mut text = String::new();
        for i in 0..30 {
            let c = i % 3;
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 0.91).cos();
            text.push_str(&format!("{} 1:{} 2:{}\n", c + 1, a + c as f64, b - c as f64));
        }
        prepare(&parse_libsvm_str(&text).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn algo_names_round_trip() {
        for a in [Algo::Gaf, Algo::Ons, Algo::Ogd, Algo::Vaw] {
            assert_eq!(a.as_str().parse::<Algo>().unwrap(), a);
        }
        assert!("svm".parse::<Algo>().is_err());
    }

    #[test]
    fn every_algorithm_runs() {
        let data = toy();
        for algo in [Algo::Gaf, Algo::Ons, Algo::Ogd, Algo::Vaw] {
            let mut cfg = RunConfig::new(algo);
            cfg.seeds = vec![1, 2];
            cfg.samples = 20;
            let reports = run(&cfg, &data).unwrap();
            assert_eq!(reports.len(), 2);
            assert_eq!(reports[1].seed, 2);
            assert!(reports.iter().all(|r| r.len() == 30 && r.final_average_loss().is_finite()));
            assert!(reports[0].comparator.is_some());
        }
    }

    #[test]
    fn gaf_bound_column_is_filled() {
        let data = toy();
        let cfg = RunConfig::new(Algo::Gaf);
        let r = &run(&cfg, &data).unwrap()[0];
        assert!(r.bound.iter().all(|b| b.is_finite()));
        assert!(r.bound.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = RunConfig::new(Algo::Gaf);
        cfg.lambda = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(Algo::Ons);
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(Algo::Gaf);
        cfg.mu = Some(0.9);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn protocol_picks_a_grid_point_per_algorithm() {
        let data = toy();
        let mut base = RunConfig::new(Algo::Gaf);
        base.seeds = vec![0, 1, 2];
        base.samples = 20;
        base.oracle = false;
        let cfg = ProtocolConfig {
            base,
            algos: vec![Algo::Gaf, Algo::Ons, Algo::Ogd],
            grid_lambda: vec![0.1, 1.0],
            grid_beta: vec![0.3, 1.0],
            grid_eta: vec![0.1, 1.0],
            tuning_seeds: 1,
        };
        let out = grid_protocol(&cfg, &data).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].grid.scores.len(), 4);
        assert_eq!(out[1].grid.scores.len(), 2);
        for s in &out {
            assert_eq!(s.reports.len(), 3);
            assert!(s.median_final_average_loss().is_finite());
        }
    }

    #[test]
    fn thread_env_parsing() {
        // Only checks the parser; the variable is not modified to keep tests independent.
        let n = threads_from_env();
        assert!(n.is_none_or(|n| n > 0));
        assert!(thread_pool().is_ok());
    }
}
