//! Hyperparameter grids and quantile aggregation across seeds.

use std::cmp::Ordering;

use super::game::RegretReport;
use crate::error::{Error, Result};

/// The grid values used for every hyperparameter by default.
pub const DEFAULT_GRID: [f64; 7] = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0];

/// One hyperparameter setting. Learners ignore the coordinates they do not use
/// (GAF reads `lambda`/`beta`, ONS and OGD read `eta`, VAW reads `lambda`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub beta: f64,
    pub eta: f64,
}

impl GridPoint {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.lambda
            .total_cmp(&other.lambda)
            .then(self.beta.total_cmp(&other.beta))
            .then(self.eta.total_cmp(&other.eta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: GridPoint,
    pub best_score: f64,
    /// Every evaluated point in input order.
    pub scores: Vec<(GridPoint, f64)>,
}

/// Cartesian product, `lambda` outermost.
pub fn product(lambdas: &[f64], betas: &[f64], etas: &[f64]) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(lambdas.len() * betas.len() * etas.len());
    for &lambda in lambdas {
        for &beta in betas {
            for &eta in etas {
                out.push(GridPoint { lambda, beta, eta });
            }
        }
    }
    out
}

/// Picks the point with the smallest score. Non-finite scores rank last; exact
/// ties go to the smaller `lambda`, then `beta`, then `eta`.
pub fn select_best(scores: Vec<(GridPoint, f64)>) -> Result<GridOutcome> {
    let rank = |s: f64| if s.is_finite() { s } else { f64::INFINITY };
    let best = scores
        .iter()
        .min_by(|(pa, sa), (pb, sb)| rank(*sa).total_cmp(&rank(*sb)).then(pa.key_cmp(pb)))
        .copied()
        .ok_or_else(|| Error::Config("empty hyperparameter grid".into()))?;
    Ok(GridOutcome {
        best: best.0,
        best_score: best.1,
        scores,
    })
}

/// Scores every point with `score` (in parallel on the current rayon pool)
/// and selects the best.
pub fn grid_search<F>(points: &[GridPoint], score: F) -> Result<GridOutcome>
where
    F: Fn(&GridPoint) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    for p in points {
        for v in [p.lambda, p.beta, p.eta] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("grid values must be positive, got {v}")));
            }
        }
    }
    let scores = points
        .par_iter()
        .map(|p| score(p).map(|s| (*p, s)))
        .collect::<Result<Vec<_>>>()?;
    select_best(scores)
}

/// Type-7 sample quantile (linear interpolation between order statistics).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRow {
    pub t: usize,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub algo: String,
    pub rows: Vec<QuantileRow>,
}

impl QuantileTable {
    pub fn final_median(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.q50)
    }
}

/// Per-step quartiles of the running average loss across seeds.
pub fn aggregate_quantiles(reports: &[RegretReport]) -> Result<QuantileTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidInput("no reports to aggregate".into()))?;
    let n = first.len();
    if let Some(r) = reports.iter().find(|r| r.len() != n || r.algo != first.algo) {
        return Err(Error::InvalidInput(format!(
            "cannot aggregate {} ({} steps) with {} ({} steps)",
            r.algo,
            r.len(),
            first.algo,
            n
        )));
    }
    aggregate_series(&first.algo, &reports.iter().map(|r| r.average_losses()).collect::<Vec<_>>())
}

/// Quartiles of equally long series, step by step.
pub fn aggregate_series(algo: &str, series: &[Vec<f64>]) -> Result<QuantileTable> {
    let n = series.first().map_or(0, Vec::len);
    if series.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidInput("series lengths differ".into()));
    }
    let mut col = vec![0.0; series.len()];
    let rows = (0..n)
        .map(|t| {
            for (c, s) in col.iter_mut().zip(series) {
                *c = s[t];
            }
            col.sort_by(f64::total_cmp);
            QuantileRow {
                t: t + 1,
                q25: quantile(&col, 0.25),
                q50: quantile(&col, 0.5),
                q75: quantile(&col, 0.75),
            }
        })
        .collect();
    Ok(QuantileTable {
        algo: algo.to_string(),
        rows,
    })
}
