//! The sequential protocol: predict, reveal, update.

use std::time::Instant;

use nalgebra::DVector;

use super::data::Example;
use super::oracle::Comparator;
use crate::baselines::{Ogd, Ons};
use crate::error::{Error, Result};
use crate::gaf::{Gaf, VawRidge};
use crate::losses::{self, InputFeatures, SimplexVector};

/// A learner playing the multiclass game. `predict` never sees the label.
pub trait Forecaster {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn predict(&mut self, feat: &InputFeatures) -> Result<SimplexVector>;
    fn update(&mut self, feat: &InputFeatures, y: usize) -> Result<()>;
}

impl Forecaster for Gaf {
    fn name(&self) -> &'static str {
        "gaf"
    }

    fn dim(&self) -> usize {
        self.config().dim()
    }

    fn predict(&mut self, feat: &InputFeatures) -> Result<SimplexVector> {
        Ok(Gaf::predict(self, feat)?.ptilde)
    }

    fn update(&mut self, feat: &InputFeatures, y: usize) -> Result<()> {
        Gaf::update(self, feat, y)
    }
}

impl Forecaster for Ogd {
    fn name(&self) -> &'static str {
        "ogd"
    }

    fn dim(&self) -> usize {
        self.theta().len()
    }

    fn predict(&mut self, feat: &InputFeatures) -> Result<SimplexVector> {
        Ogd::predict(self, feat)
    }

    fn update(&mut self, feat: &InputFeatures, y: usize) -> Result<()> {
        self.step(feat, y)
    }
}

impl Forecaster for Ons {
    fn name(&self) -> &'static str {
        "ons"
    }

    fn dim(&self) -> usize {
        self.theta().len()
    }

    fn predict(&mut self, feat: &InputFeatures) -> Result<SimplexVector> {
        Ons::predict(self, feat)
    }

    fn update(&mut self, feat: &InputFeatures, y: usize) -> Result<()> {
        self.step(feat, y)
    }
}

/// Per-step record of one run. Series without a comparator or bound hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub algo: String,
    pub seed: u64,
    pub learner_losses: Vec<f64>,
    pub comparator_losses: Vec<f64>,
    /// `Σ_{s≤t} learner − Σ_{s≤t} comparator`.
    pub cumulative_regret: Vec<f64>,
    pub bound: Vec<f64>,
    pub comparator: Option<Comparator>,
    /// Wall-clock seconds per step; not part of the CSV so output stays reproducible.
    pub step_seconds: Vec<f64>,
}

impl RegretReport {
    pub fn len(&self) -> usize {
        self.learner_losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learner_losses.is_empty()
    }

    /// Running average of the learner loss, `(1/t)·Σ_{s≤t}`.
    pub fn average_losses(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.learner_losses
            .iter()
            .enumerate()
            .map(|(i, l)| {
                acc += l;
                acc / (i + 1) as f64
            })
            .collect()
    }

    pub fn final_average_loss(&self) -> f64 {
        self.average_losses().last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    /// Whether regret is exact (comparator converged) or only a lower bound.
    pub fn regret_is_exact(&self) -> bool {
        self.comparator.as_ref().is_some_and(|c| c.converged)
    }

    fn push(&mut self, loss: f64, comp: f64, bound: f64, secs: f64, sums: &mut (f64, f64)) {
        sums.0 += loss;
        sums.1 += comp;
        self.learner_losses.push(loss);
        self.comparator_losses.push(comp);
        self.cumulative_regret.push(sums.0 - sums.1);
        self.bound.push(bound);
        self.step_seconds.push(secs);
    }

    fn empty(algo: &str, seed: u64, comparator: Option<&Comparator>, n: usize) -> Self {
        Self {
            algo: algo.to_string(),
            seed,
            learner_losses: Vec::with_capacity(n),
            comparator_losses: Vec::with_capacity(n),
            cumulative_regret: Vec::with_capacity(n),
            bound: Vec::with_capacity(n),
            comparator: comparator.cloned(),
            step_seconds: Vec::with_capacity(n),
        }
    }
}

/// Plays `stream` in order. The learner loss is `−log p_t[y_t]` of its
/// prediction; the comparator loss is the logistic loss of `θ*`. `bound(t)`
/// is evaluated after step `t` (1-based).
pub fn run_game(
    learner: &mut dyn Forecaster,
    stream: &[Example],
    comparator: Option<&Comparator>,
    bound: Option<&dyn Fn(usize) -> f64>,
    seed: u64,
) -> Result<RegretReport> {
    if let Some(ex) = stream.iter().find(|ex| ex.feat.dim() != learner.dim()) {
        return Err(Error::Config(format!(
            "learner dimension {} does not match data dimension {}",
            learner.dim(),
            ex.feat.dim()
        )));
    }
    if let Some(c) = comparator {
        if c.theta.len() != learner.dim() {
            return Err(Error::Config(format!(
                "comparator dimension {} does not match learner dimension {}",
                c.theta.len(),
                learner.dim()
            )));
        }
    }
    let mut report = RegretReport::empty(learner.name(), seed, comparator, stream.len());
    let mut sums = (0.0, 0.0);
    for (t, ex) in stream.iter().enumerate() {
        let start = Instant::now();
        let p = learner.predict(&ex.feat)?;
        let loss = p.log_loss(ex.label)?;
        learner.update(&ex.feat, ex.label)?;
        let secs = start.elapsed().as_secs_f64();
        let comp = match comparator {
            Some(c) => losses::logistic_value(&ex.feat, ex.label, &c.theta)?,
            None => f64::NAN,
        };
        let b = bound.map_or(f64::NAN, |f| f(t + 1));
        report.push(loss, comp, b, secs, &mut sums);
    }
    Ok(report)
}

/// Squared-loss game for the ridge learner: loss `(y_t − ŷ_t)²`.
pub fn run_regression_game(
    learner: &mut VawRidge,
    stream: &[(DVector<f64>, f64)],
    comparator: Option<&Comparator>,
    bound: Option<&dyn Fn(usize) -> f64>,
    seed: u64,
) -> Result<RegretReport> {
    let dim = learner.dim();
    if let Some((x, _)) = stream.iter().find(|(x, _)| x.len() != dim) {
        return Err(Error::Config(format!(
            "learner dimension {dim} does not match data dimension {}",
            x.len()
        )));
    }
    let mut report = RegretReport::empty("vaw", seed, comparator, stream.len());
    let mut sums = (0.0, 0.0);
    for (t, (x, y)) in stream.iter().enumerate() {
        let start = Instant::now();
        let yhat = learner.predict(x)?;
        learner.update(x, *y)?;
        let secs = start.elapsed().as_secs_f64();
        let comp = match comparator {
            Some(c) => losses::squared_value(x, *y, &c.theta)?,
            None => f64::NAN,
        };
        let b = bound.map_or(f64::NAN, |f| f(t + 1));
        report.push((y - yhat).powi(2), comp, b, secs, &mut sums);
    }
    Ok(report)
}
