//! Best fixed parameter in hindsight over the `B`-ball.

use nalgebra::DVector;

use super::data::Example;
use crate::baselines::project_ball;
use crate::error::Result;
use crate::losses::{log_sum_exp, softmax};

pub const ORACLE_TOL: f64 = 1e-8;
pub const ORACLE_MAX_ITER: usize = 100_000;

/// A smooth objective summed over a stream.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
}

/// `Σ_t −log softmax(θᵀΦ(x_t))[y_t]`.
pub struct LogisticObjective<'a>(pub &'a [Example]);

impl Objective for LogisticObjective<'_> {
    fn dim(&self) -> usize {
        self.0.first().map_or(0, |e| e.feat.dim())
    }

    fn value_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mut f = 0.0;
        let mut g = DVector::zeros(theta.len());
        for ex in self.0 {
            let z = ex.feat.logits(theta)?;
            f += log_sum_exp(z.as_slice()) - z[ex.label];
            let mut r = DVector::from_vec(softmax(z.as_slice())?.into_vec());
            r[ex.label] -= 1.0;
            g += ex.feat.lift(&r);
        }
        Ok((f, g))
    }
}

/// `Σ_t (y_t − θᵀx_t)²`.
pub struct SquaredObjective<'a>(pub &'a [(DVector<f64>, f64)]);

impl Objective for SquaredObjective<'_> {
    fn dim(&self) -> usize {
        self.0.first().map_or(0, |(x, _)| x.len())
    }

    fn value_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mut f = 0.0;
        let mut g = DVector::zeros(theta.len());
        for (x, y) in self.0 {
            let r = x.dot(theta) - y;
            f += r * r;
            g.axpy(2.0 * r, x, 1.0);
        }
        Ok((f, g))
    }
}

/// Comparator parameter with its total loss and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub theta: DVector<f64>,
    pub total_loss: f64,
    /// False when the iteration cap was hit; regret against it is then a lower
    /// bound on regret against the true optimum.
    pub converged: bool,
    pub iterations: usize,
    /// Final `‖θ − Π(θ − ∇f)‖`.
    pub pg_norm: f64,
}

impl Comparator {
    /// A given parameter, e.g. a planted model. Its total loss is not known here.
    pub fn fixed(theta: DVector<f64>) -> Self {
        Self {
            theta,
            total_loss: f64::NAN,
            converged: true,
            iterations: 0,
            pg_norm: f64::NAN,
        }
    }
}

/// Projected gradient from `θ = 0` with Barzilai–Borwein trial steps and
/// Armijo backtracking. Stops when the projected-gradient norm is at most
/// `tol` or after `max_iter` iterations; iterates are monotone so the last one
/// is the best.
pub fn projected_gradient<O: Objective>(
    obj: &O,
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Comparator> {
    let mut theta = DVector::zeros(obj.dim());
    let (mut f, mut g) = obj.value_grad(&theta)?;
    let mut step = 1.0 / g.norm().max(1.0);
    let pg = |theta: &DVector<f64>, g: &DVector<f64>| (theta - project_ball(&(theta - g), radius)).norm();
    let mut pg_norm = pg(&theta, &g);
    let mut iterations = 0;
    let mut converged = pg_norm <= tol;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut accepted = None;
        // Round-off allowance so a flat objective near the optimum still moves.
        let slack = 4.0 * f64::EPSILON * f.abs();
        for _ in 0..80 {
            let cand = project_ball(&(&theta - &g * step), radius);
            let (fc, gc) = obj.value_grad(&cand)?;
            if fc.is_finite() && fc <= f + 1e-4 * g.dot(&(&cand - &theta)) + slack {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let s = &cand - &theta;
        let y = &gc - &g;
        let sy = s.dot(&y);
        step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e12) } else { step * 2.0 };
        theta = cand;
        f = fc;
        g = gc;
        pg_norm = pg(&theta, &g);
        converged = pg_norm <= tol;
    }
    if !converged {
        log::warn!(
            "comparator oracle stopped after {iterations} iterations with projected-gradient norm {pg_norm:e}"
        );
    }
    Ok(Comparator {
        theta,
        total_loss: f,
        converged,
        iterations,
        pg_norm,
    })
}

/// Logistic comparator over `‖θ‖ ≤ radius`.
pub fn comparator_oracle(stream: &[Example], radius: f64, tol: f64) -> Result<Comparator> {
    projected_gradient(&LogisticObjective(stream), radius, tol, ORACLE_MAX_ITER)
}
