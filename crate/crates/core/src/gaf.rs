//! The Gaussian aggregating forecaster for multiclass logistic regression,
//! and its exact squared-loss specialization.
//!
//! The learner keeps the running surrogate sum `L̃_t(θ) = θᵀA_tθ + b_tᵀθ + const`
//! with `A_0 = λI`. Each round it predicts by averaging softmaxes of logits
//! drawn from the Gaussian `N(θᵀΦ(x), c·Φ(x)ᵀA⁻¹Φ(x))`, then folds the new
//! loss in through a damped Newton solve and a rank-`K` update of `A`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::{
    self, log_sum_exp, softmax_hessian_core, AssumptionParams, InputFeatures, SimplexVector,
};
use crate::numlin::{for_each_gaussian_sample, LowRankIncrement, PdMatrixState};

/// Which closed form to use for the confidence-driven smoothing level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuRule {
    /// `(log(n/δ)/m)^{1/3}`.
    Hypothesis,
    /// `(K·log(n/δ)/m)^{1/3}`.
    Optimized,
}

/// Smoothing level for `n` rounds at confidence `δ` with `m` samples, clipped to `1/2`.
pub fn confidence_mu(n: usize, delta: f64, m: usize, classes: usize, rule: MuRule) -> f64 {
    let log_term = (n as f64 / delta).ln().max(0.0);
    let scale = match rule {
        MuRule::Hypothesis => 1.0,
        MuRule::Optimized => classes as f64,
    };
    (scale * log_term / m as f64).cbrt().min(0.5)
}

/// Hyperparameters of [`Gaf`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub lambda: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Smoothing applied to the Monte Carlo average, in `[0, 1/2]`.
    pub mu: f64,
    /// Monte Carlo sample count per prediction.
    pub samples: usize,
    pub b: f64,
    pub r: f64,
    pub dprime: usize,
    pub classes: usize,
    pub delta: f64,
    pub seed: u64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Scale the sampling covariance by `1/(2α)`.
    pub cov_half_factor: bool,
    /// Use the previous iterate instead of the new one as the curvature
    /// center in the `b` update.
    pub legacy_center: bool,
}

impl LearnerConfig {
    pub fn new(dprime: usize, classes: usize) -> Self {
        Self {
            lambda: 1.0,
            beta: 1.0,
            alpha: 1.0,
            mu: 1e-3,
            samples: 100,
            b: 1.0,
            r: 1.0,
            dprime,
            classes,
            delta: 0.01,
            seed: 0,
            newton_tol: 1e-10,
            newton_max_iter: 100,
            cov_half_factor: true,
            legacy_center: false,
        }
    }

    /// Constants for which the logistic regret guarantee holds over `n` rounds:
    /// `λ = 32d′KR²`, `β = (log(K)/2 + BR + 1)⁻¹`, `α = 1`, `μ = 1/n`.
    pub fn theoretical(dprime: usize, classes: usize, b: f64, r: f64, n: usize) -> Result<Self> {
        let p = losses::params_for(losses::LossKind::Logistic, b, r, None, dprime, classes)?;
        Ok(Self {
            lambda: p.lambda,
            beta: p.beta,
            alpha: p.alpha,
            mu: (1.0 / n.max(2) as f64).min(0.5),
            b,
            r,
            ..Self::new(dprime, classes)
        })
    }

    pub fn dim(&self) -> usize {
        self.dprime * self.classes
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("B", self.b),
            ("R", self.r),
            ("newton_tol", self.newton_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=0.5).contains(&self.mu) {
            return Err(Error::Config(format!("mu must lie in [0, 1/2], got {}", self.mu)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.samples == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        if self.dprime == 0 || self.classes < 2 {
            return Err(Error::Config(format!(
                "need d' >= 1 and K >= 2, got d'={} K={}",
                self.dprime, self.classes
            )));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::Config("newton_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A twice-differentiable term whose Hessian is `U·C(θ)·Uᵀ` for a fixed factor `U`.
pub trait CurvatureTerm {
    fn value(&self, theta: &DVector<f64>) -> f64;
    /// Gradient and Hessian core at `θ`.
    fn grad_and_core(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
    fn factor(&self) -> DMatrix<f64>;
    /// `M·U` for a `d×d` matrix `M`.
    fn premultiply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m * self.factor()
    }
}

/// The logistic loss of one labelled example; `U = Φ(x)`.
pub struct LogisticTerm<'a> {
    pub feat: &'a InputFeatures,
    pub label: usize,
}

impl<'a> LogisticTerm<'a> {
    pub fn new(feat: &'a InputFeatures, label: usize) -> Result<Self> {
        if label >= feat.classes() {
            return Err(Error::InvalidLabel {
                label,
                classes: feat.classes(),
            });
        }
        Ok(Self { feat, label })
    }
}

impl CurvatureTerm for LogisticTerm<'_> {
    fn value(&self, theta: &DVector<f64>) -> f64 {
        let z = self.feat.logits_unchecked(theta);
        log_sum_exp(z.as_slice()) - z[self.label]
    }

    fn grad_and_core(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let z = self.feat.logits_unchecked(theta);
        let mut p = vec![0.0; z.len()];
        losses::softmax_into(z.as_slice(), &mut p);
        let p = SimplexVector::new(p).unwrap_or_else(|_| SimplexVector::uniform(z.len()));
        let mut r = DVector::from_column_slice(p.as_slice());
        r[self.label] -= 1.0;
        (self.feat.lift(&r), softmax_hessian_core(&p))
    }

    fn factor(&self) -> DMatrix<f64> {
        self.feat.phi()
    }

    fn premultiply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.feat.right_apply(m)
    }
}

/// The identically-zero term, `U` with no columns.
pub struct ZeroTerm(pub usize);

impl CurvatureTerm for ZeroTerm {
    fn value(&self, _: &DVector<f64>) -> f64 {
        0.0
    }
    fn grad_and_core(&self, _: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        (DVector::zeros(self.0), DMatrix::zeros(0, 0))
    }
    fn factor(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.0, 0)
    }
}

/// Result of [`inner_solve`].
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// `F` at the start point and after every accepted step.
    pub objective_trace: Vec<f64>,
}

const ARMIJO_SLOPE: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const DECREMENT_FLOOR: f64 = 1e-10;

/// Minimizes `F(θ) = bᵀθ + θᵀAθ + term(θ)` by damped Newton from `start`.
///
/// The Newton system `(2A + U·C·Uᵀ)s = −∇F` is solved around the cached
/// `A⁻¹` with the push-through form of the Woodbury identity, so each iteration
/// costs `O(K³ + d²)` once `A⁻¹U` is formed.
pub fn inner_solve<T: CurvatureTerm>(
    a: &PdMatrixState,
    b: &DVector<f64>,
    term: &T,
    start: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    let d = a.dim();
    if b.len() != d || start.len() != d {
        return Err(Error::Dimension(format!(
            "state has dimension {d}, linear term {} and start {}",
            b.len(),
            start.len()
        )));
    }
    // M = (2A)⁻¹
    let half_inv = a.inv() * 0.5;
    let mu = term.premultiply(&half_inv);
    let u = term.factor();
    let gram = u.tr_mul(&mu);
    let k = gram.nrows();

    let objective = |theta: &DVector<f64>, a_theta: &DVector<f64>| {
        b.dot(theta) + theta.dot(a_theta) + term.value(theta)
    };

    let mut theta = start.clone();
    let mut a_theta = a.mat() * &theta;
    let mut f = objective(&theta, &a_theta);
    let mut trace = vec![f];

    for iter in 0..=max_iter {
        let (g_term, core) = term.grad_and_core(&theta);
        let grad = b + &a_theta * 2.0 + g_term;
        let gn = grad.norm();
        if gn <= tol {
            return Ok(NewtonOutcome {
                theta,
                iterations: iter,
                grad_norm: gn,
                objective_trace: trace,
            });
        }
        if iter == max_iter {
            return Err(Error::Solver {
                solver: "newton",
                iterations: iter,
                residual: gn,
            });
        }

        let mg = &half_inv * &grad;
        let mut step = -&mg;
        if k > 0 {
            let mut system = &gram * &core;
            for i in 0..k {
                system[(i, i)] += 1.0;
            }
            let rhs = mu.tr_mul(&grad);
            let z = system.lu().solve(&rhs).ok_or(Error::Solver {
                solver: "newton",
                iterations: iter,
                residual: gn,
            })?;
            step += &mu * (&core * z);
        }

        let slope = grad.dot(&step);
        let a_step = a.mat() * &step;
        let mut t = 1.0;
        let mut accepted = false;
        // A squared Newton decrement at roundoff level of F means the full step
        // is well inside the quadratic-convergence region, where Armijo can no
        // longer tell a decrease from noise.
        let backtracks = if -slope <= DECREMENT_FLOOR * (1.0 + f.abs()) { 0 } else { MAX_BACKTRACKS };
        for _ in 0..backtracks {
            let cand = &theta + &step * t;
            let a_cand = &a_theta + &a_step * t;
            let fc = objective(&cand, &a_cand);
            if fc <= f + ARMIJO_SLOPE * t * slope {
                theta = cand;
                a_theta = a_cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= ARMIJO_SHRINK;
        }
        if !accepted {
            // Only roundoff can stall a descent direction of a strongly convex
            // objective; take the full Newton step when F is flat to machine precision.
            let cand = &theta + &step;
            let a_cand = &a_theta + &a_step;
            let fc = objective(&cand, &a_cand);
            if backtracks > 0 && fc - f > 1e-12 * (1.0 + f.abs()) {
                return Err(Error::Solver {
                    solver: "newton line search",
                    iterations: iter,
                    residual: gn,
                });
            }
            theta = cand;
            a_theta = a_cand;
            f = fc.min(f);
        }
        trace.push(f);
    }
    unreachable!("loop returns on the final iteration")
}

/// Output of [`Gaf::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct GafPrediction {
    /// `σ⁺(p̃)`, logits whose softmax is `p̃`.
    pub yhat: Vec<f64>,
    /// The smoothed Monte Carlo average of softmaxes.
    pub ptilde: SimplexVector,
}

/// Efficient-GAF learner state.
#[derive(Debug, Clone)]
pub struct Gaf {
    config: LearnerConfig,
    a: PdMatrixState,
    b: DVector<f64>,
    theta: DVector<f64>,
    t: usize,
    rng: ChaCha8Rng,
    last_newton: Option<(usize, f64)>,
}

impl Gaf {
    pub fn new(config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        let d = config.dim();
        Ok(Self {
            a: PdMatrixState::new(d, config.lambda)?,
            b: DVector::zeros(d),
            theta: DVector::zeros(d),
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            last_newton: None,
            config,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn a(&self) -> &PdMatrixState {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Minimizer of the running surrogate sum.
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    /// Iteration count and exit gradient norm of the latest inner solve.
    pub fn last_newton(&self) -> Option<(usize, f64)> {
        self.last_newton
    }

    /// `θᵀAθ + bᵀθ`, the running surrogate sum up to an additive constant.
    pub fn surrogate_objective(&self, theta: &DVector<f64>) -> f64 {
        theta.dot(&(self.a.mat() * theta)) + self.b.dot(theta)
    }

    /// `2Aθ + b`.
    pub fn surrogate_grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.a.mat() * theta * 2.0 + &self.b
    }

    fn check_features(&self, feat: &InputFeatures) -> Result<()> {
        if feat.dprime() != self.config.dprime || feat.classes() != self.config.classes {
            return Err(Error::Dimension(format!(
                "features are d'={} K={}, learner expects d'={} K={}",
                feat.dprime(),
                feat.classes(),
                self.config.dprime,
                self.config.classes
            )));
        }
        Ok(())
    }

    /// Mean and covariance of the logits under the current Gaussian posterior.
    pub fn predictive_moments(&self, feat: &InputFeatures) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_features(feat)?;
        let mean = feat.logits_unchecked(&self.theta);
        let scale = if self.config.cov_half_factor {
            1.0 / (2.0 * self.config.alpha)
        } else {
            1.0
        };
        let cov = feat.sandwich(self.a.inv()) * scale;
        Ok((mean, cov))
    }

    /// Draws the Monte Carlo prediction for `x`. Advances the sampling stream.
    pub fn predict(&mut self, feat: &InputFeatures) -> Result<GafPrediction> {
        let (mean, cov) = self.predictive_moments(feat)?;
        let k = mean.len();
        let m = self.config.samples;
        let mut acc = vec![0.0; k];
        let mut probs = vec![0.0; k];
        for_each_gaussian_sample(&mean, &cov, m, &mut self.rng, |logits| {
            losses::softmax_into(logits, &mut probs);
            for (a, p) in acc.iter_mut().zip(&probs) {
                *a += p;
            }
        })?;
        let total: f64 = acc.iter().sum();
        let avg: Vec<f64> = acc.iter().map(|v| v / total).collect();
        let ptilde = losses::smooth(&SimplexVector::new(avg)?, self.config.mu)?;
        let yhat = losses::sigma_plus(&ptilde)?;
        Ok(GafPrediction { yhat, ptilde })
    }

    /// Folds the labelled example `(x, y)` into the surrogate sum.
    pub fn update(&mut self, feat: &InputFeatures, y: usize) -> Result<()> {
        self.check_features(feat)?;
        let term = LogisticTerm::new(feat, y)?;
        let outcome = inner_solve(
            &self.a,
            &self.b,
            &term,
            &self.theta,
            self.config.newton_tol,
            self.config.newton_max_iter,
        )?;
        let theta_new = outcome.theta;
        let (grad, core) = term.grad_and_core(&theta_new);
        let hess = LowRankIncrement::new(feat.phi(), core)?;
        let beta = self.config.beta;
        let center = if self.config.legacy_center {
            &self.theta
        } else {
            &theta_new
        };
        self.b += grad - hess.apply(center) * beta;
        self.a.lowrank_update(&hess.scaled(0.5 * beta))?;
        self.theta = theta_new;
        self.t += 1;
        self.last_newton = Some((outcome.iterations, outcome.grad_norm));
        Ok(())
    }
}

/// Which linear-algebraic term accompanies `L_{t−1}` in the squared-loss predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VawTerm {
    /// `argmin L_{t−1}(θ) + θᵀx_t`.
    Linear,
    /// `argmin L_{t−1}(θ) + (θᵀx_t)²`, the textbook Vovk–Azoury–Warmuth form.
    Quadratic,
}

/// Exact squared-loss forecaster: surrogates coincide with the losses (`β = 1`),
/// so the maintained `(A, b)` is the ridge objective itself.
#[derive(Debug, Clone)]
pub struct VawRidge {
    a: PdMatrixState,
    b: DVector<f64>,
    term: VawTerm,
    t: usize,
}

impl VawRidge {
    pub fn new(dim: usize, lambda: f64, term: VawTerm) -> Result<Self> {
        Ok(Self {
            a: PdMatrixState::new(dim, lambda)?,
            b: DVector::zeros(dim),
            term,
            t: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, forecaster has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `(A + w·xxᵀ)⁻¹·r` by Sherman–Morrison.
    fn solve_shifted(&self, x: &DVector<f64>, w: f64, r: &DVector<f64>) -> DVector<f64> {
        let ainv_r = self.a.solve(r);
        if w == 0.0 {
            return ainv_r;
        }
        let ainv_x = self.a.solve(x);
        let denom = 1.0 + w * x.dot(&ainv_x);
        &ainv_r - &ainv_x * (w * x.dot(&ainv_r) / denom)
    }

    pub fn predictor(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(match self.term {
            VawTerm::Linear => self.solve_shifted(x, 0.0, &(&self.b + x)) * -0.5,
            VawTerm::Quadratic => self.solve_shifted(x, 1.0, &self.b) * -0.5,
        })
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.predictor(x)?.dot(x))
    }

    pub fn update(&mut self, x: &DVector<f64>, y: f64) -> Result<()> {
        self.check(x)?;
        // argmin θᵀAθ + bᵀθ + (θᵀx − y)²  ⇔  (A + xxᵀ)θ = −b/2 + y·x
        let center = self.solve_shifted(x, 1.0, &(x * y - &self.b * 0.5));
        let surrogate = losses::QuadraticSurrogate::squared(x, y, &center, 1.0)?;
        self.b += &surrogate.grad - surrogate.hess.apply(&center);
        self.a.rank_one_update(x, 1.0)?;
        self.t += 1;
        Ok(())
    }
}

/// `λ‖θ‖² + (d/α)(1/2 + 2√3/β)·log(1 + nβγ/(2λ))`.
pub fn theorem_bound(params: &AssumptionParams, d: usize, n: usize, norm_theta: f64) -> f64 {
    let AssumptionParams {
        alpha,
        beta,
        gamma,
        lambda,
        ..
    } = *params;
    let coeff = d as f64 / alpha * (0.5 + 2.0 * 3f64.sqrt() / beta);
    lambda * norm_theta * norm_theta + coeff * (n as f64 * beta * gamma / (2.0 * lambda)).ln_1p()
}
