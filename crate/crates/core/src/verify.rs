//! Numerical checks of the assumptions the regret guarantee rests on.
//!
//! Every check samples random instances, records the most negative slack and
//! passes when it stays above `−tolerance`. Checks with a known equality case
//! evaluate it too and count any gap there as a violation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::gaf::{theorem_bound, Gaf, LearnerConfig};
use crate::harness::{Comparator, Example, RegretReport};
use crate::losses::{
    self, log_sum_exp, logistic_grad, logistic_hess_factor, logistic_value, params_for, sigma_plus,
    softmax, squared_grad, squared_hess, squared_value, InputFeatures, LossKind, QuadraticSurrogate,
    SimplexVector,
};
use crate::numlin::for_each_gaussian_sample;

pub const EXACT_TOL: f64 = 1e-9;
pub const MC_SIGMAS: f64 = 4.0;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const HESSIAN_TOL: f64 = 1e-4;
pub const CHERNOFF_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    /// Smallest slack observed; negative values are violations.
    pub worst_violation: f64,
    pub pass: bool,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, trials: usize, worst_violation: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            trials,
            worst_violation,
            pass: worst_violation >= -tolerance,
            tolerance,
        }
    }

    pub const CSV_HEADER: &'static str = "name,trials,worst_violation,pass";
}

impl fmt::Display for CheckReport {
    /// One CSV line: `name,trials,worst_violation,pass`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{:?},{}", self.name, self.trials, self.worst_violation, self.pass)
    }
}

fn normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn uniform_vec<R: Rng + ?Sized>(n: usize, half_width: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..=half_width))
}

/// Uniform point in the Euclidean ball of the given radius.
pub fn random_in_ball<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    let mut v = normal_vec(n, rng);
    while v.norm() == 0.0 {
        v = normal_vec(n, rng);
    }
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    let norm = v.norm();
    v * (r / norm)
}

/// `ℓ_y(z) = log Σ e^{z_i} − z_y` with gradient `p − e_y` and Hessian `diag(p) − ppᵀ`.
fn logit_loss(z: &DVector<f64>, y: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = softmax(z.as_slice()).expect("finite logits");
    let mut g = DVector::from_column_slice(p.as_slice());
    g[y] -= 1.0;
    (log_sum_exp(z.as_slice()) - z[y], g, losses::softmax_hessian_core(&p))
}

// ---------------------------------------------------------------------------
// Mixability

/// Standardized gaps `|σ(σ⁺(p̄₁))_y − p̄₂_y| / SE` for every class, where `p̄₁`
/// and `p̄₂` are independent `m_mc`-sample estimates of `E σ(ŷ)` under
/// `ŷ ~ N(mean, cov)`. A point mass gives exact gaps (SE = 0 is treated as
/// passing when the gap is at roundoff level).
pub fn mixability_gaps<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    m_mc: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = mean.len();
    let batch = |rng: &mut R| -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut s, mut s2) = (vec![0.0; k], vec![0.0; k]);
        let mut p = vec![0.0; k];
        for_each_gaussian_sample(mean, cov, m_mc, rng, |z| {
            losses::softmax_into(z, &mut p);
            for i in 0..k {
                s[i] += p[i];
                s2[i] += p[i] * p[i];
            }
        })?;
        let m = m_mc as f64;
        let mean: Vec<f64> = s.iter().map(|v| v / m).collect();
        let var = s2
            .iter()
            .zip(&mean)
            .map(|(q, mu)| (q / m - mu * mu).max(0.0) * m / (m - 1.0).max(1.0))
            .collect();
        Ok((mean, var))
    };
    let (p1, v1) = batch(rng)?;
    let (p2, v2) = batch(rng)?;
    let total: f64 = p1.iter().sum();
    let p1 = SimplexVector::new(p1.iter().map(|v| v / total).collect())?;
    // the aggregated prediction, mapped back through the link
    let agg = softmax(&sigma_plus(&p1)?)?;
    Ok((0..k)
        .map(|y| {
            let gap = (agg[y] - p2[y]).abs();
            let se = ((v1[y] + v2[y]) / m_mc as f64).sqrt();
            if gap <= 1e-12 {
                0.0
            } else if se == 0.0 {
                f64::INFINITY
            } else {
                gap / se
            }
        })
        .collect())
}

/// Mixability of the log loss under the softmax link: the loss of the
/// aggregated prediction `σ⁺(E σ(ŷ))` equals the mix loss `−log E e^{−ℓ(ŷ, y)}`.
/// Random Gaussian `π` over `K` logits; the point-mass case is included.
pub fn check_mixability<R: Rng + ?Sized>(k: usize, trials: usize, m_mc: usize, rng: &mut R) -> Result<CheckReport> {
    if k < 2 {
        return Err(Error::Config(format!("need K >= 2, got {k}")));
    }
    let mut worst = 0.0f64;
    let point = normal_vec(k, rng);
    for g in mixability_gaps(&point, &DMatrix::zeros(k, k), 1, rng)? {
        worst = worst.min(-g);
    }
    for _ in 0..trials {
        let mean = normal_vec(k, rng);
        let l = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal) / (k as f64).sqrt());
        let cov = &l * l.transpose();
        for g in mixability_gaps(&mean, &cov, m_mc, rng)? {
            worst = worst.min(-g);
        }
    }
    Ok(CheckReport::new(format!("mixability_k{k}"), trials, worst, MC_SIGMAS))
}

// ---------------------------------------------------------------------------
// Quadratic lower bound

/// `ξ(a, b) = ℓ_y(a) − ℓ_y(b) − ∇ℓ_y(b)ᵀ(a−b) − (β/2)(a−b)ᵀ∇²ℓ_y(b)(a−b)`.
pub fn lower_bound_slack(a: &DVector<f64>, b: &DVector<f64>, y: usize, beta: f64) -> f64 {
    let (la, _, _) = logit_loss(a, y);
    let (lb, gb, hb) = logit_loss(b, y);
    let d = a - b;
    la - lb - gb.dot(&d) - 0.5 * beta * d.dot(&(&hb * &d))
}

/// `β = 2/(log K + 2(C+1))`, the curvature for logits bounded by `C` in sup norm.
pub fn lower_bound_beta(k: usize, c: f64) -> f64 {
    2.0 / ((k as f64).ln() + 2.0 * (c + 1.0))
}

/// [`lower_bound_slack`] over `a ∈ [−C, C]^K`, `b ∈ [−3C, 3C]^K`, `β` equal to
/// `factor` times [`lower_bound_beta`]. `factor = 1` should pass; larger
/// factors probe sharpness.
pub fn check_lower_bound_scaled<R: Rng + ?Sized>(
    k: usize,
    c: f64,
    trials: usize,
    factor: f64,
    rng: &mut R,
) -> Result<CheckReport> {
    if k < 2 || !(c > 0.0) {
        return Err(Error::Config(format!("need K >= 2 and C > 0, got K={k}, C={c}")));
    }
    let beta = factor * lower_bound_beta(k, c);
    let a0 = uniform_vec(k, c, rng);
    let mut worst = -lower_bound_slack(&a0, &a0, 0, beta).abs();
    for _ in 0..trials {
        let a = uniform_vec(k, c, rng);
        let b = uniform_vec(k, 3.0 * c, rng);
        let y = rng.random_range(0..k);
        worst = worst.min(lower_bound_slack(&a, &b, y, beta));
    }
    let name = if factor == 1.0 {
        format!("lower_bound_k{k}_c{c}")
    } else {
        format!("lower_bound_k{k}_c{c}_x{factor}")
    };
    Ok(CheckReport::new(name, trials, worst, EXACT_TOL))
}

pub fn check_lower_bound_lemma<R: Rng + ?Sized>(k: usize, c: f64, trials: usize, rng: &mut R) -> Result<CheckReport> {
    check_lower_bound_scaled(k, c, trials, 1.0, rng)
}

// ---------------------------------------------------------------------------
// Softmax mean vs. maximum

/// `Σ σ(b)_i b_i − (max_i b_i − log K)`.
pub fn softmax_slack(b: &[f64]) -> f64 {
    let p = softmax(b).expect("finite input");
    let mean: f64 = p.as_slice().iter().zip(b).map(|(p, b)| p * b).sum();
    let max = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mean - (max - (b.len() as f64).ln())
}

/// `E_{σ(b)}[b] ≥ max b − log K` over `b ∈ [−10, 10]^K`. The constant vector
/// is the witness with slack exactly `log K`.
pub fn check_softmax_lemma<R: Rng + ?Sized>(k: usize, trials: usize, rng: &mut R) -> Result<CheckReport> {
    if k < 2 {
        return Err(Error::Config(format!("need K >= 2, got {k}")));
    }
    let c: f64 = rng.random_range(-10.0..10.0);
    let mut worst = -(softmax_slack(&vec![c; k]) - (k as f64).ln()).abs();
    for _ in 0..trials {
        let b = uniform_vec(k, 10.0, rng);
        worst = worst.min(softmax_slack(b.as_slice()));
    }
    Ok(CheckReport::new(format!("softmax_k{k}"), trials, worst, 1e-12))
}

// ---------------------------------------------------------------------------
// Trace vs. log-determinant

fn logdet_pd(m: &DMatrix<f64>) -> Option<f64> {
    let l = m.clone().cholesky()?;
    Some(2.0 * l.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// `log(|A|/|A−B|) − Tr(A⁻¹B)`, or `None` when `A − B` is not positive definite.
pub fn trace_slack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let la = logdet_pd(a)?;
    let lab = logdet_pd(&(a - b))?;
    let chol = a.clone().cholesky()?;
    let tr = chol.solve(b).trace();
    Some(la - lab - tr)
}

/// `Tr(A⁻¹B) ≤ log(|A|/|A−B|)` for random PD `A` and PSD `B` with `A − B` PD.
/// `B` is halved (at most 60 times) until the difference is PD.
pub fn check_trace_lemma<R: Rng + ?Sized>(d: usize, trials: usize, rng: &mut R) -> Result<CheckReport> {
    if d == 0 {
        return Err(Error::Config("need d >= 1".into()));
    }
    let scalar = trace_slack(&DMatrix::from_element(1, 1, 2.0), &DMatrix::from_element(1, 1, 1.0))
        .expect("2 - 1 > 0");
    let zero = trace_slack(&DMatrix::identity(d, d), &DMatrix::zeros(d, d)).expect("identity is PD");
    let mut worst = -(scalar - (2f64.ln() - 0.5)).abs().max(zero.abs());
    let mut used = 0;
    for _ in 0..trials {
        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1;
        let rank = rng.random_range(1..=d);
        let h = DMatrix::from_fn(d, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut b = &h * h.transpose() / d as f64;
        let mut slack = None;
        for _ in 0..=60 {
            if let Some(s) = trace_slack(&a, &b) {
                slack = Some(s);
                break;
            }
            b *= 0.5;
        }
        if let Some(s) = slack {
            worst = worst.min(s);
            used += 1;
        }
    }
    Ok(CheckReport::new(format!("trace_d{d}"), used, worst, 1e-10))
}

// ---------------------------------------------------------------------------
// Self-concordance and smoothness

/// Self-concordance of the logistic loss with `ζ = 4R²`:
/// `ℓ(θ₁) − ℓ(θ₂) − ∇ℓ(θ₂)ᵀδ ≤ e^{ζ‖δ‖²}·δᵀ∇²ℓ(θ₂)δ` for `δ = θ₁ − θ₂`,
/// `‖δ‖ ≤ 3`, `‖x‖ ≤ R`. Returns the self-concordance report and the
/// smoothness companion `λ_max(∇²ℓ) ≤ R²`.
pub fn check_self_concordance<R: Rng + ?Sized>(
    dprime: usize,
    classes: usize,
    r: f64,
    trials: usize,
    rng: &mut R,
) -> Result<(CheckReport, CheckReport)> {
    if !(r > 0.0) || dprime == 0 || classes < 2 {
        return Err(Error::Config(format!(
            "need R > 0, d' >= 1, K >= 2, got R={r}, d'={dprime}, K={classes}"
        )));
    }
    let zeta = 4.0 * r * r;
    let d = dprime * classes;
    let mut worst_sc = 0.0f64;
    let mut worst_smooth = 0.0f64;
    let one = |theta1: &DVector<f64>, theta2: &DVector<f64>, feat: &InputFeatures, y: usize| -> Result<(f64, f64)> {
        let delta = theta1 - theta2;
        let lhs = logistic_value(feat, y, theta1)?
            - logistic_value(feat, y, theta2)?
            - logistic_grad(feat, y, theta2)?.dot(&delta);
        let h = logistic_hess_factor(feat, theta2)?;
        let rhs = (zeta * delta.norm_squared()).exp() * h.quad_form(&delta);
        let lmax = SymmetricEigen::new(h.to_dense()).eigenvalues.max();
        Ok((rhs - lhs, r * r - lmax))
    };
    // equality case θ₁ = θ₂
    let x = random_in_ball(dprime, r, rng);
    let feat = InputFeatures::new(x.as_slice().to_vec(), classes, r * (1.0 + 1e-12))?;
    let t = normal_vec(d, rng);
    let (s0, _) = one(&t, &t, &feat, 0)?;
    worst_sc = worst_sc.min(-s0.abs());
    for _ in 0..trials {
        let x = random_in_ball(dprime, r, rng);
        let feat = InputFeatures::new(x.as_slice().to_vec(), classes, r * (1.0 + 1e-12))?;
        let y = rng.random_range(0..classes);
        let theta2 = normal_vec(d, rng) * rng.random_range(0.0..2.0);
        let theta1 = &theta2 + random_in_ball(d, 3.0, rng);
        let (sc, smooth) = one(&theta1, &theta2, &feat, y)?;
        worst_sc = worst_sc.min(sc);
        worst_smooth = worst_smooth.min(smooth);
    }
    Ok((
        CheckReport::new(format!("self_concordance_d{dprime}_k{classes}"), trials, worst_sc, EXACT_TOL),
        CheckReport::new(format!("smoothness_d{dprime}_k{classes}"), trials, worst_smooth, EXACT_TOL),
    ))
}

// ---------------------------------------------------------------------------
// Monte Carlo deviation of the smoothed prediction

/// `ε = √(K/(μm)·log(1/0.01))`.
pub fn chernoff_epsilon(k: usize, mu: f64, m: usize) -> f64 {
    (k as f64 / (mu * m as f64) * (1.0 / CHERNOFF_LEVEL).ln()).sqrt()
}

/// Fraction of trials where `max_y log(p̄_y/p̃_y) > ε`. Each trial draws a
/// target `p` uniformly from the simplex, forms `p̄ = smooth_μ(p)`, replaces
/// the expectation by an average of `m` one-hot draws from `p` (the
/// highest-variance sampler with that mean) and smooths it into `p̃`.
pub fn chernoff_frequency<R: Rng + ?Sized>(
    k: usize,
    mu: f64,
    m: usize,
    trials: usize,
    eps: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut hits = 0usize;
    let mut counts = vec![0u64; k];
    for _ in 0..trials {
        let w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = w.iter().sum();
        let p = SimplexVector::new(w.iter().map(|v| v / s).collect())?;
        // multinomial by sequential binomials
        let (mut left, mut mass) = (m as u64, 1.0);
        for i in 0..k {
            counts[i] = if i + 1 == k || left == 0 {
                left
            } else {
                let q = (p[i] / mass).clamp(0.0, 1.0);
                Binomial::new(left, q)
                    .map_err(|e| Error::Domain(format!("binomial: {e}")))?
                    .sample(rng)
            };
            left -= counts[i];
            mass -= p[i];
        }
        let q = SimplexVector::new(counts.iter().map(|c| *c as f64 / m as f64).collect())?;
        let pbar = losses::smooth(&p, mu)?;
        let ptil = losses::smooth(&q, mu)?;
        let dev = (0..k)
            .map(|y| pbar[y].ln() - ptil[y].ln())
            .fold(f64::NEG_INFINITY, f64::max);
        if dev > eps {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Empirical tail at the nominal `ε` must stay at or below `2·0.01`.
pub fn check_chernoff_deviation<R: Rng + ?Sized>(
    k: usize,
    mu: f64,
    m: usize,
    trials: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    if !(mu > 0.0 && mu <= 0.5) || m < 10 || k < 2 {
        return Err(Error::Config(format!(
            "need mu in (0, 1/2], m >= 10, K >= 2, got mu={mu}, m={m}, K={k}"
        )));
    }
    let freq = chernoff_frequency(k, mu, m, trials, chernoff_epsilon(k, mu, m), rng)?;
    Ok(CheckReport::new(
        format!("chernoff_k{k}_mu{mu}_m{m}"),
        trials,
        -freq,
        2.0 * CHERNOFF_LEVEL,
    ))
}

// ---------------------------------------------------------------------------
// Derivatives

fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, theta: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(theta.len());
    let mut t = theta.clone();
    for i in 0..theta.len() {
        t[i] = theta[i] + h;
        let fp = f(&t);
        t[i] = theta[i] - h;
        let fm = f(&t);
        t[i] = theta[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

fn fd_jacobian(g: impl Fn(&DVector<f64>) -> DVector<f64>, theta: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = theta.len();
    let mut j = DMatrix::zeros(n, n);
    let mut t = theta.clone();
    for i in 0..n {
        t[i] = theta[i] + h;
        let gp = g(&t);
        t[i] = theta[i] - h;
        let gm = g(&t);
        t[i] = theta[i];
        j.set_column(i, &((gp - gm) / (2.0 * h)));
    }
    j
}

/// Relative central-difference errors of the logistic and squared gradients
/// and Hessians at random points with `d′ ≤ 5`, `K ≤ 5`.
pub fn check_gradients<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<Vec<CheckReport>> {
    let mut worst = [0.0f64; 4];
    for _ in 0..trials {
        let dprime = rng.random_range(1..=5);
        let k = rng.random_range(2..=5);
        let feat = InputFeatures::new(uniform_vec(dprime, 1.0, rng).as_slice().to_vec(), k, f64::INFINITY)?;
        let y = rng.random_range(0..k);
        let theta = normal_vec(dprime * k, rng);
        let h = 1e-5 * (1.0 + theta.norm());

        let g = logistic_grad(&feat, y, &theta)?;
        let fd = fd_gradient(|t| logistic_value(&feat, y, t).unwrap(), &theta, h);
        worst[0] = worst[0].max((fd - &g).norm() / g.norm().max(1.0));
        let hess = logistic_hess_factor(&feat, &theta)?.to_dense();
        let fdh = fd_jacobian(|t| logistic_grad(&feat, y, t).unwrap(), &theta, h);
        worst[1] = worst[1].max((fdh - &hess).norm() / hess.norm().max(1.0));

        let d = rng.random_range(1..=5);
        let x = uniform_vec(d, 1.0, rng);
        let target = rng.random_range(-2.0..2.0);
        let theta = normal_vec(d, rng);
        let h = 1e-5 * (1.0 + theta.norm());
        let g = squared_grad(&x, target, &theta)?;
        let fd = fd_gradient(|t| squared_value(&x, target, t).unwrap(), &theta, h);
        worst[2] = worst[2].max((fd - &g).norm() / g.norm().max(1.0));
        let hess = squared_hess(&x).to_dense();
        let fdh = fd_jacobian(|t| squared_grad(&x, target, t).unwrap(), &theta, h);
        worst[3] = worst[3].max((fdh - &hess).norm() / hess.norm().max(1.0));
    }
    let names = ["logistic_gradient", "logistic_hessian", "squared_gradient", "squared_hessian"];
    let tols = [GRADIENT_TOL, HESSIAN_TOL, GRADIENT_TOL, HESSIAN_TOL];
    Ok((0..4)
        .map(|i| CheckReport::new(names[i], trials, -worst[i], tols[i]))
        .collect())
}

// ---------------------------------------------------------------------------
// Regret against a planted comparator

/// Stream with `x` uniform in the `R`-ball and `y ~ softmax(θ*ᵀΦ(x))` for a
/// random `θ*` with `‖θ*‖ = B`.
pub fn planted_stream(
    dprime: usize,
    classes: usize,
    b: f64,
    r: f64,
    n: usize,
    seed: u64,
) -> Result<(Vec<Example>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = normal_vec(dprime * classes, &mut rng);
    theta *= b / theta.norm();
    let stream = (0..n)
        .map(|_| {
            let x = random_in_ball(dprime, r, &mut rng);
            let feat = InputFeatures::new(x.as_slice().to_vec(), classes, r * (1.0 + 1e-12))?;
            let p = losses::logistic_probs(&feat, &theta)?;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut label = classes - 1;
            for (i, pi) in p.as_slice().iter().enumerate() {
                acc += pi;
                if u < acc {
                    label = i;
                    break;
                }
            }
            Ok(Example { feat, label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((stream, theta))
}

/// Setting of the planted-model regret experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceConfig {
    pub dprime: usize,
    pub classes: usize,
    pub b: f64,
    pub r: f64,
    pub n: usize,
    /// Monte Carlo samples per prediction.
    pub samples: usize,
    /// One learner seed per run; the stream for a run is drawn from the same seed.
    pub seeds: Vec<u64>,
    /// Check the surrogate lower bound every this many steps.
    pub surrogate_every: usize,
    pub surrogate_points: usize,
}

impl DominanceConfig {
    pub fn new(n: usize, samples: usize, seeds: Vec<u64>) -> Self {
        Self {
            dprime: 2,
            classes: 3,
            b: 2.0,
            r: 1.0,
            n,
            samples,
            seeds,
            surrogate_every: 50,
            surrogate_points: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DominanceOutcome {
    /// Bound column holds theorem bound plus Monte Carlo deviation allowance.
    pub reports: Vec<RegretReport>,
    /// Slack `bound(t) − regret(t)` over all prefixes and seeds.
    pub dominance: CheckReport,
    /// Slack `ℓ_t(θ) − ℓ̃_t(θ)` at sampled `θ` in the `B`-ball.
    pub surrogate: CheckReport,
}

/// Monte Carlo allowance `3t·√(K·log(100t)/(μm))`.
pub fn deviation_allowance(t: usize, classes: usize, mu: f64, m: usize) -> f64 {
    let t = t as f64;
    3.0 * t * (classes as f64 * (100.0 * t).ln() / (mu * m as f64)).sqrt()
}

/// Runs GAF with the theoretical constants on planted streams and compares its
/// regret against the planted parameter with the bound at every prefix.
/// Along the way the quadratic surrogate built at the new estimate is checked
/// to lie below the loss.
pub fn regret_dominance(cfg: &DominanceConfig) -> Result<DominanceOutcome> {
    let (k, d) = (cfg.classes, cfg.dprime * cfg.classes);
    let mut reports = Vec::with_capacity(cfg.seeds.len());
    let mut worst_dom = f64::INFINITY;
    let mut worst_sur = f64::INFINITY;
    let mut checks = 0;
    for &seed in &cfg.seeds {
        let (stream, theta_star) = planted_stream(cfg.dprime, k, cfg.b, cfg.r, cfg.n, seed ^ 0x5eed_0f57_ea00)?;
        let mut lc = LearnerConfig::theoretical(cfg.dprime, k, cfg.b, cfg.r, cfg.n)?;
        lc.samples = cfg.samples;
        lc.seed = seed;
        let params = params_for(LossKind::Logistic, cfg.b, cfg.r, None, cfg.dprime, k)?;
        let mut gaf = Gaf::new(lc.clone())?;
        let mut probe = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let n = stream.len();
        let (mut learner, mut comp, mut regret, mut bound) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut sl, mut sc) = (0.0, 0.0);
        for (i, ex) in stream.iter().enumerate() {
            let t = i + 1;
            let pred = gaf.predict(&ex.feat)?;
            let loss = pred.ptilde.log_loss(ex.label)?;
            gaf.update(&ex.feat, ex.label)?;
            let c = logistic_value(&ex.feat, ex.label, &theta_star)?;
            sl += loss;
            sc += c;
            let bt = theorem_bound(&params, d, t, theta_star.norm()) + deviation_allowance(t, k, lc.mu, lc.samples);
            learner.push(loss);
            comp.push(c);
            regret.push(sl - sc);
            bound.push(bt);
            worst_dom = worst_dom.min(bt - (sl - sc));
            if cfg.surrogate_every > 0 && t % cfg.surrogate_every == 0 {
                let sur = QuadraticSurrogate::logistic(&ex.feat, ex.label, gaf.theta(), lc.beta)?;
                for _ in 0..cfg.surrogate_points {
                    let th = random_in_ball(d, cfg.b, &mut probe);
                    let slack = logistic_value(&ex.feat, ex.label, &th)? - sur.value_at(&th);
                    worst_sur = worst_sur.min(slack);
                    checks += 1;
                }
            }
        }
        reports.push(RegretReport {
            algo: "gaf".into(),
            seed,
            learner_losses: learner,
            comparator_losses: comp,
            cumulative_regret: regret,
            bound,
            comparator: Some(Comparator::fixed(theta_star)),
            step_seconds: vec![0.0; n],
        });
    }
    let trials = cfg.n * cfg.seeds.len();
    Ok(DominanceOutcome {
        reports,
        dominance: CheckReport::new("regret_dominance", trials, worst_dom, 0.0),
        surrogate: CheckReport::new("surrogate_soundness", checks, worst_sur, EXACT_TOL),
    })
}

// ---------------------------------------------------------------------------
// Suites

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Lemmas,
    Gradients,
    Regret,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "lemmas" => Ok(Suite::Lemmas),
            "gradients" => Ok(Suite::Gradients),
            "regret" => Ok(Suite::Regret),
            _ => Err(Error::Config(format!(
                "unknown suite `{s}` (all, lemmas, gradients, regret)"
            ))),
        }
    }
}

/// Runs a suite at the sizes used for acceptance. Each check draws from its
/// own stream derived from `seed`, so results do not depend on check order.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let mut stream = 0u64;
    let mut rng = || {
        stream += 1;
        ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream))
    };
    if matches!(suite, Suite::All | Suite::Lemmas) {
        for k in [2, 3, 5] {
            for c in [0.5, 1.0, 2.0] {
                out.push(check_lower_bound_lemma(k, c, 10_000, &mut rng())?);
            }
        }
        out.push(check_softmax_lemma(4, 100_000, &mut rng())?);
        out.push(check_trace_lemma(8, 10_000, &mut rng())?);
        let (sc, smooth) = check_self_concordance(1, 2, 1.0, 10_000, &mut rng())?;
        out.push(sc);
        out.push(smooth);
        let (sc, smooth) = check_self_concordance(3, 4, 1.0, 10_000, &mut rng())?;
        out.push(sc);
        out.push(smooth);
        for k in [2, 4] {
            out.push(check_mixability(k, 3, 1_000_000, &mut rng())?);
        }
        out.push(check_chernoff_deviation(3, 0.1, 1000, 10_000, &mut rng())?);
    }
    if matches!(suite, Suite::All | Suite::Gradients) {
        out.extend(check_gradients(1000, &mut rng())?);
    }
    if matches!(suite, Suite::All | Suite::Regret) {
        let outcome = regret_dominance(&DominanceConfig::new(300, 20_000, vec![seed, seed + 1]))?;
        out.push(outcome.dominance);
        out.push(outcome.surrogate);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn report_pass_rule() {
        assert!(CheckReport::new("x", 1, -1e-10, 1e-9).pass);
        assert!(!CheckReport::new("x", 1, -2e-9, 1e-9).pass);
        assert_eq!(CheckReport::new("x", 3, 0.0, 1e-9).to_string(), "x,3,0.0,true");
    }

    #[test]
    fn mixability_point_mass_is_exact() {
        let mean = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let gaps = mixability_gaps(&mean, &DMatrix::zeros(3, 3), 5, &mut rng(1)).unwrap();
        assert!(gaps.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn mixability_symmetric_point_mass_has_equal_slack() {
        let gaps = mixability_gaps(&DVector::zeros(4), &DMatrix::zeros(4, 4), 3, &mut rng(2)).unwrap();
        assert!(gaps.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn mixability_k2() {
        let r = check_mixability(2, 2, 200_000, &mut rng(3)).unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn lower_bound_equal_points_are_exact() {
        let a = DVector::from_vec(vec![0.4, -0.7, 1.1]);
        assert_eq!(lower_bound_slack(&a, &a, 1, 0.5), 0.0);
    }

    #[test]
    fn lower_bound_holds_and_doubling_breaks_it() {
        let ok = check_lower_bound_lemma(2, 1.0, 10_000, &mut rng(4)).unwrap();
        assert!(ok.pass, "{ok}");
        let bad = check_lower_bound_scaled(2, 1.0, 10_000, 2.0, &mut rng(4)).unwrap();
        assert!(!bad.pass, "{bad}");
    }

    #[test]
    fn softmax_constant_and_dominant_inputs() {
        for k in [2, 5] {
            assert!((softmax_slack(&vec![1.5; k]) - (k as f64).ln()).abs() < 1e-12);
        }
        // For b = (T, 0, ..., 0) the mean approaches the maximum, so the slack
        // tends to log K from below while staying non-negative.
        let mut prev = f64::INFINITY;
        for t in [5.0, 10.0, 20.0, 40.0, 80.0] {
            let mut b = vec![0.0; 3];
            b[0] = t;
            let s = softmax_slack(&b);
            assert!(s >= 0.0);
            assert!((s - 3f64.ln()).abs() <= (prev - 3f64.ln()).abs() + 1e-15);
            prev = s;
        }
        assert!((prev - 3f64.ln()).abs() < 1e-12);
        assert!(check_softmax_lemma(3, 10_000, &mut rng(5)).unwrap().pass);
    }

    #[test]
    fn trace_scalar_and_zero_cases() {
        let s = trace_slack(&DMatrix::from_element(1, 1, 2.0), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((s - (2f64.ln() - 0.5)).abs() < 1e-15);
        assert_eq!(trace_slack(&DMatrix::identity(3, 3), &DMatrix::zeros(3, 3)).unwrap(), 0.0);
        assert!(trace_slack(&DMatrix::identity(2, 2), &(DMatrix::identity(2, 2) * 2.0)).is_none());
        assert!(check_trace_lemma(4, 2000, &mut rng(6)).unwrap().pass);
    }

    #[test]
    fn self_concordance_small() {
        let (sc, smooth) = check_self_concordance(1, 2, 1.0, 5000, &mut rng(7)).unwrap();
        assert!(sc.pass, "{sc}");
        assert!(smooth.pass, "{smooth}");
    }

    #[test]
    fn chernoff_examples() {
        assert_eq!(chernoff_frequency(3, 0.1, 1000, 2000, 1e9, &mut rng(8)).unwrap(), 0.0);
        assert!(check_chernoff_deviation(3, 0.1, 1000, 10_000, &mut rng(9)).unwrap().pass);
        // at a fixed, deliberately small ε the tail shrinks with m
        let eps = chernoff_epsilon(3, 0.1, 200) / 4.0;
        let f1 = chernoff_frequency(3, 0.1, 200, 4000, eps, &mut rng(10)).unwrap();
        let f2 = chernoff_frequency(3, 0.1, 400, 4000, eps, &mut rng(10)).unwrap();
        assert!(f2 < f1 || (f1 == 0.0 && f2 == 0.0), "{f1} {f2}");
    }

    #[test]
    fn gradients_small() {
        for r in check_gradients(100, &mut rng(11)).unwrap() {
            assert!(r.pass, "{r}");
        }
    }

    #[test]
    fn checks_are_deterministic() {
        let a = check_trace_lemma(3, 300, &mut rng(12)).unwrap();
        let b = check_trace_lemma(3, 300, &mut rng(12)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn planted_stream_respects_radius() {
        let (s, theta) = planted_stream(2, 3, 2.0, 1.0, 200, 1).unwrap();
        assert!((theta.norm() - 2.0).abs() < 1e-12);
        assert!(s.iter().all(|e| e.feat.x().norm() <= 1.0 + 1e-12 && e.label < 3));
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("lemmas".parse::<Suite>().unwrap(), Suite::Lemmas);
        assert!("everything".parse::<Suite>().is_err());
    }
}
