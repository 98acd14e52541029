//! Multiclass logistic and squared losses under the block feature map.
//!
//! For `x ∈ R^{d′}` and `K` classes the feature map `Φ(x) ∈ R^{d×K}`, `d = d′K`,
//! places `x` in rows `[d′j, d′(j+1))` of column `j`. A parameter `θ ∈ R^d` is
//! therefore `K` stacked blocks of length `d′`, and the logit of class `j` is
//! `⟨θ_j, x⟩`. Nothing here materializes `Φ(x)` unless asked to.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numlin::LowRankIncrement;

const SIMPLEX_TOLERANCE: f64 = 1e-10;

/// A raw input `x` together with the class count that fixes `Φ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFeatures {
    x: DVector<f64>,
    classes: usize,
}

impl InputFeatures {
    /// Validates `‖x‖₂ ≤ radius + 1e-9`. Pass `f64::INFINITY` to skip the bound.
    pub fn new(x: Vec<f64>, classes: usize, radius: f64) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Config("class count must be at least 1".into()));
        }
        if x.is_empty() {
            return Err(Error::InvalidInput("empty feature vector".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
        let x = DVector::from_vec(x);
        let norm = x.norm();
        if norm > radius + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "feature norm {norm} exceeds bound {radius}"
            )));
        }
        Ok(Self { x, classes })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn dprime(&self) -> usize {
        self.x.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Parameter dimension `d = d′K`.
    pub fn dim(&self) -> usize {
        self.x.len() * self.classes
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "parameter has length {}, expected {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `θᵀΦ(x)` in `O(d)`.
    pub fn logits(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        Ok(self.logits_unchecked(theta))
    }

    pub(crate) fn logits_unchecked(&self, theta: &DVector<f64>) -> DVector<f64> {
        let dp = self.dprime();
        DVector::from_fn(self.classes, |j, _| theta.rows(j * dp, dp).dot(&self.x))
    }

    /// `Φ(x)·v` for a `K`-vector `v`.
    pub fn lift(&self, v: &DVector<f64>) -> DVector<f64> {
        let dp = self.dprime();
        let mut out = DVector::zeros(self.dim());
        for j in 0..self.classes {
            out.rows_mut(j * dp, dp).axpy(v[j], &self.x, 0.0);
        }
        out
    }

    /// Dense `Φ(x)` as a `d×K` matrix.
    pub fn phi(&self) -> DMatrix<f64> {
        let dp = self.dprime();
        let mut phi = DMatrix::zeros(self.dim(), self.classes);
        for j in 0..self.classes {
            phi.view_mut((j * dp, j), (dp, 1)).copy_from(&self.x);
        }
        phi
    }

    /// `Φ(x)ᵀ·M·Φ(x)` for a symmetric `d×d` matrix `M`, read block by block.
    pub fn sandwich(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let dp = self.dprime();
        let k = self.classes;
        let mut out = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let block = m.view((i * dp, j * dp), (dp, dp));
                let v = self.x.dot(&(block * &self.x));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// `M·Φ(x)` (d×K) for a `d×d` matrix `M`.
    pub fn right_apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let dp = self.dprime();
        let mut out = DMatrix::zeros(m.nrows(), self.classes);
        for j in 0..self.classes {
            let cols = m.columns(j * dp, dp);
            out.set_column(j, &(cols * &self.x));
        }
        out
    }
}

/// A probability vector on the `K`-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `−log p_y`.
    pub fn log_loss(&self, y: usize) -> Result<f64> {
        let p = *self.0.get(y).ok_or(Error::InvalidLabel {
            label: y,
            classes: self.0.len(),
        })?;
        Ok(-p.ln())
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `σ(z)_i = e^{z_i} / Σ_j e^{z_j}`, evaluated after subtracting `max z`.
pub fn softmax(z: &[f64]) -> Result<SimplexVector> {
    if z.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("softmax input must be finite".into()));
    }
    let mut p = vec![0.0; z.len()];
    softmax_into(z, &mut p);
    Ok(SimplexVector(p))
}

/// Unchecked softmax into a caller buffer.
pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Componentwise logarithm; a right inverse of [`softmax`] on the open simplex.
pub fn sigma_plus(p: &SimplexVector) -> Result<Vec<f64>> {
    if let Some(i) = p.0.iter().position(|&v| v <= 0.0) {
        return Err(Error::Domain(format!(
            "component {i} is zero; smooth the distribution before taking logarithms"
        )));
    }
    Ok(p.0.iter().map(|v| v.ln()).collect())
}

/// `(1 − μ)·p + μ·1/K`, so every entry is at least `μ/K`.
pub fn smooth(p: &SimplexVector, mu: f64) -> Result<SimplexVector> {
    if !(0.0..=0.5).contains(&mu) {
        return Err(Error::Config(format!("smoothing level {mu} outside [0, 1/2]")));
    }
    let k = p.len() as f64;
    Ok(SimplexVector(
        p.0.iter().map(|v| (1.0 - mu) * v + mu / k).collect(),
    ))
}

fn check_label(y: usize, classes: usize) -> Result<()> {
    if y >= classes {
        return Err(Error::InvalidLabel { label: y, classes });
    }
    Ok(())
}

/// `−log σ(θᵀΦ(x))_y` for a 0-based class index `y`.
pub fn logistic_value(feat: &InputFeatures, y: usize, theta: &DVector<f64>) -> Result<f64> {
    check_label(y, feat.classes())?;
    let z = feat.logits(theta)?;
    Ok(log_sum_exp(z.as_slice()) - z[y])
}

/// Softmax probabilities at `θ`, `p = σ(θᵀΦ(x))`.
pub fn logistic_probs(feat: &InputFeatures, theta: &DVector<f64>) -> Result<SimplexVector> {
    softmax(feat.logits(theta)?.as_slice())
}

/// `Φ(x)·(p − e_y)`.
pub fn logistic_grad(feat: &InputFeatures, y: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_label(y, feat.classes())?;
    let p = logistic_probs(feat, theta)?;
    let mut r = DVector::from_column_slice(p.as_slice());
    r[y] -= 1.0;
    Ok(feat.lift(&r))
}

/// `diag(p) − ppᵀ`.
pub fn softmax_hessian_core(p: &SimplexVector) -> DMatrix<f64> {
    let k = p.len();
    DMatrix::from_fn(k, k, |i, j| {
        let v = -p[i] * p[j];
        if i == j { v + p[i] } else { v }
    })
}

/// The logistic Hessian `Φ(x)·(diag(p) − ppᵀ)·Φ(x)ᵀ` as a low-rank increment.
pub fn logistic_hess_factor(feat: &InputFeatures, theta: &DVector<f64>) -> Result<LowRankIncrement> {
    let p = logistic_probs(feat, theta)?;
    LowRankIncrement::new(feat.phi(), softmax_hessian_core(&p))
}

fn check_squared(x: &DVector<f64>, theta: &DVector<f64>, y: f64) -> Result<()> {
    if x.len() != theta.len() {
        return Err(Error::Dimension(format!(
            "input has length {}, parameter has length {}",
            x.len(),
            theta.len()
        )));
    }
    if !y.is_finite() {
        return Err(Error::InvalidInput("non-finite target".into()));
    }
    Ok(())
}

/// `(θᵀx − y)²`.
pub fn squared_value(x: &DVector<f64>, y: f64, theta: &DVector<f64>) -> Result<f64> {
    check_squared(x, theta, y)?;
    Ok((theta.dot(x) - y).powi(2))
}

/// `2(θᵀx − y)·x`.
pub fn squared_grad(x: &DVector<f64>, y: f64, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_squared(x, theta, y)?;
    Ok(x * (2.0 * (theta.dot(x) - y)))
}

/// `2xxᵀ` as a rank-one increment.
pub fn squared_hess(x: &DVector<f64>) -> LowRankIncrement {
    LowRankIncrement::new(
        DMatrix::from_column_slice(x.len(), 1, x.as_slice()),
        DMatrix::from_element(1, 1, 2.0),
    )
    .expect("rank-one shapes conform")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    Squared,
}

/// The constants under which the regret guarantee holds for a loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionParams {
    /// Mixability.
    pub alpha: f64,
    /// Curvature of the quadratic lower bound.
    pub beta: f64,
    /// Smoothness, used by the bound evaluator.
    pub gamma: f64,
    /// Smoothness constant as printed for the squared loss (`R²`); equal to
    /// `gamma` for the logistic loss.
    pub stated_gamma: f64,
    /// Hessian-drift constant.
    pub zeta: f64,
    /// Regularization.
    pub lambda: f64,
}

/// Fills the five constants for a loss.
///
/// Logistic: `α = 1`, `β = (log(K)/2 + BR + 1)⁻¹`, `γ = R²`, `ζ = 4R²`,
/// `λ = 32d′KR²`. Squared (requires `y_bound`): `α = 1/(2Y²)`, `β = 1`,
/// `γ = 2R²` (the printed value `R²` is kept in `stated_gamma`),
/// `ζ = (8Y²dB²)⁻¹` and `λ = max{4, d}·ζ/α`.
pub fn params_for(
    kind: LossKind,
    b: f64,
    r: f64,
    y_bound: Option<f64>,
    dprime: usize,
    classes: usize,
) -> Result<AssumptionParams> {
    if !(b > 0.0) || !(r > 0.0) {
        return Err(Error::Config(format!("bounds must be positive (B={b}, R={r})")));
    }
    if dprime == 0 || classes == 0 {
        return Err(Error::Config("dimensions must be at least 1".into()));
    }
    match kind {
        LossKind::Logistic => {
            let k = classes as f64;
            Ok(AssumptionParams {
                alpha: 1.0,
                beta: 1.0 / (k.ln() / 2.0 + b * r + 1.0),
                gamma: r * r,
                stated_gamma: r * r,
                zeta: 4.0 * r * r,
                lambda: 32.0 * dprime as f64 * k * r * r,
            })
        }
        LossKind::Squared => {
            let y = y_bound
                .filter(|y| *y > 0.0)
                .ok_or_else(|| Error::Config("squared loss needs a positive output bound Y".into()))?;
            let d = (dprime * classes) as f64;
            let alpha = 1.0 / (2.0 * y * y);
            let zeta = 1.0 / (8.0 * y * y * d * b * b);
            Ok(AssumptionParams {
                alpha,
                beta: 1.0,
                gamma: 2.0 * r * r,
                stated_gamma: r * r,
                zeta,
                lambda: d.max(4.0) * zeta / alpha,
            })
        }
    }
}

/// Second-order surrogate `ℓ(c) + ∇ℓ(c)ᵀ(θ−c) + (β/2)(θ−c)ᵀ∇²ℓ(c)(θ−c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurrogate {
    pub center: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: LowRankIncrement,
    pub beta: f64,
}

impl QuadraticSurrogate {
    pub fn logistic(feat: &InputFeatures, y: usize, center: &DVector<f64>, beta: f64) -> Result<Self> {
        Ok(Self {
            center: center.clone(),
            value: logistic_value(feat, y, center)?,
            grad: logistic_grad(feat, y, center)?,
            hess: logistic_hess_factor(feat, center)?,
            beta,
        })
    }

    pub fn squared(x: &DVector<f64>, y: f64, center: &DVector<f64>, beta: f64) -> Result<Self> {
        Ok(Self {
            center: center.clone(),
            value: squared_value(x, y, center)?,
            grad: squared_grad(x, y, center)?,
            hess: squared_hess(x),
            beta,
        })
    }

    pub fn value_at(&self, theta: &DVector<f64>) -> f64 {
        let delta = theta - &self.center;
        self.value + self.grad.dot(&delta) + 0.5 * self.beta * self.hess.quad_form(&delta)
    }

    pub fn grad_at(&self, theta: &DVector<f64>) -> DVector<f64> {
        let delta = theta - &self.center;
        &self.grad + self.hess.apply(&delta) * self.beta
    }
}
