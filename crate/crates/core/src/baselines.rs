//! Proper baselines: projected online gradient descent and online Newton step
//! on the logistic loss, both constrained to the Euclidean ball of radius `B`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::losses::{logistic_grad, logistic_probs, InputFeatures, SimplexVector};
use crate::numlin::PdMatrixState;

/// Default `ε` in `G₀ = εI`.
pub const ONS_EPSILON: f64 = 1e-3;

/// `v·min(1, B/‖v‖)`.
pub fn project_ball(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = v.norm();
    if n <= radius {
        v.clone()
    } else {
        v * (radius / n)
    }
}

/// `argmin_{‖θ‖ ≤ B} (θ − v)ᵀG(θ − v)`.
///
/// Outside the ball the minimizer is `(G + νI)⁻¹Gv` for the multiplier `ν > 0`
/// with `‖θ(ν)‖ = B`. `G` is diagonalized once and `ν` is found by a
/// bisection-safeguarded Newton iteration on `1/‖θ(ν)‖ − 1/B`, stopping when
/// `|‖θ‖ − B| ≤ tol·B`.
pub fn project_ball_metric(
    v: &DVector<f64>,
    g: &DMatrix<f64>,
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    if v.norm() <= radius {
        return Ok(v.clone());
    }
    let eig = SymmetricEigen::new(g.clone());
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let w = eig.eigenvectors.tr_mul(v);
    let coords = |nu: f64| -> Vec<f64> {
        lam.iter()
            .zip(w.iter())
            .map(|(l, wi)| if l + nu > 0.0 { l * wi / (l + nu) } else { 0.0 })
            .collect()
    };
    let norm = |c: &[f64]| c.iter().map(|x| x * x).sum::<f64>().sqrt();

    let lmax = lam.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, lmax * v.norm() / radius + 1e-300);
    let mut nu = 0.0;
    let mut c = coords(nu);
    let mut converged = false;
    for _ in 0..max_iter {
        let n = norm(&c);
        if (n - radius).abs() <= tol * radius {
            converged = true;
            break;
        }
        if n > radius {
            lo = nu;
        } else {
            hi = nu;
        }
        // ψ(ν) = 1/‖θ‖ − 1/B is close to linear in ν.
        let dn2: f64 = c
            .iter()
            .zip(&lam)
            .map(|(ci, l)| if l + nu > 0.0 { -2.0 * ci * ci / (l + nu) } else { 0.0 })
            .sum();
        let psi = 1.0 / n - 1.0 / radius;
        let dpsi = -0.5 * dn2 / (n * n * n);
        let mut next = if dpsi > 0.0 { nu - psi / dpsi } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        nu = next;
        c = coords(nu);
    }
    if !converged {
        let n = norm(&c);
        if (n - radius).abs() > tol * radius {
            return Err(Error::Solver {
                solver: "metric projection",
                iterations: max_iter,
                residual: (n - radius).abs(),
            });
        }
    }
    let theta = &eig.eigenvectors * DVector::from_vec(c);
    Ok(project_ball(&theta, radius))
}

/// Projected online gradient descent with step `η₀/√t`.
#[derive(Debug, Clone)]
pub struct Ogd {
    theta: DVector<f64>,
    t: usize,
    step_scale: f64,
    radius: f64,
}

impl Ogd {
    pub fn new(dim: usize, radius: f64, step_scale: f64) -> Result<Self> {
        if !(radius > 0.0) || !(step_scale > 0.0) {
            return Err(Error::Config(format!(
                "OGD needs positive radius and step scale (B={radius}, eta0={step_scale})"
            )));
        }
        Ok(Self {
            theta: DVector::zeros(dim),
            t: 0,
            step_scale,
            radius,
        })
    }

    /// `η₀ = B/G` with the logistic gradient bound `G = 2R`.
    pub fn default_step_scale(radius: f64, feature_bound: f64) -> f64 {
        radius / (2.0 * feature_bound)
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn predict(&self, feat: &InputFeatures) -> Result<SimplexVector> {
        logistic_probs(feat, &self.theta)
    }

    pub fn step(&mut self, feat: &InputFeatures, y: usize) -> Result<()> {
        let g = logistic_grad(feat, y, &self.theta)?;
        self.step_with_gradient(&g)
    }

    pub fn step_with_gradient(&mut self, g: &DVector<f64>) -> Result<()> {
        if g.len() != self.theta.len() {
            return Err(Error::Dimension(format!(
                "gradient of length {} for parameter of length {}",
                g.len(),
                self.theta.len()
            )));
        }
        self.t += 1;
        let eta = self.step_scale / (self.t as f64).sqrt();
        self.theta = project_ball(&(&self.theta - g * eta), self.radius);
        Ok(())
    }
}

/// Online Newton step with a `G`-norm projection onto the ball.
#[derive(Debug, Clone)]
pub struct Ons {
    theta: DVector<f64>,
    g: PdMatrixState,
    eta: f64,
    radius: f64,
    pub projection_tol: f64,
    pub projection_max_iter: usize,
}

impl Ons {
    pub fn new(dim: usize, radius: f64, eta: f64, epsilon: f64) -> Result<Self> {
        if !(radius > 0.0) || !(eta > 0.0) {
            return Err(Error::Config(format!(
                "ONS needs positive radius and eta (B={radius}, eta={eta})"
            )));
        }
        Ok(Self {
            theta: DVector::zeros(dim),
            g: PdMatrixState::new(dim, epsilon)?,
            eta,
            radius,
            projection_tol: 1e-8,
            projection_max_iter: 500,
        })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn gram(&self) -> &PdMatrixState {
        &self.g
    }

    pub fn predict(&self, feat: &InputFeatures) -> Result<SimplexVector> {
        logistic_probs(feat, &self.theta)
    }

    pub fn step(&mut self, feat: &InputFeatures, y: usize) -> Result<()> {
        let g = logistic_grad(feat, y, &self.theta)?;
        self.step_with_gradient(&g)
    }

    pub fn step_with_gradient(&mut self, grad: &DVector<f64>) -> Result<()> {
        if grad.len() != self.theta.len() {
            return Err(Error::Dimension(format!(
                "gradient of length {} for parameter of length {}",
                grad.len(),
                self.theta.len()
            )));
        }
        if grad.norm() == 0.0 {
            return Ok(());
        }
        self.g.rank_one_update(grad, 1.0)?;
        let v = &self.theta - self.g.solve(grad) / self.eta;
        self.theta = project_ball_metric(
            &v,
            self.g.mat(),
            self.radius,
            self.projection_tol,
            self.projection_max_iter,
        )?;
        Ok(())
    }
}
