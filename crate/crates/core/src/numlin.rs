//! Dense positive-definite state with low-rank inverse maintenance.
//!
//! [`PdMatrixState`] keeps `A`, `A⁻¹` and `log|A|` in sync under PSD
//! increments `U·C·Uᵀ`. The inverse is updated with the Woodbury identity and
//! the log-determinant with the matrix-determinant lemma, so an update costs
//! `O(k³ + k·d²)` and never refactorizes `A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Eigenvalues of an increment core at or below this value are dropped.
pub const CORE_EIGEN_CUTOFF: f64 = 1e-12;
/// A core eigenvalue below `-CORE_PSD_TOLERANCE` rejects the increment.
pub const CORE_PSD_TOLERANCE: f64 = 1e-9;

/// A symmetric positive-definite matrix together with its inverse and
/// log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct PdMatrixState {
    mat: DMatrix<f64>,
    inv: DMatrix<f64>,
    logdet: f64,
}

impl PdMatrixState {
    /// `λ·I` of size `dim`.
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("matrix dimension must be at least 1".into()));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "regularization must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self {
            mat: DMatrix::identity(dim, dim) * lambda,
            inv: DMatrix::identity(dim, dim) / lambda,
            logdet: dim as f64 * lambda.ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn inv(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// `A⁻¹·v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.inv * v
    }

    /// `A ← A + U·C·Uᵀ`, with the inverse and log-determinant updated in place.
    ///
    /// The core is eigendecomposed and only its positive eigenspace enters the
    /// Woodbury correction, so rank-deficient cores (such as the logistic
    /// Hessian core `diag(p) − ppᵀ`) are handled without inverting `C`.
    pub fn lowrank_update(&mut self, inc: &LowRankIncrement) -> Result<()> {
        if inc.u.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "increment factor has {} rows, state has dimension {}",
                inc.u.nrows(),
                self.dim()
            )));
        }
        let factor = inc.positive_factor()?;
        if factor.ncols() == 0 {
            return Ok(());
        }
        self.apply_factor(&factor);
        Ok(())
    }

    /// `A ← A + c·uuᵀ` for `c ≥ 0` (Sherman–Morrison).
    pub fn rank_one_update(&mut self, u: &DVector<f64>, c: f64) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "vector of length {} against state of dimension {}",
                u.len(),
                self.dim()
            )));
        }
        if c < -CORE_PSD_TOLERANCE {
            return Err(Error::NotPsd { min_eigenvalue: c });
        }
        if c <= CORE_EIGEN_CUTOFF {
            return Ok(());
        }
        let w = DMatrix::from_column_slice(u.len(), 1, (u * c.sqrt()).as_slice());
        self.apply_factor(&w);
        Ok(())
    }

    /// `A ← A + W·Wᵀ` for a tall factor `W` (d×r).
    fn apply_factor(&mut self, w: &DMatrix<f64>) {
        let r = w.ncols();
        let p = &self.inv * w;
        let mut capacitance = w.transpose() * &p;
        for i in 0..r {
            capacitance[(i, i)] += 1.0;
        }
        symmetrize(&mut capacitance);
        // I + WᵀA⁻¹W has all eigenvalues >= 1, so this cannot fail.
        let chol = capacitance
            .clone()
            .cholesky()
            .expect("capacitance matrix is positive definite");
        let logdet_gain: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let solved = chol.solve(&p.transpose());
        self.inv -= &p * solved;
        symmetrize(&mut self.inv);
        self.mat += w * w.transpose();
        self.logdet += logdet_gain;
    }
}

/// A PSD increment `U·C·Uᵀ` with a tall factor `U` (d×k) and symmetric core `C` (k×k).
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankIncrement {
    u: DMatrix<f64>,
    core: DMatrix<f64>,
}

impl LowRankIncrement {
    pub fn new(u: DMatrix<f64>, core: DMatrix<f64>) -> Result<Self> {
        if core.nrows() != core.ncols() || core.nrows() != u.ncols() {
            return Err(Error::Dimension(format!(
                "factor is {}x{} but core is {}x{}",
                u.nrows(),
                u.ncols(),
                core.nrows(),
                core.ncols()
            )));
        }
        Ok(Self { u, core })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn core(&self) -> &DMatrix<f64> {
        &self.core
    }

    pub fn rank_bound(&self) -> usize {
        self.core.nrows()
    }

    /// Multiplies every entry of the core by `s ≥ 0`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            u: self.u.clone(),
            core: &self.core * s,
        }
    }

    /// Dense `U·C·Uᵀ`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.u * &self.core * self.u.transpose()
    }

    /// `vᵀ·U·C·Uᵀ·v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let uv = self.u.tr_mul(v);
        uv.dot(&(&self.core * &uv))
    }

    /// `U·C·Uᵀ·v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let uv = self.u.tr_mul(v);
        &self.u * (&self.core * uv)
    }

    /// `W = U·V₊·Λ₊^{1/2}` so that `W·Wᵀ = U·C·Uᵀ` on the positive eigenspace of `C`.
    fn positive_factor(&self) -> Result<DMatrix<f64>> {
        let k = self.core.nrows();
        if k == 0 {
            return Ok(DMatrix::zeros(self.u.nrows(), 0));
        }
        let mut core = self.core.clone();
        symmetrize(&mut core);
        let eig = SymmetricEigen::new(core);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -CORE_PSD_TOLERANCE {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        let kept: Vec<usize> = (0..k)
            .filter(|&i| eig.eigenvalues[i] > CORE_EIGEN_CUTOFF)
            .collect();
        let mut basis = DMatrix::zeros(k, kept.len());
        for (c, &i) in kept.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            for r in 0..k {
                basis[(r, c)] = eig.eigenvectors[(r, i)] * s;
            }
        }
        Ok(&self.u * basis)
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of a symmetric PSD matrix.
///
/// A jitter of `1e-12·trace(S)/k` is added to the diagonal first. Pivots that
/// vanish (semi-definite input) produce a zero column instead of an error;
/// pivots below `-1e-10·scale` are reported as a factorization failure.
pub fn cholesky_lower(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = s.nrows();
    if s.ncols() != k {
        return Err(Error::Dimension(format!(
            "cholesky needs a square matrix, got {}x{}",
            k,
            s.ncols()
        )));
    }
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in covariance".into()));
    }
    let jitter = (1e-12 * s.trace() / k as f64).max(0.0);
    let scale = (0..k).map(|i| s[(i, i)].abs()).fold(1.0, f64::max);
    let mut l = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let mut pivot = s[(j, j)] + jitter;
        for p in 0..j {
            pivot -= l[(j, p)] * l[(j, p)];
        }
        if pivot < -1e-10 * scale {
            return Err(Error::Factorization { pivot: j, value: pivot });
        }
        if pivot <= 1e-300 {
            continue;
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..k {
            let mut v = 0.5 * (s[(i, j)] + s[(j, i)]);
            for p in 0..j {
                v -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = v / diag;
        }
    }
    Ok(l)
}

/// Draws `m` samples from `N(mean, cov)`, each `mean + L·z` with `L = cholesky_lower(cov)`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    m: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(m);
    for_each_gaussian_sample(mean, cov, m, rng, |s| out.push(DVector::from_column_slice(s)))?;
    Ok(out)
}

/// Streaming variant of [`sample_gaussian`]: `visit` sees each sample in draw
/// order through a reused buffer.
pub fn for_each_gaussian_sample<R, F>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    m: usize,
    rng: &mut R,
    mut visit: F,
) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]),
{
    let k = mean.len();
    if cov.nrows() != k || cov.ncols() != k {
        return Err(Error::Dimension(format!(
            "mean has length {k} but covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if m == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let l = cholesky_lower(cov)?;
    let mut z = vec![0.0; k];
    let mut sample = vec![0.0; k];
    for _ in 0..m {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..k {
            let mut v = mean[i];
            for j in 0..=i {
                v += l[(i, j)] * z[j];
            }
            sample[i] = v;
        }
        visit(&sample);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        &g * g.transpose()
    }

    fn direct_logdet(m: &DMatrix<f64>) -> f64 {
        let chol = m.clone().cholesky().unwrap();
        chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum()
    }

    #[test]
    fn init_matches_scaled_identity() {
        let s = PdMatrixState::new(2, 1.0).unwrap();
        assert_eq!(s.mat(), &DMatrix::identity(2, 2));
        assert_eq!(s.inv(), &DMatrix::identity(2, 2));
        assert_eq!(s.logdet(), 0.0);

        let s = PdMatrixState::new(3, 2.0).unwrap();
        assert!((s.logdet() - 3.0 * 2f64.ln()).abs() < 1e-15);

        let s = PdMatrixState::new(1, 0.5).unwrap();
        assert_eq!(s.inv()[(0, 0)], 2.0);
    }

    #[test]
    fn init_rejects_bad_config() {
        assert!(matches!(PdMatrixState::new(0, 1.0), Err(Error::Config(_))));
        assert!(matches!(PdMatrixState::new(2, 0.0), Err(Error::Config(_))));
        assert!(matches!(PdMatrixState::new(2, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_increment_is_noop() {
        let mut s = PdMatrixState::new(4, 1.5).unwrap();
        let before = s.clone();
        let inc = LowRankIncrement::new(DMatrix::zeros(4, 2), DMatrix::identity(2, 2)).unwrap();
        s.lowrank_update(&inc).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn rank_one_diagonal_update() {
        let mut s = PdMatrixState::new(2, 1.0).unwrap();
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let inc = LowRankIncrement::new(e1, DMatrix::from_element(1, 1, 1.0)).unwrap();
        s.lowrank_update(&inc).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!((s.mat() - expect).norm() < 1e-15);
        let expect_inv = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        assert!((s.inv() - expect_inv).norm() < 1e-15);
        assert!((s.logdet() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn random_increment_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = PdMatrixState::new(6, 1.0).unwrap();
        let u = DMatrix::from_fn(6, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let core = random_psd(3, 3, &mut rng);
        let inc = LowRankIncrement::new(u, core).unwrap();
        s.lowrank_update(&inc).unwrap();
        let direct = s.mat().clone().try_inverse().unwrap();
        assert!((s.inv() - direct).norm() < 1e-8);
        assert!((s.logdet() - direct_logdet(s.mat())).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_core_is_accepted() {
        // diag(p) - ppᵀ for a near one-hot p
        let p = [1.0 - 2e-14, 1e-14, 1e-14];
        let core = DMatrix::from_fn(3, 3, |i, j| {
            if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] }
        });
        let mut s = PdMatrixState::new(5, 2.0).unwrap();
        let u = DMatrix::from_fn(5, 3, |i, j| (i + 2 * j) as f64 * 0.1);
        s.lowrank_update(&LowRankIncrement::new(u, core).unwrap()).unwrap();
        let direct = s.mat().clone().try_inverse().unwrap();
        assert!((s.inv() - direct).norm() < 1e-10);
    }

    #[test]
    fn indefinite_core_rejected() {
        let mut s = PdMatrixState::new(2, 1.0).unwrap();
        let core = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-6]);
        let inc = LowRankIncrement::new(DMatrix::identity(2, 2), core).unwrap();
        assert!(matches!(s.lowrank_update(&inc), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(matches!(
            LowRankIncrement::new(DMatrix::zeros(3, 2), DMatrix::zeros(3, 3)),
            Err(Error::Dimension(_))
        ));
        let mut s = PdMatrixState::new(4, 1.0).unwrap();
        let inc = LowRankIncrement::new(DMatrix::zeros(3, 1), DMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(s.lowrank_update(&inc), Err(Error::Dimension(_))));
    }

    #[test]
    fn cholesky_small_cases() {
        let l = cholesky_lower(&DMatrix::identity(3, 3)).unwrap();
        assert!((l - DMatrix::<f64>::identity(3, 3)).norm() < 1e-11);
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        let l = cholesky_lower(&s).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        assert!((l - expect).norm() < 1e-11);
    }

    #[test]
    fn cholesky_reconstructs_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for rank in [5, 3] {
            let s = random_psd(5, rank, &mut rng);
            let l = cholesky_lower(&s).unwrap();
            let jitter = 1e-12 * s.trace() / 5.0;
            let target = &s + DMatrix::identity(5, 5) * jitter;
            assert!((&l * l.transpose() - target).norm() < 1e-9);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_lower(&s), Err(Error::Factorization { .. })));
    }

    #[test]
    fn degenerate_covariance_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mean = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let samples = sample_gaussian(&mean, &DMatrix::zeros(3, 3), 20, &mut rng).unwrap();
        assert!(samples.iter().all(|s| s == &mean));
    }

    #[test]
    fn sample_mean_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 100_000;
        let mean = DVector::zeros(3);
        let mut acc = [0.0; 3];
        for_each_gaussian_sample(&mean, &DMatrix::identity(3, 3), m, &mut rng, |s| {
            for i in 0..3 {
                acc[i] += s[i];
            }
        })
        .unwrap();
        for a in acc {
            assert!((a / m as f64).abs() <= 4.0 * (1.0 / m as f64).sqrt());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = sample_gaussian(&mean, &cov, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_gaussian(&mean, &cov, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_covariance_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut cov = random_psd(3, 3, &mut rng);
        cov /= cov.trace();
        let m = 100_000;
        let mean = DVector::from_vec(vec![0.5, -0.5, 1.0]);
        let samples = sample_gaussian(&mean, &cov, m, &mut rng).unwrap();
        let mut emp = DMatrix::zeros(3, 3);
        for s in &samples {
            let c = s - &mean;
            emp += &c * c.transpose();
        }
        emp /= m as f64;
        assert!((emp - cov).norm() < 0.05);
    }
}
