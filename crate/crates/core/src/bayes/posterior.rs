use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::linalg::{is_symmetric, symmetric_condition};
use super::system::LinearSystem;
use crate::error::{Error, Result};

/// Fits whose `Q` has a larger condition estimate are reported as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Fits with `ν` at or below this are degenerate.
const MIN_DOF: f64 = 1e-8;

/// Multivariate t posterior `t_ν(μ, R)` over regression coefficients.
#[derive(Debug, Clone)]
pub struct PosteriorT {
    mean: DVector<f64>,
    dof: f64,
    sigma2_hat: f64,
    scale: DMatrix<f64>,
    q_factor: Option<DMatrix<f64>>,
    condition: Option<f64>,
}

impl PosteriorT {
    /// Builds a posterior directly from its parameters.
    pub fn new(mean: DVector<f64>, dof: f64, sigma2_hat: f64, scale: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Dimension("posterior dimension must be positive".into()));
        }
        if scale.shape() != (d, d) {
            return Err(Error::Dimension(format!("scale is {:?}, expected {d}x{d}", scale.shape())));
        }
        if !(dof > 0.0) {
            return Err(Error::NonPositiveDof { dof });
        }
        if !(sigma2_hat >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma2_hat must be >= 0, got {sigma2_hat}")));
        }
        if !is_symmetric(&scale) {
            return Err(Error::InvalidInput("scale matrix is not symmetric".into()));
        }
        Ok(PosteriorT { mean, dof, sigma2_hat, scale, q_factor: None, condition: None })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    /// The scale (correlation) matrix `R`.
    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    /// Lower Cholesky factor of `Q = ΦᵀWΦ + Λ`, for posteriors produced by a fit.
    pub fn q_factor(&self) -> Option<&DMatrix<f64>> {
        self.q_factor.as_ref()
    }

    /// `Q` rebuilt from its factor.
    pub fn q_matrix(&self) -> Option<DMatrix<f64>> {
        self.q_factor.as_ref().map(|l| l * l.transpose())
    }

    /// Condition estimate of `Q`, reported alongside every fit.
    pub fn condition(&self) -> Option<f64> {
        self.condition
    }

    /// `ν ≤ 2`: the t posterior has no finite covariance.
    pub fn is_heavy_tailed(&self) -> bool {
        self.dof <= 2.0
    }

    /// `(ν/(ν−2)) R`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.is_heavy_tailed() {
            return Err(Error::CovarianceUndefined { dof: self.dof });
        }
        Ok(&self.scale * (self.dof / (self.dof - 2.0)))
    }

    /// True when every draw equals the mean.
    pub fn is_point_mass(&self) -> bool {
        self.scale.iter().all(|v| *v == 0.0)
    }

    pub(crate) fn from_pushforward(mean: DVector<f64>, dof: f64, sigma2_hat: f64, scale: DMatrix<f64>) -> Self {
        PosteriorT { mean, dof, sigma2_hat, scale, q_factor: None, condition: None }
    }

    pub fn to_record(&self) -> PosteriorRecord {
        let d = self.dim();
        let mut scale = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                scale.push(self.scale[(i, j)]);
            }
        }
        PosteriorRecord {
            dim: d,
            mean: self.mean.iter().cloned().collect(),
            dof: self.dof,
            sigma2_hat: self.sigma2_hat,
            scale,
            heavy_tailed: self.is_heavy_tailed(),
            condition: self.condition,
        }
    }

    pub fn from_record(rec: &PosteriorRecord) -> Result<Self> {
        let d = rec.mean.len();
        if rec.scale.len() != d * d || rec.dim != d {
            return Err(Error::Dimension(format!(
                "record with dim {} has {} mean and {} scale entries",
                rec.dim,
                d,
                rec.scale.len()
            )));
        }
        let scale = DMatrix::from_row_slice(d, d, &rec.scale);
        let mut post = PosteriorT::new(DVector::from_vec(rec.mean.clone()), rec.dof, rec.sigma2_hat, scale)?;
        post.condition = rec.condition;
        Ok(post)
    }
}

/// JSON form of a [`PosteriorT`]; `scale` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub dof: f64,
    pub sigma2_hat: f64,
    pub scale: Vec<f64>,
    pub heavy_tailed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
}

/// Factorised normal equations of a [`LinearSystem`].
///
/// The posterior mean is linear in the observations, so refits with new
/// data (bootstrap) reuse the factorisation.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    chol: Cholesky<f64, Dyn>,
    /// `ΦᵀW`, d×n.
    phi_t_w: DMatrix<f64>,
    /// `ΦᵀWΦ`.
    gram: DMatrix<f64>,
    condition: f64,
}

impl LinearSolver {
    pub fn new(sys: &LinearSystem) -> Result<Self> {
        let phi = sys.design();
        let phi_t_w = sys.apply_precision_mat(phi).transpose();
        let gram = &phi_t_w * phi;
        let q = &gram + sys.regularizer();
        let q = (&q + q.transpose()) * 0.5;
        let condition = symmetric_condition(&q);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        let chol = Cholesky::new(q).ok_or(Error::Singular { condition })?;
        Ok(LinearSolver { chol, phi_t_w, gram, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `Q⁻¹ΦᵀW y`.
    pub fn mean_for(&self, y: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(&self.phi_t_w * y))
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn q_inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn q_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub(crate) fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// `‖Z‖_F²` with `Z = (I−H)W^{-1/2}`, via
/// `tr(W⁻¹) − 2 tr(Q⁻¹ΦᵀΦ) + tr(Q⁻¹ΦᵀWΦ Q⁻¹ΦᵀΦ)`, which needs only d×d work.
fn residual_trace(sys: &LinearSystem, solver: &LinearSolver) -> f64 {
    let phi = sys.design();
    let plain_gram = phi.transpose() * phi;
    let a = solver.solve_mat(&plain_gram);
    let b = solver.solve_mat(solver.gram());
    let first = a.trace();
    // tr(Q⁻¹M Q⁻¹P) = Σ_ij (Q⁻¹M)_ij (Q⁻¹P)_ji
    let second = b.component_mul(&a.transpose()).sum();
    sys.trace_inverse_precision() - 2.0 * first + second
}

/// Closed-form posterior for a linear system.
///
/// The mean is `Q⁻¹ΦᵀWy`, the residual variance `σ̂² = ‖y−ŷ‖²/‖Z‖_F²`
/// and the scale `R = ((ν−2)/ν) σ̂² Q⁻¹`, so the covariance is `σ̂²Q⁻¹`.
///
/// `W` only fixes the noise structure; its overall scale is absorbed by
/// `σ²`. The degrees of freedom `ν = ‖Z‖_F²` are therefore evaluated with
/// `W` normalised to unit mean diagonal, which makes `ν` invariant to
/// rescaling `W` and gives `ν = n − d` for ordinary least squares.
///
/// For `ν ≤ 2` the posterior is returned flagged heavy-tailed with scale
/// `σ̂²Q⁻¹`; covariance queries on it fail.
pub fn fit_posterior(sys: &LinearSystem) -> Result<PosteriorT> {
    let solver = LinearSolver::new(sys)?;
    fit_with_solver(sys, &solver)
}

pub(crate) fn fit_with_solver(sys: &LinearSystem, solver: &LinearSolver) -> Result<PosteriorT> {
    let y = sys.observations();
    let mean = solver.mean_for(y);
    let fitted = sys.design() * &mean;
    let rss = (y - fitted).norm_squared();
    let z_norm2 = residual_trace(sys, solver);
    let gauge = sys.precision().trace() / sys.n() as f64;
    let dof = z_norm2 * gauge;
    if !(dof > MIN_DOF) {
        return Err(Error::NonPositiveDof { dof });
    }
    let sigma2_hat = rss / z_norm2;
    let factor = if dof > 2.0 { (dof - 2.0) / dof * sigma2_hat } else { sigma2_hat };
    let mut scale = solver.q_inverse() * factor;
    scale = (&scale + scale.transpose()) * 0.5;
    Ok(PosteriorT {
        mean,
        dof,
        sigma2_hat,
        scale,
        q_factor: Some(solver.q_factor()),
        condition: Some(solver.condition()),
    })
}

fn require_q(fit: &PosteriorT) -> Result<&DMatrix<f64>> {
    fit.q_factor().ok_or_else(|| Error::InvalidInput("posterior was not produced by a fit".into()))
}

fn q_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let y = l.solve_lower_triangular(b).expect("Q factor has a positive diagonal");
    l.transpose().solve_upper_triangular(&y).expect("Q factor has a positive diagonal")
}

fn check_pair(sys: &LinearSystem, fit: &PosteriorT) -> Result<()> {
    if fit.dim() != sys.d() {
        return Err(Error::Dimension(format!("posterior dimension {} for {} coefficients", fit.dim(), sys.d())));
    }
    Ok(())
}

/// The smoother matrix `H = ΦQ⁻¹ΦᵀW`, mapping observations to predictions.
pub fn smoother_matrix(sys: &LinearSystem, fit: &PosteriorT) -> Result<DMatrix<f64>> {
    check_pair(sys, fit)?;
    let l = require_q(fit)?;
    let phi = sys.design();
    let phi_t_w = sys.apply_precision_mat(phi).transpose();
    Ok(phi * q_solve(l, &phi_t_w))
}

/// The explicit residual factor `Z = (I−H)W^{-1/2}` (n×n).
pub fn residual_factor(sys: &LinearSystem, fit: &PosteriorT) -> Result<DMatrix<f64>> {
    let h = smoother_matrix(sys, fit)?;
    let n = sys.n();
    Ok((DMatrix::identity(n, n) - h) * sys.inverse_sqrt_precision())
}

/// Diagonal of `ZZᵀ = (I−H)W⁻¹(I−H)ᵀ` in O(nd²).
pub fn residual_cov_diag(sys: &LinearSystem, fit: &PosteriorT) -> Result<DVector<f64>> {
    check_pair(sys, fit)?;
    let l = require_q(fit)?;
    let phi = sys.design();
    let n = sys.n();
    // G = ΦQ⁻¹ (n×d); ΦQ⁻¹Φᵀ has diagonal g_i·φ_i and ΦQ⁻¹ΦᵀWΦQ⁻¹Φᵀ has g_i M g_iᵀ.
    let g = q_solve(l, &phi.transpose()).transpose();
    let wphi = sys.apply_precision_mat(phi);
    let m = phi.transpose() * wphi;
    let gm = &g * m;
    let winv = sys.inverse_precision_diag();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let gi = g.row(i);
        let hw = gi.dot(&phi.row(i));
        let hwh = gm.row(i).dot(&gi);
        out[i] = winv[i] - 2.0 * hw + hwh;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::system::Precision;

    fn constant_model() -> LinearSystem {
        LinearSystem::ordinary(DMatrix::from_element(5, 1, 1.0), DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]))
            .unwrap()
    }

    #[test]
    fn constant_model_closed_form() {
        let post = fit_posterior(&constant_model()).unwrap();
        assert!((post.mean()[0] - 3.0).abs() < 1e-12);
        assert!((post.dof() - 4.0).abs() < 1e-12);
        assert!((post.sigma2_hat() - 2.5).abs() < 1e-12);
        assert!((post.covariance().unwrap()[(0, 0)] - 0.5).abs() < 1e-12);
        // R = (ν−2)/ν · σ̂² / n = 0.5 · 2.5 / 5
        assert!((post.scale()[(0, 0)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_model_smoother_is_averaging() {
        let sys = constant_model();
        let post = fit_posterior(&sys).unwrap();
        let h = smoother_matrix(&sys, &post).unwrap();
        assert!((h - DMatrix::from_element(5, 5, 0.2)).amax() < 1e-14);
    }

    #[test]
    fn noiseless_data_is_interpolated() {
        let phi = DMatrix::from_fn(12, 3, |i, j| ((i + 1) as f64).powi(j as i32) / 10.0);
        let c = DVector::from_vec(vec![0.5, -1.25, 2.0]);
        let y = &phi * &c;
        let post = fit_posterior(&LinearSystem::ordinary(phi, y).unwrap()).unwrap();
        assert!((post.mean() - c).amax() < 1e-10);
        assert!(post.sigma2_hat() <= 1e-20);
    }

    #[test]
    fn singular_q_is_reported() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let sys = LinearSystem::ordinary(phi, DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(fit_posterior(&sys), Err(Error::Singular { .. })));
    }

    #[test]
    fn square_system_has_no_dof() {
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let sys = LinearSystem::ordinary(phi, DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!(matches!(fit_posterior(&sys), Err(Error::NonPositiveDof { .. })));
    }

    #[test]
    fn small_dof_is_flagged_heavy_tailed() {
        let phi = DMatrix::from_element(3, 1, 1.0);
        let sys = LinearSystem::ordinary(phi, DVector::from_vec(vec![1.0, 2.0, 4.0])).unwrap();
        let post = fit_posterior(&sys).unwrap();
        assert!((post.dof() - 2.0).abs() < 1e-12);
        assert!(post.is_heavy_tailed());
        assert!(matches!(post.covariance(), Err(Error::CovarianceUndefined { .. })));
        assert!(post.scale()[(0, 0)] > 0.0);
    }

    #[test]
    fn regularizer_shrinks_effective_dof() {
        // Diagonal case: tr(H) = Σ s²/(s²+λ).
        let s = [3.0, 2.0, 1.0];
        let lam = [0.5, 1.0, 2.0];
        let mut phi = DMatrix::zeros(6, 3);
        for j in 0..3 {
            phi[(j, j)] = s[j];
        }
        let y = DVector::from_vec(vec![1.0, -1.0, 0.5, 0.2, 0.1, -0.3]);
        let sys =
            LinearSystem::new(phi, Precision::identity(6), DMatrix::from_diagonal(&DVector::from_row_slice(&lam)), y)
                .unwrap();
        let post = fit_posterior(&sys).unwrap();
        let h = smoother_matrix(&sys, &post).unwrap();
        let expected: f64 = s.iter().zip(lam).map(|(s, l)| s * s / (s * s + l)).sum();
        assert!((h.trace() - expected).abs() < 1e-12);
        assert!(h.trace() < 3.0);
    }

    #[test]
    fn record_roundtrip() {
        let post = fit_posterior(&constant_model()).unwrap();
        let json = serde_json::to_string(&post.to_record()).unwrap();
        let back = PosteriorT::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.mean(), post.mean());
        assert_eq!(back.scale(), post.scale());
        assert_eq!(back.dof(), post.dof());
    }
}
