use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};

use super::scheme::{AcquisitionScheme, SHELL_TOLERANCE};
use super::sh::{sh_basis, sh_count, sh_degrees};
use super::sphere::{icosphere, SphereGrid};
use super::tensor::DiffusionTensor;
use crate::bayes::{fit_posterior, LinearSystem, PosteriorT, Precision};
use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 2..=l {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Rotational harmonic coefficients of a single-fibre kernel, one per even degree.
///
/// With `r_l = 2π∫R(t)P_l(t)dt`, convolving a fODF with coefficients `c_lm`
/// gives the signal coefficients `r_l c_lm`; a unit-mass delta fODF maps to
/// the kernel itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub coefficients: Vec<f64>,
}

impl Response {
    pub fn order(&self) -> usize {
        2 * (self.coefficients.len() - 1)
    }

    pub fn scaled(&self, s0: f64) -> Self {
        Response { coefficients: self.coefficients.iter().map(|r| r * s0).collect() }
    }

    /// Kernel value `R(cos θ)` at angle θ from the fibre.
    pub fn kernel(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let l = 2 * i;
                r * (2 * l + 1) as f64 / (4.0 * PI) * legendre(l, t)
            })
            .sum()
    }
}

/// Response of an axially symmetric tensor at `bval` with unit `S₀`, by
/// 128-node Gauss–Legendre quadrature.
pub fn response_from_tensor(d: &DiffusionTensor, bval: f64, order: usize) -> Result<Response> {
    response_with_nodes(d, bval, order, 128)
}

pub(crate) fn response_with_nodes(d: &DiffusionTensor, bval: f64, order: usize, nodes: usize) -> Result<Response> {
    if order % 2 == 1 {
        return Err(Error::InvalidInput(format!("response order must be even, got {order}")));
    }
    let e = d.eigenvalues();
    let tol = 1e-6 * e[2].abs().max(e[0].abs());
    let (axial, radial) = if (e[1] - e[2]).abs() <= tol {
        (e[0], e[2])
    } else if (e[0] - e[1]).abs() <= tol {
        (e[2], e[0])
    } else {
        return Err(Error::InvalidInput("response tensor is not axially symmetric".into()));
    };
    let (t, w) = gauss_legendre(nodes);
    let kernel: Vec<f64> = t.iter().map(|t| (-bval * (radial + (axial - radial) * t * t)).exp()).collect();
    let coefficients = (0..=order)
        .step_by(2)
        .map(|l| {
            let s: f64 = t.iter().zip(&w).zip(&kernel).map(|((t, w), k)| w * k * legendre(l, *t)).sum();
            2.0 * PI * s
        })
        .collect();
    Ok(Response { coefficients })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsdParams {
    pub order: usize,
    /// Regularisation strength, on the scale where 1 matches the common
    /// default of deconvolution software.
    pub lambda: f64,
    /// Amplitudes below `tau` times the mean initial amplitude are penalised.
    pub tau: f64,
    pub max_iter: usize,
    /// Icosphere subdivision level of the constraint grid.
    pub grid_level: usize,
}

impl Default for CsdParams {
    fn default() -> Self {
        CsdParams { order: 10, lambda: 5.0, tau: 0.1, max_iter: 50, grid_level: 4 }
    }
}

/// Precomputed deconvolution operators for one single-shell scheme.
#[derive(Debug, Clone)]
pub struct CsdModel {
    params: CsdParams,
    response: Response,
    /// `X = B diag(r_l)`.
    design: DMatrix<f64>,
    grid: SphereGrid,
    /// Basis on the hemisphere constraint grid.
    grid_basis: DMatrix<f64>,
    lambda_eff: f64,
    initial: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    initial_cols: usize,
}

impl CsdModel {
    /// `scheme` must hold a single diffusion-weighted shell.
    pub fn new(scheme: &AcquisitionScheme, response: &Response, params: CsdParams) -> Result<Self> {
        if params.order % 2 == 1 {
            return Err(Error::InvalidInput(format!("order must be even, got {}", params.order)));
        }
        if response.order() < params.order {
            return Err(Error::InvalidInput(format!(
                "response of order {} for fit of order {}",
                response.order(),
                params.order
            )));
        }
        let b = scheme.bvals();
        let first = b[0];
        if b.iter().any(|&v| v <= SHELL_TOLERANCE || (v - first).abs() > 2.0 * SHELL_TOLERANCE) {
            return Err(Error::InvalidInput("deconvolution needs a single diffusion-weighted shell".into()));
        }
        let mut design = sh_basis(&scheme.directions(), params.order)?;
        for (j, l) in sh_degrees(params.order).into_iter().enumerate() {
            let r = response.coefficients[l / 2];
            design.column_mut(j).scale_mut(r);
        }
        let grid = icosphere(params.grid_level).hemisphere();
        let grid_basis = sh_basis(&grid.vertices, params.order)?;
        let ncoef = sh_count(params.order);
        // The penalty rows are hemisphere vertices; each stands for an
        // antipodal pair, hence the hemisphere count in the normalisation.
        let lambda_eff = params.lambda * ncoef as f64 * response.coefficients[0] / (grid.len() as f64 * 362.0).sqrt();
        let initial_cols = sh_count(params.order.min(4));
        let x4 = design.columns(0, initial_cols).into_owned();
        let initial = (x4.transpose() * &x4)
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("too few directions for the initial order-4 fit".into()))?;
        Ok(CsdModel { params, response: response.clone(), design, grid, grid_basis, lambda_eff, initial, initial_cols })
    }

    pub fn params(&self) -> &CsdParams {
        &self.params
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn grid_basis(&self) -> &DMatrix<f64> {
        &self.grid_basis
    }

    pub fn lambda_eff(&self) -> f64 {
        self.lambda_eff
    }
}

/// Spherical-harmonic fODF fit with its coefficient posterior.
#[derive(Debug, Clone)]
pub struct ShFit {
    pub posterior: PosteriorT,
    pub order: usize,
    pub response: Vec<f64>,
    /// Rows of the grid basis that ended in the penalty (unscaled).
    pub constraint_matrix: DMatrix<f64>,
    pub constraint_rows: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub system: LinearSystem,
}

/// Constrained spherical deconvolution.
///
/// Starts from an order-4 least-squares fit, penalises grid directions whose
/// amplitude is at most `τ` times the mean amplitude, and re-solves
/// `(XᵀX + λ²L_cᵀL_c)c = Xᵀy` until the penalised set stops changing. The
/// final system, with the converged `L_c` held fixed, yields the posterior.
pub fn csd_fit(model: &CsdModel, signal: &[f64]) -> Result<ShFit> {
    let x = &model.design;
    if signal.len() != x.nrows() {
        return Err(Error::Dimension(format!("{} signal values for {} measurements", signal.len(), x.nrows())));
    }
    let y = DVector::from_column_slice(signal);
    let ncoef = x.ncols();
    let x4 = x.columns(0, model.initial_cols);
    let c4 = model.initial.solve(&(x4.transpose() * &y));
    let mut coef = DVector::zeros(ncoef);
    coef.rows_mut(0, model.initial_cols).copy_from(&c4);
    let threshold = model.params.tau * coef[0] / (4.0 * PI).sqrt();
    let xtx = x.transpose() * x;
    let xty = x.transpose() * &y;
    let lam2 = model.lambda_eff * model.lambda_eff;

    let mut active: Option<Vec<usize>> = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < model.params.max_iter {
        let amps = &model.grid_basis * &coef;
        let rows: Vec<usize> = (0..amps.len()).filter(|&i| amps[i] <= threshold).collect();
        if active.as_ref() == Some(&rows) {
            converged = true;
            break;
        }
        iterations += 1;
        let lc = model.grid_basis.select_rows(&rows);
        let q = &xtx + lc.transpose() * &lc * lam2;
        let chol = q.cholesky().ok_or(Error::Singular { condition: f64::INFINITY })?;
        coef = chol.solve(&xty);
        active = Some(rows);
    }
    let rows = active.unwrap_or_default();
    let lc = model.grid_basis.select_rows(&rows);
    let regularizer = lc.transpose() * &lc * lam2;
    let system = LinearSystem::new(x.clone(), Precision::identity(x.nrows()), regularizer, y)?;
    let posterior = fit_posterior(&system)?;
    Ok(ShFit {
        posterior,
        order: model.params.order,
        response: model.response.coefficients.clone(),
        constraint_matrix: lc,
        constraint_rows: rows,
        iterations,
        converged,
        system,
    })
}

/// Signal of fODF coefficients `c` through the model, for directions `dirs`.
pub fn convolve(response: &Response, order: usize, coef: &DVector<f64>, dirs: &[Vector3<f64>]) -> Result<DVector<f64>> {
    let mut b = sh_basis(dirs, order)?;
    for (j, l) in sh_degrees(order).into_iter().enumerate() {
        b.column_mut(j).scale_mut(response.coefficients[l / 2]);
    }
    Ok(b * coef)
}
