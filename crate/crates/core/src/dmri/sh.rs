use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};

/// Number of even-order real harmonics up to order `order`.
pub fn sh_count(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Column of `(l, m)` in [`sh_basis`]; `l` even, `|m| ≤ l`.
pub fn sh_index(l: usize, m: i64) -> usize {
    (((l * l + l) / 2) as i64 + m) as usize
}

/// Degree `l` of every column, in basis order.
pub fn sh_degrees(order: usize) -> Vec<usize> {
    (0..=order).step_by(2).flat_map(|l| std::iter::repeat_n(l, 2 * l + 1)).collect()
}

/// Real, antipodally symmetric spherical harmonics up to even `order`,
/// orthonormal on the unit sphere. Rows follow `directions`, columns
/// `(l, m)` with `l = 0, 2, …, order` and `m = −l..=l`.
///
/// `m > 0` columns use `√2 P̄ₗᵐ cos mφ`, `m < 0` columns `√2 P̄ₗ|m| sin |m|φ`,
/// with no Condon–Shortley phase.
pub fn sh_basis(directions: &[Vector3<f64>], order: usize) -> Result<DMatrix<f64>> {
    if order % 2 == 1 {
        return Err(Error::InvalidInput(format!("spherical harmonic order must be even, got {order}")));
    }
    let ncoef = sh_count(order);
    let mut out = DMatrix::zeros(directions.len(), ncoef);
    let mut plm = vec![0.0; (order + 1) * (order + 1)];
    for (row, g) in directions.iter().enumerate() {
        let norm = g.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidInput(format!("direction {row} has zero or non-finite length")));
        }
        let x = (g.z / norm).clamp(-1.0, 1.0);
        let phi = g.y.atan2(g.x);
        legendre_normalized(order, x, &mut plm);
        for l in (0..=order).step_by(2) {
            let base = (l * l + l) / 2;
            out[(row, base)] = plm[l * (order + 1)];
            for m in 1..=l {
                let p = std::f64::consts::SQRT_2 * plm[l * (order + 1) + m];
                let mf = m as f64 * phi;
                out[(row, base + m)] = p * mf.cos();
                out[(row, base - m)] = p * mf.sin();
            }
        }
    }
    Ok(out)
}

/// Fully normalised associated Legendre values `P̄ₗᵐ(x)` (including the
/// `1/√(4π)` sphere factor) for `0 ≤ m ≤ l ≤ order`, stored at `l·(order+1)+m`.
fn legendre_normalized(order: usize, x: f64, out: &mut [f64]) {
    let stride = order + 1;
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=order {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        out[m * stride + m] = pmm;
        if m == order {
            break;
        }
        let mut prev2 = pmm;
        let mut prev1 = x * ((2 * m + 3) as f64).sqrt() * pmm;
        out[(m + 1) * stride + m] = prev1;
        for l in (m + 2)..=order {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let cur = a * (x * prev1 - b * prev2);
            out[l * stride + m] = cur;
            prev2 = prev1;
            prev1 = cur;
        }
    }
}
