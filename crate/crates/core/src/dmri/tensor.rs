use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric 3×3 diffusion tensor in mm²/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTensor {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

impl DiffusionTensor {
    /// Components in the order `xx, yy, zz, xy, xz, yz`.
    pub fn from_components(c: &[f64]) -> Result<Self> {
        if c.len() != 6 {
            return Err(Error::Dimension(format!("tensor needs 6 components, got {}", c.len())));
        }
        Ok(DiffusionTensor { xx: c[0], yy: c[1], zz: c[2], xy: c[3], xz: c[4], yz: c[5] })
    }

    pub fn components(&self) -> [f64; 6] {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
    }

    pub fn diagonal(a: f64, b: f64, c: f64) -> Self {
        DiffusionTensor { xx: a, yy: b, zz: c, xy: 0.0, xz: 0.0, yz: 0.0 }
    }

    pub fn isotropic(d: f64) -> Self {
        Self::diagonal(d, d, d)
    }

    /// Symmetrised part of `m`.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        DiffusionTensor {
            xx: m[(0, 0)],
            yy: m[(1, 1)],
            zz: m[(2, 2)],
            xy: 0.5 * (m[(0, 1)] + m[(1, 0)]),
            xz: 0.5 * (m[(0, 2)] + m[(2, 0)]),
            yz: 0.5 * (m[(1, 2)] + m[(2, 1)]),
        }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.xx, self.xy, self.xz, self.xy, self.yy, self.yz, self.xz, self.yz, self.zz)
    }

    /// Cylindrically symmetric tensor with principal axis `axis` and the
    /// requested mean diffusivity and fractional anisotropy.
    ///
    /// With eigenvalues `MD(1+2k)` and `MD(1−k)` (twice), FA works out to
    /// `3k/√(3+6k²)`, so `k = FA/√(3−2FA²)`.
    pub fn axially_symmetric(md: f64, fa: f64, axis: &Vector3<f64>) -> Result<Self> {
        if !(md > 0.0) || !(0.0..1.0).contains(&fa) {
            return Err(Error::InvalidInput(format!("need md > 0 and 0 <= fa < 1, got md {md}, fa {fa}")));
        }
        let (par, perp) = axial_eigenvalues(md, fa);
        let u = axis.normalize();
        let m = Matrix3::identity() * perp + u * u.transpose() * (par - perp);
        Ok(Self::from_matrix(&m))
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn mean_diffusivity(&self) -> f64 {
        self.trace() / 3.0
    }

    /// `gᵀDg`.
    pub fn quadratic_form(&self, g: &Vector3<f64>) -> f64 {
        g.dot(&(self.to_matrix() * g))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let e = self.to_matrix().symmetric_eigenvalues();
        let mut v = [e[0], e[1], e[2]];
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn is_positive_definite(&self) -> bool {
        self.to_matrix().cholesky().is_some()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let c = self.components().map(|x| alpha * x);
        DiffusionTensor { xx: c[0], yy: c[1], zz: c[2], xy: c[3], xz: c[4], yz: c[5] }
    }

    pub fn rotated(&self, rot: &Rotation3<f64>) -> Self {
        let r = rot.matrix();
        Self::from_matrix(&(r * self.to_matrix() * r.transpose()))
    }
}

/// `(λ∥, λ⊥)` of the axially symmetric tensor with the given MD and FA.
pub(crate) fn axial_eigenvalues(md: f64, fa: f64) -> (f64, f64) {
    let k = fa / (3.0 - 2.0 * fa * fa).sqrt();
    (md * (1.0 + 2.0 * k), md * (1.0 - k))
}

/// `√(½(3 − tr(D)²/tr(D²)))`, clamped to `[0, 1]`; zero for the zero tensor.
pub fn fa_of_tensor(d: &DiffusionTensor) -> f64 {
    fa_squared_unclamped(d).clamp(0.0, 1.0).sqrt()
}

/// `½(3 − tr(D)²/tr(D²))`, which leaves `[0, 1]` for indefinite tensors.
pub(crate) fn fa_squared_unclamped(d: &DiffusionTensor) -> f64 {
    let tr = d.trace();
    let tr2 = d.xx * d.xx + d.yy * d.yy + d.zz * d.zz + 2.0 * (d.xy * d.xy + d.xz * d.xz + d.yz * d.yz);
    if tr2 <= 0.0 {
        return 0.0;
    }
    0.5 * (3.0 - tr * tr / tr2)
}

/// Return-to-origin probability `det(4π t_d D)^{-1/2}` of a Gaussian
/// displacement profile, in mm⁻³ for `D` in mm²/s and `t_d` in seconds.
pub fn rtop_of_tensor(d: &DiffusionTensor, diffusion_time: f64) -> Result<f64> {
    if !(diffusion_time > 0.0) {
        return Err(Error::InvalidInput(format!("diffusion time must be positive, got {diffusion_time}")));
    }
    if !d.is_positive_definite() {
        return Err(Error::RtopUndefined);
    }
    let det = d.to_matrix().determinant();
    if !(det > 0.0) {
        return Err(Error::RtopUndefined);
    }
    let c = 4.0 * PI * diffusion_time;
    Ok(1.0 / (c * c * c * det).sqrt())
}

/// `R D Rᵀ` for the rotation by `angle_deg` about the y axis.
pub fn rotate_about_y(d: &DiffusionTensor, angle_deg: f64) -> DiffusionTensor {
    let a = angle_deg.to_radians();
    let (s, c) = a.sin_cos();
    let r = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
    DiffusionTensor::from_matrix(&(r * d.to_matrix() * r.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fa_from_eigs(par: f64, perp: f64) -> f64 {
        fa_of_tensor(&DiffusionTensor::diagonal(par, perp, perp))
    }

    /// Bisection on λ⊥ with λ∥ = 3·MD − 2λ⊥ until FA matches.
    fn root_find_axial(md: f64, fa: f64) -> (f64, f64) {
        let (mut lo, mut hi) = (1e-12, md);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fa_from_eigs(3.0 * md - 2.0 * mid, mid) > fa {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let perp = 0.5 * (lo + hi);
        (3.0 * md - 2.0 * perp, perp)
    }

    #[test]
    fn fa_limits() {
        assert_eq!(fa_of_tensor(&DiffusionTensor::isotropic(1e-3)), 0.0);
        assert!((fa_of_tensor(&DiffusionTensor::diagonal(1.0, 0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert_eq!(fa_of_tensor(&DiffusionTensor::isotropic(0.0)), 0.0);
    }

    #[test]
    fn axial_construction_matches_root_find() {
        for fa in [0.2, 0.5, 0.8] {
            let d = DiffusionTensor::axially_symmetric(0.7e-3, fa, &Vector3::x()).unwrap();
            let (par, perp) = root_find_axial(0.7e-3, fa);
            let e = d.eigenvalues();
            assert!((e[2] - par).abs() < 1e-15, "{fa}");
            assert!((e[0] - perp).abs() < 1e-15, "{fa}");
            assert!((fa_of_tensor(&d) - fa).abs() < 1e-10);
            assert!((d.mean_diffusivity() - 0.7e-3).abs() < 1e-16);
        }
    }

    #[test]
    fn rtop_isotropic() {
        let d = 1e-3;
        let t = 0.0175;
        let r = rtop_of_tensor(&DiffusionTensor::isotropic(d), t).unwrap();
        let expected = (4.0 * PI * t * d).powf(-1.5);
        assert!((r / expected - 1.0).abs() < 1e-12);
        assert!(matches!(rtop_of_tensor(&DiffusionTensor::diagonal(1e-3, -1e-4, 1e-3), t), Err(Error::RtopUndefined)));
    }

    #[test]
    fn rotation_about_y() {
        let d = DiffusionTensor::diagonal(1.0, 2.0, 3.0);
        assert_eq!(rotate_about_y(&d, 0.0), d);
        let r = rotate_about_y(&d, 90.0);
        let expected = DiffusionTensor::diagonal(3.0, 2.0, 1.0);
        for (a, b) in r.components().iter().zip(expected.components()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn arb_tensor() -> impl Strategy<Value = DiffusionTensor> {
        (0.1f64..3.0, 0.1f64..3.0, 0.1f64..3.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(
            |(a, b, c, x, y, z)| {
                let m = Matrix3::new(a, x, y, 0.0, b, z, 0.0, 0.0, c);
                DiffusionTensor::from_matrix(&(m.transpose() * m * 1e-3))
            },
        )
    }

    proptest! {
        #[test]
        fn fa_and_rtop_are_rotation_invariant(d in arb_tensor(), r in -PI..PI, p in -PI..PI, y in -PI..PI) {
            let rot = Rotation3::from_euler_angles(r, p, y);
            let dr = d.rotated(&rot);
            prop_assert!((fa_of_tensor(&d) - fa_of_tensor(&dr)).abs() < 1e-10);
            let a = rtop_of_tensor(&d, 0.02).unwrap();
            let b = rtop_of_tensor(&dr, 0.02).unwrap();
            prop_assert!((a / b - 1.0).abs() < 1e-10);
        }

        #[test]
        fn fa_is_scale_invariant_and_rtop_homogeneous(d in arb_tensor(), alpha in 0.1f64..10.0) {
            prop_assert!((fa_of_tensor(&d) - fa_of_tensor(&d.scaled(alpha))).abs() < 1e-10);
            let a = rtop_of_tensor(&d, 0.02).unwrap();
            let b = rtop_of_tensor(&d.scaled(alpha), 0.02).unwrap();
            prop_assert!((b / a - alpha.powf(-1.5)).abs() < 1e-10 * alpha.powf(-1.5));
        }

        #[test]
        fn rotation_preserves_eigenvalues(d in arb_tensor(), angle in -360.0f64..360.0) {
            let e0 = d.eigenvalues();
            let e1 = rotate_about_y(&d, angle).eigenvalues();
            for i in 0..3 {
                prop_assert!((e0[i] - e1[i]).abs() < 1e-12 * e0[2].max(1e-3));
            }
        }
    }
}
