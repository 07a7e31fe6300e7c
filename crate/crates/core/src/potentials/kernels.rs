use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::Matrix3;

use super::PotentialError;
use crate::geometry::Point;
use crate::localizers::LocalizingFunction;
use crate::pde_model::CoefficientField;

/// Scalar kernel integrals of one source region seen from one target:
/// ∂ₖ∂ⱼP_Δ (symmetric, order xx yy zz xy xz yz), ∂ⱼP_Δ, and P_Δ.
pub type Moments = [f64; 10];

pub const D2_RANGE: Range<usize> = 0..6;
pub const D1_RANGE: Range<usize> = 6..9;
pub const P_SLOT: usize = 9;
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

pub fn sym_index(k: usize, j: usize) -> usize {
    match (k.min(j), k.max(j)) {
        (a, b) if a == b => a,
        (0, 1) => 3,
        (0, 2) => 4,
        _ => 5,
    }
}

const FOUR_PI: f64 = 4.0 * PI;

/// Pointwise evaluators of the parametrix and derived kernels for one coefficient
/// field and one localizing function.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub field: CoefficientField,
    pub chi: LocalizingFunction,
}

impl KernelSet {
    pub fn new(field: CoefficientField, chi: LocalizingFunction) -> Self {
        Self { field, chi }
    }

    /// Radius beyond which every kernel vanishes (`None` for χ ≡ 1).
    pub fn reach(&self) -> Option<f64> {
        self.chi.integration_reach()
    }

    /// Kernel values at z = x − y ≠ 0 in [`Moments`] layout.
    pub fn point_moments(&self, z: &Point) -> Moments {
        let r2 = z.norm_squared();
        let r = r2.sqrt();
        let [c, c1, c2] = self.chi.derivatives(r);
        let mut m = [0.0; 10];
        if c == 0.0 && c1 == 0.0 && c2 == 0.0 {
            return m;
        }
        let iso = -(c1 * r - c) / (FOUR_PI * r * r2);
        let radial = -(c2 / r - 3.0 * c1 / r2 + 3.0 * c / (r * r2)) / (FOUR_PI * r2);
        for (s, &(k, j)) in SYM_PAIRS.iter().enumerate() {
            m[s] = radial * z[k] * z[j] + if k == j { iso } else { 0.0 };
        }
        for j in 0..3 {
            m[6 + j] = iso * z[j];
        }
        m[P_SLOT] = -c / (FOUR_PI * r);
        m
    }

    /// Closed-form radial antiderivative along the unit direction `eta`:
    /// ∫₀^ρ K(sη) s² ds, with the strongly singular part taken as a principal value
    /// (valid after integration over all directions). `rho_ref` only shifts the
    /// logarithm by a term of zero spherical mean.
    pub fn radial_antiderivative(&self, eta: &Point, rho: f64, rho_ref: f64) -> Moments {
        let [c, c1, _] = self.chi.derivatives(rho);
        let l = (rho / rho_ref).ln() + self.chi.log_defect(rho);
        let iso = -(c - 1.0 - l) / FOUR_PI;
        let radial = -(rho * c1 - 4.0 * (c - 1.0) + 3.0 * l) / FOUR_PI;
        let mut m = [0.0; 10];
        for (s, &(k, j)) in SYM_PAIRS.iter().enumerate() {
            m[s] = radial * eta[k] * eta[j] + if k == j { iso } else { 0.0 };
        }
        let d1 = -(rho * c - 2.0 * self.chi.mass(rho)) / FOUR_PI;
        for j in 0..3 {
            m[6 + j] = d1 * eta[j];
        }
        m[P_SLOT] = -self.chi.moment(rho) / FOUR_PI;
        m
    }

    fn nonzero(z: &Point) -> Result<(), PotentialError> {
        if z.norm_squared() == 0.0 {
            Err(PotentialError::SingularPoint)
        } else {
            Ok(())
        }
    }

    /// P(z) = −χ(z)/(4π|z|)·I.
    pub fn eval_p(&self, z: &Point) -> Result<Matrix3<f64>, PotentialError> {
        Self::nonzero(z)?;
        let r = z.norm();
        Ok(Matrix3::identity() * (-self.chi.value(r) / (FOUR_PI * r)))
    }

    /// ∇P_Δ(z).
    pub fn eval_grad_p(&self, z: &Point) -> Result<Point, PotentialError> {
        Self::nonzero(z)?;
        let m = self.point_moments(z);
        Ok(Point::new(m[6], m[7], m[8]))
    }

    /// ∂ₖ∂ⱼP_Δ(z).
    pub fn eval_hess_p(&self, z: &Point) -> Result<Matrix3<f64>, PotentialError> {
        Self::nonzero(z)?;
        let m = self.point_moments(z);
        Ok(Matrix3::from_fn(|k, j| m[sym_index(k, j)]))
    }

    /// T(x, n, ∂ₓ)P(x−y), entry (p, r) = a^{pr}_{kj}(x) n_k ∂ⱼP_Δ(x−y).
    pub fn eval_traction(&self, x: &Point, n: &Point, y: &Point) -> Result<Matrix3<f64>, PotentialError> {
        let d1 = self.eval_grad_p(&(x - y))?;
        let a = self.field.tensor((*x).into())?;
        Ok(Matrix3::from_fn(|p, r| {
            let mut s = 0.0;
            for k in 0..3 {
                for j in 0..3 {
                    s += a[p][r][k][j] * n[k] * d1[j];
                }
            }
            s
        }))
    }

    /// A(x, ∂ₓ)P(x−y) away from x = y, entry (p, r).
    pub fn eval_ap(&self, x: &Point, y: &Point) -> Result<Matrix3<f64>, PotentialError> {
        let z = x - y;
        Self::nonzero(&z)?;
        let m = self.point_moments(&z);
        let a = self.field.tensor((*x).into())?;
        let g = self.field.divergence((*x).into())?;
        Ok(Matrix3::from_fn(|p, r| {
            let mut s = 0.0;
            for k in 0..3 {
                for j in 0..3 {
                    s += a[p][r][k][j] * m[sym_index(k, j)];
                }
            }
            s + (0..3).map(|j| g[p][r][j] * m[6 + j]).sum::<f64>()
        }))
    }

    /// −a^{pr}_{kj}(w)/(4π) ∂ₖ∂ⱼ|x−y|⁻¹ with the coefficient frozen at w.
    pub fn eval_frozen(&self, x: &Point, y: &Point, w: &Point) -> Result<Matrix3<f64>, PotentialError> {
        let z = x - y;
        Self::nonzero(&z)?;
        let r = z.norm();
        let a = self.field.tensor((*w).into())?;
        let hess = Matrix3::from_fn(|k, j| (3.0 * z[k] * z[j] / (r * r) - if k == j { 1.0 } else { 0.0 }) / r.powi(3));
        Ok(Matrix3::from_fn(|p, r| {
            let mut s = 0.0;
            for k in 0..3 {
                for j in 0..3 {
                    s += a[p][r][k][j] * hess[(k, j)];
                }
            }
            -s / FOUR_PI
        }))
    }

    /// R(x, y) = A(x,∂ₓ)P(x−y) minus the singular kernel frozen at y.
    pub fn eval_r(&self, x: &Point, y: &Point) -> Result<Matrix3<f64>, PotentialError> {
        Ok(self.eval_ap(x, y)? - self.eval_frozen(x, y, y)?)
    }

    /// R⁽¹⁾(x, y) = A(x,∂ₓ)P(x−y) minus the singular kernel frozen at x.
    pub fn eval_r1(&self, x: &Point, y: &Point) -> Result<Matrix3<f64>, PotentialError> {
        Ok(self.eval_ap(x, y)? - self.eval_frozen(x, y, x)?)
    }

    /// R_Δ(z) = ΔP_Δ(z) = −χ″(|z|)/(4π|z|) for z ≠ 0.
    pub fn eval_r_delta(&self, z: &Point) -> Result<f64, PotentialError> {
        Self::nonzero(z)?;
        let r = z.norm();
        Ok(-self.chi.d2(r) / (FOUR_PI * r))
    }
}
