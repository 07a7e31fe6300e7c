//! Symbol-level tools at a frozen boundary point: the symbol Ã(ξ′,τ) in a
//! boundary-local frame, its factorization Ã = Ã⁻Ã⁺ into first-order matrix
//! polynomials, the Cauchy-type projections Π±/Π′, the Šapiro-Lopatinskii
//! matrix e(ξ′) with its homotopy, and an FFT solver for the half-space model
//! problem.
//!
//! Half-plane convention: Ã⁺ = (τ + i|ξ′|)·I for the Laplacian, so det Ã⁺ has its
//! roots in the lower half-plane and det Ã⁻ in the upper one.

mod contour;
mod factor;
mod halfspace;
mod shapiro;

pub use contour::{pi_minus, pi_plus, pi_prime, Circle, Contour, RationalSymbol, CONTOUR_NODES};
pub use factor::{factorize, SymbolFactorization};
pub use halfspace::{gaussian_bump, halfspace_solve, HalfspaceResult};
pub use shapiro::{compute_e, det_e_product_formula, sl_check, sl_homotopy, EParts, SLReport};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::ExprError;
use crate::pde_model::{beta_of_tensor, CoefficientField, Tensor4, ZERO_TENSOR};

pub type CMatrix3 = Matrix3<Complex64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WienerHopfError {
    #[error("factorization failed: relative residual {residual:.3e}")]
    FactorizationFailure { residual: f64 },
    #[error("det Ã has a root {root} on or near the real axis; the symbol is not elliptic")]
    EllipticityViolation { root: Complex64 },
    #[error("no circle separates the enclosed poles from the excluded ones")]
    ContourFailure,
    #[error("the frame is not orthonormal (deviation {deviation:.3e})")]
    BadFrame { deviation: f64 },
    #[error("ξ′ must be non-zero")]
    ZeroFrequency,
    #[error("grid size {n} must be a power of two and at least 16")]
    BadGrid { n: usize },
    #[error("field has {got} samples, expected {expected}")]
    FieldLength { got: usize, expected: usize },
    #[error(transparent)]
    Expression(#[from] ExprError),
}

pub(crate) fn complex(m: &Matrix3<f64>) -> CMatrix3 {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Orthonormal boundary frame: tangents t₁, t₂ and normal n (third axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub t1: Vector3<f64>,
    pub t2: Vector3<f64>,
    pub n: Vector3<f64>,
}

impl LocalFrame {
    pub fn new(t1: Vector3<f64>, t2: Vector3<f64>, n: Vector3<f64>) -> Result<Self, WienerHopfError> {
        let q = Matrix3::from_rows(&[t1.transpose(), t2.transpose(), n.transpose()]);
        let deviation = (q * q.transpose() - Matrix3::identity()).abs().max();
        if deviation > 1e-10 {
            return Err(WienerHopfError::BadFrame { deviation });
        }
        Ok(Self { t1, t2, n })
    }

    /// Some right-handed frame with the given normal.
    pub fn from_normal(n: Vector3<f64>) -> Self {
        let n = n.normalize();
        let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let t1 = helper.cross(&n).normalize();
        let t2 = n.cross(&t1);
        Self { t1, t2, n }
    }

    /// Global covector of local frequency (ξ₁, ξ₂, ξ₃).
    pub fn to_global(&self, xi: [f64; 3]) -> Vector3<f64> {
        xi[0] * self.t1 + xi[1] * self.t2 + xi[2] * self.n
    }
}

/// Ã(ξ′,τ) = M₂τ² + M₁τ + M₀ at one tangential frequency ξ′.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixPolynomial {
    pub m2: Matrix3<f64>,
    pub m1: Matrix3<f64>,
    pub m0: Matrix3<f64>,
    pub xi_prime: [f64; 2],
}

impl MatrixPolynomial {
    pub fn eval(&self, tau: Complex64) -> CMatrix3 {
        complex(&self.m2) * (tau * tau) + complex(&self.m1) * tau + complex(&self.m0)
    }

    pub fn xi_norm(&self) -> f64 {
        self.xi_prime[0].hypot(self.xi_prime[1])
    }
}

/// The principal symbol of A frozen at a boundary point, in a local frame.
/// Only the spatial indices are rotated; vector components stay global.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSymbol {
    pub tensor: Tensor4,
    pub frame: LocalFrame,
}

fn bilinear(t: &Tensor4, u: &Vector3<f64>, v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|p, q| {
        let mut s = 0.0;
        for k in 0..3 {
            for j in 0..3 {
                s += t[p][q][k][j] * u[k] * v[j];
            }
        }
        s
    })
}

impl FrozenSymbol {
    pub fn new(field: &CoefficientField, y: [f64; 3], frame: LocalFrame) -> Result<Self, WienerHopfError> {
        Ok(Self { tensor: field.tensor(y)?, frame })
    }

    pub fn from_tensor(tensor: Tensor4, frame: LocalFrame) -> Self {
        Self { tensor, frame }
    }

    /// Ã(ξ) for a real local frequency.
    pub fn symbol(&self, xi: [f64; 3]) -> Matrix3<f64> {
        let g = self.frame.to_global(xi);
        bilinear(&self.tensor, &g, &g)
    }

    pub fn beta(&self) -> Matrix3<f64> {
        beta_of_tensor(&self.tensor)
    }

    /// Coefficients in τ = ξ₃ at fixed ξ′.
    pub fn at(&self, xi_prime: [f64; 2]) -> MatrixPolynomial {
        let n = self.frame.n;
        let w = self.frame.to_global([xi_prime[0], xi_prime[1], 0.0]);
        MatrixPolynomial {
            m2: bilinear(&self.tensor, &n, &n),
            m1: bilinear(&self.tensor, &w, &n) + bilinear(&self.tensor, &n, &w),
            m0: bilinear(&self.tensor, &w, &w),
            xi_prime,
        }
    }

    /// Ã_t(ξ) = (1−t)|ξ|²β̃ + tÃ(ξ), again a symbol of a second-order system.
    pub fn homotopy(&self, t: f64) -> Self {
        let beta = self.beta();
        let mut tensor = ZERO_TENSOR;
        for p in 0..3 {
            for q in 0..3 {
                for k in 0..3 {
                    for j in 0..3 {
                        let identity = if k == j { beta[(p, q)] } else { 0.0 };
                        tensor[p][q][k][j] = (1.0 - t) * identity + t * self.tensor[p][q][k][j];
                    }
                }
            }
        }
        Self { tensor, frame: self.frame }
    }
}

/// Frozen symbol of `field` at `y` with normal `n`, as a polynomial in ξ₃ at ξ′.
pub fn freeze_symbol(
    field: &CoefficientField,
    y: [f64; 3],
    frame: LocalFrame,
    xi_prime: [f64; 2],
) -> Result<MatrixPolynomial, WienerHopfError> {
    Ok(FrozenSymbol::new(field, y, frame)?.at(xi_prime))
}

/// Random strongly elliptic anisotropic tensor from a random SPD 6×6 Voigt matrix
/// (a^{pq}_{kj} = c_{pkqj}), deterministic in `seed`.
pub fn random_spd_tensor(seed: u64) -> Tensor4 {
    const VOIGT: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = nalgebra::SMatrix::<f64, 6, 6>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let c = b * b.transpose() + nalgebra::SMatrix::<f64, 6, 6>::identity() * 0.5;
    let mut t = ZERO_TENSOR;
    for p in 0..3 {
        for q in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    t[p][q][k][j] = c[(VOIGT[p][k], VOIGT[q][j])];
                }
            }
        }
    }
    t
}
