//! Factorization Ã(ξ′,τ) = Ã⁻(ξ′,τ)Ã⁺(ξ′,τ) through a right solvent of the
//! quadratic matrix polynomial.
//!
//! With S a right solvent (M₂S² + M₁S + M₀ = 0) whose spectrum is the lower
//! half-plane roots, Ã = (M₂τ + M₂S + M₁)(τ − S). The gauge G = Lᵀ, M₂ = LLᵀ,
//! gives Ã⁺ = G(τ − S) and Ã⁻ = Lτ + (M₂S + M₁)G⁻¹.

use nalgebra::{SMatrix, Vector2};
use num_complex::Complex64;

use super::{complex, CMatrix3, Contour, MatrixPolynomial, WienerHopfError, CONTOUR_NODES};

type CMatrix6 = SMatrix<Complex64, 6, 6>;

/// Roots closer than this (relative to the spectral scale) to the real axis
/// count as an ellipticity violation.
const REAL_AXIS_TOL: f64 = 1e-10;
const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFactorization {
    pub poly: MatrixPolynomial,
    /// Ã⁺(τ) = plus_lead·τ + plus_const.
    pub plus_lead: CMatrix3,
    pub plus_const: CMatrix3,
    /// Ã⁻(τ) = minus_lead·τ + minus_const.
    pub minus_lead: CMatrix3,
    pub minus_const: CMatrix3,
    /// Roots of det Ã⁺ (lower half-plane).
    pub roots_plus: [Complex64; 3],
    /// Roots of det Ã⁻ (upper half-plane).
    pub roots_minus: [Complex64; 3],
    /// τ³ coefficients of det Ã⁺ and det Ã⁻.
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    /// τ² coefficients of the adjugate of Ã⁺.
    pub c_plus: CMatrix3,
}

impl SymbolFactorization {
    pub fn plus_at(&self, tau: Complex64) -> CMatrix3 {
        self.plus_lead * tau + self.plus_const
    }

    pub fn minus_at(&self, tau: Complex64) -> CMatrix3 {
        self.minus_lead * tau + self.minus_const
    }

    /// max over the sample points of ‖Ã − Ã⁻Ã⁺‖/‖Ã‖ (Frobenius).
    pub fn reconstruction_residual(&self, taus: &[Complex64]) -> f64 {
        taus.iter()
            .map(|&t| {
                let a = self.poly.eval(t);
                (a - self.minus_at(t) * self.plus_at(t)).norm() / a.norm().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// (1/2πi)∮_{Γ⁻}[Ã⁺]⁻¹dτ, Γ⁻ around the roots of det Ã⁺.
    pub fn cofactor_contour_integral(&self, nodes: usize) -> Result<CMatrix3, WienerHopfError> {
        let contour = Contour::around(&self.roots_plus, &self.roots_minus)?;
        Ok(contour.integrate(nodes, |t| self.plus_at(t).try_inverse().unwrap_or_else(CMatrix3::zeros)))
    }

    pub fn cofactor_contour_default(&self) -> Result<CMatrix3, WienerHopfError> {
        self.cofactor_contour_integral(CONTOUR_NODES)
    }
}

pub(crate) fn adjugate(m: &CMatrix3) -> CMatrix3 {
    let minor = |r: usize, c: usize| {
        let rs: Vec<usize> = (0..3).filter(|&i| i != r).collect();
        let cs: Vec<usize> = (0..3).filter(|&i| i != c).collect();
        m[(rs[0], cs[0])] * m[(rs[1], cs[1])] - m[(rs[0], cs[1])] * m[(rs[1], cs[0])]
    };
    // adj(M)_{ij} = (−1)^{i+j} minor_{ji}
    CMatrix3::from_fn(|i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        minor(j, i) * sign
    })
}

/// Swaps diagonal entries k and k+1 of the upper triangular `t`, updating the
/// Schur vectors `q` so that q·t·q* is unchanged.
fn swap_adjacent(t: &mut CMatrix6, q: &mut CMatrix6, k: usize) {
    let (a, b, c) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k + 1)]);
    // eigenvector of [[a, b], [0, c]] for c, normalized
    let v = Vector2::new(b, c - a);
    let nv = v.norm();
    if nv == 0.0 {
        return;
    }
    let (g1, g2) = (v[0] / nv, v[1] / nv);
    // rotation G = [[g1, −conj(g2)], [g2, conj(g1)]]
    let rot = |x: Complex64, y: Complex64| (g1 * x + g2 * y, -g2.conj() * x + g1.conj() * y);
    for col in 0..6 {
        // rows: G*·T
        let (x, y) = (t[(k, col)], t[(k + 1, col)]);
        let (nx, ny) = (g1.conj() * x + g2.conj() * y, -g2 * x + g1 * y);
        t[(k, col)] = nx;
        t[(k + 1, col)] = ny;
    }
    for row in 0..6 {
        // columns: T·G and Q·G
        let (x, y) = rot(t[(row, k)], t[(row, k + 1)]);
        t[(row, k)] = x;
        t[(row, k + 1)] = y;
        let (x, y) = rot(q[(row, k)], q[(row, k + 1)]);
        q[(row, k)] = x;
        q[(row, k + 1)] = y;
    }
    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
}

fn companion(poly: &MatrixPolynomial) -> Result<CMatrix6, WienerHopfError> {
    let inv = poly
        .m2
        .try_inverse()
        .ok_or(WienerHopfError::FactorizationFailure { residual: f64::INFINITY })?;
    let lower_left = -(inv * poly.m0);
    let lower_right = -(inv * poly.m1);
    let mut c = CMatrix6::zeros();
    for i in 0..3 {
        c[(i, i + 3)] = Complex64::new(1.0, 0.0);
        for j in 0..3 {
            c[(i + 3, j)] = Complex64::new(lower_left[(i, j)], 0.0);
            c[(i + 3, j + 3)] = Complex64::new(lower_right[(i, j)], 0.0);
        }
    }
    Ok(c)
}

/// Leading coefficient of a matrix polynomial of degree ≤ 2 from three samples.
fn quadratic_lead(p: impl Fn(Complex64) -> CMatrix3) -> CMatrix3 {
    let one = Complex64::new(1.0, 0.0);
    (p(one) + p(-one) - p(Complex64::new(0.0, 0.0)).scale(2.0)).scale(0.5)
}

/// Leading coefficient of a cubic from its third finite difference.
fn cubic_lead(p: impl Fn(Complex64) -> Complex64) -> Complex64 {
    let s = |x: f64| p(Complex64::new(x, 0.0));
    (s(3.0) - s(2.0) * 3.0 + s(1.0) * 3.0 - s(0.0)) / 6.0
}

/// Complex Schur form. Defective eigenvalues (Lamé-type symbols) can stall the
/// QR iteration, so a stalled run is retried on a shifted matrix.
fn schur(c: CMatrix6, scale: f64) -> Result<(CMatrix6, CMatrix6), WienerHopfError> {
    const SHIFTS: [(f64, f64); 4] = [(0.0, 0.0), (0.37, 0.11), (-0.23, 0.29), (0.61, -0.47)];
    for (re, im) in SHIFTS {
        let shift = Complex64::new(re, im) * scale;
        let shifted = c + CMatrix6::identity() * shift;
        if let Some(schur) = nalgebra::Schur::try_new(shifted, 1e-15, 10_000) {
            let (q, mut t) = schur.unpack();
            for k in 0..6 {
                t[(k, k)] -= shift;
            }
            return Ok((q, t));
        }
    }
    Err(WienerHopfError::FactorizationFailure { residual: f64::INFINITY })
}

pub fn factorize(poly: &MatrixPolynomial) -> Result<SymbolFactorization, WienerHopfError> {
    let chol = poly
        .m2
        .cholesky()
        .ok_or(WienerHopfError::FactorizationFailure { residual: f64::INFINITY })?;
    let l = complex(&chol.l());
    let c = companion(poly)?;
    let scale = c.norm().max(1.0);
    let (mut q, mut t) = schur(c, scale)?;

    for k in 0..6 {
        let root = t[(k, k)];
        if root.im.abs() <= REAL_AXIS_TOL * scale {
            return Err(WienerHopfError::EllipticityViolation { root });
        }
    }
    // bubble the lower half-plane roots to the leading block
    loop {
        let mut swapped = false;
        for k in 0..5 {
            if t[(k, k)].im > 0.0 && t[(k + 1, k + 1)].im < 0.0 {
                swap_adjacent(&mut t, &mut q, k);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    let lower = (0..6).filter(|&k| t[(k, k)].im < 0.0).count();
    if lower != 3 {
        return Err(WienerHopfError::EllipticityViolation { root: t[(3, 3)] });
    }

    let x1: CMatrix3 = q.fixed_view::<3, 3>(0, 0).into_owned();
    let x2: CMatrix3 = q.fixed_view::<3, 3>(3, 0).into_owned();
    let x1_inv = x1
        .try_inverse()
        .ok_or(WienerHopfError::FactorizationFailure { residual: f64::INFINITY })?;
    let solvent = x2 * x1_inv;

    let gauge = l.transpose();
    let gauge_inv = gauge
        .try_inverse()
        .ok_or(WienerHopfError::FactorizationFailure { residual: f64::INFINITY })?;
    let m2 = complex(&poly.m2);
    let m1 = complex(&poly.m1);

    let plus_lead = gauge;
    let plus_const = -(gauge * solvent);
    let minus_lead = l;
    let minus_const = (m2 * solvent + m1) * gauge_inv;

    let roots_plus = [t[(0, 0)], t[(1, 1)], t[(2, 2)]];
    let roots_minus = [t[(3, 3)], t[(4, 4)], t[(5, 5)]];

    let plus = |tau: Complex64| plus_lead * tau + plus_const;
    let minus = |tau: Complex64| minus_lead * tau + minus_const;
    let a_plus = cubic_lead(|tau| plus(tau).determinant());
    let a_minus = cubic_lead(|tau| minus(tau).determinant());
    let c_plus = quadratic_lead(|tau| adjugate(&plus(tau)));

    let fact = SymbolFactorization {
        poly: *poly,
        plus_lead,
        plus_const,
        minus_lead,
        minus_const,
        roots_plus,
        roots_minus,
        a_plus,
        a_minus,
        c_plus,
    };
    let r = poly.xi_norm().max(1.0);
    let probes = [
        Complex64::new(0.0, 0.0),
        Complex64::new(r, 0.0),
        Complex64::new(-0.7 * r, 0.3 * r),
        Complex64::new(1.3 * r, -0.9 * r),
    ];
    let residual = fact.reconstruction_residual(&probes);
    if !(residual <= RECONSTRUCTION_TOL) {
        return Err(WienerHopfError::FactorizationFailure { residual });
    }
    Ok(fact)
}
