//! Variable-coefficient tensor a^{pq}_{kj}(x), the operator
//! [Au]_p = ∂_k(a^{pq}_{kj} ∂_j u_q), its co-normal derivative and symbol.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{Expr, ExprError, Var};

/// Indexed as `t[p][q][k][j]`.
pub type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];
/// `[q][j]` → ∂_j u_q.
pub type Gradient = [[f64; 3]; 3];
/// `[q][k][j]` → ∂_k ∂_j u_q.
pub type Hessian = [[[f64; 3]; 3]; 3];

pub const ZERO_TENSOR: Tensor4 = [[[[0.0; 3]; 3]; 3]; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("coefficient symmetry violated at x = {point:?}: a[{p}][{q}][{k}][{j}] differs from its transpose by {deviation:e}")]
    SymmetryViolation { point: [f64; 3], p: usize, q: usize, k: usize, j: usize, deviation: f64 },
    #[error("ellipticity violated: lower bound estimate c1 = {c1:e}")]
    EllipticityViolation { c1: f64 },
    #[error(transparent)]
    Expression(#[from] ExprError),
}

/// Smooth vector field supplying values and derivatives up to second order.
pub trait VectorField: Sync {
    fn value(&self, x: [f64; 3]) -> Result<[f64; 3], ExprError>;
    fn gradient(&self, x: [f64; 3]) -> Result<Gradient, ExprError>;
    fn hessian(&self, x: [f64; 3]) -> Result<Hessian, ExprError>;
}

/// Vector field given by three expressions, differentiated symbolically.
#[derive(Debug, Clone)]
pub struct ExprVectorField {
    comps: [Expr; 3],
    grad: [[Expr; 3]; 3],
    hess: [[[Expr; 3]; 3]; 3],
}

impl ExprVectorField {
    pub fn new(comps: [Expr; 3]) -> Self {
        let grad: [[Expr; 3]; 3] =
            std::array::from_fn(|q| std::array::from_fn(|j| comps[q].differentiate(Var::from_axis(j))));
        let hess = std::array::from_fn(|q| {
            std::array::from_fn(|k| std::array::from_fn(|j| grad[q][j].differentiate(Var::from_axis(k))))
        });
        Self { comps, grad, hess }
    }

    pub fn parse(src: [&str; 3]) -> Result<Self, ExprError> {
        Ok(Self::new([crate::expr::parse(src[0])?, crate::expr::parse(src[1])?, crate::expr::parse(src[2])?]))
    }

    pub fn components(&self) -> &[Expr; 3] {
        &self.comps
    }
}

impl VectorField for ExprVectorField {
    fn value(&self, x: [f64; 3]) -> Result<[f64; 3], ExprError> {
        Ok([self.comps[0].eval(x)?, self.comps[1].eval(x)?, self.comps[2].eval(x)?])
    }

    fn gradient(&self, x: [f64; 3]) -> Result<Gradient, ExprError> {
        let mut g = [[0.0; 3]; 3];
        for q in 0..3 {
            for j in 0..3 {
                g[q][j] = self.grad[q][j].eval(x)?;
            }
        }
        Ok(g)
    }

    fn hessian(&self, x: [f64; 3]) -> Result<Hessian, ExprError> {
        let mut h = [[[0.0; 3]; 3]; 3];
        for q in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    h[q][k][j] = self.hess[q][k][j].eval(x)?;
                }
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
pub enum CoefficientKind {
    /// a^{pq}_{kj} = δ_pq δ_kj.
    Laplace,
    /// a^{pq}_{kj} = s(x) δ_pq δ_kj.
    ScaledLaplace { scale: Expr, grad: [Expr; 3] },
    /// Isotropic elasticity: λ δ_pk δ_qj + μ (δ_pq δ_kj + δ_pj δ_kq).
    Lame { lambda: Expr, mu: Expr, grad_lambda: [Expr; 3], grad_mu: [Expr; 3] },
    /// 81 independent entries.
    General { a: Box<[Expr; 81]>, grad: Box<[[Expr; 3]; 81]> },
}

fn flat(p: usize, q: usize, k: usize, j: usize) -> usize {
    27 * p + 9 * q + 3 * k + j
}

fn gradient_exprs(e: &Expr) -> [Expr; 3] {
    std::array::from_fn(|m| e.differentiate(Var::from_axis(m)))
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

fn lame_tensor(lambda: f64, mu: f64) -> Tensor4 {
    let mut t = ZERO_TENSOR;
    for p in 0..3 {
        for q in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    t[p][q][k][j] = lambda * delta(p, k) * delta(q, j)
                        + mu * (delta(p, q) * delta(k, j) + delta(p, j) * delta(k, q));
                }
            }
        }
    }
    t
}

fn scaled_identity_tensor(s: f64) -> Tensor4 {
    let mut t = ZERO_TENSOR;
    for p in 0..3 {
        for k in 0..3 {
            t[p][p][k][k] = s;
        }
    }
    t
}

/// The coefficient tensor field together with its first derivatives.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub kind: CoefficientKind,
}

impl CoefficientField {
    pub fn laplace() -> Self {
        Self { kind: CoefficientKind::Laplace }
    }

    pub fn scaled_laplace(scale: Expr) -> Self {
        let grad = gradient_exprs(&scale);
        Self { kind: CoefficientKind::ScaledLaplace { scale, grad } }
    }

    pub fn lame(lambda: Expr, mu: Expr) -> Self {
        let (grad_lambda, grad_mu) = (gradient_exprs(&lambda), gradient_exprs(&mu));
        Self { kind: CoefficientKind::Lame { lambda, mu, grad_lambda, grad_mu } }
    }

    pub fn lame_constant(lambda: f64, mu: f64) -> Self {
        Self::lame(Expr::lit(lambda), Expr::lit(mu))
    }

    /// General tensor from entries indexed `[p][q][k][j]`. A tensor of the form
    /// s(x)·δ_pq δ_kj is recognised and stored in its compact form.
    pub fn general(a: [[[[Expr; 3]; 3]; 3]; 3]) -> Self {
        let entries: [Expr; 81] = std::array::from_fn(|i| a[i / 27][(i / 9) % 3][(i / 3) % 3][i % 3].clone());
        let diag = entries[flat(0, 0, 0, 0)].clone();
        let scaled = (0..81).all(|i| {
            let (p, q, k, j) = (i / 27, (i / 9) % 3, (i / 3) % 3, i % 3);
            if p == q && k == j {
                entries[i] == diag
            } else {
                entries[i].constant() == Some(0.0)
            }
        });
        if scaled {
            return if diag.constant() == Some(1.0) { Self::laplace() } else { Self::scaled_laplace(diag) };
        }
        let grad = Box::new(std::array::from_fn(|i| gradient_exprs(&entries[i])));
        Self { kind: CoefficientKind::General { a: Box::new(entries), grad } }
    }

    pub fn general_constant(t: &Tensor4) -> Self {
        Self::general(std::array::from_fn(|p| {
            std::array::from_fn(|q| std::array::from_fn(|k| std::array::from_fn(|j| Expr::lit(t[p][q][k][j]))))
        }))
    }

    /// True if the tensor is a scalar multiple of δ_pq δ_kj.
    pub fn is_scaled_identity(&self) -> bool {
        matches!(self.kind, CoefficientKind::Laplace | CoefficientKind::ScaledLaplace { .. })
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            CoefficientKind::Laplace => true,
            CoefficientKind::ScaledLaplace { scale, .. } => scale.constant().is_some(),
            CoefficientKind::Lame { lambda, mu, .. } => lambda.constant().is_some() && mu.constant().is_some(),
            CoefficientKind::General { a, .. } => a.iter().all(|e| e.constant().is_some()),
        }
    }

    /// Scale s(x) and its gradient for scaled-identity tensors.
    pub fn scale_and_gradient(&self, x: [f64; 3]) -> Result<Option<(f64, [f64; 3])>, ExprError> {
        Ok(match &self.kind {
            CoefficientKind::Laplace => Some((1.0, [0.0; 3])),
            CoefficientKind::ScaledLaplace { scale, grad } => {
                Some((scale.eval(x)?, [grad[0].eval(x)?, grad[1].eval(x)?, grad[2].eval(x)?]))
            }
            _ => None,
        })
    }

    pub fn tensor(&self, x: [f64; 3]) -> Result<Tensor4, ExprError> {
        Ok(match &self.kind {
            CoefficientKind::Laplace => scaled_identity_tensor(1.0),
            CoefficientKind::ScaledLaplace { scale, .. } => scaled_identity_tensor(scale.eval(x)?),
            CoefficientKind::Lame { lambda, mu, .. } => lame_tensor(lambda.eval(x)?, mu.eval(x)?),
            CoefficientKind::General { a, .. } => {
                let mut t = ZERO_TENSOR;
                for (i, e) in a.iter().enumerate() {
                    t[i / 27][(i / 9) % 3][(i / 3) % 3][i % 3] = e.eval(x)?;
                }
                t
            }
        })
    }

    /// ∂_m a^{pq}_{kj}(x) for all m, as three tensors.
    pub fn derivative(&self, x: [f64; 3]) -> Result<[Tensor4; 3], ExprError> {
        let mut out = [ZERO_TENSOR; 3];
        match &self.kind {
            CoefficientKind::Laplace => {}
            CoefficientKind::ScaledLaplace { grad, .. } => {
                for m in 0..3 {
                    out[m] = scaled_identity_tensor(grad[m].eval(x)?);
                }
            }
            CoefficientKind::Lame { grad_lambda, grad_mu, .. } => {
                for m in 0..3 {
                    out[m] = lame_tensor(grad_lambda[m].eval(x)?, grad_mu[m].eval(x)?);
                }
            }
            CoefficientKind::General { grad, .. } => {
                for (i, g) in grad.iter().enumerate() {
                    for m in 0..3 {
                        out[m][i / 27][(i / 9) % 3][(i / 3) % 3][i % 3] = g[m].eval(x)?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Single entry ∂_m a^{pq}_{kj}(x).
    pub fn da(&self, x: [f64; 3], m: usize, p: usize, q: usize, k: usize, j: usize) -> Result<f64, ExprError> {
        Ok(self.derivative(x)?[m][p][q][k][j])
    }

    /// g^{pq}_j = Σ_k ∂_k a^{pq}_{kj}(x), indexed `[p][q][j]`.
    pub fn divergence(&self, x: [f64; 3]) -> Result<[[[f64; 3]; 3]; 3], ExprError> {
        let d = self.derivative(x)?;
        let mut g = [[[0.0; 3]; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                for j in 0..3 {
                    g[p][q][j] = (0..3).map(|k| d[k][p][q][k][j]).sum();
                }
            }
        }
        Ok(g)
    }
}

/// A(y, ξ) with metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolMatrix {
    pub entries: Matrix3<f64>,
    pub base_point: [f64; 3],
    pub frequency: [f64; 3],
}

pub fn symbol_of_tensor(t: &Tensor4, xi: [f64; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|p, q| {
        let mut s = 0.0;
        for k in 0..3 {
            for j in 0..3 {
                s += t[p][q][k][j] * xi[k] * xi[j];
            }
        }
        s
    })
}

pub fn symbol(field: &CoefficientField, y: [f64; 3], xi: [f64; 3]) -> Result<SymbolMatrix, ExprError> {
    Ok(SymbolMatrix { entries: symbol_of_tensor(&field.tensor(y)?, xi), base_point: y, frequency: xi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaMu {
    pub beta: Matrix3<f64>,
    pub mu: Option<Matrix3<f64>>,
}

pub fn beta_of_tensor(t: &Tensor4) -> Matrix3<f64> {
    Matrix3::from_fn(|p, q| (0..3).map(|k| t[p][q][k][k]).sum::<f64>() / 3.0)
}

pub fn mu_of_tensor(t: &Tensor4, n: [f64; 3]) -> Matrix3<f64> {
    0.5 * symbol_of_tensor(t, n)
}

pub fn beta_mu(field: &CoefficientField, x: [f64; 3], n: Option<[f64; 3]>) -> Result<BetaMu, ExprError> {
    let t = field.tensor(x)?;
    Ok(BetaMu { beta: beta_of_tensor(&t), mu: n.map(|n| mu_of_tensor(&t, n)) })
}

/// [Au]_p = a^{pq}_{kj} ∂_k∂_j u_q + (∂_k a^{pq}_{kj}) ∂_j u_q.
pub fn apply_a(field: &CoefficientField, u: &dyn VectorField, x: [f64; 3]) -> Result<[f64; 3], ExprError> {
    let (t, g) = (field.tensor(x)?, field.divergence(x)?);
    let (du, d2u) = (u.gradient(x)?, u.hessian(x)?);
    let mut out = [0.0; 3];
    for p in 0..3 {
        for q in 0..3 {
            for j in 0..3 {
                out[p] += g[p][q][j] * du[q][j];
                for k in 0..3 {
                    out[p] += t[p][q][k][j] * d2u[q][k][j];
                }
            }
        }
    }
    Ok(out)
}

/// [Tu]_p = a^{pq}_{kj} n_k ∂_j u_q with the tensor already evaluated.
pub fn conormal_of_tensor(t: &Tensor4, du: &Gradient, n: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for p in 0..3 {
        for q in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    out[p] += t[p][q][k][j] * n[k] * du[q][j];
                }
            }
        }
    }
    out
}

pub fn conormal(field: &CoefficientField, u: &dyn VectorField, y: [f64; 3], n: [f64; 3]) -> Result<[f64; 3], ExprError> {
    Ok(conormal_of_tensor(&field.tensor(y)?, &u.gradient(y)?, n))
}

/// E(v, u) = a^{pq}_{kj} ∂_j v_q ∂_k u_p.
pub fn energy_density(
    field: &CoefficientField,
    u: &dyn VectorField,
    v: &dyn VectorField,
    x: [f64; 3],
) -> Result<f64, ExprError> {
    let (t, du, dv) = (field.tensor(x)?, u.gradient(x)?, v.gradient(x)?);
    let mut e = 0.0;
    for p in 0..3 {
        for q in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    e += t[p][q][k][j] * dv[q][j] * du[p][k];
                }
            }
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Major symmetry a^{pq}_{kj} = a^{qp}_{jk}.
    pub symmetry_ok: bool,
    /// Minor symmetry a^{pq}_{kj} = a^{kq}_{pj}; informational only.
    pub minor_symmetry_ok: bool,
    pub c1_estimate: f64,
    pub c2_estimate: f64,
}

/// The 26 directions of the unit cube's faces, edges and corners.
pub fn cube_directions() -> Vec<[f64; 3]> {
    let mut dirs = Vec::with_capacity(26);
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                if (a, b, c) != (0, 0, 0) {
                    let n = ((a * a + b * b + c * c) as f64).sqrt();
                    dirs.push([a as f64 / n, b as f64 / n, c as f64 / n]);
                }
            }
        }
    }
    dirs
}

/// Checks the coefficient symmetries and estimates the ellipticity bounds
/// c₁|ξ|²|ζ|² ≤ ζ̄·A(x,ξ)ζ ≤ c₂|ξ|²|ζ|².
///
/// The bounds come from the exact eigenvalues of A(x,ξ) over 26 unit directions;
/// 50 seeded random complex unit ζ per direction cross-check the Rayleigh quotient.
pub fn validate(field: &CoefficientField, sample_points: &[[f64; 3]]) -> Result<ValidationReport, ModelError> {
    assert!(!sample_points.is_empty(), "validation needs at least one sample point");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut minor_ok = true;
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    let dirs = cube_directions();
    for &x in sample_points {
        let t = field.tensor(x)?;
        let scale = t.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut worst = (0.0, (0, 0, 0, 0));
        for p in 0..3 {
            for q in 0..3 {
                for k in 0..3 {
                    for j in 0..3 {
                        let dev = (t[p][q][k][j] - t[q][p][j][k]).abs();
                        if dev > worst.0 {
                            worst = (dev, (p, q, k, j));
                        }
                        if (t[p][q][k][j] - t[k][q][p][j]).abs() > 1e-12 * scale {
                            minor_ok = false;
                        }
                    }
                }
            }
        }
        if worst.0 > 1e-12 * scale {
            let (p, q, k, j) = worst.1;
            return Err(ModelError::SymmetryViolation { point: x, p, q, k, j, deviation: worst.0 });
        }
        for xi in &dirs {
            let a = symbol_of_tensor(&t, *xi);
            let eig = SymmetricEigen::new(a).eigenvalues;
            c1 = c1.min(eig.min());
            c2 = c2.max(eig.max());
            let ac = a.map(|v| Complex64::new(v, 0.0));
            for _ in 0..50 {
                let z = Vector3::from_fn(|_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                let z = z / Complex64::new(z.norm(), 0.0);
                let rq = (z.adjoint() * ac * z)[(0, 0)].re;
                c1 = c1.min(rq);
                c2 = c2.max(rq);
            }
        }
    }
    if c1 <= 0.0 {
        return Err(ModelError::EllipticityViolation { c1 });
    }
    Ok(ValidationReport { symmetry_ok: true, minor_symmetry_ok: minor_ok, c1_estimate: c1, c2_estimate: c2 })
}
