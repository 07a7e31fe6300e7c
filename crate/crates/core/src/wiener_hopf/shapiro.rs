//! The Šapiro-Lopatinskii matrix e(ξ′) = e₁ + e₂ − S(𝒱) of the boundary-domain
//! system at a frozen boundary point, S(𝒱) = I/(2|ξ′|).

use std::f64::consts::PI;

use nalgebra::Matrix3;
use num_complex::Complex64;

use super::{
    complex, factorize, pi_plus, pi_prime, CMatrix3, FrozenSymbol, RationalSymbol, SymbolFactorization,
    WienerHopfError,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EParts {
    /// I/(2|ξ′|).
    pub e1_closed: CMatrix3,
    /// −Π′{S(B)[S⁺]⁻¹Π⁺([S⁻]⁻¹S(P))} by nested contour integrals, if requested.
    pub e1_composed: Option<CMatrix3>,
    /// (i/a⁺) β̃ C⁺ [Ã⁻(ξ′,−i|ξ′|)]⁻¹.
    pub e2: CMatrix3,
    pub single_layer: CMatrix3,
    pub e: CMatrix3,
}

fn inverse(m: CMatrix3) -> Result<CMatrix3, WienerHopfError> {
    m.try_inverse().ok_or(WienerHopfError::FactorizationFailure { residual: f64::INFINITY })
}

fn e1_composed(fact: &SymbolFactorization, r: f64) -> Result<CMatrix3, WienerHopfError> {
    let i = Complex64::i();
    let ir = i * r;
    // h = [S⁻]⁻¹ S(P), with S⁻ = Ã⁻/Θ⁻ and S(P) = −1/(ξ₃² + |ξ′|²)
    let h = RationalSymbol {
        eval: |tau: Complex64| -> CMatrix3 {
            let inv = fact.minus_at(tau).try_inverse().unwrap_or_else(CMatrix3::zeros);
            inv * ((tau - ir) * (-1.0 / (tau * tau + r * r)))
        },
        lower_poles: vec![-ir],
        upper_poles: fact.roots_minus.to_vec(),
    };
    // G = S(B)[S⁺]⁻¹ Π⁺h, S(B) = Ã/|ξ|², S⁺ = Ã⁺/Θ⁺
    let mut lower = fact.roots_plus.to_vec();
    lower.push(-ir);
    let mut upper = fact.roots_minus.to_vec();
    upper.push(ir);
    let g = RationalSymbol {
        eval: |zeta: Complex64| -> CMatrix3 {
            let sb = fact.poly.eval(zeta) / (zeta * zeta + r * r);
            let splus_inv = fact.plus_at(zeta).try_inverse().unwrap_or_else(CMatrix3::zeros) * (zeta + ir);
            let proj = pi_plus(&h, zeta).unwrap_or_else(|_| CMatrix3::zeros());
            sb * splus_inv * proj
        },
        lower_poles: lower,
        upper_poles: upper,
    };
    Ok(-pi_prime(&g)?)
}

/// e(ξ′) from a factorization at ξ′ and the frozen β̃.
pub fn compute_e(fact: &SymbolFactorization, beta: &Matrix3<f64>, compose: bool) -> Result<EParts, WienerHopfError> {
    let r = fact.poly.xi_norm();
    if r == 0.0 {
        return Err(WienerHopfError::ZeroFrequency);
    }
    let i = Complex64::i();
    let half = CMatrix3::identity() * Complex64::new(0.5 / r, 0.0);
    let e1_closed = half;
    let minus_inv = inverse(fact.minus_at(-i * r))?;
    let e2 = complex(beta) * fact.c_plus * minus_inv * (i / fact.a_plus);
    let e1_composed = if compose { Some(e1_composed(fact, r)?) } else { None };
    let e = e1_closed + e2 - half;
    Ok(EParts { e1_closed, e1_composed, e2, single_layer: half, e })
}

/// det e = −i/(a⁺)³ · det β̃ · det C⁺ · det[Ã⁻(ξ′,−i|ξ′|)]⁻¹.
pub fn det_e_product_formula(fact: &SymbolFactorization, beta: &Matrix3<f64>) -> Result<Complex64, WienerHopfError> {
    let r = fact.poly.xi_norm();
    if r == 0.0 {
        return Err(WienerHopfError::ZeroFrequency);
    }
    let i = Complex64::i();
    let minus_det = fact.minus_at(-i * r).determinant();
    Ok(-i / fact.a_plus.powi(3) * beta.determinant() * fact.c_plus.determinant() / minus_det)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SLReport {
    pub xi_prime: Vec<[f64; 2]>,
    pub det_e: Vec<Complex64>,
    pub e_values: Vec<CMatrix3>,
    /// Homotopy parameters and det e_t per (t, direction); empty for a plain check.
    pub t_grid: Vec<f64>,
    pub det_e_t: Vec<Vec<Complex64>>,
    pub min_abs_det: f64,
    pub floor: f64,
    pub passed: bool,
}

fn directions(count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / count as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

fn sweep(symbol: &FrozenSymbol, dirs: &[[f64; 2]]) -> Result<(Vec<Complex64>, Vec<CMatrix3>), WienerHopfError> {
    let beta = symbol.beta();
    let mut dets = Vec::with_capacity(dirs.len());
    let mut es = Vec::with_capacity(dirs.len());
    for &d in dirs {
        let fact = factorize(&symbol.at(d))?;
        let e = compute_e(&fact, &beta, false)?.e;
        dets.push(e.determinant());
        es.push(e);
    }
    Ok((dets, es))
}

/// det e on `count` unit directions ξ′; passes if every |det e| exceeds `floor`.
pub fn sl_check(symbol: &FrozenSymbol, count: usize, floor: f64) -> Result<SLReport, WienerHopfError> {
    let xi_prime = directions(count);
    let (det_e, e_values) = sweep(symbol, &xi_prime)?;
    let min_abs_det = det_e.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
    Ok(SLReport {
        xi_prime,
        det_e,
        e_values,
        t_grid: Vec::new(),
        det_e_t: Vec::new(),
        min_abs_det,
        floor,
        passed: min_abs_det > floor,
    })
}

/// det e_t along Ã_t = (1−t)|ξ|²β̃ + tÃ with β̃ held fixed.
pub fn sl_homotopy(symbol: &FrozenSymbol, t_grid: &[f64], count: usize, floor: f64) -> Result<SLReport, WienerHopfError> {
    let xi_prime = directions(count);
    let beta = symbol.beta();
    let mut det_e_t = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let st = symbol.homotopy(t);
        let mut row = Vec::with_capacity(count);
        for &d in &xi_prime {
            let fact = factorize(&st.at(d))?;
            row.push(compute_e(&fact, &beta, false)?.e.determinant());
        }
        det_e_t.push(row);
    }
    let (det_e, e_values) = sweep(symbol, &xi_prime)?;
    let min_abs_det = det_e_t
        .iter()
        .flatten()
        .chain(det_e.iter())
        .map(|d| d.norm())
        .fold(f64::INFINITY, f64::min);
    Ok(SLReport {
        xi_prime,
        det_e,
        e_values,
        t_grid: t_grid.to_vec(),
        det_e_t,
        min_abs_det,
        floor,
        passed: min_abs_det > floor,
    })
}
