//! Radial localizing functions χ, their smoothness classes and the sine-transform
//! positivity certificate.

use std::fmt;
use std::sync::Arc;

use crate::expr::{Expr, Var};
use crate::quadrature::{gauss_legendre_on, integrate_adaptive, QuadratureError};

/// Radial profile ρ ↦ χ̆(ρ).
#[derive(Clone)]
pub enum Profile {
    /// (1 − ρ/ε)^k on [0, ε).
    Polynomial { k: u32, eps: f64 },
    /// exp(ρ²/(ρ² − ε²)) on [0, ε).
    Bump { eps: f64 },
    /// χ ≡ 1: the classical, untruncated fundamental solution.
    Untruncated,
    /// Profile given as an expression in `r`, with symbolic derivatives.
    Expression { value: Expr, d1: Expr, d2: Expr, support: Option<f64> },
    /// Arbitrary callable; derivatives by fourth-order central differences.
    Function { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, support: Option<f64> },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Polynomial { k, eps } => write!(f, "chi1k(k={k}, eps={eps})"),
            Profile::Bump { eps } => write!(f, "chi2(eps={eps})"),
            Profile::Untruncated => f.write_str("untruncated"),
            Profile::Expression { value, support, .. } => write!(f, "expr({value}, support={support:?})"),
            Profile::Function { support, .. } => write!(f, "function(support={support:?})"),
        }
    }
}

/// Running integrals of the profile used by the polar self-cell formulas:
/// `log_defect(ρ) = ∫₀^ρ (χ(s) − 1)/s ds`, `mass(ρ) = ∫₀^ρ χ`, `moment(ρ) = ∫₀^ρ s χ(s) ds`.
#[derive(Debug, Clone)]
struct RadialTable {
    h: f64,
    /// (value, derivative) at grid nodes, for each of the three integrals.
    nodes: Vec<[(f64, f64); 3]>,
}

impl RadialTable {
    fn build(chi: &LocalizingFunction, reach: f64) -> RadialTable {
        let n = 4096;
        let h = reach / n as f64;
        let gl = gauss_legendre_on(8, 0.0, 1.0);
        let derivs = |s: f64| {
            let c = chi.value(s);
            let jd = if s > 0.0 { (c - 1.0) / s } else { chi.d1(0.0) };
            [jd, c, s * c]
        };
        let mut acc = [0.0; 3];
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push([(0.0, derivs(0.0)[0]), (0.0, 1.0), (0.0, 0.0)]);
        for i in 0..n {
            let a = i as f64 * h;
            for &(t, w) in &gl {
                let d = derivs(a + t * h);
                for m in 0..3 {
                    acc[m] += w * h * d[m];
                }
            }
            let d = derivs(a + h);
            nodes.push([(acc[0], d[0]), (acc[1], d[1]), (acc[2], d[2])]);
        }
        RadialTable { h, nodes }
    }

    fn eval(&self, which: usize, rho: f64) -> f64 {
        let n = self.nodes.len() - 1;
        let reach = self.h * n as f64;
        if rho >= reach {
            let (v, _) = self.nodes[n][which];
            return match which {
                0 => v - (rho / reach).ln(),
                _ => v,
            };
        }
        let i = ((rho / self.h) as usize).min(n - 1);
        let t = rho / self.h - i as f64;
        let (y0, d0) = self.nodes[i][which];
        let (y1, d1) = self.nodes[i + 1][which];
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * self.h * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * self.h * d1
    }
}

/// Radial localizing function with its support radius and declared smoothness class.
#[derive(Debug, Clone)]
pub struct LocalizingFunction {
    pub name: String,
    pub profile: Profile,
    pub declared_class: u32,
    table: Option<Arc<RadialTable>>,
}

impl LocalizingFunction {
    pub fn chi1k(k: u32, eps: f64) -> Self {
        assert!(k >= 1 && eps > 0.0);
        Self { name: format!("chi1{k}"), profile: Profile::Polynomial { k, eps }, declared_class: k, table: None }
    }

    pub fn chi2(eps: f64) -> Self {
        assert!(eps > 0.0);
        Self::tabulated(Self { name: "chi2".into(), profile: Profile::Bump { eps }, declared_class: u32::MAX, table: None })
    }

    pub fn untruncated() -> Self {
        Self { name: "untruncated".into(), profile: Profile::Untruncated, declared_class: u32::MAX, table: None }
    }

    /// Profile from an expression in `r`; values beyond `support` are zero.
    pub fn from_expression(name: &str, value: Expr, support: Option<f64>, declared_class: u32) -> Self {
        let d1 = value.differentiate(Var::R);
        let d2 = d1.differentiate(Var::R);
        Self::tabulated(Self {
            name: name.into(),
            profile: Profile::Expression { value, d1, d2, support },
            declared_class,
            table: None,
        })
    }

    pub fn from_fn(
        name: &str,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: Option<f64>,
        declared_class: u32,
    ) -> Self {
        Self::tabulated(Self {
            name: name.into(),
            profile: Profile::Function { f: Arc::new(f), support },
            declared_class,
            table: None,
        })
    }

    fn tabulated(mut chi: Self) -> Self {
        if let Some(reach) = chi.integration_reach() {
            chi.table = Some(Arc::new(RadialTable::build(&chi, reach)));
        }
        chi
    }

    /// Support radius ε, or `None` for non-compact profiles.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.profile {
            Profile::Polynomial { eps, .. } | Profile::Bump { eps } => Some(*eps),
            Profile::Untruncated => None,
            Profile::Expression { support, .. } | Profile::Function { support, .. } => *support,
        }
    }

    /// Radius beyond which the profile is treated as zero: the support radius,
    /// or the truncation point where |ρχ̆(ρ)| < 1e−14·max for non-compact profiles.
    pub fn integration_reach(&self) -> Option<f64> {
        if let Some(eps) = self.support_radius() {
            return Some(eps);
        }
        if matches!(self.profile, Profile::Untruncated) {
            return None;
        }
        truncation_radius(|r| self.raw(r))
    }

    fn raw(&self, rho: f64) -> f64 {
        match &self.profile {
            Profile::Expression { value, .. } => value.eval_radial(rho).unwrap_or(f64::NAN),
            Profile::Function { f, .. } => f(rho),
            _ => self.value(rho),
        }
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.derivatives(rho)[0]
    }

    pub fn d1(&self, rho: f64) -> f64 {
        self.derivatives(rho)[1]
    }

    pub fn d2(&self, rho: f64) -> f64 {
        self.derivatives(rho)[2]
    }

    /// (χ̆, χ̆′, χ̆″) at ρ ≥ 0; identically zero outside the support.
    pub fn derivatives(&self, rho: f64) -> [f64; 3] {
        if let Some(eps) = self.support_radius() {
            if rho >= eps {
                return [0.0; 3];
            }
        }
        match &self.profile {
            Profile::Polynomial { k, eps } => {
                let k = *k as i32;
                let s = 1.0 - rho / eps;
                let v = s.powi(k);
                let d1 = -(k as f64) / eps * s.powi(k - 1);
                let d2 = if k >= 2 { (k * (k - 1)) as f64 / (eps * eps) * s.powi(k - 2) } else { 0.0 };
                [v, d1, d2]
            }
            Profile::Bump { eps } => {
                let e2 = eps * eps;
                let q = rho * rho - e2;
                let g = rho * rho / q;
                if g < -700.0 {
                    return [0.0; 3];
                }
                let v = g.exp();
                let g1 = -2.0 * rho * e2 / (q * q);
                let g2 = -2.0 * e2 / (q * q) + 8.0 * e2 * rho * rho / (q * q * q);
                [v, v * g1, v * (g1 * g1 + g2)]
            }
            Profile::Untruncated => [1.0, 0.0, 0.0],
            Profile::Expression { value, d1, d2, .. } => {
                let ev = |e: &Expr| e.eval_radial(rho).unwrap_or(f64::NAN);
                [ev(value), ev(d1), ev(d2)]
            }
            Profile::Function { f, support } => {
                let h = 1e-4 * support.unwrap_or(1.0);
                // One-sided at the origin to stay on [0, ∞).
                let x = rho.max(2.0 * h);
                let (fm2, fm1, f0, fp1, fp2) = (f(x - 2.0 * h), f(x - h), f(x), f(x + h), f(x + 2.0 * h));
                let d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
                let d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
                [f(rho), d1, d2]
            }
        }
    }

    /// `∫₀^ρ (χ̆(s) − 1)/s ds`, continued by −log for ρ beyond the reach.
    pub fn log_defect(&self, rho: f64) -> f64 {
        match &self.profile {
            Profile::Untruncated => 0.0,
            Profile::Polynomial { k, eps } => {
                let t = (rho / eps).min(1.0);
                let mut acc = 0.0;
                let mut binom = 1.0;
                for m in 1..=*k {
                    binom *= (*k - m + 1) as f64 / m as f64;
                    let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
                    acc += sign * binom * t.powi(m as i32) / m as f64;
                }
                if rho > *eps {
                    acc -= (rho / eps).ln();
                }
                acc
            }
            _ => self.table().eval(0, rho),
        }
    }

    /// `∫₀^ρ χ̆(s) ds`.
    pub fn mass(&self, rho: f64) -> f64 {
        match &self.profile {
            Profile::Untruncated => rho,
            Profile::Polynomial { k, eps } => {
                let s = 1.0 - (rho / eps).min(1.0);
                eps * (1.0 - s.powi(*k as i32 + 1)) / (*k + 1) as f64
            }
            _ => self.table().eval(1, rho),
        }
    }

    /// `∫₀^ρ s χ̆(s) ds`.
    pub fn moment(&self, rho: f64) -> f64 {
        match &self.profile {
            Profile::Untruncated => 0.5 * rho * rho,
            Profile::Polynomial { k, eps } => {
                let k = *k as i32;
                let v = 1.0 - (rho / eps).min(1.0);
                let (a, b) = ((k + 1) as f64, (k + 2) as f64);
                eps * eps * (1.0 / a - 1.0 / b - v.powi(k + 1) / a + v.powi(k + 2) / b)
            }
            _ => self.table().eval(2, rho),
        }
    }

    fn table(&self) -> &RadialTable {
        self.table.as_deref().expect("profile without finite reach has no radial table")
    }
}

/// χ̆(|x|).
pub fn eval_chi(chi: &LocalizingFunction, x: [f64; 3]) -> f64 {
    chi.value((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
}

/// Smallest radius beyond which |ρ f(ρ)| stays below 1e−14 of its maximum,
/// searched by doubling up to 1e6; `None` if the tail never becomes negligible.
fn truncation_radius(f: impl Fn(f64) -> f64) -> Option<f64> {
    let mut reach = 1.0;
    let mut peak = 0.0f64;
    while reach <= 1e6 {
        let samples = 4096;
        let mut last_big = 0.0;
        for i in 0..=samples {
            let r = reach * i as f64 / samples as f64;
            let v = (r * f(r)).abs();
            if !v.is_finite() {
                return None;
            }
            peak = peak.max(v);
            if v >= 1e-14 * peak && v > 0.0 {
                last_big = r;
            }
        }
        if last_big < 0.5 * reach {
            return Some(last_big.max(reach / samples as f64));
        }
        reach *= 2.0;
    }
    None
}

/// Samples of σ_χ(ω) = (1/ω)∫₀^∞ χ̆(ρ) sin(ρω) dρ.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaCertificate {
    pub omega_grid: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub sigma_at_zero: f64,
    pub min_sigma: f64,
    pub passed: bool,
}

pub fn sigma_certificate(
    chi: &LocalizingFunction,
    omega_max: f64,
    n_samples: usize,
) -> Result<SigmaCertificate, QuadratureError> {
    assert!(omega_max > 0.0 && n_samples >= 2);
    let Some(reach) = chi.integration_reach() else {
        return Err(QuadratureError { estimate: f64::INFINITY, error: f64::INFINITY, intervals: 0 });
    };
    let (abs_tol, rel_tol, max_int) = (1e-15, 1e-13, 20_000);
    let sigma_at_zero = integrate_adaptive(|r| r * chi.value(r), 0.0, reach, 4, abs_tol, rel_tol, max_int)?;
    let omega_grid: Vec<f64> = (1..=n_samples).map(|i| omega_max * i as f64 / n_samples as f64).collect();
    let sigma_values = omega_grid
        .iter()
        .map(|&w| {
            let pieces = ((w * reach / std::f64::consts::PI).ceil() as usize).max(2);
            integrate_adaptive(|r| chi.value(r) * (r * w).sin(), 0.0, reach, pieces, abs_tol, rel_tol, max_int)
                .map(|v| v / w)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let min_sigma = sigma_values.iter().copied().fold(sigma_at_zero, f64::min);
    Ok(SigmaCertificate { omega_grid, sigma_values, sigma_at_zero, min_sigma, passed: min_sigma > 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub in_xk: bool,
    pub in_xk_plus: bool,
    pub monotone_shortcut_used: bool,
    /// Reason a check was inconclusive or failed, if any.
    pub diagnostic: Option<String>,
}

/// Numerical membership test for X^k and X^k₊.
///
/// Weak derivatives up to order min(k, 6) are probed with forward differences on
/// three dyadic grids over [0, 2·reach]; a difference quotient whose sup norm grows
/// by ≥ 1.5 under each grid halving signals a jump in the previous derivative.
pub fn classify(chi: &LocalizingFunction, k: u32) -> Membership {
    let fail = |msg: String| Membership { in_xk: false, in_xk_plus: false, monotone_shortcut_used: false, diagnostic: Some(msg) };
    let Some(reach) = chi.integration_reach() else {
        return fail("ρχ̆(ρ) is not integrable on (0, ∞)".into());
    };
    let span = 2.0 * reach;
    for j in 1..=k.min(6) {
        let level = 9u32;
        let mut sups = [0.0; 3];
        for (slot, lev) in sups.iter_mut().zip(level..) {
            let n = 1usize << lev;
            let h = span / n as f64;
            let vals: Vec<f64> = (0..=n + j as usize).map(|i| chi.value(i as f64 * h)).collect();
            let mut sup = 0.0f64;
            for i in 0..n {
                let mut d = 0.0;
                let mut binom = 1.0;
                for m in 0..=j {
                    let sign = if (j - m) % 2 == 0 { 1.0 } else { -1.0 };
                    d += sign * binom * vals[i + m as usize];
                    binom *= (j - m) as f64 / (m + 1) as f64;
                }
                sup = sup.max((d / h.powi(j as i32)).abs());
            }
            if !sup.is_finite() {
                return fail(format!("derivative of order {j} is not finite"));
            }
            *slot = sup;
        }
        // A jump in the previous derivative makes the quotient grow like 1/h at every level;
        // an under-resolved smooth peak grows at a decreasing rate.
        let (r1, r2) = (sups[1] / sups[0], sups[2] / sups[1]);
        if sups[2] > 1e-12 && r1 > 1.5 && r2 > 1.5 {
            return fail(format!("derivative of order {j} is not integrable (sup grows {r1:.2}x, {r2:.2}x under refinement)"));
        }
    }
    let mut member = Membership { in_xk: true, in_xk_plus: false, monotone_shortcut_used: false, diagnostic: None };
    if (chi.value(0.0) - 1.0).abs() > 1e-12 {
        member.diagnostic = Some("χ̆(0) ≠ 1".into());
        return member;
    }
    let n = 1 << 12;
    let grid: Vec<f64> = (0..=n).map(|i| chi.value(span * i as f64 / n as f64)).collect();
    let monotone = grid.iter().all(|&v| v >= 0.0) && grid.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    if monotone {
        member.in_xk_plus = true;
        member.monotone_shortcut_used = true;
        return member;
    }
    match sigma_certificate(chi, 100.0, 1000) {
        Ok(cert) => {
            member.in_xk_plus = cert.passed;
            if !cert.passed {
                member.diagnostic = Some(format!("sine transform not positive (min {:e})", cert.min_sigma));
            }
        }
        Err(e) => member.diagnostic = Some(format!("sine-transform certificate inconclusive: {e}")),
    }
    member
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_integrals_match_quadrature() {
        for chi in [LocalizingFunction::chi1k(3, 0.7), LocalizingFunction::chi2(0.7)] {
            for rho in [0.05f64, 0.3, 0.69, 1.5] {
                let top = rho.min(0.7);
                let q = |f: &dyn Fn(f64) -> f64| integrate_adaptive(f, 0.0, top, 1, 1e-14, 1e-13, 1000).unwrap();
                let ld = q(&|s| if s > 0.0 { (chi.value(s) - 1.0) / s } else { chi.d1(0.0) }) - (rho / top).ln();
                assert!((chi.log_defect(rho) - ld).abs() < 1e-9, "{} {rho}", chi.name);
                assert!((chi.mass(rho) - q(&|s| chi.value(s))).abs() < 1e-10);
                assert!((chi.moment(rho) - q(&|s| s * chi.value(s))).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        for chi in [LocalizingFunction::chi1k(3, 1.0), LocalizingFunction::chi2(1.0)] {
            for rho in [0.1, 0.4, 0.8] {
                let h = 1e-5;
                let fd1 = (chi.value(rho + h) - chi.value(rho - h)) / (2.0 * h);
                let fd2 = (chi.d1(rho + h) - chi.d1(rho - h)) / (2.0 * h);
                assert!((chi.d1(rho) - fd1).abs() < 1e-7);
                assert!((chi.d2(rho) - fd2).abs() < 1e-6);
            }
        }
    }
}
