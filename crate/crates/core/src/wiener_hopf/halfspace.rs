//! Periodic FFT solver for the model problem r₊B̂E̊u = f on the half-space
//! x₃ > 0 of the box [−L/2, L/2)³:
//!
//! u₊ = F⁻¹{[Ŝ⁺]⁻¹ F[θ F⁻¹([Ŝ⁻]⁻¹ F f*)]},
//!
//! where Ŝ(ξ′,ξ₃) = S(B)((1+|ξ′|)ω, ξ₃), ω = ξ′/|ξ′| (ω = e₁ at ξ′ = 0), and θ is
//! the Heaviside function of x₃ (½ on the plane x₃ = 0).

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::{factorize, CMatrix3, FrozenSymbol, MatrixPolynomial, WienerHopfError};

#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceResult {
    pub n: usize,
    pub box_size: f64,
    /// E̊r₊u₊ on the grid, index i + n(j + n·k) with k along x₃.
    pub u: Vec<[f64; 3]>,
    /// ‖r₊B̂E̊u − f‖/‖f‖ over the grid points with x₃ > 0.
    pub residual: f64,
}

struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for chunk in data.chunks_mut(n) {
            plan.process_with_scratch(chunk, &mut scratch);
        }
        for stride in [n, n * n] {
            for base in 0..n * n {
                // base enumerates the other two indices
                let start = if stride == n { (base / n) * n * n + base % n } else { base };
                for (m, v) in line.iter_mut().enumerate() {
                    *v = data[start + m * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (m, v) in line.iter().enumerate() {
                    data[start + m * stride] = *v;
                }
            }
        }
        if inverse {
            let s = 1.0 / (n * n * n) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn run_all(&self, field: &mut [Vec<Complex64>; 3], inverse: bool) {
        for c in field.iter_mut() {
            self.run(c, inverse);
        }
    }
}

/// Frequency of FFT bin `m` under the transform Fu(ξ) = ∫e^{ix·ξ}u dx, for which
/// functions supported in x₃ > 0 are analytic in Im ξ₃ > 0. The forward FFT uses
/// e^{−ix·ξ}, hence the sign.
fn frequency(m: usize, n: usize, box_size: f64) -> f64 {
    let s = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    -2.0 * PI * s / box_size
}

struct Column {
    poly: MatrixPolynomial,
    plus: (CMatrix3, CMatrix3),
    minus: (CMatrix3, CMatrix3),
    radius: f64,
}

fn apply_columns(
    field: &mut [Vec<Complex64>; 3],
    columns: &[Column],
    n: usize,
    box_size: f64,
    op: impl Fn(&Column, Complex64) -> CMatrix3,
) {
    for (ij, col) in columns.iter().enumerate() {
        for k in 0..n {
            let tau = Complex64::new(frequency(k, n, box_size), 0.0);
            let m = op(col, tau);
            let idx = ij + n * n * k;
            let v = nalgebra::Vector3::new(field[0][idx], field[1][idx], field[2][idx]);
            let w = m * v;
            for c in 0..3 {
                field[c][idx] = w[c];
            }
        }
    }
}

fn heaviside(k: usize, n: usize) -> f64 {
    match k.cmp(&(n / 2)) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Less => 0.0,
    }
}

fn mask(field: &mut [Vec<Complex64>; 3], n: usize) {
    for c in field.iter_mut() {
        for (idx, v) in c.iter_mut().enumerate() {
            *v *= heaviside(idx / (n * n), n);
        }
    }
}

/// Solves the half-space problem for the frozen symbol with right-hand side `f`
/// given on the whole box; only its restriction to x₃ > 0 matters.
pub fn halfspace_solve(
    symbol: &FrozenSymbol,
    f: &[[f64; 3]],
    n: usize,
    box_size: f64,
) -> Result<HalfspaceResult, WienerHopfError> {
    if n < 16 || !n.is_power_of_two() {
        return Err(WienerHopfError::BadGrid { n });
    }
    let total = n * n * n;
    if f.len() != total {
        return Err(WienerHopfError::FieldLength { got: f.len(), expected: total });
    }

    let mut columns = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let xi = [frequency(i, n, box_size), frequency(j, n, box_size)];
            let norm = xi[0].hypot(xi[1]);
            let omega = if norm > 0.0 { [xi[0] / norm, xi[1] / norm] } else { [1.0, 0.0] };
            let radius = 1.0 + norm;
            let poly = symbol.at([radius * omega[0], radius * omega[1]]);
            let fact = factorize(&poly)?;
            columns.push(Column {
                poly,
                plus: (fact.plus_lead, fact.plus_const),
                minus: (fact.minus_lead, fact.minus_const),
                radius,
            });
        }
    }
    let inv = |m: CMatrix3| m.try_inverse().unwrap_or_else(CMatrix3::zeros);
    let i = Complex64::i();

    let fft = Fft3::new(n);
    let source: [Vec<Complex64>; 3] =
        std::array::from_fn(|c| f.iter().map(|v| Complex64::new(v[c], 0.0)).collect());
    let mut work = source.clone();
    fft.run_all(&mut work, false);
    // [Ŝ⁻]⁻¹ = Θ⁻[Ã⁻]⁻¹
    apply_columns(&mut work, &columns, n, box_size, |col, tau| {
        inv(col.minus.0 * tau + col.minus.1) * (tau - i * col.radius)
    });
    fft.run_all(&mut work, true);
    mask(&mut work, n);
    fft.run_all(&mut work, false);
    // [Ŝ⁺]⁻¹ = Θ⁺[Ã⁺]⁻¹
    apply_columns(&mut work, &columns, n, box_size, |col, tau| {
        inv(col.plus.0 * tau + col.plus.1) * (tau + i * col.radius)
    });
    fft.run_all(&mut work, true);
    mask(&mut work, n);
    let u: Vec<[f64; 3]> = (0..total).map(|idx| std::array::from_fn(|c| work[c][idx].re)).collect();

    // r₊B̂E̊u with Ŝ = Ã/|ξ|²
    fft.run_all(&mut work, false);
    apply_columns(&mut work, &columns, n, box_size, |col, tau| {
        col.poly.eval(tau) / (tau * tau + col.radius * col.radius)
    });
    fft.run_all(&mut work, true);

    let (mut num, mut den) = (0.0, 0.0);
    for idx in (n * n * (n / 2 + 1))..total {
        for c in 0..3 {
            num += (work[c][idx] - source[c][idx]).norm_sqr();
            den += source[c][idx].norm_sqr();
        }
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(HalfspaceResult { n, box_size, u, residual })
}

/// Samples amplitude·exp(−|x − center|²/(2 width²)) on the grid of `halfspace_solve`.
pub fn gaussian_bump(n: usize, box_size: f64, center: [f64; 3], width: f64, amplitude: [f64; 3]) -> Vec<[f64; 3]> {
    let h = box_size / n as f64;
    let coord = |m: usize| -0.5 * box_size + m as f64 * h;
    let mut out = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let d2 = (coord(i) - center[0]).powi(2) + (coord(j) - center[1]).powi(2) + (coord(k) - center[2]).powi(2);
                let g = (-d2 / (2.0 * width * width)).exp();
                out.push(amplitude.map(|a| a * g));
            }
        }
    }
    out
}
