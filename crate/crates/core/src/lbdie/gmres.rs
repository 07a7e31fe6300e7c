//! Restarted GMRES with right preconditioning.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final true relative residual ‖b − Ax‖/‖b‖.
    pub residual: f64,
    /// Estimated relative residual after each inner iteration.
    pub history: Vec<f64>,
    /// σ_max/σ_min of the last Hessenberg matrix (preconditioned operator).
    pub condition_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 300, restart: 60 }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves A x = b with A applied through `apply` and the right preconditioner
/// M⁻¹ through `precond`. Returns the outcome even without convergence; the
/// caller decides whether the residual is acceptable.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    settings: KrylovSettings,
) -> KrylovOutcome {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    let mut condition_estimate = 1.0;
    if b_norm == 0.0 {
        return KrylovOutcome { x, iterations: 0, residual: 0.0, history, condition_estimate };
    }
    let mut iterations = 0;
    let residual_of = |x: &[f64]| {
        let ax = apply(x);
        b.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<f64>>()
    };
    let mut r = b.to_vec();
    loop {
        let beta = norm(&r);
        if beta / b_norm <= settings.tol || iterations >= settings.max_iter {
            break;
        }
        let m = settings.restart.min(settings.max_iter - iterations);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m {
            let mut w = apply(&precond(&basis[k]));
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[(i, k)] = hij;
                w.iter_mut().zip(v).for_each(|(w, v)| *w -= hij * v);
            }
            let wn = norm(&w);
            h[(k + 1, k)] = wn;
            for i in 0..k {
                let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let rho = h[(k, k)].hypot(h[(k + 1, k)]);
            (cs[k], sn[k]) = if rho == 0.0 { (1.0, 0.0) } else { (h[(k, k)] / rho, h[(k + 1, k)] / rho) };
            h[(k, k)] = rho;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            iterations += 1;
            let estimate = g[k].abs() / b_norm;
            history.push(estimate);
            if estimate <= settings.tol || wn == 0.0 || !estimate.is_finite() {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let tri = h.view((0, 0), (k, k)).upper_triangle();
        if let Some(y) = tri.solve_upper_triangular(&DVector::from_column_slice(&g[..k])) {
            let mut z = vec![0.0; n];
            for (yi, v) in y.iter().zip(&basis) {
                z.iter_mut().zip(v).for_each(|(z, v)| *z += yi * v);
            }
            x.iter_mut().zip(precond(&z)).for_each(|(x, d)| *x += d);
        }
        if tri.iter().all(|v| v.is_finite()) {
            let sv = tri.singular_values();
            let (smax, smin) = (sv.max(), sv.min());
            condition_estimate = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        }
        r = residual_of(&x);
        if !norm(&r).is_finite() {
            break;
        }
    }
    let residual = norm(&r) / b_norm;
    KrylovOutcome { x, iterations, residual, history, condition_estimate }
}
