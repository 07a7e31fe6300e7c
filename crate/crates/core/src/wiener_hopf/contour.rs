//! Trapezoidal contour integrals on circles and the Cauchy-type projections.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{CMatrix3, WienerHopfError};

pub const CONTOUR_NODES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

impl Circle {
    /// (1/2πi)∮ f(z) dz, anticlockwise, with `nodes` trapezoidal nodes.
    pub fn integrate(&self, nodes: usize, f: impl Fn(Complex64) -> CMatrix3) -> CMatrix3 {
        let mut acc = CMatrix3::zeros();
        for k in 0..nodes {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / nodes as f64);
            acc += f(self.center + e * self.radius) * (e * self.radius);
        }
        acc.unscale(nodes as f64)
    }
}

/// A cycle made of circles, each around one cluster of enclosed points.
/// Circles may cross; each only has to keep foreign singularities outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub circles: Vec<Circle>,
}

fn centroid(points: &[Complex64]) -> Complex64 {
    points.iter().sum::<Complex64>() / points.len() as f64
}

fn nearest(from: Complex64, points: impl Iterator<Item = Complex64>) -> f64 {
    points.map(|q| (q - from).norm()).fold(f64::INFINITY, f64::min)
}

impl Contour {
    /// Enclosed points closer to each other than half their distance to the
    /// excluded set share a circle. Each circle is centred at its cluster mean
    /// with radius halfway between the cluster spread and the nearest foreign point.
    pub fn around(enclosed: &[Complex64], excluded: &[Complex64]) -> Result<Self, WienerHopfError> {
        if enclosed.is_empty() {
            return Err(WienerHopfError::ContourFailure);
        }
        let mut clusters: Vec<Vec<Complex64>> = enclosed.iter().map(|&p| vec![p]).collect();
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let (ca, cb) = (centroid(&clusters[a]), centroid(&clusters[b]));
                    let gap = nearest(ca, excluded.iter().copied()).min(nearest(cb, excluded.iter().copied()));
                    let dist = (ca - cb).norm();
                    if dist < 0.5 * gap && best.map_or(true, |(_, _, d)| dist < d) {
                        best = Some((a, b, dist));
                    }
                }
            }
            match best {
                Some((a, b, _)) => {
                    let merged = clusters.swap_remove(b);
                    clusters[a].extend(merged);
                }
                None => break,
            }
        }
        let mut circles = Vec::with_capacity(clusters.len());
        for (idx, cluster) in clusters.iter().enumerate() {
            let center = centroid(cluster);
            let spread = cluster.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
            let foreign = excluded
                .iter()
                .copied()
                .chain(clusters.iter().enumerate().filter(|(j, _)| *j != idx).flat_map(|(_, c)| c.iter().copied()));
            let gap = nearest(center, foreign);
            if !(gap > 1.2 * spread) {
                return Err(WienerHopfError::ContourFailure);
            }
            let radius = if gap.is_finite() { 0.5 * (spread + gap) } else { 2.0 * spread.max(1.0) };
            circles.push(Circle { center, radius });
        }
        Ok(Self { circles })
    }

    pub fn integrate(&self, nodes: usize, f: impl Fn(Complex64) -> CMatrix3) -> CMatrix3 {
        self.circles.iter().map(|c| c.integrate(nodes, &f)).sum()
    }
}

/// A matrix function rational in ξ₃ with known poles in each half-plane.
pub struct RationalSymbol<F: Fn(Complex64) -> CMatrix3> {
    pub eval: F,
    pub lower_poles: Vec<Complex64>,
    pub upper_poles: Vec<Complex64>,
}

/// Π⁺h(ξ₃) = (i/2π) lim ∫ h(η)/(ξ₃ + i0 − η) dη: the sum of residues of
/// h(τ)/(ξ₃ − τ) at the lower-half-plane poles of h.
pub fn pi_plus<F: Fn(Complex64) -> CMatrix3>(h: &RationalSymbol<F>, xi3: Complex64) -> Result<CMatrix3, WienerHopfError> {
    if h.lower_poles.is_empty() {
        return Ok(CMatrix3::zeros());
    }
    let mut excluded = h.upper_poles.clone();
    excluded.push(xi3);
    let contour = Contour::around(&h.lower_poles, &excluded)?;
    Ok(contour.integrate(CONTOUR_NODES, |tau| (h.eval)(tau) / (xi3 - tau)))
}

/// Π⁻h(ξ₃) = −(i/2π) lim ∫ h(η)/(ξ₃ − i0 − η) dη: residues at the upper poles.
pub fn pi_minus<F: Fn(Complex64) -> CMatrix3>(h: &RationalSymbol<F>, xi3: Complex64) -> Result<CMatrix3, WienerHopfError> {
    if h.upper_poles.is_empty() {
        return Ok(CMatrix3::zeros());
    }
    let mut excluded = h.lower_poles.clone();
    excluded.push(xi3);
    let contour = Contour::around(&h.upper_poles, &excluded)?;
    Ok(contour.integrate(CONTOUR_NODES, |tau| (h.eval)(tau) / (xi3 - tau)))
}

/// Π′h = −(1/2π)∮_{Γ⁻} h(ζ) dζ with Γ⁻ around the lower poles; zero when h is
/// holomorphic in the lower half-plane.
pub fn pi_prime<F: Fn(Complex64) -> CMatrix3>(h: &RationalSymbol<F>) -> Result<CMatrix3, WienerHopfError> {
    if h.lower_poles.is_empty() {
        return Ok(CMatrix3::zeros());
    }
    let contour = Contour::around(&h.lower_poles, &h.upper_poles)?;
    Ok(contour.integrate(CONTOUR_NODES, &h.eval) * Complex64::new(0.0, -1.0))
}
