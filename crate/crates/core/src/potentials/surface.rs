//! Surface potentials V, W and boundary operators 𝒱, 𝒲, 𝒲′ by panel collocation,
//! plus numerical jump-relation checks.
//!
//! For every (panel, target) pair the quadrature produces [`SurfaceMoments`]:
//! ∫P_Δ dS, ∫∂ⱼP_Δ dS and ∫∂ⱼP_Δ nₖ dS over the curved panel. The coefficient
//! tensor is frozen at the panel centroid (W) or at the target (𝒲′).

use nalgebra::Matrix3;
use rayon::prelude::*;

use super::{KernelSet, PotentialError};
use crate::geometry::{Point, SurfaceMesh};
use crate::pde_model::{mu_of_tensor, Tensor4};
use crate::quadrature::gauss_legendre_on;

/// [∫P_Δ, ∫∂ⱼP_Δ (3), ∫∂ⱼP_Δ nₖ at 4 + 3k + j (9)].
pub type SurfaceMoments = [f64; 13];

/// Panels within this many diameters of the target are subdivided.
pub const NEAR_FACTOR: f64 = 2.0;
pub const MAX_DEPTH: u32 = 8;

const DUNAVANT4: [(f64, f64, f64); 6] = [
    (0.445948490915965, 0.445948490915965, 0.223381589678011),
    (0.108103018168070, 0.445948490915965, 0.223381589678011),
    (0.445948490915965, 0.108103018168070, 0.223381589678011),
    (0.091576213509771, 0.091576213509771, 0.109951743655322),
    (0.816847572980459, 0.091576213509771, 0.109951743655322),
    (0.091576213509771, 0.816847572980459, 0.109951743655322),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceTarget {
    pub point: Point,
    /// Panel whose collocation point this is (selects the singular rule).
    pub on_panel: Option<usize>,
    /// Normal used by the traction operator at this target.
    pub normal: Option<Point>,
}

impl SurfaceTarget {
    pub fn collocation(sm: &SurfaceMesh, panel: usize) -> Self {
        let p = &sm.panels[panel];
        Self { point: p.centroid, on_panel: Some(panel), normal: Some(p.normal) }
    }

    pub fn point(point: Point) -> Self {
        Self { point, on_panel: None, normal: None }
    }
}

fn accumulate(ks: &KernelSet, acc: &mut SurfaceMoments, y: &Point, x: &Point, n: &Point, w: f64) {
    let m = ks.point_moments(&(x - y));
    acc[0] += w * m[9];
    for j in 0..3 {
        let d = w * m[6 + j];
        acc[1 + j] += d;
        for k in 0..3 {
            acc[4 + 3 * k + j] += d * n[k];
        }
    }
}

fn flat_rule(ks: &KernelSet, sm: &SurfaceMesh, panel: usize, tri: &[Point; 3], y: &Point, acc: &mut SurfaceMoments) {
    let [a, b, c] = tri;
    let area = 0.5 * (b - a).cross(&(c - a)).norm();
    for &(s, t, w) in &DUNAVANT4 {
        let p = a + s * (b - a) + t * (c - a);
        let sp = sm.lift(panel, &p);
        accumulate(ks, acc, y, &sp.x, &sp.normal, w * area * sp.stretch);
    }
}

fn diameter(tri: &[Point; 3]) -> f64 {
    (tri[0] - tri[1]).norm().max((tri[1] - tri[2]).norm()).max((tri[2] - tri[0]).norm())
}

fn subdivided(ks: &KernelSet, sm: &SurfaceMesh, panel: usize, tri: [Point; 3], y: &Point, depth: u32, acc: &mut SurfaceMoments) {
    let centroid = sm.lift(panel, &((tri[0] + tri[1] + tri[2]) / 3.0)).x;
    let d = diameter(&tri);
    if depth >= MAX_DEPTH || (centroid - y).norm() > NEAR_FACTOR * d {
        flat_rule(ks, sm, panel, &tri, y, acc);
        return;
    }
    let [a, b, c] = tri;
    let (ab, bc, ca) = (0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a));
    for child in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
        subdivided(ks, sm, panel, child, y, depth + 1, acc);
    }
}

/// Polar rule around the collocation point of `panel`: a symmetric disc (odd
/// principal-value parts cancel between opposite nodes) plus the three
/// centroid-edge sectors outside it.
fn self_panel(ks: &KernelSet, sm: &SurfaceMesh, panel: usize) -> SurfaceMoments {
    let tri = sm.flat_triangle(panel);
    let c = (tri[0] + tri[1] + tri[2]) / 3.0;
    let y = sm.panels[panel].centroid;
    let nf = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
    let e1 = (tri[0] - c).normalize();
    let e2 = nf.cross(&e1);
    let to_plane = |q: &Point| {
        let d = q - c;
        (d.dot(&e1), d.dot(&e2))
    };
    let foot: Vec<(f64, f64)> = (0..3)
        .map(|i| {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            let t = b - a;
            let f = a + t * (c - a).dot(&t) / t.norm_squared();
            let (fx, fy) = to_plane(&f);
            ((fx * fx + fy * fy).sqrt(), fy.atan2(fx))
        })
        .collect();
    let rho0 = foot.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    let mut acc = [0.0; 13];
    let mut add = |rho: f64, theta: f64, w: f64| {
        let p = c + rho * (theta.cos() * e1 + theta.sin() * e2);
        let sp = sm.lift(panel, &p);
        accumulate(ks, &mut acc, &y, &sp.x, &sp.normal, w * rho * sp.stretch);
    };
    let n_theta = 32;
    for i in 0..n_theta {
        let theta = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n_theta as f64;
        for &(rho, w) in &gauss_legendre_on(12, 0.0, rho0) {
            add(rho, theta, w * 2.0 * std::f64::consts::PI / n_theta as f64);
        }
    }
    for i in 0..3 {
        let (pa, pb) = (to_plane(&tri[i]), to_plane(&tri[(i + 1) % 3]));
        let ta = pa.1.atan2(pa.0);
        let mut tb = pb.1.atan2(pb.0);
        while tb < ta {
            tb += 2.0 * std::f64::consts::PI;
        }
        let (d, phi) = foot[i];
        for &(theta, wt) in &gauss_legendre_on(16, ta, tb) {
            let rho_max = d / (theta - phi).cos();
            if rho_max <= rho0 {
                continue;
            }
            for &(rho, wr) in &gauss_legendre_on(10, rho0, rho_max) {
                add(rho, theta, wt * wr);
            }
        }
    }
    acc
}

/// Moments of one panel seen from one target.
pub fn panel_moments(ks: &KernelSet, sm: &SurfaceMesh, panel: usize, target: &SurfaceTarget) -> SurfaceMoments {
    if target.on_panel == Some(panel) {
        return self_panel(ks, sm, panel);
    }
    let p = &sm.panels[panel];
    let y = &target.point;
    let dist = (p.centroid - y).norm();
    let mut acc = [0.0; 13];
    if let Some(reach) = ks.reach() {
        if dist - p.diameter >= reach {
            return acc;
        }
    }
    // No one-point far rule: the collocation point is not the area centroid of
    // the curved panel, and that first-moment error accumulates over panels.
    subdivided(ks, sm, panel, sm.flat_triangle(panel), y, 0, &mut acc);
    acc
}

/// Sparse rows of panel moments for a list of targets.
#[derive(Debug, Clone)]
pub struct SurfaceOperator {
    pub targets: Vec<SurfaceTarget>,
    rows: Vec<Vec<(u32, SurfaceMoments)>>,
    /// Coefficient tensor at each panel centroid.
    panel_tensors: Vec<Tensor4>,
    /// Coefficient tensor at each target.
    target_tensors: Vec<Tensor4>,
    n_panels: usize,
}

impl SurfaceOperator {
    pub fn new(ks: &KernelSet, sm: &SurfaceMesh, targets: Vec<SurfaceTarget>) -> Result<Self, PotentialError> {
        let reach = ks.reach();
        let rows = targets
            .par_iter()
            .map(|t| {
                sm.panels
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| reach.is_none_or(|r| (p.centroid - t.point).norm() - p.diameter < r))
                    .map(|(j, _)| (j as u32, panel_moments(ks, sm, j, t)))
                    .filter(|(_, m)| m.iter().any(|&v| v != 0.0))
                    .collect()
            })
            .collect();
        let panel_tensors =
            sm.panels.iter().map(|p| ks.field.tensor(p.centroid.into())).collect::<Result<_, _>>()?;
        let target_tensors = targets.iter().map(|t| ks.field.tensor(t.point.into())).collect::<Result<_, _>>()?;
        Ok(Self { targets, rows, panel_tensors, target_tensors, n_panels: sm.len() })
    }

    /// All collocation points as targets.
    pub fn on_surface(ks: &KernelSet, sm: &SurfaceMesh) -> Result<Self, PotentialError> {
        Self::new(ks, sm, (0..sm.len()).map(|i| SurfaceTarget::collocation(sm, i)).collect())
    }

    pub fn rows(&self) -> &[Vec<(u32, SurfaceMoments)>] {
        &self.rows
    }

    fn check(&self, density: &[[f64; 3]]) {
        assert_eq!(density.len(), self.n_panels, "density length must equal the panel count");
    }

    /// Vψ(y) = −∫_S P(x−y)ψ(x) dS (𝒱 on collocation targets).
    pub fn single_layer(&self, psi: &[[f64; 3]]) -> Vec<[f64; 3]> {
        self.check(psi);
        self.rows
            .iter()
            .map(|row| {
                let mut out = [0.0; 3];
                for (j, m) in row {
                    for r in 0..3 {
                        out[r] -= m[0] * psi[*j as usize][r];
                    }
                }
                out
            })
            .collect()
    }

    /// Wφ(y)_r = −∫_S a^{pr}_{kj}(x) nₖ(x) ∂ⱼP_Δ(x−y) φ_p(x) dS (𝒲 on collocation targets).
    pub fn double_layer(&self, phi: &[[f64; 3]]) -> Vec<[f64; 3]> {
        self.check(phi);
        self.rows
            .iter()
            .map(|row| {
                let mut out = [0.0; 3];
                for (j, m) in row {
                    let (a, f) = (&self.panel_tensors[*j as usize], &phi[*j as usize]);
                    for r in 0..3 {
                        for p in 0..3 {
                            let mut s = 0.0;
                            for k in 0..3 {
                                for jj in 0..3 {
                                    s += a[p][r][k][jj] * m[4 + 3 * k + jj];
                                }
                            }
                            out[r] -= s * f[p];
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Co-normal derivative of Vψ at each target with the target's normal
    /// (𝒲′ψ on collocation targets): a^{rq}_{kj}(y) nₖ(y) ∫∂ⱼP_Δ(x−y) ψ_q dS.
    pub fn traction_of_single_layer(&self, psi: &[[f64; 3]]) -> Vec<[f64; 3]> {
        self.check(psi);
        self.rows
            .iter()
            .zip(&self.targets)
            .zip(&self.target_tensors)
            .map(|((row, t), a)| {
                let n = t.normal.expect("traction needs a target normal");
                let mut grad = [[0.0; 3]; 3];
                for (j, m) in row {
                    for q in 0..3 {
                        for jj in 0..3 {
                            grad[q][jj] += m[1 + jj] * psi[*j as usize][q];
                        }
                    }
                }
                let mut out = [0.0; 3];
                for r in 0..3 {
                    for q in 0..3 {
                        for k in 0..3 {
                            for jj in 0..3 {
                                out[r] += a[r][q][k][jj] * n[k] * grad[q][jj];
                            }
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Diagonal 3×3 block of 𝒱 for collocation target `i` (scalar times identity).
    pub fn single_layer_self(&self, i: usize) -> f64 {
        let panel = self.targets[i].on_panel.expect("self block needs a collocation target");
        self.rows[i].iter().find(|(j, _)| *j as usize == panel).map_or(0.0, |(_, m)| -m[0])
    }

    /// Explicit 3×3 blocks (target, panel, V block, W block) of every stored pair.
    pub fn for_each_block(&self, mut visit: impl FnMut(usize, usize, &Matrix3<f64>, &Matrix3<f64>)) {
        for (t, row) in self.rows.iter().enumerate() {
            for (j, m) in row {
                let a = &self.panel_tensors[*j as usize];
                let v = Matrix3::identity() * -m[0];
                let w = Matrix3::from_fn(|r, p| {
                    let mut s = 0.0;
                    for k in 0..3 {
                        for jj in 0..3 {
                            s += a[p][r][k][jj] * m[4 + 3 * k + jj];
                        }
                    }
                    -s
                });
                visit(t, *j as usize, &v, &w);
            }
        }
    }

    /// Number of stored (target, panel) pairs.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// One-sided limit of a smooth function of the offset δ from samples at
/// δ = h·fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extrapolation {
    /// δ ∈ {h, h/2}: 2F(h/2) − F(h), error O(h²).
    Linear,
    /// δ ∈ {h, h/2, h/4}: (8F(h/4) − 6F(h/2) + F(h))/3, error O(h³).
    #[default]
    Quadratic,
}

impl Extrapolation {
    pub fn fractions(self) -> &'static [f64] {
        match self {
            Extrapolation::Linear => &[1.0, 0.5],
            Extrapolation::Quadratic => &[1.0, 0.5, 0.25],
        }
    }

    fn weights(self) -> &'static [f64] {
        match self {
            Extrapolation::Linear => &[-1.0, 2.0],
            Extrapolation::Quadratic => &[1.0 / 3.0, -2.0, 8.0 / 3.0],
        }
    }

    /// Extrapolated value from samples ordered as [`Self::fractions`].
    pub fn combine(self, samples: &[[f64; 3]]) -> Point {
        samples.iter().zip(self.weights()).map(|(s, w)| *w * Point::from(*s)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Ω⁺, approached along −n.
    Interior,
    /// Ω⁻, approached along +n.
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    /// γ±Vψ = 𝒱ψ.
    SingleLayer,
    /// γ±Wφ = ∓μφ + 𝒲φ.
    DoubleLayer,
    /// T±Vψ = ±μψ + 𝒲′ψ.
    Traction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpReport {
    /// max_i |error_i| / max_i |reference_i|.
    pub max_rel: f64,
    /// Area-weighted L² error over the L² norm of the reference.
    pub l2_rel: f64,
}

/// Compares the limit of the volume-side potential (Richardson extrapolation
/// from offsets along ∓n, scaled by the panel diameter) with the boundary
/// operator plus its jump term.
pub fn jump_test(
    ks: &KernelSet,
    sm: &SurfaceMesh,
    density: &[[f64; 3]],
    side: Side,
    kind: JumpKind,
    rule: Extrapolation,
) -> Result<JumpReport, PotentialError> {
    let sign = match side {
        Side::Interior => -1.0,
        Side::Exterior => 1.0,
    };
    let fractions = rule.fractions();
    let mut near_targets = Vec::with_capacity(fractions.len() * sm.len());
    for p in &sm.panels {
        for delta in fractions.iter().map(|f| f * p.diameter) {
            near_targets.push(SurfaceTarget { point: p.centroid + sign * delta * p.normal, on_panel: None, normal: Some(p.normal) });
        }
    }
    let near = SurfaceOperator::new(ks, sm, near_targets)?;
    let on = SurfaceOperator::on_surface(ks, sm)?;
    let apply = |op: &SurfaceOperator| match kind {
        JumpKind::SingleLayer => op.single_layer(density),
        JumpKind::DoubleLayer => op.double_layer(density),
        JumpKind::Traction => op.traction_of_single_layer(density),
    };
    let (off, direct) = (apply(&near), apply(&on));
    let (mut err_max, mut ref_max, mut err_l2, mut ref_l2) = (0.0f64, 0.0f64, 0.0, 0.0);
    for (i, p) in sm.panels.iter().enumerate() {
        let mu: Matrix3<f64> = mu_of_tensor(&on.target_tensors[i], p.normal.into());
        let jump = match kind {
            JumpKind::SingleLayer => Point::zeros(),
            JumpKind::DoubleLayer => sign * (mu * Point::from(density[i])),
            JumpKind::Traction => -sign * (mu * Point::from(density[i])),
        };
        let limit = rule.combine(&off[fractions.len() * i..fractions.len() * (i + 1)]);
        let reference = Point::from(direct[i]) + jump;
        let e = (limit - reference).norm();
        err_max = err_max.max(e);
        ref_max = ref_max.max(reference.norm());
        err_l2 += e * e * p.area;
        ref_l2 += reference.norm_squared() * p.area;
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    Ok(JumpReport { max_rel: ratio(err_max, ref_max), l2_rel: ratio(err_l2.sqrt(), ref_l2.sqrt()) })
}
