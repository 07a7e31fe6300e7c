//! Volume potentials over a cut-cell grid: the Newtonian potential 𝒫, the singular
//! operator 𝒩 and the gradient operator 𝒬, all through per-cell kernel [`Moments`].
//!
//! Near sources (within two cells in the ∞-norm) are integrated by polar rays cast
//! from the target: each ray is walked through the grid and every crossed cell
//! receives the exact radial integral over its segment, so the self cell is a
//! principal value and cut cells are clipped by the domain boundary. Regular
//! target/source pairs reuse a translation-invariant offset table.

use log::debug;
use nalgebra::Matrix3;

use super::{KernelSet, Moments, PotentialError, P_SLOT, SYM_PAIRS};
use crate::expr::ExprError;
use crate::geometry::{Domain, Point, VolumeMesh};
use crate::pde_model::{CoefficientField, Gradient};
use crate::quadrature::gauss_legendre_on;

/// Half-width (in cells) of the block integrated by polar rays.
pub const NEAR_RADIUS: isize = 2;
/// Gauss points per axis on each cell face of the near block, for per-target rays.
pub const RAY_ORDER: usize = 3;
/// Same, for the offset table.
pub const TABLE_RAY_ORDER: usize = 8;

/// Density layout per cell: component r of the output pairs with entries `r*10 + m`.
pub type CellDensity = [f64; 30];

/// Which moments a density actually uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSet {
    /// Second and first derivatives (𝒩).
    Derivatives,
    /// First derivatives only (𝒬).
    Gradient,
    /// The parametrix itself (𝒫).
    Parametrix,
}

impl MomentSet {
    fn indices(self) -> &'static [usize] {
        match self {
            MomentSet::Derivatives => &[0, 1, 2, 3, 4, 5, 6, 7, 8],
            MomentSet::Gradient => &[6, 7, 8],
            MomentSet::Parametrix => &[9],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeTarget {
    /// Centroid of a volume cell.
    Cell(usize),
    Point(Point),
}

/// Cube-face directions from a point inside the box [lo, hi].
struct Ray {
    eta: Point,
    weight: f64,
    length: f64,
}

fn face_rays(y: &Point, lo: &Point, hi: &Point, squares: [usize; 3], order: usize) -> Vec<Ray> {
    let unit = gauss_legendre_on(order, 0.0, 1.0);
    let mut rays = Vec::with_capacity(6 * squares[0] * squares[1] * order * order);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let (du, dv) = ((hi[u] - lo[u]) / squares[u] as f64, (hi[v] - lo[v]) / squares[v] as f64);
        for plane in [lo[axis], hi[axis]] {
            let d = (plane - y[axis]).abs();
            for a in 0..squares[u] {
                for b in 0..squares[v] {
                    for &(s, ws) in &unit {
                        for &(t, wt) in &unit {
                            let mut q = Point::zeros();
                            q[axis] = plane;
                            q[u] = lo[u] + (a as f64 + s) * du;
                            q[v] = lo[v] + (b as f64 + t) * dv;
                            let dir = q - y;
                            let len = dir.norm();
                            rays.push(Ray { eta: dir / len, weight: ws * wt * du * dv * d / len.powi(3), length: len });
                        }
                    }
                }
            }
        }
    }
    rays
}

/// Visits the grid slots crossed by `y + tη`, t ∈ [0, t_stop], as (slot, t_in, t_out).
fn walk(y: &Point, eta: &Point, t_stop: f64, origin: &Point, spacing: &Point, mut visit: impl FnMut([isize; 3], f64, f64)) {
    let mut slot: [isize; 3] = std::array::from_fn(|a| ((y[a] - origin[a]) / spacing[a]).floor() as isize);
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let mut step = [0isize; 3];
    for a in 0..3 {
        if eta[a] > 0.0 {
            step[a] = 1;
            t_max[a] = (origin[a] + (slot[a] + 1) as f64 * spacing[a] - y[a]) / eta[a];
            t_delta[a] = spacing[a] / eta[a];
        } else if eta[a] < 0.0 {
            step[a] = -1;
            t_max[a] = (origin[a] + slot[a] as f64 * spacing[a] - y[a]) / eta[a];
            t_delta[a] = -spacing[a] / eta[a];
        }
    }
    let mut t = 0.0;
    while t < t_stop {
        let a = (0..3).min_by(|&i, &j| t_max[i].total_cmp(&t_max[j])).unwrap_or(0);
        let t_next = t_max[a].min(t_stop);
        // A target on a grid plane starts with an empty segment in the wrong slot.
        if t_next > t {
            visit(slot, t, t_next);
        }
        t = t_next;
        slot[a] += step[a];
        t_max[a] += t_delta[a];
    }
}

/// Polar-ray moments of all cells in the block of slots within `radius` of `center`.
/// `cell_of` maps a slot to a cell id; rays are clipped at the domain exit.
#[allow(clippy::too_many_arguments)]
fn ray_moments(
    ks: &KernelSet,
    y: &Point,
    center: [isize; 3],
    radius: isize,
    origin: &Point,
    spacing: &Point,
    domain: Option<&Domain>,
    order: usize,
    cell_of: impl Fn([isize; 3]) -> Option<usize>,
) -> Vec<(usize, Moments)> {
    let side = (2 * radius + 1) as usize;
    let lo = origin + spacing.component_mul(&Point::new(
        (center[0] - radius) as f64,
        (center[1] - radius) as f64,
        (center[2] - radius) as f64,
    ));
    let hi = lo + spacing * side as f64;
    let rho_ref = spacing.min();
    let mut acc = vec![[0.0; 10]; side * side * side];
    let mut touched = vec![false; side * side * side];
    for ray in face_rays(y, &lo, &hi, [side; 3], order) {
        let t_stop = match domain {
            Some(d) => ray.length.min(d.ray_exit(y, &ray.eta)),
            None => ray.length,
        };
        let mut prev = [0.0; 10];
        walk(y, &ray.eta, t_stop, origin, spacing, |slot, _, t_out| {
            let g = ks.radial_antiderivative(&ray.eta, t_out, rho_ref);
            let local: [isize; 3] = std::array::from_fn(|a| slot[a] - center[a] + radius);
            if local.iter().all(|&l| l >= 0 && l < side as isize) {
                let idx = local[0] as usize + side * (local[1] as usize + side * local[2] as usize);
                for m in 0..10 {
                    acc[idx][m] += ray.weight * (g[m] - prev[m]);
                }
                touched[idx] = true;
            }
            prev = g;
        });
    }
    let mut out = Vec::new();
    for (idx, m) in acc.into_iter().enumerate() {
        if !touched[idx] {
            continue;
        }
        let l = [idx % side, (idx / side) % side, idx / (side * side)];
        let slot = std::array::from_fn(|a| center[a] - radius + l[a] as isize);
        if let Some(c) = cell_of(slot) {
            out.push((c, m));
        }
    }
    out
}

fn add_scaled(acc: &mut Moments, m: &Moments, w: f64) {
    for i in 0..10 {
        acc[i] += w * m[i];
    }
}

/// Gauss rule over the box [lo, lo + spacing].
fn box_moments(ks: &KernelSet, y: &Point, lo: &Point, spacing: &Point, order: usize) -> Moments {
    let rules: [Vec<(f64, f64)>; 3] = std::array::from_fn(|a| gauss_legendre_on(order, lo[a], lo[a] + spacing[a]));
    let mut acc = [0.0; 10];
    for &(x, wx) in &rules[0] {
        for &(yy, wy) in &rules[1] {
            for &(z, wz) in &rules[2] {
                add_scaled(&mut acc, &ks.point_moments(&(Point::new(x, yy, z) - y)), wx * wy * wz);
            }
        }
    }
    acc
}

/// Moments of a regular cell at every offset from a regular target, by translation invariance.
#[derive(Debug, Clone)]
struct OffsetTable {
    radius: isize,
    /// (offset, moments) for offsets whose cell can reach inside the support.
    entries: Vec<([isize; 3], Moments)>,
}

impl OffsetTable {
    fn build(ks: &KernelSet, spacing: &Point, reach: f64) -> Self {
        let radius = (reach / spacing.min()).ceil() as isize + 1;
        let origin = -0.5 * spacing;
        let side = 2 * NEAR_RADIUS + 1;
        let near = ray_moments(ks, &Point::zeros(), [0; 3], NEAR_RADIUS, &origin, spacing, None, TABLE_RAY_ORDER, |s| {
            Some(((s[0] + NEAR_RADIUS) + side * ((s[1] + NEAR_RADIUS) + side * (s[2] + NEAR_RADIUS))) as usize)
        });
        let mut entries = Vec::new();
        for (idx, m) in near {
            let idx = idx as isize;
            let o = [idx % side - NEAR_RADIUS, (idx / side) % side - NEAR_RADIUS, idx / (side * side) - NEAR_RADIUS];
            entries.push((o, m));
        }
        for k in -radius..=radius {
            for j in -radius..=radius {
                for i in -radius..=radius {
                    let cheb = i.abs().max(j.abs()).max(k.abs());
                    if cheb <= NEAR_RADIUS {
                        continue;
                    }
                    let lo = origin + spacing.component_mul(&Point::new(i as f64, j as f64, k as f64));
                    if box_distance(&Point::zeros(), &lo, spacing) >= reach {
                        continue;
                    }
                    let order = if cheb == NEAR_RADIUS + 1 { 4 } else { 3 };
                    entries.push(([i, j, k], box_moments(ks, &Point::zeros(), &lo, spacing, order)));
                }
            }
        }
        Self { radius, entries }
    }
}

/// Distance from `y` to the box [lo, lo + spacing].
fn box_distance(y: &Point, lo: &Point, spacing: &Point) -> f64 {
    let mut d2 = 0.0;
    for a in 0..3 {
        let hi = lo[a] + spacing[a];
        let d = if y[a] < lo[a] { lo[a] - y[a] } else if y[a] > hi { y[a] - hi } else { 0.0 };
        d2 += d * d;
    }
    d2.sqrt()
}

#[derive(Debug, Clone)]
enum Row {
    /// Centroid of a regular cell: regular sources from the offset table,
    /// stored polar moments for nearby cut sources, midpoint for distant cut sources.
    Regular { cell: usize, near_cut: Vec<(u32, Moments)>, far_cut: Vec<u32> },
    /// Any other point: stored moments for the block within NEAR_RADIUS + 1, midpoint beyond.
    General { point: Point, near: Vec<(u32, Moments)>, far: Vec<u32> },
}

/// Matrix-free volume operator for a fixed set of targets.
#[derive(Debug, Clone)]
pub struct VolumeOperator {
    ks: KernelSet,
    spacing: Point,
    dims: [usize; 3],
    table: OffsetTable,
    rows: Vec<Row>,
    centroids: Vec<Point>,
    volumes: Vec<f64>,
    regular: Vec<bool>,
    index: Vec<[usize; 3]>,
    targets: Vec<Point>,
}

impl VolumeOperator {
    pub fn new(ks: &KernelSet, vm: &VolumeMesh, targets: &[VolumeTarget]) -> Result<Self, PotentialError> {
        // χ ≡ 1: every cell interacts with every target.
        let reach = ks.reach().unwrap_or(vm.domain.diameter() + vm.h());
        let spacing = vm.spacing;
        let table = OffsetTable::build(ks, &spacing, reach);
        let radius = table.radius;
        let mut rows = Vec::with_capacity(targets.len());
        let mut points = Vec::with_capacity(targets.len());
        for (ti, t) in targets.iter().enumerate() {
            let (point, regular_cell) = match *t {
                VolumeTarget::Cell(c) => (vm.cells[c].centroid, vm.cells[c].regular.then_some(c)),
                VolumeTarget::Point(p) => (p, None),
            };
            if !vm.domain.contains(&point) {
                return Err(PotentialError::TargetOutside { index: ti, point: point.into() });
            }
            points.push(point);
            let slot = vm.slot_of(&point);
            let cell_of = |s: [isize; 3]| vm.cell_at(s[0], s[1], s[2]);
            let in_reach = |c: usize| box_distance(&point, &vm.cell_lo(c), &spacing) < reach;
            let near_block = || {
                ray_moments(ks, &point, slot, NEAR_RADIUS, &vm.origin, &spacing, Some(&vm.domain), RAY_ORDER, cell_of)
            };
            let row = if let Some(cell) = regular_cell {
                let block_regular = cube_slots(slot, NEAR_RADIUS)
                    .all(|s| cell_of(s).is_some_and(|c| vm.cells[c].regular));
                let near_cut = if block_regular {
                    Vec::new()
                } else {
                    near_block().into_iter().filter(|(c, _)| !vm.cells[*c].regular).map(|(c, m)| (c as u32, m)).collect()
                };
                let far_cut = cube_slots(slot, radius)
                    .filter(|s| cheb(s, &slot) > NEAR_RADIUS)
                    .filter_map(cell_of)
                    .filter(|&c| !vm.cells[c].regular && in_reach(c))
                    .map(|c| c as u32)
                    .collect();
                Row::Regular { cell, near_cut, far_cut }
            } else {
                let mut near: Vec<(u32, Moments)> = near_block().into_iter().map(|(c, m)| (c as u32, m)).collect();
                let mut far = Vec::new();
                for s in cube_slots(slot, radius).filter(|s| cheb(s, &slot) > NEAR_RADIUS) {
                    let Some(c) = cell_of(s) else { continue };
                    if !in_reach(c) {
                        continue;
                    }
                    if cheb(&s, &slot) == NEAR_RADIUS + 1 {
                        let cell = &vm.cells[c];
                        let m = if cell.regular {
                            box_moments(ks, &point, &vm.cell_lo(c), &spacing, 2)
                        } else {
                            let mut m = ks.point_moments(&(cell.centroid - point));
                            m.iter_mut().for_each(|v| *v *= cell.volume);
                            m
                        };
                        near.push((c as u32, m));
                    } else {
                        far.push(c as u32);
                    }
                }
                Row::General { point, near, far }
            };
            rows.push(row);
        }
        let stored: usize = rows
            .iter()
            .map(|r| match r {
                Row::Regular { near_cut, far_cut, .. } => near_cut.len() + far_cut.len(),
                Row::General { near, far, .. } => near.len() + far.len(),
            })
            .sum();
        debug!("volume operator: {} targets, {} table offsets, {stored} stored pairs", rows.len(), table.entries.len());
        Ok(Self {
            ks: ks.clone(),
            spacing,
            dims: vm.dims,
            table,
            rows,
            centroids: vm.cells.iter().map(|c| c.centroid).collect(),
            volumes: vm.cells.iter().map(|c| c.volume).collect(),
            regular: vm.cells.iter().map(|c| c.regular).collect(),
            index: vm.cells.iter().map(|c| c.index).collect(),
            targets: points,
        })
    }

    pub fn targets(&self) -> &[Point] {
        &self.targets
    }

    pub fn kernels(&self) -> &KernelSet {
        &self.ks
    }

    /// Σ over source cells of Σ_m moments_m · density[r*10 + m], per target.
    pub fn apply(&self, density: &[CellDensity], set: MomentSet) -> Vec<[f64; 3]> {
        assert_eq!(density.len(), self.centroids.len(), "density length must equal the cell count");
        let idx = set.indices();
        let pad = self.table.radius as usize;
        let pdims = self.dims.map(|d| d + 2 * pad);
        let mut grid = vec![[0.0; 30]; pdims[0] * pdims[1] * pdims[2]];
        for (c, d) in density.iter().enumerate() {
            if self.regular[c] {
                let [i, j, k] = self.index[c];
                grid[(i + pad) + pdims[0] * ((j + pad) + pdims[1] * (k + pad))] = *d;
            }
        }
        let stride = [1isize, pdims[0] as isize, (pdims[0] * pdims[1]) as isize];
        let offsets: Vec<(isize, &Moments)> = self
            .table
            .entries
            .iter()
            .map(|(o, m)| (o[0] * stride[0] + o[1] * stride[1] + o[2] * stride[2], m))
            .collect();
        let contract = |out: &mut [f64; 3], m: &Moments, d: &CellDensity, w: f64| {
            for r in 0..3 {
                let mut s = 0.0;
                for &i in idx {
                    s += m[i] * d[r * 10 + i];
                }
                out[r] += w * s;
            }
        };
        let midpoint = |out: &mut [f64; 3], y: &Point, c: usize| {
            let m = self.ks.point_moments(&(self.centroids[c] - y));
            contract(out, &m, &density[c], self.volumes[c]);
        };
        self.rows
            .iter()
            .map(|row| {
                let mut out = [0.0; 3];
                match row {
                    Row::Regular { cell, near_cut, far_cut } => {
                        let [i, j, k] = self.index[*cell];
                        let base = ((i + pad) + pdims[0] * ((j + pad) + pdims[1] * (k + pad))) as isize;
                        for &(off, m) in &offsets {
                            contract(&mut out, m, &grid[(base + off) as usize], 1.0);
                        }
                        for (c, m) in near_cut {
                            contract(&mut out, m, &density[*c as usize], 1.0);
                        }
                        let y = self.centroids[*cell];
                        for &c in far_cut {
                            midpoint(&mut out, &y, c as usize);
                        }
                    }
                    Row::General { point, near, far } => {
                        for (c, m) in near {
                            contract(&mut out, m, &density[*c as usize], 1.0);
                        }
                        for &c in far {
                            midpoint(&mut out, point, c as usize);
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Explicit moments of every (target, cell) pair within reach, for inspection.
    pub fn for_each_pair(&self, mut visit: impl FnMut(usize, usize, &Moments)) {
        let lookup: std::collections::HashMap<[usize; 3], usize> =
            self.index.iter().enumerate().map(|(c, ix)| (*ix, c)).collect();
        for (t, row) in self.rows.iter().enumerate() {
            match row {
                Row::Regular { cell, near_cut, far_cut } => {
                    let [i, j, k] = self.index[*cell];
                    for (o, m) in &self.table.entries {
                        let s = [i as isize + o[0], j as isize + o[1], k as isize + o[2]];
                        if s.iter().any(|&v| v < 0) {
                            continue;
                        }
                        if let Some(&c) = lookup.get(&s.map(|v| v as usize)) {
                            if self.regular[c] {
                                visit(t, c, m);
                            }
                        }
                    }
                    for (c, m) in near_cut {
                        visit(t, *c as usize, m);
                    }
                    for &c in far_cut {
                        visit(t, c as usize, &self.midpoint_moments(&self.centroids[*cell], c as usize));
                    }
                }
                Row::General { point, near, far } => {
                    for (c, m) in near {
                        visit(t, *c as usize, m);
                    }
                    for &c in far {
                        visit(t, c as usize, &self.midpoint_moments(point, c as usize));
                    }
                }
            }
        }
    }

    fn midpoint_moments(&self, y: &Point, c: usize) -> Moments {
        let mut m = self.ks.point_moments(&(self.centroids[c] - y));
        m.iter_mut().for_each(|v| *v *= self.volumes[c]);
        m
    }

    pub fn spacing(&self) -> Point {
        self.spacing
    }
}

fn cheb(a: &[isize; 3], b: &[isize; 3]) -> isize {
    (0..3).map(|i| (a[i] - b[i]).abs()).max().unwrap_or(0)
}

fn cube_slots(center: [isize; 3], radius: isize) -> impl Iterator<Item = [isize; 3]> {
    let side = 2 * radius + 1;
    (0..side * side * side).map(move |n| {
        [center[0] - radius + n % side, center[1] - radius + (n / side) % side, center[2] - radius + n / (side * side)]
    })
}

/// All cell centroids as targets.
pub fn cell_targets(vm: &VolumeMesh) -> Vec<VolumeTarget> {
    (0..vm.len()).map(VolumeTarget::Cell).collect()
}

/// Per-cell linear map u ↦ [`CellDensity`] for 𝒩u:
/// entry r·10 + m collects Σ_p a^{pr}_{kj} u_p against ∂ₖ∂ⱼP_Δ (symmetric pairs
/// folded) and Σ_p ∂ₖa^{pr}_{kj} u_p against ∂ⱼP_Δ.
#[derive(Debug, Clone)]
pub struct NDensityMap {
    /// [cell][p][r][m], m over the nine derivative moments.
    coeffs: Vec<[[[f64; 9]; 3]; 3]>,
}

impl NDensityMap {
    pub fn new(field: &CoefficientField, vm: &VolumeMesh) -> Result<Self, ExprError> {
        let coeffs = vm
            .cells
            .iter()
            .map(|cell| {
                let x: [f64; 3] = cell.centroid.into();
                let a = field.tensor(x)?;
                let g = field.divergence(x)?;
                let mut c = [[[0.0; 9]; 3]; 3];
                for p in 0..3 {
                    for r in 0..3 {
                        for (s, &(k, j)) in SYM_PAIRS.iter().enumerate() {
                            c[p][r][s] = a[p][r][k][j] + if k == j { 0.0 } else { a[p][r][j][k] };
                        }
                        for j in 0..3 {
                            c[p][r][6 + j] = g[p][r][j];
                        }
                    }
                }
                Ok(c)
            })
            .collect::<Result<_, ExprError>>()?;
        Ok(Self { coeffs })
    }

    /// 3×3 block B with (𝒩u)_r += Σ_p B[r][p] u_p for one source cell with moments `m`.
    pub fn block(&self, cell: usize, m: &Moments) -> Matrix3<f64> {
        let c = &self.coeffs[cell];
        Matrix3::from_fn(|r, p| (0..9).map(|s| c[p][r][s] * m[s]).sum())
    }

    pub fn densities(&self, u: &[[f64; 3]]) -> Vec<CellDensity> {
        assert_eq!(u.len(), self.coeffs.len(), "field length must equal the cell count");
        self.coeffs
            .iter()
            .zip(u)
            .map(|(c, u)| {
                let mut d = [0.0; 30];
                for p in 0..3 {
                    for r in 0..3 {
                        for m in 0..9 {
                            d[r * 10 + m] += c[p][r][m] * u[p];
                        }
                    }
                }
                d
            })
            .collect()
    }
}

/// Densities for 𝒫f.
pub fn parametrix_densities(f: &[[f64; 3]]) -> Vec<CellDensity> {
    f.iter()
        .map(|f| {
            let mut d = [0.0; 30];
            for r in 0..3 {
                d[r * 10 + P_SLOT] = f[r];
            }
            d
        })
        .collect()
}

/// Densities for 𝒬u from gradients ∂ₗu_q at cell centroids:
/// [𝒬u]_p = −∫ a^{pq}_{kl} ∂ₖP_Δ ∂ₗu_q dx.
pub fn gradient_densities(
    field: &CoefficientField,
    vm: &VolumeMesh,
    grad: &[Gradient],
) -> Result<Vec<CellDensity>, ExprError> {
    assert_eq!(grad.len(), vm.len(), "gradient length must equal the cell count");
    vm.cells
        .iter()
        .zip(grad)
        .map(|(cell, du)| {
            let a = field.tensor(cell.centroid.into())?;
            let mut d = [0.0; 30];
            for p in 0..3 {
                for k in 0..3 {
                    let mut s = 0.0;
                    for q in 0..3 {
                        for l in 0..3 {
                            s += a[p][q][k][l] * du[q][l];
                        }
                    }
                    d[p * 10 + 6 + k] = -s;
                }
            }
            Ok(d)
        })
        .collect()
}
