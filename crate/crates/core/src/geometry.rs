//! Canonical domains (ball, box), cut-cell volume grids, triangulated surfaces
//! and legacy VTK export.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::expr::ExprError;
use crate::pde_model::VectorField;

pub type Point = Vector3<f64>;

/// Subsamples per axis used to measure cut cells.
pub const CUT_SUBSAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("{what} = {requested} exceeds the configured cap {cap}")]
    TooLarge { what: &'static str, requested: usize, cap: usize },
    #[error("{what} must be at least {min}, got {got}")]
    TooSmall { what: &'static str, got: usize, min: usize },
    #[error("mesh invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshLimits {
    pub max_cells: usize,
    pub max_surface_level: u32,
}

impl Default for MeshLimits {
    fn default() -> Self {
        Self { max_cells: 4_000_000, max_surface_level: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Ball { center: Point, radius: f64 },
    Box { lo: Point, hi: Point },
}

impl Domain {
    pub fn unit_ball() -> Self {
        Domain::Ball { center: Point::zeros(), radius: 1.0 }
    }

    pub fn unit_box() -> Self {
        Domain::Box { lo: Point::zeros(), hi: Point::repeat(1.0) }
    }

    /// Strict interior test.
    pub fn contains(&self, x: &Point) -> bool {
        match *self {
            Domain::Ball { center, radius } => (x - center).norm_squared() < radius * radius,
            Domain::Box { lo, hi } => (0..3).all(|i| x[i] > lo[i] && x[i] < hi[i]),
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Domain::Ball { center, .. } => center,
            Domain::Box { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Domain::Ball { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            Domain::Box { lo, hi } => (hi - lo).product(),
        }
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Domain::Ball { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Domain::Box { lo, hi } => {
                let d = hi - lo;
                2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Ball { radius, .. } => 2.0 * radius,
            Domain::Box { lo, hi } => (hi - lo).norm(),
        }
    }

    /// Distance from an interior point to the boundary along the unit direction `dir`.
    pub fn ray_exit(&self, origin: &Point, dir: &Point) -> f64 {
        match *self {
            Domain::Ball { center, radius } => {
                let o = origin - center;
                let b = o.dot(dir);
                let c = o.norm_squared() - radius * radius;
                -b + (b * b - c).max(0.0).sqrt()
            }
            Domain::Box { lo, hi } => box_exit(origin, dir, &lo, &hi),
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn depth(&self, x: &Point) -> f64 {
        match *self {
            Domain::Ball { center, radius } => radius - (x - center).norm(),
            Domain::Box { lo, hi } => (0..3).map(|i| (x[i] - lo[i]).min(hi[i] - x[i])).fold(f64::INFINITY, f64::min),
        }
    }
}

/// Exit distance of the ray `origin + t·dir` from the box [lo, hi] (origin inside or on it).
pub fn box_exit(origin: &Point, dir: &Point, lo: &Point, hi: &Point) -> f64 {
    (0..3)
        .filter(|&i| dir[i] != 0.0)
        .map(|i| if dir[i] > 0.0 { (hi[i] - origin[i]) / dir[i] } else { (lo[i] - origin[i]) / dir[i] })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub centroid: Point,
    pub volume: f64,
    /// Grid index of the enclosing box cell.
    pub index: [usize; 3],
    /// The full box cell lies inside the domain.
    pub regular: bool,
}

/// Uniform box grid clipped to the domain; cut cells keep their measured volume and centroid.
#[derive(Debug, Clone)]
pub struct VolumeMesh {
    pub domain: Domain,
    pub origin: Point,
    pub spacing: Point,
    pub dims: [usize; 3],
    pub cells: Vec<Cell>,
    lookup: Vec<u32>,
}

const NO_CELL: u32 = u32::MAX;

impl VolumeMesh {
    fn build(domain: Domain, origin: Point, spacing: Point, dims: [usize; 3], limits: &MeshLimits) -> Result<Self, MeshError> {
        let total = dims.iter().product::<usize>();
        if total > limits.max_cells {
            return Err(MeshError::TooLarge { what: "grid cells", requested: total, cap: limits.max_cells });
        }
        let mut cells = Vec::new();
        let mut lookup = vec![NO_CELL; total];
        let m = CUT_SUBSAMPLES;
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let lo = origin + spacing.component_mul(&Point::new(i as f64, j as f64, k as f64));
                    let corners_inside = (0..8)
                        .filter(|c| {
                            let off = Point::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64);
                            let p = lo + spacing.component_mul(&off);
                            domain.contains(&p) || domain.depth(&p) >= 0.0
                        })
                        .count();
                    let cell = if corners_inside == 8 {
                        Some(Cell { centroid: lo + 0.5 * spacing, volume: spacing.product(), index: [i, j, k], regular: true })
                    } else {
                        let mut sum = Point::zeros();
                        let mut count = 0usize;
                        for c in 0..m * m * m {
                            let f = Point::new((c % m) as f64 + 0.5, ((c / m) % m) as f64 + 0.5, (c / (m * m)) as f64 + 0.5);
                            let p = lo + spacing.component_mul(&f) / m as f64;
                            if domain.contains(&p) {
                                sum += p;
                                count += 1;
                            }
                        }
                        (count > 0).then(|| Cell {
                            centroid: sum / count as f64,
                            volume: spacing.product() * count as f64 / (m * m * m) as f64,
                            index: [i, j, k],
                            regular: false,
                        })
                    };
                    if let Some(cell) = cell {
                        lookup[i + dims[0] * (j + dims[1] * k)] = cells.len() as u32;
                        cells.push(cell);
                    }
                }
            }
        }
        Ok(Self { domain, origin, spacing, dims, cells, lookup })
    }

    /// Cell occupying grid slot (i, j, k), if any.
    pub fn cell_at(&self, i: isize, j: isize, k: isize) -> Option<usize> {
        let d = self.dims;
        if i < 0 || j < 0 || k < 0 || i as usize >= d[0] || j as usize >= d[1] || k as usize >= d[2] {
            return None;
        }
        let id = self.lookup[i as usize + d[0] * (j as usize + d[1] * k as usize)];
        (id != NO_CELL).then_some(id as usize)
    }

    /// Grid slot containing `x` (may be unoccupied).
    pub fn slot_of(&self, x: &Point) -> [isize; 3] {
        std::array::from_fn(|a| ((x[a] - self.origin[a]) / self.spacing[a]).floor() as isize)
    }

    pub fn slot_lo(&self, slot: [isize; 3]) -> Point {
        self.origin + self.spacing.component_mul(&Point::new(slot[0] as f64, slot[1] as f64, slot[2] as f64))
    }

    pub fn cell_lo(&self, c: usize) -> Point {
        let [i, j, k] = self.cells[c].index;
        self.slot_lo([i as isize, j as isize, k as isize])
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Largest cell edge.
    pub fn h(&self) -> f64 {
        self.spacing.max()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PanelShape {
    Flat,
    /// Flat parameter triangles projected radially onto a sphere.
    Spherical { center: Point, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub vertices: [usize; 3],
    /// Collocation point: image of the parameter-triangle centroid.
    pub centroid: Point,
    pub area: f64,
    pub normal: Point,
    pub diameter: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub points: Vec<Point>,
    pub panels: Vec<Panel>,
    pub shape: PanelShape,
    pub closed: bool,
}

/// A point on a panel with its outward normal and surface-element factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub x: Point,
    pub normal: Point,
    /// dS per unit area of the flat parameter triangle.
    pub stretch: f64,
}

impl SurfaceMesh {
    fn flat_vertices(&self, panel: usize) -> [Point; 3] {
        self.panels[panel].vertices.map(|v| self.points[v])
    }

    pub fn flat_triangle(&self, panel: usize) -> [Point; 3] {
        self.flat_vertices(panel)
    }

    /// Maps a point `p` of the flat parameter triangle of `panel` onto the surface.
    pub fn lift(&self, panel: usize, p: &Point) -> SurfacePoint {
        match self.shape {
            PanelShape::Flat => SurfacePoint { x: *p, normal: self.panels[panel].normal, stretch: 1.0 },
            PanelShape::Spherical { center, radius } => {
                let [a, b, c] = self.flat_vertices(panel);
                let nf = (b - a).cross(&(c - a)).normalize();
                let d = p - center;
                let dn = d.norm();
                let normal = d / dn;
                SurfacePoint { x: center + radius * normal, normal, stretch: radius * radius * nf.dot(&d).abs() / dn.powi(3) }
            }
        }
    }

    pub fn total_area(&self) -> f64 {
        self.panels.iter().map(|p| p.area).sum()
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    fn check(&self, center: &Point) -> Result<(), MeshError> {
        let total = self.total_area();
        let flux: Point = self.panels.iter().map(|p| p.area * p.normal).sum();
        if self.closed && flux.norm() > 1e-3 * total {
            return Err(MeshError::Invariant(format!("sum of area-weighted normals {:e} is not small", flux.norm())));
        }
        if let Some(bad) = self.panels.iter().position(|p| p.normal.dot(&(p.centroid - center)) <= 0.0 || p.area <= 0.0) {
            return Err(MeshError::Invariant(format!("panel {bad} has an inward normal or no area")));
        }
        Ok(())
    }
}

fn spherical_triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    let num = a.dot(&b.cross(c)).abs();
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

fn icosahedron() -> (Vec<Point>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ];
    let points = raw.iter().map(|v| Point::from(*v).normalize()).collect();
    let faces = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    (points, faces)
}

/// Unit icosphere with 20·4^level triangles, vertices on the sphere.
pub fn icosphere(level: u32) -> (Vec<Point>, Vec<[usize; 3]>) {
    let (mut points, mut faces) = icosahedron();
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, points: &mut Vec<Point>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                points.push((0.5 * (points[a] + points[b])).normalize());
                points.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let (ab, bc, ca) = (mid(a, b, &mut points), mid(b, c, &mut points), mid(c, a, &mut points));
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (points, faces)
}

/// Sphere surface from an icosphere of the given level; panels are curved.
pub fn sphere_surface(center: Point, radius: f64, level: u32, limits: &MeshLimits) -> Result<SurfaceMesh, MeshError> {
    if level > limits.max_surface_level {
        return Err(MeshError::TooLarge {
            what: "surface level",
            requested: level as usize,
            cap: limits.max_surface_level as usize,
        });
    }
    let (unit, faces) = icosphere(level);
    let points: Vec<Point> = unit.iter().map(|u| center + radius * u).collect();
    let panels = faces
        .iter()
        .map(|&[a, b, c]| {
            let (ua, ub, uc) = (unit[a], unit[b], unit[c]);
            let normal = ((ua + ub + uc) / 3.0).normalize();
            let diameter = [(a, b), (b, c), (c, a)].iter().map(|&(i, j)| (points[i] - points[j]).norm()).fold(0.0, f64::max);
            Panel {
                vertices: [a, b, c],
                centroid: center + radius * normal,
                area: radius * radius * spherical_triangle_area(&ua, &ub, &uc),
                normal,
                diameter,
            }
        })
        .collect();
    let mesh = SurfaceMesh { points, panels, shape: PanelShape::Spherical { center, radius }, closed: true };
    mesh.check(&center)?;
    Ok(mesh)
}

/// Volume grid of `grid` cells per axis over the ball's bounding cube plus an
/// icosphere surface with 20·4^level panels.
pub fn build_ball(
    center: Point,
    radius: f64,
    grid: usize,
    level: u32,
    limits: &MeshLimits,
) -> Result<(VolumeMesh, SurfaceMesh), MeshError> {
    if grid < 2 {
        return Err(MeshError::TooSmall { what: "grid", got: grid, min: 2 });
    }
    let domain = Domain::Ball { center, radius };
    let h = 2.0 * radius / grid as f64;
    let vm = VolumeMesh::build(domain, center - Point::repeat(radius), Point::repeat(h), [grid; 3], limits)?;
    if let Some(bad) = vm.cells.iter().position(|c| !domain.contains(&c.centroid)) {
        return Err(MeshError::Invariant(format!("cell {bad} centroid outside the ball")));
    }
    Ok((vm, sphere_surface(center, radius, level, limits)?))
}

/// Uniform `n`³ box grid; each face split into n×n squares of two triangles.
pub fn build_box(lo: Point, hi: Point, n: usize, limits: &MeshLimits) -> Result<(VolumeMesh, SurfaceMesh), MeshError> {
    if n < 2 {
        return Err(MeshError::TooSmall { what: "n", got: n, min: 2 });
    }
    let spacing = (hi - lo) / n as f64;
    let vm = VolumeMesh::build(Domain::Box { lo, hi }, lo, spacing, [n; 3], limits)?;
    let mut points = Vec::new();
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertex = |l: [usize; 3], points: &mut Vec<Point>| {
        *index.entry(l).or_insert_with(|| {
            points.push(lo + spacing.component_mul(&Point::new(l[0] as f64, l[1] as f64, l[2] as f64)));
            points.len() - 1
        })
    };
    let mut panels = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0usize, 1] {
            let mut normal = Point::zeros();
            normal[axis] = if side == 1 { 1.0 } else { -1.0 };
            for a in 0..n {
                for b in 0..n {
                    let lattice = |da: usize, db: usize| {
                        let mut l = [0; 3];
                        l[axis] = side * n;
                        l[u] = a + da;
                        l[v] = b + db;
                        l
                    };
                    let q = [lattice(0, 0), lattice(1, 0), lattice(1, 1), lattice(0, 1)].map(|l| vertex(l, &mut points));
                    for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
                        let [pa, pb, pc] = tri.map(|i| points[i]);
                        let cross = (pb - pa).cross(&(pc - pa));
                        let oriented = if cross.dot(&normal) > 0.0 { tri } else { [tri[0], tri[2], tri[1]] };
                        let diameter = [(pa, pb), (pb, pc), (pc, pa)].iter().map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                        panels.push(Panel {
                            vertices: oriented,
                            centroid: (pa + pb + pc) / 3.0,
                            area: 0.5 * cross.norm(),
                            normal,
                            diameter,
                        });
                    }
                }
            }
        }
    }
    let sm = SurfaceMesh { points, panels, shape: PanelShape::Flat, closed: true };
    sm.check(&(0.5 * (lo + hi)))?;
    Ok((vm, sm))
}

/// |Σ_cells div F · volume − Σ_panels F·n · area|.
pub fn divergence_check(vm: &VolumeMesh, sm: &SurfaceMesh, field: &dyn VectorField) -> Result<f64, ExprError> {
    let mut volume_side = 0.0;
    for c in &vm.cells {
        let g = field.gradient(c.centroid.into())?;
        volume_side += (g[0][0] + g[1][1] + g[2][2]) * c.volume;
    }
    let mut surface_side = 0.0;
    for p in &sm.panels {
        let f = Point::from(field.value(p.centroid.into())?);
        surface_side += f.dot(&p.normal) * p.area;
    }
    Ok((volume_side - surface_side).abs())
}

/// Per-element data attached to a VTK export.
pub enum VtkField<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, &'a [[f64; 3]]),
}

fn write_fields(out: &mut impl Write, n: usize, fields: &[VtkField]) -> io::Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(out, "CELL_DATA {n}")?;
    for f in fields {
        match f {
            VtkField::Scalar(name, v) => {
                assert_eq!(v.len(), n, "field {name} has the wrong length");
                writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
                for x in *v {
                    writeln!(out, "{x:.16e}")?;
                }
            }
            VtkField::Vector(name, v) => {
                assert_eq!(v.len(), n, "field {name} has the wrong length");
                writeln!(out, "VECTORS {name} double")?;
                for x in *v {
                    writeln!(out, "{:.16e} {:.16e} {:.16e}", x[0], x[1], x[2])?;
                }
            }
        }
    }
    Ok(())
}

/// Volume cells as hexahedra (full grid boxes) in an UNSTRUCTURED_GRID.
pub fn write_vtk_volume(out: &mut impl Write, vm: &VolumeMesh, title: &str, fields: &[VtkField]) -> io::Result<()> {
    let n = vm.len();
    writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", 8 * n)?;
    const CORNERS: [[f64; 3]; 8] =
        [[0., 0., 0.], [1., 0., 0.], [1., 1., 0.], [0., 1., 0.], [0., 0., 1.], [1., 0., 1.], [1., 1., 1.], [0., 1., 1.]];
    for c in 0..n {
        let lo = vm.cell_lo(c);
        for corner in CORNERS {
            let p = lo + vm.spacing.component_mul(&Point::from(corner));
            writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
        }
    }
    writeln!(out, "CELLS {n} {}", 9 * n)?;
    for c in 0..n {
        let b = 8 * c;
        writeln!(out, "8 {} {} {} {} {} {} {} {}", b, b + 1, b + 2, b + 3, b + 4, b + 5, b + 6, b + 7)?;
    }
    writeln!(out, "CELL_TYPES {n}")?;
    for _ in 0..n {
        writeln!(out, "12")?;
    }
    write_fields(out, n, fields)
}

/// Surface triangles as POLYDATA.
pub fn write_vtk_surface(out: &mut impl Write, sm: &SurfaceMesh, title: &str, fields: &[VtkField]) -> io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA")?;
    writeln!(out, "POINTS {} double", sm.points.len())?;
    for p in &sm.points {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
    }
    writeln!(out, "POLYGONS {} {}", sm.len(), 4 * sm.len())?;
    for p in &sm.panels {
        writeln!(out, "3 {} {} {}", p.vertices[0], p.vertices[1], p.vertices[2])?;
    }
    write_fields(out, sm.len(), fields)
}
