//! The localized boundary-domain integral equation system for the Dirichlet
//! problem A(x,∂)u = f in Ω, γ⁺u = φ₀ on S:
//!
//! ```text
//! (β + 𝒩)u − Vψ = 𝒫f − Wφ₀          at cell centroids
//!      N⁺u − 𝒱ψ = 𝒫⁺f − (β−μ)φ₀ − 𝒲φ₀   at panel collocation points
//! ```
//!
//! with unknowns u (per cell) and ψ = T⁺u (per panel). Boundary traces of volume
//! potentials are extrapolated from points inside Ω along −n.

mod gmres;

use log::info;
use nalgebra::Matrix3;

pub use gmres::{gmres, KrylovOutcome, KrylovSettings};

use crate::expr::ExprError;
use crate::geometry::{Point, SurfaceMesh, VolumeMesh};
use crate::pde_model::{apply_a, beta_of_tensor, conormal_of_tensor, mu_of_tensor, VectorField};
use crate::potentials::surface::{Extrapolation, SurfaceOperator, SurfaceTarget};
use crate::potentials::volume::{
    cell_targets, gradient_densities, parametrix_densities, MomentSet, NDensityMap, VolumeOperator, VolumeTarget,
};
use crate::potentials::{KernelSet, PotentialError, P_SLOT};

#[derive(Debug, thiserror::Error)]
pub enum LbdieError {
    #[error("Krylov solver stopped after {iterations} iterations at relative residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64, history: Vec<f64> },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Expression(#[from] ExprError),
    #[error("{what} has length {got}, expected {expected}")]
    Length { what: &'static str, got: usize, expected: usize },
}

type Field = Vec<[f64; 3]>;

fn mat_vec(m: &Matrix3<f64>, v: &[f64; 3]) -> [f64; 3] {
    (m * Point::from(*v)).into()
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), LbdieError> {
    if got == expected {
        Ok(())
    } else {
        Err(LbdieError::Length { what, got, expected })
    }
}

/// Assembled operator blocks for one pair of meshes.
#[derive(Debug)]
pub struct LbdieSystem<'m> {
    pub ks: KernelSet,
    pub vm: &'m VolumeMesh,
    pub sm: &'m SurfaceMesh,
    pub rule: Extrapolation,
    /// 𝒩, 𝒫 at cell centroids.
    volume: VolumeOperator,
    /// 𝒩, 𝒫 at the interior offset points of every panel.
    trace: VolumeOperator,
    /// V, W at cell centroids.
    layers: SurfaceOperator,
    /// 𝒱, 𝒲 at panel collocation points.
    boundary: SurfaceOperator,
    n_map: NDensityMap,
    beta_cells: Vec<Matrix3<f64>>,
    beta_minus_mu: Vec<Matrix3<f64>>,
    /// Inverse of the scalar self term of 𝒱 per panel.
    v_diag_inv: Vec<f64>,
    beta_inv: Vec<Matrix3<f64>>,
}

/// Operator families exposed by [`LbdieSystem::for_each_block`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// 𝒩 between cell centroids.
    N,
    /// 𝒫 between cell centroids.
    P,
    /// 𝒱 between panel collocation points.
    V,
    /// 𝒲 between panel collocation points.
    W,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::N => "N",
            Block::P => "P",
            Block::V => "V",
            Block::W => "W",
        }
    }
}

/// Right-hand sides of both equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub volume: Field,
    pub surface: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbdieSolution {
    pub u: Field,
    pub psi: Field,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    pub condition_estimate: f64,
}

impl<'m> LbdieSystem<'m> {
    pub fn assemble(ks: KernelSet, vm: &'m VolumeMesh, sm: &'m SurfaceMesh, rule: Extrapolation) -> Result<Self, LbdieError> {
        let volume = VolumeOperator::new(&ks, vm, &cell_targets(vm))?;
        let trace_points: Vec<VolumeTarget> = sm
            .panels
            .iter()
            .flat_map(|p| rule.fractions().iter().map(move |f| VolumeTarget::Point(p.centroid - f * p.diameter * p.normal)))
            .collect();
        let trace = VolumeOperator::new(&ks, vm, &trace_points)?;
        let layers = SurfaceOperator::new(&ks, sm, vm.cells.iter().map(|c| SurfaceTarget::point(c.centroid)).collect())?;
        let boundary = SurfaceOperator::on_surface(&ks, sm)?;
        let n_map = NDensityMap::new(&ks.field, vm)?;
        let beta_cells: Vec<Matrix3<f64>> = vm
            .cells
            .iter()
            .map(|c| Ok(beta_of_tensor(&ks.field.tensor(c.centroid.into())?)))
            .collect::<Result<_, ExprError>>()?;
        let beta_minus_mu = sm
            .panels
            .iter()
            .map(|p| {
                let a = ks.field.tensor(p.centroid.into())?;
                Ok(beta_of_tensor(&a) - mu_of_tensor(&a, p.normal.into()))
            })
            .collect::<Result<_, ExprError>>()?;
        let v_diag_inv = (0..sm.len())
            .map(|i| {
                let d = boundary.single_layer_self(i);
                if d != 0.0 {
                    1.0 / d
                } else {
                    1.0
                }
            })
            .collect();
        let beta_inv = beta_cells.iter().map(|b| b.try_inverse().unwrap_or_else(Matrix3::identity)).collect();
        info!(
            "assembled LBDIE system: {} cells, {} panels, {} unknowns, {} boundary pairs",
            vm.len(),
            sm.len(),
            3 * (vm.len() + sm.len()),
            boundary.nnz()
        );
        Ok(Self { ks, vm, sm, rule, volume, trace, layers, boundary, n_map, beta_cells, beta_minus_mu, v_diag_inv, beta_inv })
    }

    /// Visits every stored (target, source) 3×3 block of the assembled operators.
    pub fn for_each_block(&self, mut visit: impl FnMut(Block, usize, usize, &Matrix3<f64>)) {
        self.volume.for_each_pair(|t, c, m| {
            visit(Block::N, t, c, &self.n_map.block(c, m));
            visit(Block::P, t, c, &(Matrix3::identity() * m[P_SLOT]));
        });
        self.boundary.for_each_block(|t, j, v, w| {
            visit(Block::V, t, j, v);
            visit(Block::W, t, j, w);
        });
    }

    pub fn dimension(&self) -> usize {
        3 * (self.vm.len() + self.sm.len())
    }

    fn split(&self, x: &[f64]) -> (Field, Field) {
        let nc = self.vm.len();
        let block = |r: &[f64]| r.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect::<Field>();
        (block(&x[..3 * nc]), block(&x[3 * nc..]))
    }

    fn join(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<f64> {
        a.iter().chain(b).flatten().copied().collect()
    }

    fn extrapolate(&self, samples: &[[f64; 3]]) -> Field {
        let k = self.rule.fractions().len();
        samples.chunks_exact(k).map(|s| self.rule.combine(s).into()).collect()
    }

    /// 𝒩u at cell centroids.
    pub fn apply_n(&self, u: &[[f64; 3]]) -> Field {
        self.volume.apply(&self.n_map.densities(u), MomentSet::Derivatives)
    }

    /// N⁺u = γ⁺𝒩u at panel collocation points.
    pub fn apply_n_trace(&self, u: &[[f64; 3]]) -> Field {
        self.extrapolate(&self.trace.apply(&self.n_map.densities(u), MomentSet::Derivatives))
    }

    /// 𝔇(u, ψ).
    pub fn apply(&self, u: &[[f64; 3]], psi: &[[f64; 3]]) -> (Field, Field) {
        let nu = self.apply_n(u);
        let vpsi = self.layers.single_layer(psi);
        let top = (0..u.len())
            .map(|i| {
                let bu = mat_vec(&self.beta_cells[i], &u[i]);
                std::array::from_fn(|r| bu[r] + nu[i][r] - vpsi[i][r])
            })
            .collect();
        let trace = self.apply_n_trace(u);
        let vbd = self.boundary.single_layer(psi);
        let bottom = trace.iter().zip(&vbd).map(|(t, v)| std::array::from_fn(|r| t[r] - v[r])).collect();
        (top, bottom)
    }

    /// F₁ = 𝒫f − Wφ₀ and F₂ = 𝒫⁺f − (β−μ)φ₀ − 𝒲φ₀ from f at cell centroids and
    /// φ₀ at panel collocation points.
    pub fn rhs(&self, f: &[[f64; 3]], phi0: &[[f64; 3]]) -> Result<Rhs, LbdieError> {
        check_len("f", f.len(), self.vm.len())?;
        check_len("phi0", phi0.len(), self.sm.len())?;
        let pd = parametrix_densities(f);
        let pf = self.volume.apply(&pd, MomentSet::Parametrix);
        let wphi = self.layers.double_layer(phi0);
        let volume = pf.iter().zip(&wphi).map(|(p, w)| std::array::from_fn(|r| p[r] - w[r])).collect();
        let pf_trace = self.extrapolate(&self.trace.apply(&pd, MomentSet::Parametrix));
        let wbd = self.boundary.double_layer(phi0);
        let surface = (0..self.sm.len())
            .map(|i| {
                let bm = mat_vec(&self.beta_minus_mu[i], &phi0[i]);
                std::array::from_fn(|r| pf_trace[i][r] - bm[r] - wbd[i][r])
            })
            .collect();
        Ok(Rhs { volume, surface })
    }

    /// Right-hand sides for a manufactured solution: f = A u, φ₀ = γ⁺u.
    pub fn manufactured_rhs(&self, u: &dyn VectorField) -> Result<Rhs, LbdieError> {
        let f: Field = self.vm.cells.iter().map(|c| apply_a(&self.ks.field, u, c.centroid.into())).collect::<Result<_, _>>()?;
        let phi0: Field = self.sm.panels.iter().map(|p| u.value(p.centroid.into())).collect::<Result<_, _>>()?;
        self.rhs(&f, &phi0)
    }

    /// GMRES on the full block system, right-preconditioned by β⁻¹ on cells and
    /// the inverse self term of 𝒱 (negated) on panels.
    pub fn solve(&self, rhs: &Rhs, settings: KrylovSettings) -> Result<LbdieSolution, LbdieError> {
        check_len("volume rhs", rhs.volume.len(), self.vm.len())?;
        check_len("surface rhs", rhs.surface.len(), self.sm.len())?;
        let b = Self::join(&rhs.volume, &rhs.surface);
        let apply = |x: &[f64]| {
            let (u, psi) = self.split(x);
            let (top, bottom) = self.apply(&u, &psi);
            Self::join(&top, &bottom)
        };
        let precond = |x: &[f64]| {
            let (u, psi) = self.split(x);
            let u: Field = u.iter().zip(&self.beta_inv).map(|(v, b)| mat_vec(b, v)).collect();
            let psi: Field = psi.iter().zip(&self.v_diag_inv).map(|(v, d)| v.map(|c| -c * d)).collect();
            Self::join(&u, &psi)
        };
        let out = gmres(apply, precond, &b, settings);
        info!(
            "GMRES: {} iterations, relative residual {:.3e}, condition estimate {:.3e}",
            out.iterations, out.residual, out.condition_estimate
        );
        if !(out.residual <= settings.tol) {
            return Err(LbdieError::NoConvergence { iterations: out.iterations, residual: out.residual, history: out.history });
        }
        let (u, psi) = self.split(&out.x);
        Ok(LbdieSolution {
            u,
            psi,
            iterations: out.iterations,
            residual: out.residual,
            history: out.history,
            condition_estimate: out.condition_estimate,
        })
    }
}

/// Relative errors of a computed field against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// Weighted L² error over the weighted L² norm of the reference.
    pub l2_rel: f64,
    /// Max pointwise error over the max norm of the reference.
    pub max_rel: f64,
}

pub fn error_norms(got: &[[f64; 3]], want: &[[f64; 3]], weights: &[f64]) -> ErrorNorms {
    let (mut e2, mut r2, mut emax, mut rmax) = (0.0, 0.0, 0.0f64, 0.0f64);
    for ((g, w), wt) in got.iter().zip(want).zip(weights) {
        let e = (Point::from(*g) - Point::from(*w)).norm();
        let r = Point::from(*w).norm();
        e2 += wt * e * e;
        r2 += wt * r * r;
        emax = emax.max(e);
        rmax = rmax.max(r);
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    ErrorNorms { l2_rel: ratio(e2.sqrt(), r2.sqrt()), max_rel: ratio(emax, rmax) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxReport {
    pub u: ErrorNorms,
    pub psi: ErrorNorms,
}

/// Compares u with the exact field at cell centroids and ψ with T⁺u_exact at
/// panel collocation points.
pub fn recover_flux_check(
    ks: &KernelSet,
    vm: &VolumeMesh,
    sm: &SurfaceMesh,
    sol: &LbdieSolution,
    exact: &dyn VectorField,
) -> Result<FluxReport, LbdieError> {
    let u_ref: Field = vm.cells.iter().map(|c| exact.value(c.centroid.into())).collect::<Result<_, _>>()?;
    let psi_ref = conormal_samples(ks, sm, exact)?;
    let vol: Vec<f64> = vm.cells.iter().map(|c| c.volume).collect();
    let area: Vec<f64> = sm.panels.iter().map(|p| p.area).collect();
    Ok(FluxReport { u: error_norms(&sol.u, &u_ref, &vol), psi: error_norms(&sol.psi, &psi_ref, &area) })
}

/// T⁺u at every panel collocation point.
pub fn conormal_samples(ks: &KernelSet, sm: &SurfaceMesh, u: &dyn VectorField) -> Result<Field, ExprError> {
    sm.panels
        .iter()
        .map(|p| {
            let x: [f64; 3] = p.centroid.into();
            Ok(conormal_of_tensor(&ks.field.tensor(x)?, &u.gradient(x)?, p.normal.into()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResidual {
    /// Volume-weighted L² norm of the residual over that of u.
    pub l2_rel: f64,
    /// Max norm of the residual over that of u.
    pub max_rel: f64,
    /// Residual per cell.
    pub residual: Field,
}

fn identity_report(residual: Field, u: &[[f64; 3]], vm: &VolumeMesh) -> IdentityResidual {
    let vol: Vec<f64> = vm.cells.iter().map(|c| c.volume).collect();
    let zero = vec![[0.0; 3]; u.len()];
    let e = error_norms(&residual, &zero, &vol);
    let n = error_norms(u, &zero, &vol);
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    IdentityResidual { l2_rel: ratio(e.l2_rel, n.l2_rel), max_rel: ratio(e.max_rel, n.max_rel), residual }
}

/// βu + 𝒩u − V(T⁺u) + W(γ⁺u) − 𝒫(Au) at every cell centroid.
pub fn third_identity_residual(
    ks: &KernelSet,
    vm: &VolumeMesh,
    sm: &SurfaceMesh,
    u: &dyn VectorField,
) -> Result<IdentityResidual, LbdieError> {
    let volume = VolumeOperator::new(ks, vm, &cell_targets(vm))?;
    let layers = SurfaceOperator::new(ks, sm, vm.cells.iter().map(|c| SurfaceTarget::point(c.centroid)).collect())?;
    let uc: Field = vm.cells.iter().map(|c| u.value(c.centroid.into())).collect::<Result<_, _>>()?;
    let f: Field = vm.cells.iter().map(|c| apply_a(&ks.field, u, c.centroid.into())).collect::<Result<_, _>>()?;
    let trace: Field = sm.panels.iter().map(|p| u.value(p.centroid.into())).collect::<Result<_, _>>()?;
    let nu = volume.apply(&NDensityMap::new(&ks.field, vm)?.densities(&uc), MomentSet::Derivatives);
    let pf = volume.apply(&parametrix_densities(&f), MomentSet::Parametrix);
    let vt = layers.single_layer(&conormal_samples(ks, sm, u)?);
    let wg = layers.double_layer(&trace);
    let residual = (0..vm.len())
        .map(|i| {
            let bu = mat_vec(&beta_of_tensor(&ks.field.tensor(vm.cells[i].centroid.into())?), &uc[i]);
            Ok(std::array::from_fn(|r| bu[r] + nu[i][r] - vt[i][r] + wg[i][r] - pf[i][r]))
        })
        .collect::<Result<Field, ExprError>>()?;
    Ok(identity_report(residual, &uc, vm))
}

/// βu + 𝒩u + W(γ⁺u) − 𝒬u at every cell centroid.
pub fn gradient_identity_residual(
    ks: &KernelSet,
    vm: &VolumeMesh,
    sm: &SurfaceMesh,
    u: &dyn VectorField,
) -> Result<IdentityResidual, LbdieError> {
    let volume = VolumeOperator::new(ks, vm, &cell_targets(vm))?;
    let layers = SurfaceOperator::new(ks, sm, vm.cells.iter().map(|c| SurfaceTarget::point(c.centroid)).collect())?;
    let uc: Field = vm.cells.iter().map(|c| u.value(c.centroid.into())).collect::<Result<_, _>>()?;
    let trace: Field = sm.panels.iter().map(|p| u.value(p.centroid.into())).collect::<Result<_, _>>()?;
    let nu = volume.apply(&NDensityMap::new(&ks.field, vm)?.densities(&uc), MomentSet::Derivatives);
    let qu = apply_q(ks, vm, &volume, u)?;
    let wg = layers.double_layer(&trace);
    let residual = (0..vm.len())
        .map(|i| {
            let bu = mat_vec(&beta_of_tensor(&ks.field.tensor(vm.cells[i].centroid.into())?), &uc[i]);
            Ok(std::array::from_fn(|r| bu[r] + nu[i][r] + wg[i][r] - qu[i][r]))
        })
        .collect::<Result<Field, ExprError>>()?;
    Ok(identity_report(residual, &uc, vm))
}

/// 𝒬u at the operator's targets, from gradients of u at cell centroids.
pub fn apply_q(ks: &KernelSet, vm: &VolumeMesh, volume: &VolumeOperator, u: &dyn VectorField) -> Result<Field, LbdieError> {
    let grads = vm.cells.iter().map(|c| u.gradient(c.centroid.into())).collect::<Result<Vec<_>, _>>()?;
    Ok(volume.apply(&gradient_densities(&ks.field, vm, &grads)?, MomentSet::Gradient))
}
