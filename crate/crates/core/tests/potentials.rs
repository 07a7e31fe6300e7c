use std::f64::consts::PI;

use lbdie_core::expr::parse;
use lbdie_core::geometry::{build_ball, MeshLimits, Point, SurfaceMesh, VolumeMesh};
use lbdie_core::localizers::LocalizingFunction;
use lbdie_core::pde_model::{beta_of_tensor, CoefficientField, Gradient};
use lbdie_core::potentials::surface::{jump_test, Extrapolation, JumpKind, Side, SurfaceOperator, SurfaceTarget};
use lbdie_core::potentials::volume::{
    cell_targets, gradient_densities, parametrix_densities, MomentSet, NDensityMap, VolumeOperator, VolumeTarget,
};
use lbdie_core::potentials::{KernelSet, PotentialError};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ball(grid: usize, level: u32) -> (VolumeMesh, SurfaceMesh) {
    build_ball(Point::zeros(), 1.0, grid, level, &MeshLimits::default()).unwrap()
}

fn laplace(chi: LocalizingFunction) -> KernelSet {
    KernelSet::new(CoefficientField::laplace(), chi)
}

fn variable(chi: LocalizingFunction) -> KernelSet {
    KernelSet::new(CoefficientField::scaled_laplace(parse("1 + r^2/4").unwrap()), chi)
}

fn max_norm(v: &[[f64; 3]]) -> f64 {
    v.iter().map(|x| Point::from(*x).norm()).fold(0.0, f64::max)
}

#[test]
fn parametrix_values() {
    let ks = laplace(LocalizingFunction::chi1k(1, 1.0));
    let p = ks.eval_p(&Point::new(0.3, 0.4, 0.0)).unwrap();
    assert!((p - Matrix3::identity() * (-1.0 / (4.0 * PI))).abs().max() < 1e-15);
    assert_eq!(ks.eval_p(&Point::new(0.0, 1.2, 0.0)).unwrap(), Matrix3::zeros());
    assert!(matches!(ks.eval_p(&Point::zeros()), Err(PotentialError::SingularPoint)));
    let free = laplace(LocalizingFunction::untruncated());
    let z = Point::new(1.0, -2.0, 2.0);
    assert!((free.eval_p(&z).unwrap()[(1, 1)] + 1.0 / (12.0 * PI)).abs() < 1e-15);
    assert_eq!(free.eval_p(&-z).unwrap(), free.eval_p(&z).unwrap());
}

/// Fourth-order central second difference.
fn d2(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
}

fn d1(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

#[test]
fn remainder_matches_finite_differences_for_laplace() {
    let ks = laplace(LocalizingFunction::chi1k(1, 1.0));
    let y = Point::new(0.1, -0.2, 0.05);
    let x = y + 0.3 * Point::new(1.0, 2.0, -2.0) / 3.0;
    let pd = |x: Point| ks.eval_p(&(x - y)).unwrap()[(0, 0)];
    let lap: f64 = (0..3).map(|k| d2(|t| pd(x + t * Point::ith(k, 1.0)), 2e-3)).sum();
    let r = ks.eval_r(&x, &y).unwrap();
    assert!((r - Matrix3::identity() * lap).abs().max() < 1e-6, "{r} vs {lap}");
    assert!((ks.eval_r_delta(&(x - y)).unwrap() - lap).abs() < 1e-6);
}

#[test]
fn remainder_matches_finite_differences_for_variable_scale() {
    let ks = variable(LocalizingFunction::chi1k(3, 1.0));
    let scale = |x: &Point| 1.0 + x.norm_squared() / 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let y = Point::from_fn(|_, _| rng.gen_range(-0.5..0.5));
        let dir = Point::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize();
        let x = y + rng.gen_range(0.2..0.7) * dir;
        // A(x,∂)P = ∂ₖ(s(x) ∂ₖP_Δ(x−y)); the frozen Laplace part is traceless.
        let flux = |x: Point, k: usize| scale(&x) * ks.eval_grad_p(&(x - y)).unwrap()[k];
        let ap: f64 = (0..3).map(|k| d1(|t| flux(x + t * Point::ith(k, 1.0), k), 1e-3)).sum();
        let r = ks.eval_r(&x, &y).unwrap();
        let err = (r - Matrix3::identity() * ap).abs().max();
        assert!(err <= 1e-5 * ap.abs().max(1.0), "{err} at |x−y| = {}", (x - y).norm());
        assert!(r[(0, 1)] == 0.0);
    }
}

#[test]
fn remainder_difference_is_lipschitz_small() {
    let ks = KernelSet::new(
        CoefficientField::lame(parse("2").unwrap(), parse("1 + x1^2").unwrap()),
        LocalizingFunction::chi1k(3, 1.0),
    );
    let y = Point::new(0.4, 0.1, -0.2);
    let dir = Point::new(0.2, 0.9, 0.4).normalize();
    let ratios: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&d| {
            let x = y + d * dir;
            let diff = (ks.eval_r1(&x, &y).unwrap() - ks.eval_r(&x, &y).unwrap()).abs().max();
            let frozen = ks.eval_frozen(&x, &y, &y).unwrap().abs().max();
            diff / (d * frozen)
        })
        .collect();
    for w in ratios.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.1, "{ratios:?}");
    }
}

#[test]
fn frozen_constant_tensor_leaves_only_localizer_terms() {
    let ks = KernelSet::new(CoefficientField::lame_constant(2.0, 1.0), LocalizingFunction::chi1k(3, 1.0));
    let (x, y) = (Point::new(0.2, 0.1, 0.0), Point::new(-0.1, 0.3, 0.2));
    assert_eq!(ks.eval_r(&x, &y).unwrap(), ks.eval_r1(&x, &y).unwrap());
    let free = KernelSet::new(CoefficientField::lame_constant(2.0, 1.0), LocalizingFunction::untruncated());
    assert!(free.eval_r(&x, &y).unwrap().abs().max() < 1e-12);
}

#[test]
fn volume_sum_rule_and_newtonian_closed_form() {
    let (vm, _) = ball(16, 1);
    let eps = 0.5;
    let ks = laplace(LocalizingFunction::chi1k(3, eps));
    let centre = (0..vm.len()).min_by(|&a, &b| vm.cells[a].centroid.norm().total_cmp(&vm.cells[b].centroid.norm())).unwrap();
    let mut targets = cell_targets(&vm);
    targets.push(VolumeTarget::Point(Point::new(0.013, -0.021, 0.007)));
    let op = VolumeOperator::new(&ks, &vm, &targets).unwrap();
    let map = NDensityMap::new(&ks.field, &vm).unwrap();
    let n = op.apply(&map.densities(&vec![[1.0, 0.0, 0.0]; vm.len()]), MomentSet::Derivatives);
    assert!((n[centre][0] + 1.0).abs() < 1e-3, "{:?}", n[centre]);
    assert!((n[vm.len()][0] + 1.0).abs() < 2e-2, "{:?}", n[vm.len()]);
    let p = op.apply(&parametrix_densities(&vec![[0.0, 2.0, 0.0]; vm.len()]), MomentSet::Parametrix);
    assert!((p[centre][1] + 2.0 * ks.chi.moment(eps)).abs() < 1e-8);
    let zero = op.apply(&parametrix_densities(&vec![[0.0; 3]; vm.len()]), MomentSet::Parametrix);
    assert_eq!(max_norm(&zero), 0.0);
}

#[test]
fn volume_pairs_respect_support() {
    let (vm, _) = ball(12, 1);
    let ks = laplace(LocalizingFunction::chi1k(2, 0.3));
    let op = VolumeOperator::new(&ks, &vm, &cell_targets(&vm)).unwrap();
    let reach = ks.reach().unwrap();
    let h = vm.h();
    let mut pairs = 0;
    op.for_each_pair(|t, c, m| {
        pairs += 1;
        let d = (vm.cells[t].centroid - vm.cells[c].centroid).norm();
        assert!(d < reach + 2.0 * h || m.iter().all(|&v| v == 0.0));
    });
    assert!(pairs < vm.len() * vm.len() / 4);
    let outside = VolumeOperator::new(&ks, &vm, &[VolumeTarget::Point(Point::new(2.0, 0.0, 0.0))]);
    assert!(matches!(outside, Err(PotentialError::TargetOutside { .. })));
}

#[test]
fn classical_sphere_potentials() {
    let (_, sm) = ball(4, 3);
    let ks = laplace(LocalizingFunction::untruncated());
    let g = vec![[1.0, 1.0, 1.0]; sm.len()];
    let centre = SurfaceOperator::new(&ks, &sm, vec![SurfaceTarget::point(Point::zeros())]).unwrap();
    let v0 = centre.single_layer(&g)[0];
    assert!(v0.iter().all(|v| (v - 1.0).abs() < 1e-2), "{v0:?}");
    let w0 = centre.double_layer(&g)[0];
    assert!(w0.iter().all(|v| (v + 1.0).abs() < 1e-2), "{w0:?}");
    let on = SurfaceOperator::on_surface(&ks, &sm).unwrap();
    for (v, w) in on.single_layer(&g).iter().zip(on.double_layer(&g)) {
        assert!(v.iter().all(|v| (v - 1.0).abs() < 2e-2), "{v:?}");
        assert!(w.iter().all(|w| (w + 0.5).abs() < 2e-2), "{w:?}");
    }
    let zero = on.single_layer(&vec![[0.0; 3]; sm.len()]);
    assert_eq!(max_norm(&zero), 0.0);
}

#[test]
fn single_layer_is_symmetric_on_smooth_densities() {
    let (_, sm) = ball(4, 2);
    let ks = laplace(LocalizingFunction::chi1k(3, 1.0));
    let op = SurfaceOperator::on_surface(&ks, &sm).unwrap();
    let psi = smooth_density(&sm);
    let phi: Vec<[f64; 3]> = sm.panels.iter().map(|p| [p.centroid[2].powi(2), 1.0 - p.centroid[1], p.centroid[0]]).collect();
    let pair = |a: &[[f64; 3]], b: &[[f64; 3]]| -> f64 {
        let vb = op.single_layer(b);
        sm.panels.iter().enumerate().map(|(i, p)| p.area * (0..3).map(|r| a[i][r] * vb[i][r]).sum::<f64>()).sum()
    };
    let (ab, ba) = (pair(&psi, &phi), pair(&phi, &psi));
    assert!((ab - ba).abs() <= 1e-3 * ab.abs(), "{ab} vs {ba}");
}

#[test]
fn surface_support_sparsity() {
    let (_, sm) = ball(4, 2);
    let ks = laplace(LocalizingFunction::chi1k(3, 0.4));
    let far = SurfaceOperator::new(&ks, &sm, vec![SurfaceTarget::point(Point::zeros())]).unwrap();
    assert_eq!(far.single_layer(&vec![[1.0; 3]; sm.len()])[0], [0.0; 3]);
    let on = SurfaceOperator::on_surface(&ks, &sm).unwrap();
    for (i, row) in on.rows().iter().enumerate() {
        for (j, _) in row {
            let d = (sm.panels[i].centroid - sm.panels[*j as usize].centroid).norm();
            assert!(d < 0.4 + sm.panels[*j as usize].diameter);
        }
    }
}

fn smooth_density(sm: &SurfaceMesh) -> Vec<[f64; 3]> {
    sm.panels.iter().map(|p| [1.0 + p.centroid[0] * p.centroid[1], p.centroid[2], 0.3 - p.centroid[0]]).collect()
}

#[test]
fn jump_relations_converge() {
    for ks in [laplace(LocalizingFunction::chi1k(3, 1.5)), variable(LocalizingFunction::chi1k(3, 1.5))] {
        for (kind, side) in [
            (JumpKind::SingleLayer, Side::Interior),
            (JumpKind::SingleLayer, Side::Exterior),
            (JumpKind::DoubleLayer, Side::Interior),
            (JumpKind::Traction, Side::Interior),
        ] {
            let errs: Vec<f64> = [1, 2]
                .iter()
                .map(|&level| {
                    let (_, sm) = ball(4, level);
                    jump_test(&ks, &sm, &smooth_density(&sm), side, kind, Extrapolation::default()).unwrap().max_rel
                })
                .collect();
            assert!(errs[1] < 0.05 && errs[1] <= 0.7 * errs[0], "{kind:?} {side:?}: {errs:?}");
        }
    }
}

#[test]
fn jump_of_zero_density_is_zero() {
    let (_, sm) = ball(4, 1);
    let r = jump_test(&laplace(LocalizingFunction::chi1k(3, 1.0)), &sm, &vec![[0.0; 3]; sm.len()], Side::Interior, JumpKind::DoubleLayer, Extrapolation::Linear).unwrap();
    assert_eq!(r.max_rel, 0.0);
}

struct IdentityParts {
    beta_u: Vec<[f64; 3]>,
    n_u: Vec<[f64; 3]>,
    w_u: Vec<[f64; 3]>,
    v_tu: Vec<[f64; 3]>,
    q_u: Vec<[f64; 3]>,
}

/// Pieces of the third identity at cell centroids for u = x₁e₁ (or a constant).
fn identity_parts(ks: &KernelSet, vm: &VolumeMesh, sm: &SurfaceMesh, u: impl Fn(&Point) -> [f64; 3], grad: Gradient) -> IdentityParts {
    let vop = VolumeOperator::new(ks, vm, &cell_targets(vm)).unwrap();
    let sop = SurfaceOperator::new(ks, sm, vm.cells.iter().map(|c| SurfaceTarget::point(c.centroid)).collect()).unwrap();
    let uc: Vec<[f64; 3]> = vm.cells.iter().map(|c| u(&c.centroid)).collect();
    let map = NDensityMap::new(&ks.field, vm).unwrap();
    let trace: Vec<[f64; 3]> = sm.panels.iter().map(|p| u(&p.centroid)).collect();
    let traction: Vec<[f64; 3]> = sm
        .panels
        .iter()
        .map(|p| {
            let a = ks.field.tensor(p.centroid.into()).unwrap();
            lbdie_core::pde_model::conormal_of_tensor(&a, &grad, p.normal.into())
        })
        .collect();
    let beta_u = vm
        .cells
        .iter()
        .zip(&uc)
        .map(|(c, u)| (beta_of_tensor(&ks.field.tensor(c.centroid.into()).unwrap()) * Point::from(*u)).into())
        .collect();
    let q = gradient_densities(&ks.field, vm, &vec![grad; vm.len()]).unwrap();
    IdentityParts {
        beta_u,
        n_u: vop.apply(&map.densities(&uc), MomentSet::Derivatives),
        w_u: sop.double_layer(&trace),
        v_tu: sop.single_layer(&traction),
        q_u: vop.apply(&q, MomentSet::Gradient),
    }
}

#[test]
fn constant_field_identity() {
    let ks = variable(LocalizingFunction::chi1k(3, 0.5));
    let c = [1.0, -2.0, 0.5];
    let (vm, sm) = ball(16, 2);
    let parts = identity_parts(&ks, &vm, &sm, |_| c, [[0.0; 3]; 3]);
    assert_eq!(max_norm(&parts.q_u), 0.0);
    let res: Vec<[f64; 3]> =
        (0..vm.len()).map(|i| std::array::from_fn(|r| parts.beta_u[i][r] + parts.n_u[i][r] + parts.w_u[i][r])).collect();
    let scale = max_norm(&parts.beta_u);
    assert!(max_norm(&res) <= 0.05 * scale, "{} vs {scale}", max_norm(&res));
}

#[test]
fn third_identity_and_gradient_operator_for_linear_field() {
    let ks = laplace(LocalizingFunction::chi1k(3, 0.5));
    let mut grad = [[0.0; 3]; 3];
    grad[0][0] = 1.0;
    let (vm, sm) = ball(16, 2);
    let parts = identity_parts(&ks, &vm, &sm, |x| [x[0], 0.0, 0.0], grad);
    let third: Vec<[f64; 3]> = (0..vm.len())
        .map(|i| std::array::from_fn(|r| parts.beta_u[i][r] + parts.n_u[i][r] - parts.v_tu[i][r] + parts.w_u[i][r]))
        .collect();
    let scale = max_norm(&parts.beta_u);
    assert!(max_norm(&third) <= 0.05 * scale, "third identity {}", max_norm(&third) / scale);
    let general: Vec<[f64; 3]> = (0..vm.len())
        .map(|i| std::array::from_fn(|r| parts.beta_u[i][r] + parts.n_u[i][r] + parts.w_u[i][r] - parts.q_u[i][r]))
        .collect();
    assert!(max_norm(&general) <= 0.05 * scale, "gradient form {}", max_norm(&general) / scale);
}
