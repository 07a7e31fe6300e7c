use lbdie_core::expr::parse;
use lbdie_core::pde_model::{
    apply_a, beta_mu, conormal, energy_density, symbol, validate, CoefficientField, ExprVectorField, ModelError,
    ZERO_TENSOR,
};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(src: [&str; 3]) -> ExprVectorField {
    ExprVectorField::parse(src).unwrap()
}

fn close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
    (a - b).abs().max() <= tol
}

fn samples() -> Vec<[f64; 3]> {
    vec![[0.0; 3], [0.3, -0.2, 0.5], [-0.7, 0.1, 0.2]]
}

#[test]
fn validation_bounds() {
    let r = validate(&CoefficientField::laplace(), &samples()).unwrap();
    assert!(r.symmetry_ok);
    assert!((r.c1_estimate - 1.0).abs() < 1e-12 && (r.c2_estimate - 1.0).abs() < 1e-12);
    let r = validate(&CoefficientField::lame_constant(1.0, 1.0), &samples()).unwrap();
    assert!((r.c1_estimate - 1.0).abs() < 1e-12, "{r:?}");
    assert!((r.c2_estimate - 3.0).abs() < 1e-12, "{r:?}");
    assert!(r.minor_symmetry_ok);
}

#[test]
fn asymmetric_perturbation_is_rejected() {
    let mut t = ZERO_TENSOR;
    for p in 0..3 {
        for k in 0..3 {
            t[p][p][k][k] = 1.0;
        }
    }
    t[0][1][0][0] += 1e-3;
    let err = validate(&CoefficientField::general_constant(&t), &samples()).unwrap_err();
    assert!(matches!(err, ModelError::SymmetryViolation { .. }), "{err}");
}

#[test]
fn indefinite_tensor_is_rejected() {
    let f = CoefficientField::scaled_laplace(parse("x1").unwrap());
    assert!(matches!(validate(&f, &[[-0.5, 0.0, 0.0]]), Err(ModelError::EllipticityViolation { .. })));
}

#[test]
fn general_scaled_identity_is_recognised() {
    let mut t = ZERO_TENSOR;
    for p in 0..3 {
        for k in 0..3 {
            t[p][p][k][k] = 2.5;
        }
    }
    assert!(CoefficientField::general_constant(&t).is_scaled_identity());
    t[0][0][0][0] = 1.0;
    assert!(!CoefficientField::general_constant(&t).is_scaled_identity());
}

#[test]
fn symbol_examples() {
    let s = symbol(&CoefficientField::laplace(), [0.1, 0.2, 0.3], [1.0, 2.0, 2.0]).unwrap();
    assert_eq!(s.entries, Matrix3::identity() * 9.0);
    let s = symbol(&CoefficientField::lame_constant(2.0, 1.0), [0.0; 3], [1.0, 0.0, 0.0]).unwrap();
    assert_eq!(s.entries, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)));
    let s = symbol(&CoefficientField::lame_constant(2.0, 1.0), [0.0; 3], [0.0; 3]).unwrap();
    assert_eq!(s.entries, Matrix3::zeros());
}

#[test]
fn beta_mu_examples() {
    let bm = beta_mu(&CoefficientField::laplace(), [0.4, 0.0, 0.0], Some([0.0, 0.6, 0.8])).unwrap();
    assert_eq!(bm.beta, Matrix3::identity());
    assert!(close(&bm.mu.unwrap(), &(Matrix3::identity() * 0.5), 1e-15));
    let bm = beta_mu(&CoefficientField::lame_constant(2.0, 1.0), [0.2, 0.1, 0.0], Some([0.0, 0.0, 1.0])).unwrap();
    assert!(close(&bm.beta, &(Matrix3::identity() * 2.0), 1e-12));
    assert!(close(&bm.mu.unwrap(), &Matrix3::from_diagonal(&Vector3::new(0.5, 0.5, 2.0)), 1e-12));
    assert!(beta_mu(&CoefficientField::laplace(), [0.0; 3], None).unwrap().mu.is_none());
}

#[test]
fn apply_a_examples() {
    let lap = CoefficientField::laplace();
    assert_eq!(apply_a(&lap, &field(["x1^2", "0", "0"]), [0.3, 0.1, 0.2]).unwrap(), [2.0, 0.0, 0.0]);
    assert_eq!(apply_a(&lap, &field(["x1", "x2", "x3"]), [0.3, 0.1, 0.2]).unwrap(), [0.0; 3]);
    let var = CoefficientField::scaled_laplace(parse("1 + x1^2").unwrap());
    let v = apply_a(&var, &field(["x1", "0", "0"]), [0.7, -0.2, 0.1]).unwrap();
    assert!((v[0] - 1.4).abs() < 1e-14 && v[1] == 0.0 && v[2] == 0.0);
}

#[test]
fn apply_a_matches_divergence_of_flux_by_differences() {
    let fields = [
        CoefficientField::lame(parse("2 + x2").unwrap(), parse("1 + 0.5*x1*x3").unwrap()),
        CoefficientField::scaled_laplace(parse("1 + r^2/4").unwrap()),
    ];
    let u = field(["x1^2*x2", "sin(x3)", "x1*x2*x3"]);
    let x = [0.3, -0.4, 0.5];
    let h = 1e-4;
    for f in &fields {
        let flux = |y: [f64; 3], p: usize, k: usize| {
            let t = f.tensor(y).unwrap();
            let du = lbdie_core::pde_model::VectorField::gradient(&u, y).unwrap();
            let mut s = 0.0;
            for q in 0..3 {
                for j in 0..3 {
                    s += t[p][q][k][j] * du[q][j];
                }
            }
            s
        };
        let got = apply_a(f, &u, x).unwrap();
        for p in 0..3 {
            let mut fd = 0.0;
            for k in 0..3 {
                let (mut xp, mut xm) = (x, x);
                xp[k] += h;
                xm[k] -= h;
                fd += (flux(xp, p, k) - flux(xm, p, k)) / (2.0 * h);
            }
            assert!((got[p] - fd).abs() < 1e-6, "{p}: {} vs {fd}", got[p]);
        }
    }
}

#[test]
fn conormal_examples() {
    let lap = CoefficientField::laplace();
    let u = field(["x1", "0", "0"]);
    assert_eq!(conormal(&lap, &u, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]).unwrap(), [1.0, 0.0, 0.0]);
    assert_eq!(conormal(&lap, &u, [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]).unwrap(), [0.0; 3]);
    let lame = CoefficientField::lame_constant(2.0, 1.0);
    let shear = field(["x3", "0", "x1"]);
    assert_eq!(conormal(&lame, &shear, [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]).unwrap(), [2.0, 0.0, 0.0]);
}

#[test]
fn energy_examples() {
    let lap = CoefficientField::laplace();
    let u = field(["x1", "0", "0"]);
    assert_eq!(energy_density(&lap, &u, &u, [0.2, 0.0, 0.0]).unwrap(), 1.0);
    let c = field(["1", "2", "3"]);
    assert_eq!(energy_density(&CoefficientField::lame_constant(2.0, 1.0), &u, &c, [0.0; 3]).unwrap(), 0.0);
    let shear = field(["x2/sqrt(2)", "x1/sqrt(2)", "0"]);
    let e = energy_density(&CoefficientField::lame_constant(2.0, 1.0), &shear, &shear, [0.0; 3]).unwrap();
    assert!((e - 2.0).abs() < 1e-14);
}

#[test]
fn energy_is_symmetric() {
    let f = CoefficientField::lame(parse("2 + x2^2").unwrap(), parse("1 + 0.5*x1").unwrap());
    let (u, v) = (field(["x1*x2", "x3^2", "sin(x1)"]), field(["exp(x2)", "x1", "x1*x3"]));
    let x = [0.2, 0.4, -0.3];
    let (a, b) = (energy_density(&f, &u, &v, x).unwrap(), energy_density(&f, &v, &u, x).unwrap());
    assert!((a - b).abs() < 1e-13);
}

#[test]
fn beta_mu_positive_and_bounds_hold_on_fresh_samples() {
    let f = CoefficientField::lame(parse("1 + x1^2").unwrap(), parse("0.5 + 0.1*x2").unwrap());
    let report = validate(&f, &samples()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for &x in &samples() {
        let n = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let bm = beta_mu(&f, x, Some([n[0], n[1], n[2]])).unwrap();
        assert!(SymmetricEigen::new(bm.beta).eigenvalues.min() > 0.0);
        assert!(SymmetricEigen::new(bm.mu.unwrap()).eigenvalues.min() > 0.0);
    }
    // Lamé eigenvalues are μ|ξ|² and (λ+2μ)|ξ|², so the 26-direction bounds are exact.
    for _ in 0..200 {
        let x = samples()[rng.gen_range(0..3)];
        let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let a = symbol(&f, x, xi).unwrap().entries.map(|v| Complex64::new(v, 0.0));
        let z = Vector3::from_fn(|_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let q = (z.adjoint() * a * z)[(0, 0)].re;
        let scale = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) * z.norm_squared();
        assert!(q >= report.c1_estimate * scale * (1.0 - 1e-12));
        assert!(q <= report.c2_estimate * scale * (1.0 + 1e-12));
    }
}
