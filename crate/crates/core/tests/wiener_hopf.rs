use lbdie_core::pde_model::{symbol_of_tensor, CoefficientField, Tensor4};
use lbdie_core::wiener_hopf::*;
use nalgebra::{Matrix3, Rotation3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn e3_frame() -> LocalFrame {
    LocalFrame::new(Vector3::x(), Vector3::y(), Vector3::z()).unwrap()
}

fn laplace() -> FrozenSymbol {
    FrozenSymbol::new(&CoefficientField::laplace(), [0.0; 3], e3_frame()).unwrap()
}

fn lame() -> FrozenSymbol {
    FrozenSymbol::new(&CoefficientField::lame_constant(2.0, 1.0), [0.0; 3], e3_frame()).unwrap()
}

fn random_frame(rng: &mut ChaCha8Rng) -> LocalFrame {
    let n = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    LocalFrame::from_normal(n)
}

fn test_symbols() -> Vec<FrozenSymbol> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = vec![laplace(), lame()];
    for seed in 0..5 {
        out.push(FrozenSymbol::from_tensor(random_spd_tensor(seed), random_frame(&mut rng)));
    }
    out
}

fn random_xi(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = rng.gen_range(0.2..3.0);
    [r * a.cos(), r * a.sin()]
}

fn max_abs(m: &CMatrix3) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

#[test]
fn laplace_factors_are_scalar() {
    for r in [1.0, 2.5] {
        let fact = factorize(&laplace().at([0.6 * r, 0.8 * r])).unwrap();
        let i = Complex64::i();
        for tau in [c(0.3, 0.0), c(-1.0, 0.4)] {
            let plus = CMatrix3::identity() * (tau + i * r);
            let minus = CMatrix3::identity() * (tau - i * r);
            assert!(max_abs(&(fact.plus_at(tau) - plus)) < 1e-12);
            assert!(max_abs(&(fact.minus_at(tau) - minus)) < 1e-12);
        }
        assert!((fact.a_plus - 1.0).norm() < 1e-12 && (fact.a_minus - 1.0).norm() < 1e-12);
        assert!(max_abs(&(fact.c_plus - CMatrix3::identity())) < 1e-12);
        for z in fact.roots_plus {
            assert!((z + i * r).norm() < 1e-10);
        }
    }
}

#[test]
fn lame_leading_coefficient() {
    let poly = lame().at([1.0, 0.0]);
    assert!((poly.m2 - Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 4.0))).abs().max() < 1e-15);
    let fact = factorize(&poly).unwrap();
    assert!((fact.a_plus * fact.a_minus - 4.0).norm() < 1e-10);
    // det Ã = μ²(λ+2μ)(τ² + |ξ′|²)³
    for z in fact.roots_plus {
        assert!((z + Complex64::i()).norm() < 1e-4, "{z}");
    }
}

#[test]
fn frame_rotation_preserves_det() {
    let t = random_spd_tensor(3);
    let base = FrozenSymbol::from_tensor(t, e3_frame());
    let rot = Rotation3::from_euler_angles(0.3, -1.1, 0.7);
    let m = rot.matrix();
    let frame = LocalFrame::new(m.column(0).into(), m.column(1).into(), m.column(2).into()).unwrap();
    let turned = FrozenSymbol::from_tensor(t, frame);
    let xi = [0.4, -0.9, 1.3];
    let g = frame.to_global(xi);
    let direct = symbol_of_tensor(&t, [g.x, g.y, g.z]).determinant();
    assert!((turned.symbol(xi).determinant() - direct).abs() < 1e-10 * direct.abs());
    assert!((base.symbol([g.x, g.y, g.z]).determinant() - direct).abs() < 1e-10 * direct.abs());
}

#[test]
fn factorization_invariants_on_random_tensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for symbol in test_symbols() {
        let det_m2 = symbol.symbol([0.0, 0.0, 1.0]).determinant();
        for _ in 0..16 {
            let poly = symbol.at(random_xi(&mut rng));
            let fact = factorize(&poly).unwrap();
            let probes: Vec<Complex64> =
                (0..8).map(|_| c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect();
            assert!(fact.reconstruction_residual(&probes) <= 1e-8);
            assert!(fact.roots_plus.iter().all(|z| z.im < 0.0));
            assert!(fact.roots_minus.iter().all(|z| z.im > 0.0));
            // the roots annihilate det Ã
            let scale = poly.eval(c(1.0, 0.0)).norm().powi(3);
            for z in fact.roots_plus.iter().chain(&fact.roots_minus) {
                assert!(poly.eval(*z).determinant().norm() < 1e-8 * scale.max(1.0) * (1.0 + z.norm()).powi(6));
            }
            assert!((fact.a_plus * fact.a_minus - det_m2).norm() <= 1e-8 * det_m2.abs());
            let want = fact.c_plus / fact.a_plus;
            let got = fact.cofactor_contour_default().unwrap();
            assert!(max_abs(&(got - want)) <= 1e-8 * max_abs(&want));
            let doubled = fact.cofactor_contour_integral(2 * CONTOUR_NODES).unwrap();
            assert!(max_abs(&(doubled - got)) <= 1e-10 * max_abs(&want));
        }
    }
}

#[test]
fn indefinite_symbol_is_rejected() {
    let mut t: Tensor4 = [[[[0.0; 3]; 3]; 3]; 3];
    for p in 0..3 {
        t[p][p][0][0] = 1.0;
        t[p][p][1][1] = 1.0;
        t[p][p][2][2] = 1.0;
    }
    t[0][0][0][0] = -1.0;
    let poly = FrozenSymbol::from_tensor(t, e3_frame()).at([1.0, 0.0]);
    assert!(matches!(factorize(&poly), Err(WienerHopfError::EllipticityViolation { .. })));
}

fn scalar(f: impl Fn(Complex64) -> Complex64) -> impl Fn(Complex64) -> CMatrix3 {
    move |z| CMatrix3::identity() * f(z)
}

#[test]
fn projections_of_scalar_rationals() {
    let r = 1.7;
    let i = Complex64::i();
    let upper_only = RationalSymbol { eval: scalar(|z| 1.0 / (z - i * r)), lower_poles: vec![], upper_poles: vec![i * r] };
    assert!(max_abs(&pi_prime(&upper_only).unwrap()) < 1e-14);
    let even = RationalSymbol {
        eval: scalar(|z| 1.0 / (z * z + r * r)),
        lower_poles: vec![-i * r],
        upper_poles: vec![i * r],
    };
    let got = pi_prime(&even).unwrap()[(0, 0)];
    assert!((got - 0.5 / r).norm() < 1e-12);

    // h = 1/((τ + ia)(τ − ib)): Π⁺h = 1/((−ia − ib)(ξ₃ + ia)), Π⁻h = 1/((ib + ia)(ξ₃ − ib))
    let (a, b) = (0.8, 2.0);
    let h = RationalSymbol {
        eval: scalar(|z| 1.0 / ((z + i * a) * (z - i * b))),
        lower_poles: vec![-i * a],
        upper_poles: vec![i * b],
    };
    for xi3 in [c(0.0, 0.0), c(0.7, 0.0), c(-2.3, 0.0)] {
        let plus = pi_plus(&h, xi3).unwrap()[(0, 0)];
        let minus = pi_minus(&h, xi3).unwrap()[(0, 0)];
        assert!((plus - 1.0 / ((-i * (a + b)) * (xi3 + i * a))).norm() < 1e-12);
        assert!((minus - 1.0 / ((i * (a + b)) * (xi3 - i * b))).norm() < 1e-12);
        assert!((plus + minus - (h.eval)(xi3)[(0, 0)]).norm() < 1e-12);
    }
}

#[test]
fn pi_plus_matches_line_integral() {
    // (i/2π)∫ h(η)/(ξ₃ + i0 − η) dη with the pole subtracted:
    // ∫ (h(η) − h(ξ₃))/(ξ₃ − η) dη over a window symmetric about ξ₃, plus −iπh(ξ₃)
    let i = Complex64::i();
    let h = RationalSymbol {
        eval: scalar(|z| 1.0 / ((z + i * 0.5) * (z - i) * (z - i * 2.0))),
        lower_poles: vec![-i * 0.5],
        upper_poles: vec![i, i * 2.0],
    };
    let xi3 = 0.4;
    let h0 = (h.eval)(c(xi3, 0.0))[(0, 0)];
    let (lim, m) = (4000.0, 2_000_000);
    let ds = 2.0 * lim / m as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..m {
        let s = -lim + (k as f64 + 0.5) * ds;
        acc += ((h.eval)(c(xi3 + s, 0.0))[(0, 0)] - h0) / (-s) * ds;
    }
    let brute = (acc - i * std::f64::consts::PI * h0) * i / (2.0 * std::f64::consts::PI);
    let got = pi_plus(&h, c(xi3, 0.0)).unwrap()[(0, 0)];
    assert!((brute - got).norm() < 1e-5 * got.norm(), "{brute} vs {got}");
}

#[test]
fn laplace_det_e() {
    let beta = Matrix3::identity();
    for r in [1.0, 0.5, 3.0] {
        let fact = factorize(&laplace().at([0.0, r])).unwrap();
        let parts = compute_e(&fact, &beta, true).unwrap();
        let want = -1.0 / (8.0 * r * r * r);
        assert!((parts.e.determinant() - want).norm() < 1e-10 * want.abs());
        let product = det_e_product_formula(&fact, &beta).unwrap();
        assert!((product - want).norm() < 1e-10 * want.abs());
        assert!(max_abs(&(parts.e1_composed.unwrap() - parts.e1_closed)) < 1e-8 / r);
    }
}

#[test]
fn e1_composition_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for symbol in test_symbols() {
        let beta = symbol.beta();
        for _ in 0..3 {
            let fact = factorize(&symbol.at(random_xi(&mut rng))).unwrap();
            let parts = compute_e(&fact, &beta, true).unwrap();
            let diff = max_abs(&(parts.e1_composed.unwrap() - parts.e1_closed));
            assert!(diff <= 1e-8 * max_abs(&parts.e1_closed), "{diff}");
            let product = det_e_product_formula(&fact, &beta).unwrap();
            let det = parts.e.determinant();
            assert!((product - det).norm() <= 1e-8 * det.norm());
        }
    }
}

#[test]
fn e_is_homogeneous_of_degree_minus_one() {
    let symbol = FrozenSymbol::from_tensor(random_spd_tensor(2), LocalFrame::from_normal(Vector3::new(0.2, 1.0, -0.4)));
    let beta = symbol.beta();
    let xi = [0.3, -0.8];
    let e = compute_e(&factorize(&symbol.at(xi)).unwrap(), &beta, false).unwrap().e;
    for s in [0.25, 2.0, 7.0] {
        let es = compute_e(&factorize(&symbol.at([s * xi[0], s * xi[1]])).unwrap(), &beta, false).unwrap().e;
        assert!(max_abs(&(es * Complex64::new(s, 0.0) - e)) < 1e-10 * max_abs(&e));
        let ratio = es.determinant() / e.determinant();
        assert!((ratio - s.powi(-3)).norm() < 1e-8 * s.powi(-3));
    }
}

#[test]
fn sl_condition_holds_along_homotopy() {
    let t_grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    for symbol in test_symbols() {
        let report = sl_homotopy(&symbol, &t_grid, 64, 1e-6).unwrap();
        assert!(report.passed, "min |det e_t| = {}", report.min_abs_det);
        assert_eq!(report.det_e_t.len(), 11);
        assert_eq!(report.det_e.len(), 64);
    }
    let plain = sl_check(&laplace(), 64, 1e-6).unwrap();
    assert!(plain.det_e.iter().all(|d| (d + 0.125).norm() < 1e-10));
}

#[test]
fn halfspace_grid_checks() {
    let f = vec![[0.0; 3]; 8 * 8 * 8];
    assert!(matches!(halfspace_solve(&laplace(), &f, 8, 8.0), Err(WienerHopfError::BadGrid { .. })));
    let f = vec![[0.0; 3]; 24 * 24 * 24];
    assert!(matches!(halfspace_solve(&laplace(), &f, 24, 8.0), Err(WienerHopfError::BadGrid { .. })));
    let zero = halfspace_solve(&lame(), &vec![[0.0; 3]; 16 * 16 * 16], 16, 8.0).unwrap();
    assert!(zero.u.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn halfspace_laplace_is_exact() {
    let n = 32;
    let f = gaussian_bump(n, 8.0, [0.0; 3], 0.7, [1.0, -0.5, 0.25]);
    let res = halfspace_solve(&laplace(), &f, n, 8.0).unwrap();
    assert!(res.residual < 1e-12, "{}", res.residual);
}

#[test]
fn halfspace_lame_residual_decreases() {
    let residual = |n: usize| {
        let f = gaussian_bump(n, 8.0, [0.0; 3], 0.7, [1.0, -0.5, 0.25]);
        halfspace_solve(&lame(), &f, n, 8.0).unwrap().residual
    };
    let (coarse, fine) = (residual(16), residual(32));
    eprintln!("lame halfspace residual 16: {coarse:.3e} 32: {fine:.3e}");
    assert!(fine < coarse);
}
