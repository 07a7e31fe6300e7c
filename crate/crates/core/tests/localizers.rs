use lbdie_core::localizers::{classify, eval_chi, sigma_certificate, LocalizingFunction};

#[test]
fn eval_chi_examples() {
    let chi11 = LocalizingFunction::chi1k(1, 1.0);
    assert_eq!(eval_chi(&chi11, [0.0; 3]), 1.0);
    assert_eq!(eval_chi(&chi11, [0.5, 0.0, 0.0]), 0.5);
    let chi2 = LocalizingFunction::chi2(1.0);
    assert!((eval_chi(&chi2, [0.0, 0.3, 0.4]) - (-1.0f64 / 3.0).exp()).abs() < 1e-15);
    assert!((eval_chi(&chi2, [0.0, 0.3, 0.4]) - 0.716531).abs() < 1e-6);
    for chi in [chi11, chi2, LocalizingFunction::chi1k(3, 1.0)] {
        assert_eq!(eval_chi(&chi, [2.0, 0.0, 0.0]), 0.0);
        assert_eq!(eval_chi(&chi, [1.0, 0.0, 0.0]), 0.0);
    }
}

#[test]
fn chi11_sine_transform_matches_closed_form() {
    let cert = sigma_certificate(&LocalizingFunction::chi1k(1, 1.0), 100.0, 1000).unwrap();
    assert!((cert.sigma_at_zero - 1.0 / 6.0).abs() < 1e-14);
    for (&w, &s) in cert.omega_grid.iter().zip(&cert.sigma_values) {
        let exact = (w - w.sin()) / (w * w * w);
        assert!((s - exact).abs() < 1e-10, "omega {w}: {s} vs {exact}");
    }
    assert!(cert.passed);
}

#[test]
fn example_cutoffs_have_positive_sine_transform() {
    for chi in [LocalizingFunction::chi1k(1, 1.0), LocalizingFunction::chi1k(3, 1.0), LocalizingFunction::chi2(1.0)] {
        let cert = sigma_certificate(&chi, 100.0, 1000).unwrap();
        assert!(cert.passed, "{}: min {}", chi.name, cert.min_sigma);
        assert_eq!(cert.omega_grid.len(), 1000);
        assert!(cert.omega_grid.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn zero_profile_fails_certificate() {
    let zero = LocalizingFunction::from_fn("zero", |_| 0.0, Some(1.0), 3);
    let cert = sigma_certificate(&zero, 10.0, 50).unwrap();
    assert!(cert.sigma_values.iter().all(|&s| s == 0.0));
    assert_eq!(cert.sigma_at_zero, 0.0);
    assert!(!cert.passed);
}

#[test]
fn classification_examples() {
    let m = classify(&LocalizingFunction::chi1k(1, 1.0), 1);
    assert!(m.in_xk && m.in_xk_plus && m.monotone_shortcut_used, "{m:?}");
    assert!(!classify(&LocalizingFunction::chi1k(1, 1.0), 2).in_xk);
    assert!(classify(&LocalizingFunction::chi1k(3, 1.0), 3).in_xk_plus);
    assert!(!classify(&LocalizingFunction::chi1k(3, 1.0), 4).in_xk);
    let m = classify(&LocalizingFunction::chi2(1.0), 5);
    assert!(m.in_xk && m.in_xk_plus, "{m:?}");
    let ramp = LocalizingFunction::from_fn("ramp", |r| 1.0 - r, None, 1);
    assert!(!classify(&ramp, 1).in_xk);
}

#[test]
fn non_monotone_profile_uses_certificate() {
    // cos-modulated profile with χ(0)=1: not monotone, certificate decides.
    let wavy = LocalizingFunction::from_fn("wavy", |r| if r < 1.0 { (1.0 - r).powi(3) * (1.0 + 0.3 * (20.0 * r).sin()) } else { 0.0 }, Some(1.0), 2);
    let m = classify(&wavy, 2);
    assert!(m.in_xk);
    assert!(!m.monotone_shortcut_used);
}

#[test]
fn expression_profile_matches_builtin() {
    let e = lbdie_core::expr::parse("(1 - r/0.8)^3").unwrap();
    let chi = LocalizingFunction::from_expression("user", e, Some(0.8), 3);
    let reference = LocalizingFunction::chi1k(3, 0.8);
    for rho in [0.0, 0.2, 0.5, 0.79, 0.9] {
        let (a, b) = (chi.derivatives(rho), reference.derivatives(rho));
        for m in 0..3 {
            assert!((a[m] - b[m]).abs() < 1e-12);
        }
        assert!((chi.log_defect(rho) - reference.log_defect(rho)).abs() < 1e-9);
    }
}
