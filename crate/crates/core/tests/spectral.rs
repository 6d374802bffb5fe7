use std::sync::Arc;

use membrane::green::{assemble_precision, green_full, FactoredPrecision, DENSE_CAP};
use membrane::lattice::{GridDomain, ShapePredicate};
use membrane::linalg::{dense_smallest_eigenpairs, subspace_smallest_eigenpairs};
use membrane::sampler::sample;
use membrane::spectral::{
    continuum_scale, dirichlet_laplacian_smallest, eigendecompose, hs_norm, pairing, pairing_variance,
    pairing_variance_even_box, pairing_variance_support, psi_coefficients, psi_norm_by_coefficients,
    psi_norm_by_kernel, s_threshold, weyl_fit, wiener_convergence_report, SobolevSign, TestFunction, WienerSeries,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn factor(shape: ShapePredicate, h: f64) -> FactoredPrecision {
    let dom = GridDomain::classify(&shape, h).unwrap();
    assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap()
}

#[test]
fn eigenvalues_match_dense_oracle() {
    let fp = factor(ShapePredicate::unit_ball(2).unwrap(), 0.125);
    let basis = eigendecompose(&fp, 12).unwrap();
    let a = fp.precision().matrix();
    let n = a.n();
    let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
    let mut oracle: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
    oracle.sort_by(f64::total_cmp);
    let c = continuum_scale(fp.domain());
    for (j, l) in basis.eigenvalues().iter().enumerate() {
        assert!((l - c * oracle[j]).abs() <= 1e-9 * l, "{j}: {l} vs {}", c * oracle[j]);
    }
    assert!(basis.orthonormality_error < 1e-10);
    assert!(basis.max_relative_residual < 1e-6);
    let u0 = basis.vector(0);
    let coeffs = basis.coefficients(&u0, 3).unwrap();
    assert!((coeffs[0] - 1.0).abs() < 1e-10 && coeffs[1].abs() < 1e-10);
}

#[test]
fn subspace_iteration_agrees_with_dense() {
    let fp = factor(ShapePredicate::cube(2, -1.0, 1.0).unwrap(), 1.0 / 12.0);
    let a = fp.precision().matrix();
    let dense = dense_smallest_eigenpairs(a, 8).unwrap();
    let sub = subspace_smallest_eigenpairs(a, fp.solver(), 8, 1e-10, 500, 1).unwrap();
    for (x, y) in dense.values.iter().zip(&sub.values) {
        assert!((x - y).abs() <= 1e-8 * x, "{x} vs {y}");
    }
}

#[test]
fn bilaplacian_gap_over_squared_laplacian() {
    let dom = GridDomain::classify(&ShapePredicate::cube(2, -1.0, 1.0).unwrap(), 0.125).unwrap();
    let lap = dirichlet_laplacian_smallest(&dom).unwrap();
    let fp = assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap();
    let bilap = eigendecompose(&fp, 1).unwrap().eigenvalues()[0];
    assert!(bilap > lap * lap + 1e-6, "{bilap} vs {}", lap * lap);
}

#[test]
fn weyl_fit_recovers_power_law() {
    let eigs: Vec<f64> = (1..=100).map(|j| 3.0 * (j as f64).powf(4.0 / 3.0)).collect();
    let fit = weyl_fit(&eigs, 3, None).unwrap();
    assert!((fit.slope - 4.0 / 3.0).abs() < 1e-12);
    assert!((fit.expected - 4.0 / 3.0).abs() < 1e-15);
    assert!(weyl_fit(&eigs[..30], 3, None).is_err());
}

#[test]
fn pairing_variance_two_ways() {
    for (d, h) in [(2usize, 0.125), (3, 0.25)] {
        let fp = factor(ShapePredicate::cube(d, -1.0, 1.0).unwrap(), h);
        let f = TestFunction::Bump { center: vec![0.1; d], radius: 0.6 }.on_rows(fp.domain());
        let table = green_full(&fp, DENSE_CAP).unwrap();
        let pv = pairing_variance(&table, &f).unwrap();
        assert!(pv.variance > 0.0);
        assert!(pv.relative_difference <= 1e-8, "{pv:?}");
        let support = pairing_variance_support(&fp, &f).unwrap();
        assert!((support.variance - pv.variance).abs() <= 1e-12 * pv.variance);
    }
}

#[test]
fn even_box_pairing_matches_direct() {
    for (d, h) in [(2usize, 1.0 / 16.0), (4, 0.125)] {
        let dom = GridDomain::classify(&ShapePredicate::cube(d, -0.5, 0.5).unwrap(), h).unwrap();
        let bump = TestFunction::named("bump", d).unwrap();
        let even = pairing_variance_even_box(&dom, &bump).unwrap();
        let f = bump.on_rows(&dom);
        let fp = assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap();
        let direct = pairing_variance_support(&fp, &f).unwrap();
        assert!((even - direct.variance).abs() <= 1e-8 * direct.variance, "d={d}: {even} vs {direct:?}");
        assert!(direct.relative_difference <= 1e-8);
    }
    let off = TestFunction::Bump { center: vec![0.1, 0.0], radius: 0.25 };
    let dom = GridDomain::classify(&ShapePredicate::cube(2, -0.5, 0.5).unwrap(), 0.125).unwrap();
    assert!(pairing_variance_even_box(&dom, &off).is_err());
}

#[test]
fn empirical_pairing_variance() {
    let fp = factor(ShapePredicate::cube(2, -1.0, 1.0).unwrap(), 0.2);
    let f = TestFunction::Bump { center: vec![0.0, 0.0], radius: 0.9 }.on_rows(fp.domain());
    let exact = pairing_variance_support(&fp, &f).unwrap().variance;
    let count = 20_000;
    let samples = sample(&fp, 21, count).unwrap();
    let emp = samples.iter().map(|s| pairing(s, &f).unwrap().powi(2)).sum::<f64>() / count as f64;
    assert!((emp - exact).abs() < 5.0 * exact * (2.0 / count as f64).sqrt(), "{emp} vs {exact}");
}

#[test]
fn norm_by_coefficients_equals_kernel_form() {
    let fp = factor(ShapePredicate::unit_ball(2).unwrap(), 0.125);
    let basis = eigendecompose(&fp, 20).unwrap();
    let s = sample(&fp, 6, 1).unwrap().remove(0);
    for sv in [0.5, 1.0, 3.0] {
        let a = psi_norm_by_coefficients(&basis, &s, sv, 20).unwrap();
        let b = psi_norm_by_kernel(&basis, &s, sv, 20).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300), "{a} vs {b}");
    }
    assert_eq!(psi_coefficients(&basis, &s, 4).unwrap().len(), 4);
    assert!(psi_coefficients(&basis, &s, 21).is_err());
}

#[test]
fn threshold_parameters() {
    let p = s_threshold(4).unwrap();
    assert_eq!((p.l0, p.l2, p.l5), (1, 2, 2));
    assert_eq!(p.s_d, 2.0 + 2.0 * 2.0);
    assert!(s_threshold(1).is_err());
}

#[test]
fn wiener_expected_ratios_follow_power_law() {
    let eigs: Vec<f64> = (1..=256).map(|j| (j as f64).powi(2)).collect();
    let report = wiener_convergence_report(&eigs, 1.0, -2.0, 50, &[16, 32, 64, 128, 256], 0).unwrap();
    for r in &report.expected_ratios {
        assert!((r - 0.25).abs() < 0.02, "{r}");
    }
    assert!(report.converges);
    assert!(report.control_grows);
}

#[test]
fn wiener_partial_sums() {
    let w = WienerSeries::new(vec![1.0, 4.0, 9.0], 2.0, vec![1.0, -2.0, 3.0]).unwrap();
    let p = w.partial_sums();
    let expected = [1.0, 1.0 + 4.0 / 16.0, 1.0 + 4.0 / 16.0 + 9.0 / 81.0];
    for (a, b) in p.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(WienerSeries::new(vec![1.0], 1.0, vec![]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn negative_norm_decreases_in_s(c in prop::collection::vec(-2.0f64..2.0, 1..20), s in 0.0f64..4.0, ds in 0.01f64..2.0) {
        let eigs: Vec<f64> = (1..=c.len()).map(|j| 1.0 + j as f64).collect();
        let a = hs_norm(&c, &eigs, s, SobolevSign::Negative).unwrap();
        let b = hs_norm(&c, &eigs, s + ds, SobolevSign::Negative).unwrap();
        prop_assert!(b <= a + 1e-15);
        let p = hs_norm(&c, &eigs, s, SobolevSign::Positive).unwrap();
        prop_assert!(p >= a - 1e-15);
    }

    #[test]
    fn bump_is_bounded_and_supported(x in prop::collection::vec(-1.0f64..1.0, 3), r in 0.1f64..0.9) {
        let f = TestFunction::Bump { center: vec![0.0; 3], radius: r };
        let v = f.value(&x);
        prop_assert!((0.0..=1.0).contains(&v));
        let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm >= r {
            prop_assert_eq!(v, 0.0);
        }
    }
}
