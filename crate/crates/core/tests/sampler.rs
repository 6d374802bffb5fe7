use std::sync::Arc;

use membrane::green::{assemble_precision, green_full, FactoredPrecision, DENSE_CAP};
use membrane::lattice::{GridDomain, ShapePredicate};
use membrane::sampler::{
    exact_increment_variance, field_scale, increment_study, interpolation_weights, rescaled_max, sample,
    sample_streams, InterpolatedField, PairDesign,
};
use proptest::prelude::*;

fn unit_box(d: usize, n: usize) -> FactoredPrecision {
    let dom = GridDomain::classify(&ShapePredicate::cube(d, -1.0, 1.0).unwrap(), 1.0 / n as f64).unwrap();
    assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap()
}

#[test]
fn same_seed_same_samples() {
    let fp = unit_box(2, 8);
    let a = sample(&fp, 11, 40).unwrap();
    let b = sample(&fp, 11, 40).unwrap();
    let c = sample(&fp, 12, 40).unwrap();
    for i in 0..40 {
        assert_eq!(a[i].values(), b[i].values());
        assert_ne!(a[i].values(), c[i].values());
        assert_eq!(a[i].stream, i as u64);
    }
    let tail = sample_streams(&fp, 11, 35, 5).unwrap();
    for i in 0..5 {
        assert_eq!(tail[i].values(), a[35 + i].values());
    }
}

#[test]
fn empirical_covariance_matches_green() {
    let fp = unit_box(2, 5);
    let table = green_full(&fp, DENSE_CAP).unwrap();
    let n = fp.n();
    let count = 20_000;
    let samples = sample(&fp, 3, count).unwrap();
    let pairs = [(0, 0), (24, 24), (24, 25), (10, 38), (3, 45)];
    for (x, y) in pairs {
        let emp = samples.iter().map(|s| s.values()[x] * s.values()[y]).sum::<f64>() / count as f64;
        let g = table.get(x, y).unwrap();
        let se = ((table.get(x, x).unwrap() * table.get(y, y).unwrap() + g * g) / count as f64).sqrt();
        assert!((emp - g).abs() < 5.0 * se, "({x},{y}) of {n}: {emp} vs {g}");
    }
}

#[test]
fn interpolation_hits_lattice_values() {
    let fp = unit_box(2, 8);
    let s = sample(&fp, 1, 1).unwrap().remove(0);
    let scale = field_scale(2, 8);
    let field = InterpolatedField::new(s.clone()).unwrap();
    for k in [[0, 0], [3, -2], [-6, 6], [8, 1], [-8, -8]] {
        let t = [k[0] as f64 / 8.0, k[1] as f64 / 8.0];
        assert!((field.evaluate(&t).unwrap() - scale * s.at(&k)).abs() < 1e-14);
    }
    assert!(field.evaluate(&[1.5, 0.0]).is_err());
}

#[test]
fn interpolation_is_continuous_across_cells() {
    let fp = unit_box(3, 6);
    let field = InterpolatedField::new(sample(&fp, 2, 1).unwrap().remove(0)).unwrap();
    let eps = 1e-10;
    for t in [[0.5, 0.1, -0.3], [1.0 / 6.0, 0.25, 0.4], [-0.2, -0.2, -0.2], [0.3, 1.0 / 3.0, 0.3]] {
        let v = field.evaluate(&t).unwrap();
        for axis in 0..3 {
            for s in [-eps, eps] {
                let mut u = t;
                u[axis] += s;
                assert!((field.evaluate(&u).unwrap() - v).abs() < 1e-6, "jump at {t:?} axis {axis}");
            }
        }
    }
}

#[test]
fn rescaled_max_counts_boundary_zero() {
    let fp = unit_box(2, 6);
    let s = sample(&fp, 4, 1).unwrap().remove(0);
    let m = s.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(rescaled_max(&s, 2, 6), field_scale(2, 6) * m.max(0.0));
}

#[test]
fn increment_variance_matches_weight_expansion() {
    let fp = unit_box(2, 6);
    let table = green_full(&fp, DENSE_CAP).unwrap();
    let dom = fp.domain().clone();
    let (t, s) = ([0.21, -0.4], [0.05, 0.33]);
    let mut w = vec![0.0; fp.n()];
    for (pt, sign) in [(&t, 1.0), (&s, -1.0)] {
        for (k, c) in interpolation_weights(pt, 6) {
            if let Some(r) = dom.row_of_coord(&k) {
                w[r] += sign * c;
            }
        }
    }
    let mut q = 0.0;
    for x in 0..fp.n() {
        for y in 0..fp.n() {
            q += w[x] * table.get(x, y).unwrap() * w[y];
        }
    }
    let expected = field_scale(2, 6).powi(2) * q;
    let got = exact_increment_variance(&table, &t, &s, 2, 6).unwrap();
    assert!((got - expected).abs() < 1e-12 * expected);
    let samples = sample(&fp, 9, 20_000).unwrap();
    let field_at = |smp: &membrane::sampler::FieldSample, p: &[f64]| {
        InterpolatedField::new(smp.clone()).unwrap().evaluate(p).unwrap()
    };
    let mc = samples.iter().map(|smp| (field_at(smp, &t) - field_at(smp, &s)).powi(2)).sum::<f64>() / 20_000.0;
    assert!((mc - got).abs() < 5.0 * got * (2.0 / 20_000f64).sqrt(), "{mc} vs {got}");
}

#[test]
fn increment_study_stays_in_the_design() {
    let fp = unit_box(2, 12);
    let design = PairDesign::bulk(12);
    let study = increment_study(&fp, 30, design, 5).unwrap();
    assert_eq!(study.pairs.len(), 30);
    for (t, s, dist, var) in &study.pairs {
        assert!(t.iter().chain(s).all(|v| v.abs() <= 0.5));
        assert!(*dist >= design.distance.0 - 1e-12 && *dist <= design.distance.1 + 1e-12);
        assert!(*var > 0.0);
    }
    let bad = PairDesign { half_side: 0.5, distance: (0.3, 0.2) };
    assert!(increment_study(&fp, 5, bad, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_are_barycentric(t in prop::collection::vec(-1.0f64..1.0, 2..=3), n in 2usize..40) {
        let w = interpolation_weights(&t, n);
        prop_assert_eq!(w.len(), t.len() + 1);
        let total: f64 = w.iter().map(|(_, c)| c).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|(_, c)| *c >= -1e-12));
        for i in 0..t.len() {
            let x: f64 = w.iter().map(|(k, c)| c * k[i] as f64).sum::<f64>() / n as f64;
            prop_assert!((x - t[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolant_lies_between_vertex_values(t0 in -1.0f64..1.0, t1 in -1.0f64..1.0) {
        let fp = unit_box(2, 6);
        let s = sample(&fp, 8, 1).unwrap().remove(0);
        let field = InterpolatedField::new(s.clone()).unwrap();
        let vals: Vec<f64> = interpolation_weights(&[t0, t1], 6).iter().map(|(k, _)| field_scale(2, 6) * s.at(k)).collect();
        let v = field.evaluate(&[t0, t1]).unwrap();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }
}
