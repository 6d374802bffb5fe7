use std::collections::BTreeMap;
use std::sync::Arc;

use membrane::green::{
    assemble_precision, bounds_series, check_bounds, green_columns, green_full, solve_green_column, DENSE_CAP,
};
use membrane::lattice::{GridDomain, ShapePredicate};
use membrane::thomee::DirichletSolver;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `Δ₁²` as an offset map, composed from the nearest-neighbour average.
fn bilaplacian_oracle(d: usize) -> BTreeMap<Vec<i32>, f64> {
    let mut delta1 = vec![(vec![0; d], -1.0)];
    for i in 0..d {
        for s in [-1, 1] {
            let mut o = vec![0; d];
            o[i] = s;
            delta1.push((o, 1.0 / (2 * d) as f64));
        }
    }
    let mut out = BTreeMap::new();
    for (a, wa) in &delta1 {
        for (b, wb) in &delta1 {
            let o: Vec<i32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            *out.entry(o).or_insert(0.0) += wa * wb;
        }
    }
    out
}

fn dense_precision(dom: &GridDomain) -> DMatrix<f64> {
    let n = dom.num_rows();
    let stencil = bilaplacian_oracle(dom.dim());
    DMatrix::from_fn(n, n, |i, j| {
        let o: Vec<i32> = dom.row_coord(j).iter().zip(dom.row_coord(i)).map(|(a, b)| a - b).collect();
        stencil.get(&o).copied().unwrap_or(0.0)
    })
}

fn small_domains() -> Vec<GridDomain> {
    vec![
        GridDomain::classify(&ShapePredicate::cube(2, -1.0, 1.0).unwrap(), 0.2).unwrap(),
        GridDomain::classify(&ShapePredicate::unit_ball(2).unwrap(), 1.0 / 6.0).unwrap(),
        GridDomain::classify(&ShapePredicate::cube(3, -1.0, 1.0).unwrap(), 1.0 / 3.0).unwrap(),
        GridDomain::classify(&ShapePredicate::boxed(vec![-1.0, 0.0], vec![0.5, 1.5]).unwrap(), 0.25).unwrap(),
        GridDomain::classify(&ShapePredicate::cube(1, -1.0, 1.0).unwrap(), 1.0 / 16.0).unwrap(),
    ]
}

#[test]
fn dense_inverse_oracle() {
    for dom in small_domains() {
        let n = dom.num_rows();
        assert!(n > 0 && n <= 64, "oracle domain has {n} rows");
        let inv = dense_precision(&dom).try_inverse().unwrap();
        let fp = assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap();
        let table = green_full(&fp, DENSE_CAP).unwrap();
        let scale = inv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for x in 0..n {
            for y in 0..n {
                let g = table.get(x, y).unwrap();
                assert!((g - inv[(x, y)]).abs() <= 1e-9 * scale, "G({x},{y}) = {g} vs {}", inv[(x, y)]);
            }
        }
    }
}

#[test]
fn precision_matches_oracle_entries() {
    for dom in small_domains() {
        let dense = dense_precision(&dom);
        let pm = assemble_precision(Arc::new(dom)).unwrap();
        let n = pm.n();
        for i in 0..n {
            for j in 0..n {
                assert!((pm.matrix().get(i, j) - dense[(i, j)]).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn columns_satisfy_the_boundary_value_problem() {
    let dom = GridDomain::classify(&ShapePredicate::cube(2, -1.0, 1.0).unwrap(), 1.0 / 32.0).unwrap();
    let fp = assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap();
    let a = fp.precision().matrix();
    for x in [vec![0, 0], vec![29, -29], vec![30, 0], vec![-30, 30], vec![7, 11]] {
        let col = solve_green_column(&fp, &x).unwrap();
        let r = a.mul(&col.values);
        let worst = r
            .iter()
            .enumerate()
            .map(|(i, v)| (v - if i == col.row { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "{x:?}: {worst:e}");
    }
}

#[test]
fn selected_columns_match_full_table() {
    let dom = GridDomain::classify(&ShapePredicate::unit_ball(2).unwrap(), 0.125).unwrap();
    let fp = assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap();
    let full = green_full(&fp, DENSE_CAP).unwrap();
    let rows = [0, 5, fp.n() / 2, fp.n() - 1];
    let cols = green_columns(&fp, &rows).unwrap();
    assert!(!cols.is_full());
    for &r in &rows {
        for y in 0..fp.n() {
            assert!((cols.get(r, y).unwrap() - full.get(r, y).unwrap()).abs() < 1e-12);
            assert!((cols.get(y, r).unwrap() - full.get(y, r).unwrap()).abs() < 1e-12);
        }
    }
    assert!(cols.get(1, 2).is_none());
    assert!(full.max_asymmetry() < 1e-12);
}

#[test]
fn dirichlet_inverse_is_rescaled_green() {
    for h in [0.125, 0.0625] {
        let dom = Arc::new(GridDomain::classify(&ShapePredicate::unit_ball(2).unwrap(), h).unwrap());
        let k = dom.kappa();
        let fp = assemble_precision(dom.clone()).unwrap().factorize(None).unwrap();
        let solver = DirichletSolver::new(dom.clone()).unwrap();
        for row in [0, dom.num_rows() / 3, dom.num_rows() - 1] {
            let mut f = vec![0.0; dom.num_rows()];
            f[row] = 1.0;
            let u = solver.solve(&f).unwrap();
            let g = solve_green_column(&fp, dom.row_coord(row)).unwrap();
            let scale = g.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * h.powi(4) * k * k;
            for (a, b) in u.interior().iter().zip(&g.values) {
                assert!((a - h.powi(4) * k * k * b).abs() <= 1e-9 * scale);
            }
        }
    }
}

#[test]
fn bounds_constants_are_stable_in_d2() {
    let reports: Vec<_> = [8usize, 12, 16]
        .iter()
        .map(|&n| {
            let dom = GridDomain::classify(&ShapePredicate::cube(2, -1.0, 1.0).unwrap(), 1.0 / n as f64).unwrap();
            let fp = assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap();
            check_bounds(&green_full(&fp, DENSE_CAP).unwrap()).unwrap()
        })
        .collect();
    for r in &reports {
        assert!(r.c_sup.is_finite() && r.c_sup > 0.0);
    }
    let series = bounds_series(&reports);
    assert_eq!(series.scales.len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_form_is_positive(w in prop::collection::vec(-1.0f64..1.0, 49), shift in 0usize..49) {
        let dom = GridDomain::classify(&ShapePredicate::cube(2, -1.0, 1.0).unwrap(), 0.2).unwrap();
        let fp = assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap();
        let table = green_full(&fp, DENSE_CAP).unwrap();
        let mut w = w;
        w[shift] += 2.0;
        let mut q = 0.0;
        for x in 0..49 {
            for y in 0..49 {
                q += w[x] * table.get(x, y).unwrap() * w[y];
            }
        }
        prop_assert!(q > 0.0);
        let solved = fp.solver().solve(&w).unwrap();
        let direct: f64 = w.iter().zip(&solved).map(|(a, b)| a * b).sum();
        prop_assert!((q - direct).abs() <= 1e-9 * q);
    }

    #[test]
    fn green_is_symmetric_under_reflection(x0 in -2i32..=2, x1 in -2i32..=2) {
        let dom = GridDomain::classify(&ShapePredicate::cube(2, -1.0, 1.0).unwrap(), 0.2).unwrap();
        let fp = assemble_precision(Arc::new(dom)).unwrap().factorize(None).unwrap();
        let table = green_full(&fp, DENSE_CAP).unwrap();
        let g = table.at(&[x0, x1], &[1, -2]).unwrap();
        for (a, b) in [([-x0, x1], [-1, -2]), ([x1, x0], [-2, 1]), ([x0, -x1], [1, 2])] {
            prop_assert!((table.at(&a, &b).unwrap() - g).abs() <= 1e-12 * g.abs().max(1.0));
        }
    }
}
