use std::sync::Arc;

use membrane::lattice::{GridDomain, ShapePredicate};
use membrane::poly::{multi_indices, Poly};
use membrane::thomee::{
    apply_lh2, consistency_error, convergence_study, error_bound, grid_norm, manufactured_disk, on_rows,
    sobolev_h2_norm, solve_dirichlet, DirichletSolver,
};
use proptest::prelude::*;

fn disk(h: f64) -> Arc<GridDomain> {
    Arc::new(GridDomain::classify(&ShapePredicate::unit_ball(2).unwrap(), h).unwrap())
}

#[test]
fn disk_convergence_table() {
    let problem = manufactured_disk(2).unwrap();
    let table = convergence_study(&problem, &[0.125, 0.0625, 0.03125, 0.015625]).unwrap();
    assert!(table.monotone);
    assert!(table.fitted_order >= 0.5, "{}", table.fitted_order);
    assert!(table.within_bound);
    assert!(table.pass, "{:?}", table.failures);
    for r in &table.rows {
        assert!(r.error_grid * r.error_grid <= table.fitted_constant * r.bound * (1.0 + 1e-12));
        assert!(r.residual < 1e-6, "{}", r.residual);
        assert!((r.bound - error_bound(problem.m2, problem.m5, r.h)).abs() < 1e-15 * r.bound);
    }
}

#[test]
fn three_dimensional_problem_converges() {
    let problem = manufactured_disk(3).unwrap();
    let table = convergence_study(&problem, &[0.25, 0.125, 1.0 / 12.0]).unwrap();
    assert!(table.monotone, "{:?}", table.rows);
}

#[test]
fn solver_inverts_lh() {
    let dom = disk(0.1);
    let f: Vec<f64> = (0..dom.num_rows()).map(|r| (r as f64 * 0.37).sin()).collect();
    let sol = solve_dirichlet(dom.clone(), &f).unwrap();
    let back = apply_lh2(sol.interior(), &dom).unwrap();
    let h = dom.h();
    for r in 0..dom.num_rows() {
        let p = dom.row_point(r);
        let expected = if dom.class(p) == membrane::lattice::PointClass::Interior { f[r] } else { f[r] * h * h };
        assert!((back[r] - expected).abs() < 1e-8 * (1.0 + expected.abs()), "row {r}: {} vs {expected}", back[r]);
    }
    let solver = DirichletSolver::new(dom.clone()).unwrap();
    assert_eq!(solver.solve(&f).unwrap().interior(), sol.interior());
    assert!(solver.solve(&f[1..]).is_err());
}

#[test]
fn consistency_is_second_order() {
    let u = |x: &[f64]| (x[0] * 3.0).sin() * (x[1] * 2.0).cos();
    let bilap = |x: &[f64]| {
        let (a, b) = (3.0f64, 2.0f64);
        (a * a + b * b).powi(2) * u(x)
    };
    let e1 = consistency_error(&disk(0.1), u, bilap).unwrap();
    let e2 = consistency_error(&disk(0.05), u, bilap).unwrap();
    let order = (e1 / e2).log2();
    assert!((order - 2.0).abs() < 0.2, "order {order} from {e1:e} and {e2:e}");
}

#[test]
fn discrete_norms() {
    let dom = disk(0.125);
    let ones = vec![1.0; dom.num_rows()];
    let area = grid_norm(&ones, 0.125, 2).powi(2);
    assert!((area - dom.num_rows() as f64 / 64.0).abs() < 1e-12);
    let h2 = sobolev_h2_norm(&ones, &dom).unwrap();
    assert!(h2 > grid_norm(&ones, 0.125, 2));
    let zeros = vec![0.0; dom.num_rows()];
    assert_eq!(sobolev_h2_norm(&zeros, &dom).unwrap(), 0.0);
    let g = on_rows(&dom, |x| x[0]);
    assert_eq!(g.len(), dom.num_rows());
}

#[test]
fn manufactured_bounds_are_consistent() {
    let p = manufactured_disk(2).unwrap();
    assert!(p.m5 >= p.m2);
    assert_eq!(p.f.as_constant(), Some(64.0));
    assert!(p.u.eval(&[1.0, 0.0]).abs() < 1e-15);
    assert!(manufactured_disk(1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bilaplacian_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let p = Poly::norm_sq(2) * Poly::norm_sq(2);
        let q = Poly::var(2, 0) * Poly::norm_sq(2) * Poly::var(2, 1) * Poly::var(2, 1);
        let lhs = (Poly::constant(2, a) * p.clone() + Poly::constant(2, b) * q.clone()).bilaplacian();
        let rhs = Poly::constant(2, a) * p.bilaplacian() + Poly::constant(2, b) * q.bilaplacian();
        prop_assert!((lhs.eval(&[x, y]) - rhs.eval(&[x, y])).abs() < 1e-9);
    }

    #[test]
    fn partials_commute(i in 0u32..3, j in 0u32..3) {
        let p = (Poly::var(3, 0) * Poly::var(3, 1) + Poly::norm_sq(3)) * Poly::norm_sq(3);
        let a = p.partial(&[i, j, 0]);
        let b = p.derivative(0).partial(&[i.saturating_sub(1), j, 0]);
        if i >= 1 {
            prop_assert!((a.eval(&[0.3, -0.2, 0.5]) - b.eval(&[0.3, -0.2, 0.5])).abs() < 1e-12);
        }
        prop_assert!(a.sup_bound_ball(1.0) >= a.eval(&[0.3, -0.2, 0.5]).abs());
    }

    #[test]
    fn multi_index_orders(d in 1usize..4, k in 0u32..5) {
        for a in multi_indices(d, k) {
            prop_assert_eq!(a.len(), d);
            prop_assert!(a.iter().sum::<u32>() <= k);
        }
    }
}
