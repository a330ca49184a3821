mod common;

use std::f64::consts::PI;

use chemolab::{Grid, PoissonSolver, ScalarField};
use common::{config, grid_and_field, grid_and_fields, rel_close, CASES};
use proptest::prelude::*;

/// `C` with `‖f − ⟨f⟩‖₂ ≤ C ‖∇f‖₂` on `grid`, from inverse iteration with `K`.
fn poincare_constant(grid: Grid) -> f64 {
    let mut solver = PoissonSolver::new(grid);
    let mut f = grid
        .sample(|x, y| x * x + 0.3 * y + (7.0 * x + 3.0 * y).sin())
        .zero_mean();
    for _ in 0..300 {
        f = solver.solve_k(&f).unwrap();
        let n = f.lp_norm(2.0);
        f = f.map(|v| v / n);
    }
    (f.lp_norm(2.0).powi(2) / f.grad_sq_norm()).sqrt()
}

#[test]
fn poincare_constant_is_stable_under_refinement() {
    for grid in [Grid::line(3.0, 24).unwrap(), Grid::rect(2.0, 1.0, 12, 6).unwrap()] {
        let c = poincare_constant(grid);
        let fine = poincare_constant(grid.refined(2));
        let continuum = grid.extents().iter().cloned().fold(0.0, f64::max) / PI;
        assert!((c - fine).abs() <= 0.01 * fine, "{c} vs {fine}");
        assert!((fine - continuum).abs() <= 0.01 * continuum, "{fine} vs {continuum}");
    }
    let g = Grid::line(3.0, 24).unwrap();
    let h = g.h(0);
    let lambda1 = (2.0 / h * (PI * h / 6.0).sin()).powi(2);
    assert!(rel_close(poincare_constant(g), lambda1.sqrt().recip(), 1e-9));
}

fn poincare_holds(f: &ScalarField, c: f64) -> bool {
    f.lp_dist(f.mean(), 2.0) <= c * f.grad_sq_norm().sqrt() * (1.0 + 1e-9) + 1e-12
}

proptest! {
    #![proptest_config(config(CASES))]

    #[test]
    fn mean_is_linear((_g, f, h) in grid_and_fields(-5.0, 5.0), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let combo = f.zip_map(&h, |x, y| a * x + b * y);
        let expect = a * f.mean() + b * h.mean();
        prop_assert!((combo.mean() - expect).abs() <= 1e-12 * (1.0 + f.lp_norm(1.0) + h.lp_norm(1.0)));
        prop_assert!((f.shifted(a).mean() - f.mean() - a).abs() <= 1e-12 * (1.0 + f.max().abs().max(f.min().abs()) + a.abs()));
    }

    #[test]
    fn norm_is_absolutely_homogeneous((_g, f) in grid_and_field(-5.0, 5.0), c in -10.0f64..10.0, p in 1.0f64..4.0) {
        let scaled = f.map(|x| c * x);
        for p in [1.0, 2.0, p] {
            prop_assert!(rel_close(scaled.lp_norm(p), c.abs() * f.lp_norm(p), 1e-12) || f.lp_norm(p) == 0.0);
        }
    }

    #[test]
    fn gradient_norm_shift_invariant((g, f) in grid_and_field(-5.0, 5.0), c in -100.0f64..100.0) {
        let a = f.grad_sq_norm();
        let b = f.shifted(c).grad_sq_norm();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        prop_assert_eq!(ScalarField::constant(g, c).grad_sq_norm(), 0.0);
    }

    #[test]
    fn jensen((g, f) in grid_and_field(-5.0, 5.0)) {
        let lhs = g.measure() * f.mean().powi(2);
        let rhs = f.lp_norm(2.0).powi(2);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn laplacian_telescopes((_g, f) in grid_and_field(-5.0, 5.0)) {
        let lap = f.laplacian();
        let scale = lap.lp_norm(1.0) + 1e-300;
        prop_assert!(lap.integral().abs() <= 1e-12 * scale.max(1.0));
        prop_assert!((f.laplacian().dot(&f) + f.grad_sq_norm()).abs() <= 1e-9 * (1.0 + f.grad_sq_norm()));
    }

    #[test]
    fn reflection_preserves_integrals((_g, f) in grid_and_field(0.0, 5.0)) {
        let r = f.reflected();
        prop_assert!(rel_close(r.integral(), f.integral(), 1e-12));
        prop_assert!(rel_close(r.lp_norm(2.0), f.lp_norm(2.0), 1e-12));
        prop_assert!((r.grad_sq_norm() - f.grad_sq_norm()).abs() <= 1e-12 * f.grad_sq_norm().max(1e-300));
        prop_assert_eq!(r.reflected(), f);
    }

    #[test]
    fn snapshot_roundtrip((_g, f) in grid_and_field(-5.0, 5.0), t in 0.0f64..100.0) {
        let mut buf = Vec::new();
        f.write_csv(&mut buf, "u", t).unwrap();
        let snap = ScalarField::read_csv(std::io::Cursor::new(buf)).unwrap();
        prop_assert_eq!(snap.field, f);
        prop_assert_eq!(snap.time, t);
    }
}

proptest! {
    #![proptest_config(config(CASES))]

    #[test]
    fn poincare_on_fixed_grids(values in proptest::collection::vec(-5.0f64..5.0, 24), values_2d in proptest::collection::vec(-5.0f64..5.0, 72)) {
        thread_local! {
            static C: (f64, f64) = (
                poincare_constant(Grid::line(3.0, 24).unwrap()),
                poincare_constant(Grid::rect(2.0, 1.0, 12, 6).unwrap()),
            );
        }
        let (c1, c2) = C.with(|c| *c);
        let f = ScalarField::new(Grid::line(3.0, 24).unwrap(), values).unwrap();
        prop_assert!(poincare_holds(&f, c1));
        let f = ScalarField::new(Grid::rect(2.0, 1.0, 12, 6).unwrap(), values_2d).unwrap();
        prop_assert!(poincare_holds(&f, c2));
    }
}
