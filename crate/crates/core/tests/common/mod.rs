#![allow(dead_code)]

use chemolab::motility::log_grid;
use chemolab::{Grid, MotilityModel, ScalarField};
use proptest::prelude::*;

pub const CASES: u32 = 10_000;

pub fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        max_global_rejects: cases * 4,
        ..ProptestConfig::default()
    }
}

/// `(m, a, b, k, s0)` with `s0 = 0` and `a = 0` each drawn with positive
/// probability.
pub fn model() -> impl Strategy<Value = MotilityModel> {
    (
        0.1f64..4.0,
        prop_oneof![1 => Just(0.0), 4 => 0.0f64..2.0],
        0.1f64..3.0,
        0.1f64..4.0,
        prop_oneof![1 => Just(0.0), 4 => 0.05f64..3.0],
    )
        .prop_map(|(m, a, b, k, s0)| MotilityModel::new(m, a, b, k, s0).unwrap())
}

/// Models with `s0 > 0`, so that `Ψ` and `γ(0)` are finite.
pub fn regular_model() -> impl Strategy<Value = MotilityModel> {
    (0.2f64..3.0, 0.0f64..1.0, 0.2f64..2.0, 0.2f64..3.0, 0.2f64..2.0)
        .prop_map(|(m, a, b, k, s0)| MotilityModel::new(m, a, b, k, s0).unwrap())
}

pub fn monotone_model() -> impl Strategy<Value = MotilityModel> {
    (0.5f64..3.0, 0.0f64..1.0, 0.2f64..2.0, 0.2f64..3.0, 0.2f64..2.0).prop_map(|(m, a, b, k, s0)| {
        let k = k.min(m);
        MotilityModel::new(m, a, b, k, s0).unwrap()
    })
}

pub fn grid_1d() -> impl Strategy<Value = Grid> {
    (0.5f64..20.0, 4usize..48).prop_map(|(l, n)| Grid::line(l, n).unwrap())
}

pub fn grid_2d() -> impl Strategy<Value = Grid> {
    (0.5f64..5.0, 0.5f64..5.0, 4usize..14, 4usize..14).prop_map(|(lx, ly, nx, ny)| Grid::rect(lx, ly, nx, ny).unwrap())
}

pub fn grid() -> impl Strategy<Value = Grid> {
    prop_oneof![3 => grid_1d(), 1 => grid_2d()]
}

pub fn field_on(grid: Grid, lo: f64, hi: f64) -> impl Strategy<Value = ScalarField> {
    proptest::collection::vec(lo..hi, grid.len()).prop_map(move |v| ScalarField::new(grid, v).unwrap())
}

pub fn grid_and_field(lo: f64, hi: f64) -> impl Strategy<Value = (Grid, ScalarField)> {
    grid().prop_flat_map(move |g| (Just(g), field_on(g, lo, hi)))
}

pub fn grid_and_fields(lo: f64, hi: f64) -> impl Strategy<Value = (Grid, ScalarField, ScalarField)> {
    grid().prop_flat_map(move |g| (Just(g), field_on(g, lo, hi), field_on(g, lo, hi)))
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Minimum over a dense log grid of the elasticity `s (φγ)'/(φγ)`, refined
/// by golden-section search around the smallest sample. Same sign as
/// `(φγ)'`, but scale-free.
pub fn min_elasticity(model: &MotilityModel) -> f64 {
    let e = |s: f64| {
        let d = model.phi_gamma_prime(s);
        let value = s * d / model.phi_gamma(s).unwrap();
        if value.is_finite() {
            value
        } else {
            d.signum()
        }
    };
    let grid = log_grid(1e-60, 1e15, 6001);
    let (i, _) = grid
        .iter()
        .map(|&s| e(s))
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) });
    let (mut lo, mut hi) = (grid[i.saturating_sub(1)].ln(), grid[(i + 1).min(grid.len() - 1)].ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (e(x1.exp()), e(x2.exp()));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = e(x1.exp());
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = e(x2.exp());
        }
    }
    e(grid[i]).min(f1).min(f2)
}

pub fn scan_is_monotone(model: &MotilityModel) -> bool {
    min_elasticity(model) >= -1e-12
}
