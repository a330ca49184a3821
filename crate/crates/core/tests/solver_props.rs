mod common;

use chemolab::solver::{linear_growth_rate, Stepper};
use chemolab::{Grid, MotilityModel, ScalarField, SimState, SolverConfig, VScheme};
use common::{config, field_on, grid, model, monotone_model, regular_model, CASES};
use proptest::prelude::*;

fn scheme() -> impl Strategy<Value = VScheme> {
    prop_oneof![Just(VScheme::SemiImplicit), Just(VScheme::Explicit)]
}

fn state_on(lo: f64, hi: f64) -> impl Strategy<Value = SimState> {
    grid().prop_flat_map(move |g| (field_on(g, lo, hi), field_on(g, lo, hi)))
        .prop_map(|(u, v)| SimState::new(u, v).unwrap())
}

fn advance(state: &mut SimState, model: &MotilityModel, cfg: &SolverConfig, steps: usize) -> chemolab::Result<()> {
    let mut stepper = Stepper::new(*state.grid());
    for _ in 0..steps {
        stepper.step(state, model, cfg, f64::INFINITY)?;
    }
    Ok(())
}

proptest! {
    #![proptest_config(config(CASES))]

    #[test]
    fn mass_is_conserved_and_fields_stay_nonnegative(
        model in regular_model(),
        state in state_on(0.0, 3.0),
        v_scheme in scheme(),
        steps in 1usize..40,
    ) {
        let cfg = SolverConfig { v_scheme, dt_max: 1e-2, ..SolverConfig::default() };
        let mass0: f64 = state.u.values().iter().sum();
        let mut st = state;
        let mut stepper = Stepper::new(*st.grid());
        for _ in 0..steps {
            stepper.step(&mut st, &model, &cfg, f64::INFINITY).unwrap();
            prop_assert!(st.u.min() >= 0.0 && st.v.min() >= 0.0);
        }
        let mass: f64 = st.u.values().iter().sum();
        prop_assert!((mass - mass0).abs() <= 1e-13 * mass0.max(1e-300),
            "{mass} vs {mass0}");
    }

    #[test]
    fn homogeneous_state_is_stationary(model in regular_model(), g in grid(), mass in 0.01f64..10.0, v_scheme in scheme()) {
        let cfg = SolverConfig { v_scheme, ..SolverConfig::default() };
        let mut st = SimState::new(ScalarField::constant(g, mass), ScalarField::constant(g, mass)).unwrap();
        advance(&mut st, &model, &cfg, 10).unwrap();
        prop_assert!(st.u.values().iter().all(|&x| x == mass));
        prop_assert!(st.v.values().iter().all(|&x| x == mass));
    }

    #[test]
    fn step_never_exceeds_limits(model in regular_model(), state in state_on(0.1, 2.0), dt_max in 1e-4f64..1e-1, t_limit in 1e-5f64..1e-2) {
        let cfg = SolverConfig { dt_max, ..SolverConfig::default() };
        let mut st = state;
        let mut stepper = Stepper::new(*st.grid());
        let stable = stepper.stable_dt(&st, &model, &cfg).unwrap();
        prop_assert!(stable <= dt_max);
        let dt = stepper.step(&mut st, &model, &cfg, t_limit).unwrap();
        prop_assert!(dt <= stable && dt <= t_limit);
        prop_assert!(st.t <= t_limit);
    }

    #[test]
    fn neutral_constant_mode(model in model(), mass in 0.01f64..10.0) {
        prop_assert_eq!(linear_growth_rate(&model, mass, 0.0), 0.0);
    }

    #[test]
    fn monotone_models_are_linearly_stable(model in monotone_model(), mass in 0.01f64..10.0, q in 0.0f64..20.0) {
        prop_assert!(linear_growth_rate(&model, mass, q) <= 0.0);
    }

    #[test]
    fn excitable_levels_have_unstable_long_waves(
        (m, ratio, a, s0) in (0.1f64..2.0, 1.2f64..4.0, prop_oneof![Just(0.0), 0.0f64..0.2], 0.05f64..2.0),
        mass in 0.01f64..10.0,
        frac in 0.01f64..0.99,
    ) {
        let model = MotilityModel::new(m, a, 1.0, m * ratio, s0).unwrap();
        let e = model.excitability(mass);
        prop_assume!(e > 1.0 + 1e-6);
        let q = (frac * (e - 1.0)).sqrt();
        prop_assert!(linear_growth_rate(&model, mass, q) > 0.0, "e = {e}, q = {q}");
        let beyond = (e - 1.0).sqrt() * 1.01;
        prop_assert!(linear_growth_rate(&model, mass, beyond) <= 0.0);
    }
}

#[test]
fn mass_conserved_over_ten_thousand_steps() {
    let model = MotilityModel::new(2.0, 0.0, 1.0, 1.0, 1.0).unwrap();
    let g = Grid::line(15.0, 256).unwrap();
    let u = g.sample(|x, _| 1.0 + 0.3 * (std::f64::consts::PI * x / 15.0).cos());
    let mean0 = u.mean();
    let mut st = SimState::new(u, ScalarField::constant(g, 1.5)).unwrap();
    advance(&mut st, &model, &SolverConfig::default(), 10_000).unwrap();
    assert!((st.u.mean() - mean0).abs() <= 1e-13 * mean0);
}

#[test]
fn singular_motility_needs_positive_v() {
    let model = MotilityModel::new(1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
    let g = Grid::line(1.0, 8).unwrap();
    let v = g.sample(|x, _| if x < 0.2 { 0.0 } else { 1.0 });
    let mut st = SimState::new(ScalarField::constant(g, 1.0), v).unwrap();
    let err = advance(&mut st, &model, &SolverConfig::default(), 1).unwrap_err();
    assert_eq!(err.kind(), "SingularMotility");
}
