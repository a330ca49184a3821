mod common;

use std::collections::HashSet;

use chemolab::harness::config::InitialCondition;
use chemolab::harness::sweep::Axis;
use chemolab::harness::{preset, run_sweep, Overrides, ScenarioConfig, SweepSpec, PRESET_NAMES};
use common::{config, model, CASES};
use proptest::prelude::*;

fn axis_values() -> impl Strategy<Value = Vec<toml::Value>> {
    proptest::collection::vec((0i64..6).prop_map(toml::Value::Integer), 1..6)
}

fn spec(axes: Vec<Vec<toml::Value>>, max_points: usize) -> SweepSpec {
    SweepSpec {
        name: "p".into(),
        preset: Some("homogeneous".into()),
        base: None,
        axes: axes
            .into_iter()
            .enumerate()
            .map(|(i, values)| Axis {
                path: format!("initial.x{i}"),
                values,
            })
            .collect(),
        max_points,
        parallel: None,
    }
}

proptest! {
    #![proptest_config(config(CASES))]

    #[test]
    fn sweep_points_are_the_deduplicated_product(axes in proptest::collection::vec(axis_values(), 1..4)) {
        let distinct: Vec<usize> = axes
            .iter()
            .map(|a| a.iter().map(|v| v.as_integer()).collect::<HashSet<_>>().len())
            .collect();
        let duplicates: usize = axes.iter().zip(&distinct).map(|(a, d)| a.len() - d).sum();
        let total: usize = distinct.iter().product();
        let (points, warnings) = spec(axes, 10_000).points().unwrap();
        prop_assert_eq!(points.len(), total);
        prop_assert_eq!(warnings.len(), duplicates);
        let seen: HashSet<String> = points.iter().map(|p| format!("{:?}", p.assignments)).collect();
        prop_assert_eq!(seen.len(), total);
        for (i, p) in points.iter().enumerate() {
            prop_assert_eq!(p.index, i);
        }
    }

    #[test]
    fn sweep_cap_is_enforced(axes in proptest::collection::vec(axis_values(), 1..4), cap in 1usize..50) {
        let s = spec(axes, cap);
        let (full, _) = SweepSpec { max_points: usize::MAX, ..s.clone() }.points().unwrap();
        prop_assert_eq!(s.points().is_ok(), full.len() <= cap);
    }

    #[test]
    fn scenario_toml_round_trip(
        model in model(),
        name in 0usize..PRESET_NAMES.len(),
        seed in 0..=chemolab::harness::config::MAX_SEED,
        mass in 0.1f64..5.0,
        frac in 0.0f64..0.99,
        t_end in 0.0f64..100.0,
    ) {
        let mut cfg: ScenarioConfig = preset(PRESET_NAMES[name]).unwrap();
        cfg.model = model;
        cfg.seed = seed;
        cfg.solver.t_end = t_end;
        cfg.initial = InitialCondition::Random { mass, amplitude: frac * mass, v0_mean: Some(mass) };
        let text = cfg.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(back, cfg.clone());
        cfg.seed = chemolab::harness::config::MAX_SEED + 1;
        prop_assert_eq!(cfg.validate().unwrap_err().kind(), "ConfigError");
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn random_initial_data_is_seeded(seed in any::<u64>(), mass in 0.1f64..5.0, frac in 0.0f64..0.99) {
        let mut cfg = preset("homogeneous").unwrap();
        cfg.seed = seed;
        cfg.initial = InitialCondition::Random { mass, amplitude: frac * mass, v0_mean: None };
        let (u1, v1) = cfg.initial_fields().unwrap();
        let (u2, _) = cfg.initial_fields().unwrap();
        prop_assert_eq!(&u1, &u2);
        prop_assert!(u1.min() >= 0.0);
        prop_assert!((u1.mean() - mass).abs() <= 1e-12 * mass);
        prop_assert!((v1.mean() - mass).abs() <= 1e-12 * mass);
    }
}

#[test]
fn sweep_rows_cover_successful_points_once() {
    let text = r#"
        name = "rows"
        preset = "thm0_regime"

        [base.grid]
        cells = [16]

        [[axes]]
        path = "initial.amplitude"
        values = [0.1, 2.0, 0.2, 0.1, 3.0]

        [[axes]]
        path = "initial.v0_mean"
        values = [1.0, 1.5]
    "#;
    let spec = SweepSpec::from_toml_str(text).unwrap();
    let overrides = Overrides { seed: None, t_end: Some(0.05) };
    let out = run_sweep(&spec, None, &overrides).unwrap();
    assert_eq!(out.points, 8);
    assert_eq!(out.warnings.len(), 1);
    assert_eq!(out.rows.len(), 4);
    assert_eq!(out.failures.len(), 4);
    let mut ids: Vec<usize> = out.rows.iter().map(|r| r.point).chain(out.failures.iter().map(|f| f.point)).collect();
    ids.sort_unstable();
    assert_eq!(ids, (0..8).collect::<Vec<_>>());
}
