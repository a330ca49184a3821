//! Named scenarios.
//!
//! | name | model `(m, a, b, k, s0)` | domain | initial data |
//! |---|---|---|---|
//! | `thm0_regime` | `(2, 0, 1, 1, 1)` | `(0, 15)`, 256 cells | `M = 1`, cosine 0.3, `⟨v⁰⟩ = 1.5` |
//! | `homogeneous` | `(2, 0, 1, 1, 1)` | `(0, 1)`, 64 cells | `(1, 1)` |
//! | `regime_b` | `(2, 0, 1, 1, 1)` | `(0, 15)`, 256 cells | `M = 1`, cosine 0.3, `⟨v⁰⟩ = 0.5` |
//! | `pattern` | `(1, 0, 1, 2, 1)` | `(0, 7.7)`, 64 cells | `M = 2`, cosine `0.02`, `⟨v⁰⟩ = M` |
//! | `pattern_stable` | `(1, 0, 1, 2, 1)` | `(0, 7.7)`, 64 cells | `M = 0.5`, cosine `0.005`, `⟨v⁰⟩ = M` |
//! | `critical` | `(0.5, 0.25, 1, 2, 1)` | `(0, 15)`, 256 cells | `M = 1`, cosine 0.3, `⟨v⁰⟩ = M` |
//!
//! The pattern domain is long enough for its lowest mode `π/7.7` to sit
//! inside the unstable band `q² < 1/3` near the fastest-growing wavenumber.

use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::motility::MotilityModel;
use crate::solver::SolverConfig;

use super::config::{InitialCondition, OutputConfig, SamplingConfig, ScenarioConfig};

pub const PRESET_NAMES: [&str; 6] = [
    "thm0_regime",
    "homogeneous",
    "regime_b",
    "pattern",
    "pattern_stable",
    "critical",
];

pub const MONOTONE_MODEL: (f64, f64, f64, f64, f64) = (2.0, 0.0, 1.0, 1.0, 1.0);
pub const PATTERN_MODEL: (f64, f64, f64, f64, f64) = (1.0, 0.0, 1.0, 2.0, 1.0);
pub const PATTERN_LENGTH: f64 = 7.7;
pub const LONG_LENGTH: f64 = 15.0;

fn model((m, a, b, k, s0): (f64, f64, f64, f64, f64)) -> MotilityModel {
    MotilityModel::new(m, a, b, k, s0).expect("preset parameters are valid")
}

fn line(length: f64, cells: usize) -> GridSpec {
    GridSpec {
        extents: vec![length],
        cells: vec![cells],
    }
}

fn cosine(mass: f64, amplitude: f64, v0_mean: Option<f64>) -> InitialCondition {
    InitialCondition::PerturbedCosine {
        mass,
        amplitude,
        mode: 1,
        mode_y: 0,
        v0_mean,
        v_amplitude: 0.0,
    }
}

fn scenario(
    name: &str,
    model: MotilityModel,
    grid: GridSpec,
    initial: InitialCondition,
    t_end: f64,
    interval: f64,
) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed: 0,
        model,
        grid,
        initial,
        solver: SolverConfig {
            t_end,
            ..SolverConfig::default()
        },
        sampling: SamplingConfig {
            interval,
            ..SamplingConfig::default()
        },
        output: OutputConfig::default(),
    }
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let mono = model(MONOTONE_MODEL);
    let pat = model(PATTERN_MODEL);
    Ok(match name {
        "thm0_regime" => scenario(name, mono, line(LONG_LENGTH, 256), cosine(1.0, 0.3, Some(1.5)), 200.0, 0.25),
        "homogeneous" => scenario(
            name,
            mono,
            line(1.0, 64),
            InitialCondition::Homogeneous {
                mass: 1.0,
                v0_mean: None,
            },
            10.0,
            0.5,
        ),
        "regime_b" => scenario(name, mono, line(LONG_LENGTH, 256), cosine(1.0, 0.3, Some(0.5)), 200.0, 0.25),
        "pattern" => scenario(name, pat, line(PATTERN_LENGTH, 64), cosine(2.0, 0.02, None), 3000.0, 1.0),
        "pattern_stable" => {
            scenario(name, pat, line(PATTERN_LENGTH, 64), cosine(0.5, 0.005, None), 3000.0, 1.0)
        }
        "critical" => scenario(
            name,
            model((0.5, 0.25, 1.0, 2.0, 1.0)),
            line(LONG_LENGTH, 256),
            cosine(1.0, 0.3, None),
            200.0,
            0.25,
        ),
        _ => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{name}`; known: {}", PRESET_NAMES.join(", ")),
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.name, name);
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn preset_regimes() {
        assert!(preset("thm0_regime").unwrap().model.is_monotone());
        let p = preset("pattern").unwrap();
        assert!(!p.model.is_monotone() && p.model.is_excitable(2.0));
        assert!(!preset("pattern_stable").unwrap().model.is_excitable(0.5));
        let c = preset("critical").unwrap().model;
        assert!(c.is_monotone() && !c.is_strictly_monotone());
    }
}
