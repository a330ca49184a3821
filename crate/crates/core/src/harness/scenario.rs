//! Running one scenario and summarizing it.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{DiagnosticsRecord, DiagnosticsSampler};
use crate::error::Result;
use crate::field::Grid;
use crate::motility::MotilityModel;
use crate::solver::{run_observed, SimState};

use super::config::ScenarioConfig;
use super::output;

/// `‖u − M‖₂` must exceed this multiple of its initial value …
pub const PATTERN_GROWTH: f64 = 5.0;
/// … at every sample of a trailing window of this length …
pub const PATTERN_WINDOW: f64 = 10.0;
/// … and end at no less than this fraction of the window maximum.
pub const PATTERN_HOLD: f64 = 0.5;
/// Floor of the reference perturbation, relative to `M·|Ω|^½`.
pub const PATTERN_FLOOR_REL: f64 = 1e-8;

/// Relative slack of the sampled `L0` ordering.
pub const L0_SLACK_REL: f64 = 1e-8;
/// Multiple of `dt·D0` added to the `L0` slack.
pub const L0_SLACK_DT: f64 = 10.0;

/// Where the initial mass sits relative to the motility structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeLabel {
    /// `φγ` non-decreasing: homogenization expected.
    Monotone,
    /// `M ∈ E`: the homogeneous state is linearly unstable.
    Excitable,
    /// `E ≠ ∅` but `M ∉ E`; no expected outcome is asserted.
    OpenRegime,
}

impl RegimeLabel {
    pub fn classify(model: &MotilityModel, mass: f64) -> Self {
        if model.is_monotone() {
            RegimeLabel::Monotone
        } else if model.is_excitable(mass) {
            RegimeLabel::Excitable
        } else {
            RegimeLabel::OpenRegime
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeLabel::Monotone => "monotone",
            RegimeLabel::Excitable => "excitable",
            RegimeLabel::OpenRegime => "open-regime",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormHistory {
    pub initial: f64,
    pub peak: f64,
    pub final_value: f64,
}

impl NormHistory {
    fn of(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> Self {
        NormHistory {
            initial: f(&records[0]),
            peak: records.iter().map(&f).fold(f64::NEG_INFINITY, f64::max),
            final_value: f(records.last().expect("at least one sample")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiapunovVerdict {
    pub l0_initial: f64,
    pub l0_final: f64,
    pub l1_initial: f64,
    pub l1_final: f64,
    /// Largest `L0(t_{n+1}) − L0(t_n)` over consecutive samples.
    pub l0_max_increase: f64,
    /// `L0` non-increasing within `1e-8·L0(0) + 10·dt·D0`.
    pub l0_non_increasing: bool,
    pub int_d0: f64,
    pub int_d1: f64,
    /// `int_d0 ≤ ½L0(0)(1 + 1e-6)`.
    pub int_d0_bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformBounds {
    pub sup_v_l2: f64,
    pub sup_grad_p: f64,
    pub sup_psi_integral: f64,
}

/// JSON summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub model: MotilityModel,
    pub grid: Grid,
    /// `M = ⟨u⁰⟩`.
    pub mass: f64,
    pub initial_v_mean: f64,
    pub regime: RegimeLabel,
    pub monotone: bool,
    pub mass_in_excitable_set: bool,
    /// `⟨v⁰⟩ < M`.
    pub regime_b: bool,
    pub t_final: f64,
    pub steps: u64,
    pub samples: usize,
    pub p: f64,
    pub qs: Vec<f64>,
    /// `max |⟨u(t)⟩ − M| / M`.
    pub mass_drift_max: f64,
    pub v_dev_l1: NormHistory,
    pub u_dev_l2: NormHistory,
    pub pattern_flag: bool,
    pub liapunov: LiapunovVerdict,
    /// Largest `|d_j|`, `|D0|`, `|D1|` over all samples.
    pub max_abs_dissipation: f64,
    pub bounds: UniformBounds,
    pub b02_residual_max: Option<f64>,
    pub duality_residual_max: Option<f64>,
    pub final_vq_norms: Vec<(f64, f64)>,
    pub final_up_window: f64,
    pub final_weak: [f64; 3],
}

/// Sustained growth of `‖u − M‖₂`: every sample in the trailing
/// `PATTERN_WINDOW` exceeds `PATTERN_GROWTH` times the initial deviation
/// (floored), and the last sample holds at least `PATTERN_HOLD` of the
/// window maximum. False for runs shorter than the window.
pub fn pattern_flag(records: &[DiagnosticsRecord], mass: f64, measure: f64) -> bool {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return false;
    };
    if last.t - first.t < PATTERN_WINDOW {
        return false;
    }
    let reference = first.u_dev_l2.max(PATTERN_FLOOR_REL * mass * measure.sqrt());
    let start = last.t - PATTERN_WINDOW;
    let window: Vec<f64> = records
        .iter()
        .filter(|r| r.t >= start)
        .map(|r| r.u_dev_l2)
        .collect();
    let peak = window.iter().cloned().fold(0.0, f64::max);
    window.iter().all(|&x| x > PATTERN_GROWTH * reference) && last.u_dev_l2 >= PATTERN_HOLD * peak
}

/// `L0` ordering check over consecutive samples; returns the largest
/// increase and whether every step is within slack.
pub fn l0_ordering(records: &[DiagnosticsRecord]) -> (f64, bool) {
    let Some(first) = records.first() else {
        return (0.0, true);
    };
    let base = L0_SLACK_REL * first.l0.abs();
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for w in records.windows(2) {
        let inc = w[1].l0 - w[0].l0;
        worst = worst.max(inc);
        ok &= inc <= base + L0_SLACK_DT * w[1].dt * w[1].d0.abs();
    }
    (if worst.is_finite() { worst } else { 0.0 }, ok)
}

pub fn summarize(
    cfg: &ScenarioConfig,
    grid: Grid,
    records: &[DiagnosticsRecord],
    final_state: &SimState,
    p: f64,
    qs: Vec<f64>,
) -> RunReport {
    let first = &records[0];
    let last = records.last().expect("at least one sample");
    let mass = first.mean_u;
    let (l0_max_increase, l0_non_increasing) = l0_ordering(records);
    let max_opt = |f: &dyn Fn(&DiagnosticsRecord) -> Option<f64>| {
        records.iter().filter_map(f).reduce(f64::max)
    };
    let max_abs_dissipation = records
        .iter()
        .flat_map(|r| r.dee.iter().copied().chain([r.d0, r.d1]))
        .map(f64::abs)
        .fold(0.0, f64::max);
    RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        model: cfg.model,
        grid,
        mass,
        initial_v_mean: first.mean_v,
        regime: RegimeLabel::classify(&cfg.model, mass),
        monotone: cfg.model.is_monotone(),
        mass_in_excitable_set: cfg.model.is_excitable(mass),
        regime_b: first.regime_b,
        t_final: final_state.t,
        steps: final_state.step_count,
        samples: records.len(),
        p,
        qs,
        mass_drift_max: records
            .iter()
            .map(|r| (r.mean_u - mass).abs() / mass)
            .fold(0.0, f64::max),
        v_dev_l1: NormHistory::of(records, |r| r.v_dev_l1),
        u_dev_l2: NormHistory::of(records, |r| r.u_dev_l2),
        pattern_flag: pattern_flag(records, mass, grid.measure()),
        liapunov: LiapunovVerdict {
            l0_initial: first.l0,
            l0_final: last.l0,
            l1_initial: first.l1,
            l1_final: last.l1,
            l0_max_increase,
            l0_non_increasing,
            int_d0: last.int_d0,
            int_d1: last.int_d1,
            int_d0_bounded: records
                .iter()
                .all(|r| r.int_d0 <= 0.5 * first.l0 * (1.0 + 1e-6)),
        },
        max_abs_dissipation,
        bounds: UniformBounds {
            sup_v_l2: records.iter().map(|r| r.v_l2).fold(0.0, f64::max),
            sup_grad_p: records.iter().map(|r| r.grad_p_sq.sqrt()).fold(0.0, f64::max),
            sup_psi_integral: records.iter().map(|r| r.psi_integral).fold(0.0, f64::max),
        },
        b02_residual_max: max_opt(&|r| r.b02_residual),
        duality_residual_max: max_opt(&|r| r.duality.map(|(a, b)| (a - b).abs())),
        final_vq_norms: last.vq_norms.clone(),
        final_up_window: last.up_window,
        final_weak: last.weak,
    }
}

/// Records and summary of a finished scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: RunReport,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

/// Run `cfg`, writing outputs below `out_dir` when given.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let (u0, v0) = cfg.initial_fields()?;
    let sampler_cfg = cfg.sampler_config();
    let (p, qs) = (sampler_cfg.p, sampler_cfg.qs.clone());
    let mut sampler = DiagnosticsSampler::new(grid, sampler_cfg)?;
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        output::ensure_dir(dir)?;
    }
    let snapshots = out_dir.filter(|_| cfg.output.snapshots);
    let every = cfg.output.snapshot_interval;
    let mut next_snapshot = every.unwrap_or(f64::INFINITY);
    let mut snapshot_index = 0usize;
    let summary = run_observed(u0, v0, &cfg.model, &cfg.solver, &mut sampler, |state, _| {
        let Some(dir) = snapshots else {
            return Ok(());
        };
        if state.step_count == 0 {
            files.extend(output::write_snapshots(dir, "initial", state)?);
        } else if let Some(every) = every {
            if state.t >= next_snapshot * (1.0 - 1e-12) {
                snapshot_index += 1;
                files.extend(output::write_snapshots(dir, &format!("{snapshot_index:05}"), state)?);
                next_snapshot = (next_snapshot + every).max(state.t + 0.5 * every);
            }
        }
        Ok(())
    })?;
    let report = summarize(cfg, grid, &summary.records, &summary.final_state, p, qs);
    if let Some(dir) = out_dir {
        if cfg.output.snapshots {
            files.extend(output::write_snapshots(dir, "final", &summary.final_state)?);
        }
        if cfg.output.diagnostics_csv {
            let path = dir.join(output::DIAGNOSTICS_FILE);
            output::write_diagnostics_csv(&path, &summary.records)?;
            files.push(path);
        }
        if cfg.output.summary_json {
            let path = dir.join(output::SUMMARY_FILE);
            output::write_json(&path, &report)?;
            files.push(path);
        }
    }
    Ok(ScenarioOutcome {
        report,
        records: summary.records,
        final_state: summary.final_state,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets::preset;

    #[test]
    fn homogeneous_preset_has_no_dissipation() {
        let out = run_scenario(&preset("homogeneous").unwrap(), None).unwrap();
        let r = &out.report;
        assert!(r.max_abs_dissipation < 1e-12, "{}", r.max_abs_dissipation);
        assert!(!r.pattern_flag);
        assert_eq!(r.mass_drift_max, 0.0);
        assert_eq!(r.regime, RegimeLabel::Monotone);
    }

    #[test]
    fn outputs_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = preset("homogeneous").unwrap();
        cfg.solver.t_end = 1.0;
        cfg.output.snapshot_interval = Some(0.5);
        let out = run_scenario(&cfg, Some(dir.path())).unwrap();
        let names: Vec<String> = out
            .files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expected in ["u_initial.csv", "v_00001.csv", "u_00002.csv", "v_final.csv", "diagnostics.csv", "summary.json"] {
            assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
        }
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["regime"], "monotone");
        assert_eq!(summary["seed"], 0);
    }

    #[test]
    fn pattern_flag_rules() {
        let mk = |t: f64, x: f64| {
            let g = Grid::line(1.0, 8).unwrap();
            let mut s = DiagnosticsSampler::new(g, crate::diagnostics::SamplerConfig {
                interval: 1.0,
                window: 1.0,
                p: 1.0,
                qs: vec![],
            })
            .unwrap();
            let c = crate::field::ScalarField::constant(g, 1.0);
            let mut r = s.sample(&SimState::new(c.clone(), c).unwrap(), &MotilityModel::new(1.0, 0.0, 1.0, 2.0, 1.0).unwrap()).unwrap();
            r.t = t;
            r.u_dev_l2 = x;
            r
        };
        let grow: Vec<_> = (0..=20).map(|i| mk(i as f64, 1e-2 * (1.0 + i as f64))).collect();
        assert!(pattern_flag(&grow, 1.0, 1.0));
        let decay: Vec<_> = (0..=20).map(|i| mk(i as f64, 1e-2 * 0.9f64.powi(i))).collect();
        assert!(!pattern_flag(&decay, 1.0, 1.0));
        let short: Vec<_> = (0..=5).map(|i| mk(i as f64, 1.0 + i as f64)).collect();
        assert!(!pattern_flag(&short, 1.0, 1.0));
        let mut collapse = grow.clone();
        collapse.last_mut().unwrap().u_dev_l2 = 0.06;
        assert!(!pattern_flag(&collapse, 1.0, 1.0));
    }
}
