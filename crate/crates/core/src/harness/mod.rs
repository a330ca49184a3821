//! Scenario files, presets, single runs, sweeps, dispersion tables and the
//! files they write.

pub mod config;
pub mod dispersion;
pub mod output;
pub mod presets;
pub mod scenario;
pub mod sweep;

pub use config::{InitialCondition, OutputConfig, SamplingConfig, ScenarioConfig};
pub use dispersion::{dispersion_table, DispersionTable};
pub use presets::{preset, PRESET_NAMES};
pub use scenario::{pattern_flag, run_scenario, RegimeLabel, RunReport, ScenarioOutcome};
pub use sweep::{run_sweep, Overrides, SweepOutcome, SweepSpec};
