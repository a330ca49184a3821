//! Parameter sweeps.
//!
//! A sweep file names a base scenario (a `preset`, an inline `[base]`
//! table, or both, with `[base]` keys overriding the preset) and a list of
//! axes. Each axis is a dotted key path into the scenario and a list of
//! values; the sweep runs the cartesian product of all axes.
//!
//! ```toml
//! name = "pattern_mass"
//! preset = "pattern"
//! max_points = 64
//!
//! [[axes]]
//! path = "initial.mass"
//! values = [0.5, 2.0]
//! ```
//!
//! Points run concurrently on at most `parallel` threads, further bounded
//! by the `CHEMOLAB_THREADS` environment variable. Each point writes its
//! own outputs under `points/<index>/`; the aggregate table is
//! `phase_diagram.csv` (one row per successful point) and failed points go
//! to `failures.csv`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ScenarioConfig;
use super::output;
use super::presets::preset;
use super::scenario::{run_scenario, RegimeLabel, RunReport};

pub const THREADS_ENV: &str = "CHEMOLAB_THREADS";
pub const DEFAULT_MAX_POINTS: usize = 10_000;
pub const PHASE_DIAGRAM_FILE: &str = "phase_diagram.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sweep_name")]
    pub name: String,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub base: Option<toml::Table>,
    pub axes: Vec<Axis>,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    /// Upper bound on concurrently running points.
    #[serde(default)]
    pub parallel: Option<usize>,
}

fn default_sweep_name() -> String {
    "sweep".into()
}

fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}

/// One point of the product: its index and `(path, value)` assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub assignments: Vec<(String, toml::Value)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRow {
    pub point: usize,
    pub values: Vec<String>,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub point: usize,
    pub values: Vec<String>,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub name: String,
    pub axes: Vec<String>,
    pub points: usize,
    pub threads: usize,
    pub warnings: Vec<String>,
    pub rows: Vec<PhaseRow>,
    pub failures: Vec<PointFailure>,
    /// Points with a monotone model whose pattern flag is set.
    pub consistency_violations: Vec<usize>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let spec: SweepSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().message().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.preset.is_none() && self.base.is_none() {
            return Err(Error::config("base", "a sweep needs `preset` or a `[base]` table"));
        }
        for (i, axis) in self.axes.iter().enumerate() {
            if axis.path.is_empty() || axis.path.split('.').any(str::is_empty) {
                return Err(Error::config(format!("axes[{i}].path"), "empty key in dotted path"));
            }
            if axis.values.is_empty() {
                return Err(Error::config(format!("axes[{i}].values"), "an axis needs at least one value"));
            }
        }
        if self.parallel == Some(0) {
            return Err(Error::config("parallel", "must be >= 1"));
        }
        Ok(())
    }

    /// The base scenario as a TOML tree.
    pub fn base_value(&self) -> Result<toml::Value> {
        let mut value = match &self.preset {
            Some(name) => preset(name)?.to_toml_value()?,
            None => toml::Value::Table(toml::Table::new()),
        };
        if let Some(base) = &self.base {
            merge(&mut value, toml::Value::Table(base.clone()));
        }
        Ok(value)
    }

    /// Axes with duplicate values removed (first occurrence kept), plus one
    /// warning per removed value.
    pub fn deduplicated_axes(&self) -> (Vec<Axis>, Vec<String>) {
        let mut warnings = Vec::new();
        let axes = self
            .axes
            .iter()
            .map(|axis| {
                let mut values: Vec<toml::Value> = Vec::new();
                for v in &axis.values {
                    if values.contains(v) {
                        warnings.push(format!("axis `{}`: duplicate value {} ignored", axis.path, display(v)));
                    } else {
                        values.push(v.clone());
                    }
                }
                Axis {
                    path: axis.path.clone(),
                    values,
                }
            })
            .collect();
        (axes, warnings)
    }

    /// Cartesian product in row-major order (last axis fastest).
    pub fn points(&self) -> Result<(Vec<SweepPoint>, Vec<String>)> {
        let (axes, warnings) = self.deduplicated_axes();
        let total = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()));
        match total {
            Some(n) if n <= self.max_points => {}
            _ => {
                return Err(Error::config(
                    "max_points",
                    format!("sweep has {total:?} points, cap is {}", self.max_points),
                ))
            }
        }
        let total = total.unwrap_or(0);
        let mut points = Vec::with_capacity(total);
        for index in 0..total {
            let mut rem = index;
            let mut assignments = vec![(String::new(), toml::Value::Boolean(false)); axes.len()];
            for (slot, axis) in axes.iter().enumerate().rev() {
                let n = axis.values.len();
                assignments[slot] = (axis.path.clone(), axis.values[rem % n].clone());
                rem /= n;
            }
            points.push(SweepPoint { index, assignments });
        }
        Ok((points, warnings))
    }
}

/// Deep merge of `over` into `into`: tables merge key by key, anything else
/// replaces.
fn merge(into: &mut toml::Value, over: toml::Value) {
    match (into, over) {
        (toml::Value::Table(a), toml::Value::Table(b)) => {
            for (k, v) in b {
                match a.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        a.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Set `path` (dotted) in `root`, creating the leaf key if absent. Every
/// intermediate key must already hold a table.
pub fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(keys[..i].join("."), "not a table"))?;
        if i + 1 == keys.len() {
            table.insert((*key).to_string(), value);
            return Ok(());
        }
        node = table
            .get_mut(*key)
            .ok_or_else(|| Error::config(keys[..=i].join("."), "no such section"))?;
    }
    unreachable!("split yields at least one key")
}

/// Plain rendering of a value for CSV cells.
pub fn display(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `CHEMOLAB_THREADS` if set to a positive integer.
pub fn env_thread_limit() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Concurrent width: `parallel` (default: available cores), capped by
/// `CHEMOLAB_THREADS` and by the number of points.
pub fn thread_count(parallel: Option<usize>, points: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = parallel.unwrap_or(available);
    if let Some(limit) = env_thread_limit() {
        n = n.min(limit);
    }
    n.clamp(1, points.max(1))
}

/// Overrides applied to every point before the axes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub t_end: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, value: &mut toml::Value) -> Result<()> {
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed).map_err(|_| Error::config("seed", "seed exceeds i64"))?;
            set_path(value, "seed", toml::Value::Integer(seed))?;
        }
        if let Some(t) = self.t_end {
            if value.get("solver").is_none() {
                set_path(value, "solver", toml::Value::Table(toml::Table::new()))?;
            }
            set_path(value, "solver.t_end", toml::Value::Float(t))?;
        }
        Ok(())
    }
}

fn point_config(base: &toml::Value, point: &SweepPoint, overrides: &Overrides) -> Result<ScenarioConfig> {
    let mut value = base.clone();
    overrides.apply(&mut value)?;
    for (path, v) in &point.assignments {
        set_path(&mut value, path, v.clone())?;
    }
    ScenarioConfig::from_toml_value(value)
}

pub fn point_dir(out_dir: &Path, index: usize) -> PathBuf {
    out_dir.join("points").join(format!("{index:04}"))
}

/// Run every point and aggregate. Per-point errors are collected, not
/// propagated; errors in the sweep itself (bad spec, unwritable output)
/// are.
pub fn run_sweep(spec: &SweepSpec, out_dir: Option<&Path>, overrides: &Overrides) -> Result<SweepOutcome> {
    spec.validate()?;
    let base = spec.base_value()?;
    let (points, warnings) = spec.points()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    if let Some(dir) = out_dir {
        output::ensure_dir(dir)?;
    }
    let threads = thread_count(spec.parallel, points.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunReport>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let cfg = point_config(&base, p, overrides)?;
                let dir = out_dir.map(|d| point_dir(d, p.index));
                run_scenario(&cfg, dir.as_deref()).map(|o| o.report)
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (p, r) in points.iter().zip(results) {
        let values: Vec<String> = p.assignments.iter().map(|(_, v)| display(v)).collect();
        match r {
            Ok(report) => rows.push(PhaseRow {
                point: p.index,
                values,
                report,
            }),
            Err(e) => {
                log::error!("sweep point {}: {e}", p.index);
                failures.push(PointFailure {
                    point: p.index,
                    values,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let consistency_violations = rows
        .iter()
        .filter(|r| r.report.monotone && r.report.pattern_flag)
        .map(|r| r.point)
        .collect();
    let outcome = SweepOutcome {
        name: spec.name.clone(),
        axes: spec.axes.iter().map(|a| a.path.clone()).collect(),
        points: points.len(),
        threads,
        warnings,
        rows,
        failures,
        consistency_violations,
    };
    if let Some(dir) = out_dir {
        outcome.write_phase_diagram(&dir.join(PHASE_DIAGRAM_FILE))?;
        outcome.write_failures(&dir.join(FAILURES_FILE))?;
        output::write_json(&dir.join(SWEEP_SUMMARY_FILE), &outcome.summary())?;
    }
    Ok(outcome)
}

/// Small JSON record of a sweep (without per-point reports).
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary<'a> {
    pub name: &'a str,
    pub axes: &'a [String],
    pub points: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub threads: usize,
    pub warnings: &'a [String],
    pub consistency_violations: &'a [usize],
}

pub const PHASE_COLUMNS: [&str; 15] = [
    "m",
    "a",
    "b",
    "k",
    "s0",
    "mass",
    "monotone",
    "mass_in_excitable_set",
    "regime",
    "final_v_dev_l1",
    "peak_v_dev_l1",
    "final_u_dev_l2",
    "peak_u_dev_l2",
    "pattern_flag",
    "t_final",
];

impl SweepOutcome {
    pub fn summary(&self) -> SweepSummary<'_> {
        SweepSummary {
            name: &self.name,
            axes: &self.axes,
            points: self.points,
            succeeded: self.rows.len(),
            failed: self.failures.len(),
            threads: self.threads,
            warnings: &self.warnings,
            consistency_violations: &self.consistency_violations,
        }
    }

    /// Columns: `point`, one per axis path, then [`PHASE_COLUMNS`].
    pub fn write_phase_diagram(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["point".to_string()];
        header.extend(self.axes.iter().cloned());
        header.extend(PHASE_COLUMNS.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let r = &row.report;
            let f = |x: f64| format!("{x:e}");
            let mut rec = vec![row.point.to_string()];
            rec.extend(row.values.iter().cloned());
            rec.extend([
                f(r.model.m()),
                f(r.model.a()),
                f(r.model.b()),
                f(r.model.k()),
                f(r.model.s0()),
                f(r.mass),
                r.monotone.to_string(),
                r.mass_in_excitable_set.to_string(),
                RegimeLabel::as_str(r.regime).to_string(),
                f(r.v_dev_l1.final_value),
                f(r.v_dev_l1.peak),
                f(r.u_dev_l2.final_value),
                f(r.u_dev_l2.peak),
                r.pattern_flag.to_string(),
                f(r.t_final),
            ]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_failures(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["point".to_string()];
        header.extend(self.axes.iter().cloned());
        header.extend(["kind".to_string(), "message".to_string()]);
        w.write_record(&header)?;
        for fail in &self.failures {
            let mut rec = vec![fail.point.to_string()];
            rec.extend(fail.values.iter().cloned());
            rec.extend([fail.kind.clone(), fail.message.clone()]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
        name = "t"
        preset = "homogeneous"

        [base.solver]
        t_end = 0.5

        [[axes]]
        path = "initial.mass"
        values = [0.5, 2.0, 0.5]

        [[axes]]
        path = "grid.cells"
        values = [[16], [32]]
    "#;

    #[test]
    fn product_dedup_and_order() {
        let spec = SweepSpec::from_toml_str(SPEC).unwrap();
        let (points, warnings) = spec.points().unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("initial.mass"));
        assert_eq!(display(&points[1].assignments[0].1), "0.5");
        assert_eq!(display(&points[1].assignments[1].1), "[32]");
        assert_eq!(display(&points[2].assignments[0].1), "2.0");
    }

    #[test]
    fn base_merges_over_preset() {
        let spec = SweepSpec::from_toml_str(SPEC).unwrap();
        let base = spec.base_value().unwrap();
        assert_eq!(base["solver"]["t_end"].as_float(), Some(0.5));
        assert_eq!(base["solver"]["cfl_safety"].as_float(), Some(0.45));
        assert_eq!(base["name"].as_str(), Some("homogeneous"));
    }

    #[test]
    fn cap_is_enforced() {
        let mut spec = SweepSpec::from_toml_str(SPEC).unwrap();
        spec.max_points = 3;
        assert!(matches!(spec.points(), Err(Error::Config { .. })));
    }

    #[test]
    fn set_path_rules() {
        let mut v: toml::Value = toml::from_str("[a]\nb = 1").unwrap();
        set_path(&mut v, "a.c", toml::Value::Integer(2)).unwrap();
        assert_eq!(v["a"]["c"].as_integer(), Some(2));
        assert!(set_path(&mut v, "x.y", toml::Value::Integer(2)).is_err());
        assert!(set_path(&mut v, "a.b.c", toml::Value::Integer(2)).is_err());
    }

    #[test]
    fn bad_points_are_recorded_not_fatal() {
        let text = SPEC.replace("values = [0.5, 2.0, 0.5]", "values = [1.0, -1.0]");
        let spec = SweepSpec::from_toml_str(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&spec, Some(dir.path()), &Overrides::default()).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.failures.len(), 2);
        assert!(out.failures.iter().all(|f| f.kind == "ConfigError"));
        let table = std::fs::read_to_string(dir.path().join(PHASE_DIAGRAM_FILE)).unwrap();
        assert_eq!(table.lines().count(), 3);
        let fails = std::fs::read_to_string(dir.path().join(FAILURES_FILE)).unwrap();
        assert_eq!(fails.lines().count(), 3);
    }

    #[test]
    fn spec_needs_a_base() {
        assert!(SweepSpec::from_toml_str("[[axes]]\npath = \"seed\"\nvalues = [1]").is_err());
        assert!(SweepSpec::from_toml_str("preset = \"homogeneous\"\n[[axes]]\npath = \"a..b\"\nvalues = [1]").is_err());
    }

    #[test]
    fn thread_count_bounds() {
        assert_eq!(thread_count(Some(8), 3), 3);
        assert_eq!(thread_count(Some(2), 10).min(2), thread_count(Some(2), 10));
        assert!(thread_count(None, 0) >= 1);
    }
}
