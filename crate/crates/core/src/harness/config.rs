//! Scenario files.
//!
//! A scenario is a TOML document with the sections `model`, `grid`,
//! `initial`, `solver`, `sampling` and `output`, plus top-level `name` and
//! `seed`. Unknown keys are rejected, and every schema error names the
//! offending key path. See `configs/example.toml` for an annotated file.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{q_exponents, SamplerConfig};
use crate::error::{Error, Result};
use crate::field::{Grid, GridSpec, ScalarField};
use crate::motility::{admissible_exponents, MotilityModel};
use crate::solver::SolverConfig;

pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// At most [`MAX_SEED`], the largest TOML integer.
    #[serde(default)]
    pub seed: u64,
    pub model: MotilityModel,
    pub grid: GridSpec,
    pub initial: InitialCondition,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "scenario".into()
}

/// Initial data `(u⁰, v⁰)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `u⁰ ≡ mass`, `v⁰ ≡ v0_mean` (default `mass`).
    Homogeneous {
        mass: f64,
        #[serde(default)]
        v0_mean: Option<f64>,
    },
    /// `u⁰ = mass + amplitude·c(x, y)` with
    /// `c = cos(mode·πx/Lx)·cos(mode_y·πy/Ly)`, and
    /// `v⁰ = v0_mean + v_amplitude·c`.
    PerturbedCosine {
        mass: f64,
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
        #[serde(default)]
        mode_y: u32,
        #[serde(default)]
        v0_mean: Option<f64>,
        #[serde(default)]
        v_amplitude: f64,
    },
    /// `u⁰ = mass + amplitude·ξ` with `ξ` seeded uniform noise, centred and
    /// scaled so that `max |ξ| = 1`; `v⁰ ≡ v0_mean`.
    Random {
        mass: f64,
        amplitude: f64,
        #[serde(default)]
        v0_mean: Option<f64>,
    },
    /// Field snapshots; relative paths resolve against the config file.
    FromFile { u: PathBuf, v: PathBuf },
}

/// Prefix marking a nested key path inside a serde error message.
const PATH_MARK: &str = "@key ";

fn nested(path: String, message: impl std::fmt::Display) -> String {
    format!("{PATH_MARK}{path}@ {message}")
}

impl<'de> Deserialize<'de> for InitialCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = toml::Table::deserialize(d)?;
        let kind = match table.remove("kind") {
            Some(toml::Value::String(k)) => k,
            Some(other) => {
                return Err(D::Error::custom(nested(
                    "kind".into(),
                    format!("expected a string, found {}", other.type_str()),
                )))
            }
            None => return Err(D::Error::custom(nested("kind".into(), "missing field `kind`"))),
        };
        let mut r = FieldReader { table, kind: &kind };
        let ic = match kind.as_str() {
            "homogeneous" => InitialCondition::Homogeneous {
                mass: r.f64("mass")?,
                v0_mean: r.opt_f64("v0_mean")?,
            },
            "perturbed_cosine" => InitialCondition::PerturbedCosine {
                mass: r.f64("mass")?,
                amplitude: r.f64("amplitude")?,
                mode: r.opt_u32("mode")?.unwrap_or(1),
                mode_y: r.opt_u32("mode_y")?.unwrap_or(0),
                v0_mean: r.opt_f64("v0_mean")?,
                v_amplitude: r.opt_f64("v_amplitude")?.unwrap_or(0.0),
            },
            "random" => InitialCondition::Random {
                mass: r.f64("mass")?,
                amplitude: r.f64("amplitude")?,
                v0_mean: r.opt_f64("v0_mean")?,
            },
            "from_file" => InitialCondition::FromFile {
                u: r.path("u")?,
                v: r.path("v")?,
            },
            other => {
                return Err(D::Error::custom(nested(
                    "kind".into(),
                    format!(
                        "unknown kind `{other}`, expected one of homogeneous, perturbed_cosine, random, from_file"
                    ),
                )))
            }
        };
        r.finish()?;
        Ok(ic)
    }
}

/// Reads typed fields out of an `[initial]` table, consuming them so that
/// leftovers can be reported as unknown keys.
struct FieldReader<'k> {
    table: toml::Table,
    kind: &'k str,
}

impl FieldReader<'_> {
    fn err<E: serde::de::Error>(&self, key: &str, message: impl std::fmt::Display) -> E {
        E::custom(nested(key.to_string(), message))
    }

    fn opt_f64<E: serde::de::Error>(&mut self, key: &str) -> std::result::Result<Option<f64>, E> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(x)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(other) => Err(self.err(key, format!("expected a number, found {}", other.type_str()))),
        }
    }

    fn f64<E: serde::de::Error>(&mut self, key: &str) -> std::result::Result<f64, E> {
        self.opt_f64(key)?
            .ok_or_else(|| self.err(key, format!("missing field `{key}` for kind `{}`", self.kind)))
    }

    fn opt_u32<E: serde::de::Error>(&mut self, key: &str) -> std::result::Result<Option<u32>, E> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => u32::try_from(i)
                .map(Some)
                .map_err(|_| self.err(key, format!("expected a non-negative integer, found {i}"))),
            Some(other) => Err(self.err(key, format!("expected an integer, found {}", other.type_str()))),
        }
    }

    fn path<E: serde::de::Error>(&mut self, key: &str) -> std::result::Result<PathBuf, E> {
        match self.table.remove(key) {
            Some(toml::Value::String(s)) => Ok(PathBuf::from(s)),
            Some(other) => Err(self.err(key, format!("expected a path string, found {}", other.type_str()))),
            None => Err(self.err(key, format!("missing field `{key}` for kind `{}`", self.kind))),
        }
    }

    fn finish<E: serde::de::Error>(self) -> std::result::Result<(), E> {
        match self.table.keys().next() {
            Some(key) => Err(self.err(key, format!("unknown field `{key}` for kind `{}`", self.kind))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub interval: f64,
    /// Trailing window for the time-averaged `‖u − M‖_p^p`.
    pub window: f64,
    /// Defaults to `p_max` of the model.
    pub p: Option<f64>,
    /// Defaults to `1, 1.5, …` below `q_max`.
    pub qs: Option<Vec<f64>>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            interval: 0.5,
            window: 1.0,
            p: None,
            qs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Overridden by `--out-dir`.
    pub directory: Option<PathBuf>,
    pub diagnostics_csv: bool,
    pub summary_json: bool,
    /// Write `u`, `v` snapshots at the start and end of the run.
    pub snapshots: bool,
    /// Extra snapshots every `snapshot_interval` time units.
    pub snapshot_interval: Option<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: None,
            diagnostics_csv: true,
            summary_json: true,
            snapshots: true,
            snapshot_interval: None,
        }
    }
}

/// Join the serde path with a nested path carried in the message, if any.
fn config_error(path: String, message: &str) -> Error {
    if let Some(rest) = message.strip_prefix(PATH_MARK) {
        if let Some((inner, msg)) = rest.split_once("@ ") {
            let full = if path.is_empty() || path == "." { inner.to_string() } else { format!("{path}.{inner}") };
            return Error::config(full, msg.trim());
        }
    }
    Error::config(path, message.trim())
}

fn schema_error(e: serde_path_to_error::Error<toml::de::Error>) -> Error {
    let path = e.path().to_string();
    config_error(path, e.into_inner().message())
}

impl ScenarioConfig {
    /// Parse and validate a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Build from an already parsed TOML tree (used by sweeps).
    pub fn from_toml_value(value: toml::Value) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_path_to_error::deserialize(value).map_err(|e| {
                let path = e.path().to_string();
                config_error(path, &e.into_inner().to_string())
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; relative `from_file` paths are resolved against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml_value(&self) -> Result<toml::Value> {
        toml::Value::try_from(self).map_err(|e| Error::config("", e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("", e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let InitialCondition::FromFile { u, v } = &mut self.initial {
            for p in [u, v] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > MAX_SEED {
            return Err(Error::config("seed", format!("must be <= {MAX_SEED}, got {}", self.seed)));
        }
        self.grid.build().map_err(|e| Error::config("grid", e.to_string()))?;
        self.solver
            .validate()
            .map_err(|e| Error::config("solver", e.to_string()))?;
        self.initial.validate()?;
        let s = &self.sampling;
        if !(s.interval > 0.0 && s.interval.is_finite()) {
            return Err(Error::config("sampling.interval", "must be > 0"));
        }
        if !(s.window > 0.0 && s.window.is_finite()) {
            return Err(Error::config("sampling.window", "must be > 0"));
        }
        if let Some(p) = s.p {
            if !(p >= 1.0) {
                return Err(Error::config("sampling.p", "must be >= 1"));
            }
        }
        if let Some(qs) = &s.qs {
            if qs.iter().any(|q| !(*q >= 1.0)) {
                return Err(Error::config("sampling.qs", "every q must be >= 1"));
            }
        }
        if let Some(si) = self.output.snapshot_interval {
            if !(si > 0.0) {
                return Err(Error::config("output.snapshot_interval", "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        self.grid.build()
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let e = admissible_exponents(&self.model);
        SamplerConfig {
            interval: self.sampling.interval,
            window: self.sampling.window,
            p: self.sampling.p.unwrap_or(e.p_max),
            qs: self
                .sampling
                .qs
                .clone()
                .unwrap_or_else(|| q_exponents(e.q_max_exclusive)),
        }
    }

    /// Materialize `(u⁰, v⁰)`; deterministic in `seed`.
    pub fn initial_fields(&self) -> Result<(ScalarField, ScalarField)> {
        self.initial.build(&self.grid()?, self.seed)
    }
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        let positive_mass = |mass: f64| {
            if mass > 0.0 && mass.is_finite() {
                Ok(())
            } else {
                Err(Error::config("initial.mass", format!("must be > 0, got {mass}")))
            }
        };
        let v0 = |v0: Option<f64>| match v0 {
            Some(x) if !(x >= 0.0 && x.is_finite()) => {
                Err(Error::config("initial.v0_mean", format!("must be >= 0, got {x}")))
            }
            _ => Ok(()),
        };
        let amplitude = |a: f64, mass: f64| {
            if a >= 0.0 && a < mass {
                Ok(())
            } else {
                Err(Error::config(
                    "initial.amplitude",
                    format!("must lie in [0, mass) = [0, {mass}), got {a}"),
                ))
            }
        };
        match *self {
            InitialCondition::Homogeneous { mass, v0_mean } => {
                positive_mass(mass)?;
                v0(v0_mean)
            }
            InitialCondition::PerturbedCosine {
                mass,
                amplitude: a,
                mode,
                v0_mean,
                v_amplitude,
                ..
            } => {
                positive_mass(mass)?;
                amplitude(a, mass)?;
                v0(v0_mean)?;
                if mode == 0 {
                    return Err(Error::config("initial.mode", "must be >= 1"));
                }
                let vm = v0_mean.unwrap_or(mass);
                if !(v_amplitude >= 0.0 && v_amplitude <= vm) {
                    return Err(Error::config(
                        "initial.v_amplitude",
                        format!("must lie in [0, v0_mean] = [0, {vm}], got {v_amplitude}"),
                    ));
                }
                Ok(())
            }
            InitialCondition::Random {
                mass,
                amplitude: a,
                v0_mean,
            } => {
                positive_mass(mass)?;
                amplitude(a, mass)?;
                v0(v0_mean)
            }
            InitialCondition::FromFile { .. } => Ok(()),
        }
    }

    pub fn build(&self, grid: &Grid, seed: u64) -> Result<(ScalarField, ScalarField)> {
        match self {
            &InitialCondition::Homogeneous { mass, v0_mean } => Ok((
                ScalarField::constant(*grid, mass),
                ScalarField::constant(*grid, v0_mean.unwrap_or(mass)),
            )),
            &InitialCondition::PerturbedCosine {
                mass,
                amplitude,
                mode,
                mode_y,
                v0_mean,
                v_amplitude,
            } => {
                let (lx, ly) = (grid.extents()[0], grid.extents().get(1).copied().unwrap_or(1.0));
                let shape = grid.sample(|x, y| {
                    (mode as f64 * PI * x / lx).cos() * (mode_y as f64 * PI * y / ly).cos()
                });
                let vm = v0_mean.unwrap_or(mass);
                Ok((
                    shape.map(|c| (mass + amplitude * c).max(0.0)),
                    shape.map(|c| (vm + v_amplitude * c).max(0.0)),
                ))
            }
            &InitialCondition::Random {
                mass,
                amplitude,
                v0_mean,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut xi: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let mean = xi.iter().sum::<f64>() / xi.len() as f64;
                xi.iter_mut().for_each(|x| *x -= mean);
                let peak = xi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
                let u = ScalarField::new(*grid, xi.iter().map(|x| mass + scale * x).collect())?;
                Ok((u, ScalarField::constant(*grid, v0_mean.unwrap_or(mass))))
            }
            InitialCondition::FromFile { u, v } => {
                let us = ScalarField::load_csv(u)?;
                let vs = ScalarField::load_csv(v)?;
                for (snap, path) in [(&us, u), (&vs, v)] {
                    if snap.field.grid() != grid {
                        return Err(Error::config(
                            "initial",
                            format!("snapshot {} does not match the configured grid", path.display()),
                        ));
                    }
                }
                Ok((us.field, vs.field))
            }
        }
    }

    /// `M` if known before building the fields.
    pub fn mass(&self) -> Option<f64> {
        match *self {
            InitialCondition::Homogeneous { mass, .. }
            | InitialCondition::PerturbedCosine { mass, .. }
            | InitialCondition::Random { mass, .. } => Some(mass),
            InitialCondition::FromFile { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        m = 2.0
        a = 0.0
        b = 1.0
        k = 1.0
        s0 = 1.0

        [grid]
        extents = [1.0]
        cells = [32]

        [initial]
        kind = "perturbed_cosine"
        mass = 1.0
        amplitude = 0.1
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.name, "scenario");
        assert_eq!(cfg.solver, SolverConfig::default());
        let (u, v) = cfg.initial_fields().unwrap();
        assert!((u.mean() - 1.0).abs() < 1e-15);
        assert!(v.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = MINIMAL.replace("s0 = 1.0", "s0 = 1.0\nbogus = 3");
        match ScenarioConfig::from_toml_str(&text).unwrap_err() {
            Error::Config { path, message } => {
                assert_eq!(path, "model.bogus", "{message}");
                assert!(message.contains("bogus"), "{message}");
            }
            e => panic!("{e:?}"),
        }
        let text = MINIMAL.replace("cells = [32]", "cells = [32]\nfoo = 1");
        match ScenarioConfig::from_toml_str(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "grid.foo"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn wrong_type_reports_nested_path() {
        let text = MINIMAL.replace("amplitude = 0.1", "amplitude = \"big\"");
        match ScenarioConfig::from_toml_str(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "initial.amplitude"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn initial_kind_errors() {
        let text = MINIMAL.replace("perturbed_cosine", "sawtooth");
        match ScenarioConfig::from_toml_str(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "initial.kind"),
            e => panic!("{e:?}"),
        }
        let text = MINIMAL.replace("amplitude = 0.1", "amplitude = 0.1\nwobble = 1");
        match ScenarioConfig::from_toml_str(&text).unwrap_err() {
            Error::Config { path, message } => {
                assert_eq!(path, "initial.wobble");
                assert!(message.contains("unknown field"));
            }
            e => panic!("{e:?}"),
        }
        let text = MINIMAL.replace("amplitude = 0.1", "");
        match ScenarioConfig::from_toml_str(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "initial.amplitude"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn value_tree_errors_carry_paths() {
        let mut v: toml::Value = toml::from_str(MINIMAL).unwrap();
        v["initial"]["mass"] = toml::Value::String("x".into());
        match ScenarioConfig::from_toml_value(v).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "initial.mass"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn amplitude_must_stay_below_mass() {
        let text = MINIMAL.replace("amplitude = 0.1", "amplitude = 1.0");
        let e = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "initial.amplitude"));
    }

    #[test]
    fn invalid_model_is_a_config_error() {
        let text = MINIMAL.replace("m = 2.0", "m = -1.0");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&text).unwrap_err(),
            Error::Config { .. }
        ));
    }

    #[test]
    fn random_initial_data_is_seeded_and_bounded() {
        let text = MINIMAL.replace("perturbed_cosine", "random").replace("amplitude = 0.1", "amplitude = 0.5");
        let mut cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        let (a, _) = cfg.initial_fields().unwrap();
        let (b, _) = cfg.initial_fields().unwrap();
        assert_eq!(a, b);
        assert!((a.mean() - 1.0).abs() < 1e-14);
        assert!(a.min() >= 0.5 - 1e-14 && a.max() <= 1.5 + 1e-14);
        cfg.seed = 7;
        assert_ne!(cfg.initial_fields().unwrap().0, a);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let v = cfg.to_toml_value().unwrap();
        assert_eq!(ScenarioConfig::from_toml_value(v).unwrap(), cfg);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn from_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let (u, v) = cfg.initial_fields().unwrap();
        u.save_csv(&dir.path().join("u.csv"), "u", 0.0).unwrap();
        v.save_csv(&dir.path().join("v.csv"), "v", 0.0).unwrap();
        let text = MINIMAL.replace(
            "kind = \"perturbed_cosine\"\n        mass = 1.0\n        amplitude = 0.1",
            "kind = \"from_file\"\n        u = \"u.csv\"\n        v = \"v.csv\"",
        );
        let path = dir.path().join("s.toml");
        std::fs::write(&path, text).unwrap();
        let loaded = ScenarioConfig::load(&path).unwrap();
        let (u2, v2) = loaded.initial_fields().unwrap();
        assert_eq!((u2, v2), (u, v));
    }
}
