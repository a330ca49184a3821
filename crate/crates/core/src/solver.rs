//! Time integration of
//!
//! ```text
//! ∂t u = Δw,  w = φ(u) γ(v),     ∂t v = Δv − v + u
//! ```
//!
//! with no-flux boundaries. The `u` update is forward Euler on `L_h w`,
//! assembled from face fluxes so that `Σ u` is conserved up to round-off.
//! The `v` update uses the new `u` and is either forward Euler or the
//! unconditionally stable `(I + dt(I − L_h)) v^{n+1} = v^n + dt u^{n+1}`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsRecord, DiagnosticsSampler};
use crate::error::{Error, Result};
use crate::field::{neumann_laplacian, Grid, ScalarField};
use crate::motility::Motility;
use crate::poisson::{conjugate_gradient, CgScratch};

/// Floor applied to `u` when evaluating the stiffness proxy `φ'(u)γ(v)`.
pub const STIFFNESS_U_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VScheme {
    Explicit,
    #[default]
    SemiImplicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub v_scheme: VScheme,
    pub positivity_retries: u32,
    /// Relative residual of the implicit `v` solve on 2D grids.
    pub implicit_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cfl_safety: 0.45,
            dt_max: 1e-2,
            t_end: 1.0,
            v_scheme: VScheme::SemiImplicit,
            positivity_retries: 40,
            implicit_tolerance: 1e-11,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety", format!("must lie in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad("dt_max", format!("must be > 0, got {}", self.dt_max));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be >= 0, got {}", self.t_end));
        }
        if !(self.implicit_tolerance > 0.0) {
            return bad("implicit_tolerance", format!("must be > 0, got {}", self.implicit_tolerance));
        }
        Ok(())
    }
}

/// `(t, u, v)` plus step bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    /// Last step size taken (0 before the first step).
    pub dt: f64,
    pub step_count: u64,
}

impl SimState {
    pub fn new(u: ScalarField, v: ScalarField) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::InvalidGrid("u and v live on different grids".into()));
        }
        for (name, f) in [("u", &u), ("v", &v)] {
            if f.values().iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: if name == "u" { "u0" } else { "v0" },
                    reason: "initial data must be finite and non-negative".into(),
                });
            }
        }
        Ok(SimState {
            t: 0.0,
            u,
            v,
            dt: 0.0,
            step_count: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}

/// Owns the scratch buffers of the time stepper for one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    w: Vec<f64>,
    lap_w: Vec<f64>,
    lap_v: Vec<f64>,
    u_new: Vec<f64>,
    rhs: Vec<f64>,
    delta: Vec<f64>,
    tri_c: Vec<f64>,
    tri_d: Vec<f64>,
    cg: CgScratch,
}

impl Stepper {
    pub fn new(grid: Grid) -> Self {
        let n = grid.len();
        Stepper {
            grid,
            w: vec![0.0; n],
            lap_w: vec![0.0; n],
            lap_v: vec![0.0; n],
            u_new: vec![0.0; n],
            rhs: vec![0.0; n],
            delta: vec![0.0; n],
            tri_c: vec![0.0; n],
            tri_d: vec![0.0; n],
            cg: CgScratch::new(n),
        }
    }

    /// `cfl_safety · h² / (2 · dim · max φ'(u)γ(v))`, capped by `dt_max`.
    pub fn stable_dt<F: Motility + ?Sized>(
        &self,
        state: &SimState,
        model: &F,
        config: &SolverConfig,
    ) -> Result<f64> {
        let mut stiffness: f64 = 0.0;
        for (&u, &v) in state.u.values().iter().zip(state.v.values()) {
            let s = model.phi_prime(u.max(STIFFNESS_U_FLOOR)) * model.gamma(v)?;
            stiffness = stiffness.max(s);
        }
        let h = self.grid.h_min();
        let limit = config.cfl_safety * h * h / (2.0 * self.grid.dim() as f64 * stiffness);
        Ok(if limit.is_finite() && limit > 0.0 {
            limit.min(config.dt_max)
        } else {
            config.dt_max
        })
    }

    /// Advance one step, never past `t_limit`; a step that reaches
    /// `t_limit` lands on it exactly. Returns the step size used.
    pub fn step<F: Motility + ?Sized>(
        &mut self,
        state: &mut SimState,
        model: &F,
        config: &SolverConfig,
        t_limit: f64,
    ) -> Result<f64> {
        let grid = self.grid;
        let n = grid.len();
        if model.singular_at_zero() {
            let min_v = state.v.min();
            if !(min_v > 0.0) {
                return Err(Error::SingularMotility { t: state.t, min_v });
            }
        }
        for i in 0..n {
            let (u, v) = (state.u.values()[i], state.v.values()[i]);
            self.w[i] = model.phi(u) * model.gamma(v)?;
        }
        neumann_laplacian(&grid, &self.w, &mut self.lap_w);
        neumann_laplacian(&grid, state.v.values(), &mut self.lap_v);

        let remaining = t_limit - state.t;
        let mut dt = self.stable_dt(state, model, config)?;
        let mut lands = false;
        if dt >= remaining {
            dt = remaining;
            lands = true;
        }
        if !(dt > 0.0) {
            return Err(Error::Domain(format!(
                "non-positive step {dt} at t = {} towards {t_limit}",
                state.t
            )));
        }

        let mut retries = 0;
        loop {
            let u = state.u.values();
            let mut ok = true;
            for i in 0..n {
                let x = u[i] + dt * self.lap_w[i];
                ok &= x >= 0.0;
                self.u_new[i] = x;
            }
            if ok {
                ok = self.update_v(state, dt, config)?;
            }
            if ok {
                break;
            }
            retries += 1;
            if retries > config.positivity_retries {
                return Err(Error::PositivityFailure {
                    t: state.t,
                    retries: config.positivity_retries,
                });
            }
            dt *= 0.5;
            lands = false;
        }

        state.u.values_mut().copy_from_slice(&self.u_new);
        for (v, d) in state.v.values_mut().iter_mut().zip(&self.delta) {
            *v += d;
        }
        state.t = if lands { t_limit } else { state.t + dt };
        state.dt = dt;
        state.step_count += 1;
        Ok(dt)
    }

    /// Fill `delta = v^{n+1} − v^n`; false if the result would go negative.
    fn update_v(&mut self, state: &SimState, dt: f64, config: &SolverConfig) -> Result<bool> {
        let v = state.v.values();
        let n = v.len();
        for i in 0..n {
            self.rhs[i] = dt * (self.lap_v[i] - v[i] + self.u_new[i]);
        }
        match config.v_scheme {
            VScheme::Explicit => self.delta.copy_from_slice(&self.rhs),
            VScheme::SemiImplicit if self.grid.dim() == 1 => self.solve_tridiagonal(dt),
            VScheme::SemiImplicit => {
                let grid = self.grid;
                self.delta.iter_mut().for_each(|d| *d = 0.0);
                conjugate_gradient(
                    |p, out| {
                        neumann_laplacian(&grid, p, out);
                        for (o, &pi) in out.iter_mut().zip(p) {
                            *o = (1.0 + dt) * pi - dt * *o;
                        }
                    },
                    &self.rhs,
                    &mut self.delta,
                    config.implicit_tolerance,
                    10 * n,
                    false,
                    &mut self.cg,
                )?;
            }
        }
        Ok(v.iter().zip(&self.delta).all(|(a, d)| a + d >= 0.0))
    }

    /// Thomas algorithm for `((1+dt) I − dt L_h) delta = rhs` in 1D.
    fn solve_tridiagonal(&mut self, dt: f64) {
        let n = self.rhs.len();
        let h = self.grid.h(0);
        let off = -dt / (h * h);
        let diag = |i: usize| {
            let neighbours = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            1.0 + dt - off * neighbours
        };
        let (c, d) = (&mut self.tri_c, &mut self.tri_d);
        c[0] = off / diag(0);
        d[0] = self.rhs[0] / diag(0);
        for i in 1..n {
            let denom = diag(i) - off * c[i - 1];
            c[i] = off / denom;
            d[i] = (self.rhs[i] - off * d[i - 1]) / denom;
        }
        self.delta[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            self.delta[i] = d[i] - c[i] * self.delta[i + 1];
        }
    }
}

/// One step from `state`, returning the new state.
pub fn step<F: Motility + ?Sized>(
    state: &SimState,
    model: &F,
    config: &SolverConfig,
) -> Result<SimState> {
    let mut next = state.clone();
    Stepper::new(*state.grid()).step(&mut next, model, config, f64::INFINITY)?;
    Ok(next)
}

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_state: SimState,
    pub records: Vec<DiagnosticsRecord>,
    /// Trapezoid-in-time integrals of `D0` and `D1` over the run.
    pub integral_d0: f64,
    pub integral_d1: f64,
}

/// Advance `(u0, v0)` to `config.t_end`, sampling diagnostics every
/// `sampler.interval()` and at the final time.
pub fn run<F: Motility + ?Sized>(
    u0: ScalarField,
    v0: ScalarField,
    model: &F,
    config: &SolverConfig,
    sampler: &mut DiagnosticsSampler,
) -> Result<RunSummary> {
    run_observed(u0, v0, model, config, sampler, |_, _| Ok(()))
}

/// [`run`] with a callback after every sample.
pub fn run_observed<F: Motility + ?Sized>(
    u0: ScalarField,
    v0: ScalarField,
    model: &F,
    config: &SolverConfig,
    sampler: &mut DiagnosticsSampler,
    mut observer: impl FnMut(&SimState, &DiagnosticsRecord) -> Result<()>,
) -> Result<RunSummary> {
    config.validate()?;
    let mut state = SimState::new(u0, v0)?;
    if !(state.u.mean() > 0.0) {
        return Err(Error::InvalidParameter {
            name: "u0",
            reason: "mean of the initial density must be positive".into(),
        });
    }
    let mut stepper = Stepper::new(*state.grid());
    let mut records = Vec::new();
    let first = sampler.sample(&state, model)?;
    observer(&state, &first)?;
    records.push(first);

    let interval = sampler.interval();
    let t_end = config.t_end;
    let mut k = 1u64;
    while state.t < t_end {
        let next_sample = (k as f64 * interval).min(t_end);
        let mut dt_max_seen: f64 = 0.0;
        while state.t < next_sample {
            dt_max_seen = dt_max_seen.max(stepper.step(&mut state, model, config, next_sample)?);
        }
        let mut rec = sampler.sample(&state, model)?;
        rec.dt = dt_max_seen;
        observer(&state, &rec)?;
        records.push(rec);
        k += 1;
    }
    Ok(RunSummary {
        final_state: state,
        records,
        integral_d0: sampler.integral_d0(),
        integral_d1: sampler.integral_d1(),
    })
}

/// Largest real part of the eigenvalues of the linearization about `(M, M)`
/// at wavenumber `q`:
///
/// ```text
/// [ −q² φ'(M)γ(M)   −q² φ(M)γ'(M) ]
/// [       1            −q² − 1    ]
/// ```
///
/// `M` must be positive.
pub fn linear_growth_rate<F: Motility + ?Sized>(model: &F, mass: f64, q: f64) -> f64 {
    assert!(mass > 0.0, "linear growth rate needs M > 0");
    if q == 0.0 {
        return 0.0;
    }
    let q2 = q * q;
    let gamma = model.gamma(mass).expect("γ is regular at M > 0");
    let gamma_p = model.gamma_prime(mass).expect("γ' is regular at M > 0");
    let a11 = -q2 * model.phi_prime(mass) * gamma;
    let a12 = -q2 * model.phi(mass) * gamma_p;
    let a22 = -q2 - 1.0;
    let tr = a11 + a22;
    let det = a11 * a22 - a12;
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return 0.5 * tr;
    }
    // Cancellation-free roots of λ² − tr λ + det.
    let s = tr + tr.signum() * disc.sqrt();
    if s == 0.0 {
        return 0.0;
    }
    let (r1, r2) = (0.5 * s, 2.0 * det / s);
    r1.max(r2)
}
