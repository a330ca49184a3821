//! Liapunov functionals, dissipations and identity residuals along a
//! trajectory.
//!
//! With `M = ⟨u⁰⟩` and the potentials
//!
//! ```text
//! P = K[u − M],   Q = K[v − ⟨v⟩],   R = P − Q
//! ```
//!
//! the sampled quantities are
//!
//! ```text
//! ℓ0 = ‖∇R‖²        ℓ1 = ‖v‖² − |Ω|⟨v⟩²      ℓ2 = 2∫Ψ(v)     ℓ3 = (M − ⟨v⟩)‖∇P‖²
//! d0 = ∫γ(v)(φ(v) − φ(u))(v − u)             d1 = ‖∇(R − v)‖²
//! d2 = ∫(φγ)'(v)|∇v|²                       d3 = (M − ⟨v⟩)∫u φ(u)γ(v)
//! L0 = ℓ0 + ℓ1 + ℓ2,  L1 = L0 + ℓ3,  D0 = d0 + d1 + d2,  D1 = D0 + ℓ3/2 + d3
//! ```
//!
//! `d1` uses `∂tQ = ⟨v⟩ − v + R`, so `∇∂tQ = ∇(R − v)` without differencing
//! in time. Face quantities in `d2` evaluate `(φγ)'` at the arithmetic mean
//! of the two adjacent cells.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{grad_sq_weighted, Grid, ScalarField};
use crate::motility::{admissible_exponents, Motility, MotilityModel};
use crate::poisson::PoissonSolver;
use crate::solver::SimState;

/// The auxiliary potentials of a state.
#[derive(Debug, Clone)]
pub struct Potentials {
    pub p: ScalarField,
    pub q: ScalarField,
    pub r: ScalarField,
}

/// `P = K[u − M]`, `Q = K[v − ⟨v⟩]`, `R = P − Q`.
pub fn potentials(
    u: &ScalarField,
    v: &ScalarField,
    mass: f64,
    solver: &mut PoissonSolver,
) -> Result<Potentials> {
    potentials_from(u, v, mass, solver, None)
}

/// [`potentials`] with CG warm-started from earlier potentials.
pub fn potentials_from(
    u: &ScalarField,
    v: &ScalarField,
    mass: f64,
    solver: &mut PoissonSolver,
    guess: Option<&Potentials>,
) -> Result<Potentials> {
    let p = solver.solve_from(&u.shifted(-mass), guess.map(|g| &g.p))?.potential;
    let q = solver.solve_from(&v.zero_mean(), guess.map(|g| &g.q))?.potential;
    let r = p.zip_map(&q, |a, b| a - b);
    Ok(Potentials { p, q, r })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiapunovTerms {
    /// `ℓ0 … ℓ3`; `ℓ3` is signed.
    pub ell: [f64; 4],
    pub l0: f64,
    pub l1: f64,
    /// `‖∇P‖₂²`.
    pub grad_p_sq: f64,
    /// `∫Ψ(v)`.
    pub psi_integral: f64,
}

pub fn liapunov<F: Motility + ?Sized>(
    u: &ScalarField,
    v: &ScalarField,
    mass: f64,
    model: &F,
    pot: &Potentials,
) -> Result<LiapunovTerms> {
    let _ = u;
    let vol = v.grid().cell_volume();
    let ell0 = pot.r.grad_sq_norm();
    // ‖v‖² − |Ω|⟨v⟩² written as ‖v − ⟨v⟩‖², which is the same number
    // without the cancellation.
    let ell1 = v.lp_dist_pow(v.mean(), 2.0);
    let psi_integral = psi_sum(model, v.values())? * vol;
    let ell2 = 2.0 * psi_integral;
    let grad_p_sq = pot.p.grad_sq_norm();
    let ell3 = (mass - v.mean()) * grad_p_sq;
    let l0 = ell0 + ell1 + ell2;
    Ok(LiapunovTerms {
        ell: [ell0, ell1, ell2, ell3],
        l0,
        l1: l0 + ell3,
        grad_p_sq,
        psi_integral,
    })
}

/// `Σ Ψ(v_i)`, accumulated along the sorted values so that each quadrature
/// spans only the gap between neighbouring values.
pub fn psi_sum<F: Motility + ?Sized>(model: &F, values: &[f64]) -> Result<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let Some(&first) = sorted.first() else {
        return Ok(0.0);
    };
    let mut psi = model.psi(first)?;
    let mut total = psi;
    for w in sorted.windows(2) {
        psi += model.psi_increment(w[0], w[1])?;
        total += psi;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationTerms {
    pub dee: [f64; 4],
    pub d0: f64,
    pub d1: f64,
}

/// Dissipations; `ell3` is the (signed) `ℓ3` of the same state.
pub fn dissipation<F: Motility + ?Sized>(
    u: &ScalarField,
    v: &ScalarField,
    mass: f64,
    model: &F,
    pot: &Potentials,
    ell3: f64,
) -> Result<DissipationTerms> {
    let grid = *v.grid();
    let vol = grid.cell_volume();
    let mean_v = v.mean();
    let mut d0 = 0.0;
    let mut flux_u = 0.0;
    for (&ui, &vi) in u.values().iter().zip(v.values()) {
        let g = gamma_checked(model, vi)?;
        d0 += g * (model.phi(vi) - model.phi(ui)) * (vi - ui);
        flux_u += ui * model.phi(ui) * g;
    }
    d0 *= vol;
    let d3 = (mass - mean_v) * flux_u * vol;
    let r_minus_v = pot.r.zip_map(v, |r, x| r - x);
    let d1 = r_minus_v.grad_sq_norm();
    let d2 = grad_sq_weighted(&grid, v.values(), |a, b| model.phi_gamma_prime(0.5 * (a + b)));
    let big_d0 = d0 + d1 + d2;
    Ok(DissipationTerms {
        dee: [d0, d1, d2, d3],
        d0: big_d0,
        d1: big_d0 + 0.5 * ell3 + d3,
    })
}

fn gamma_checked<F: Motility + ?Sized>(model: &F, v: f64) -> Result<f64> {
    model.gamma(v).map_err(|e| match e {
        Error::SingularEvaluation => Error::SingularMotility { t: f64::NAN, min_v: v },
        other => other,
    })
}

/// Backward-difference residual of `∂tQ + v − R = ⟨v⟩`:
/// `‖(Q(t) − Q(t−δ))/δ + v(t) − R(t) − ⟨v(t)⟩‖₂`.
pub fn b02_residual(
    q_prev: &ScalarField,
    q_now: &ScalarField,
    v_now: &ScalarField,
    r_now: &ScalarField,
    delta: f64,
) -> f64 {
    let mean_v = v_now.mean();
    let vol = v_now.grid().cell_volume();
    let sum: f64 = q_now
        .values()
        .iter()
        .zip(q_prev.values())
        .zip(v_now.values().iter().zip(r_now.values()))
        .map(|((qn, qp), (v, r))| {
            let x = (qn - qp) / delta + v - r - mean_v;
            x * x
        })
        .sum();
    (sum * vol).sqrt()
}

/// `∫(M − u)φ(u)γ(v)`, the right-hand side of the duality identity.
pub fn duality_rhs<F: Motility + ?Sized>(
    u: &ScalarField,
    v: &ScalarField,
    mass: f64,
    model: &F,
) -> Result<f64> {
    let mut acc = 0.0;
    for (&ui, &vi) in u.values().iter().zip(v.values()) {
        acc += (mass - ui) * model.phi(ui) * gamma_checked(model, vi)?;
    }
    Ok(acc * u.grid().cell_volume())
}

/// Both sides of `½ d/dt ‖∇P‖² = ∫(M − u)φ(u)γ(v)` between two samples:
/// the difference quotient of `½‖∇P‖²` and the trapezoid mean of the
/// right-hand side.
pub fn duality_check(
    (t_prev, grad_p_sq_prev, rhs_prev): (f64, f64, f64),
    (t_now, grad_p_sq_now, rhs_now): (f64, f64, f64),
) -> (f64, f64) {
    let delta = t_now - t_prev;
    let lhs = 0.5 * (grad_p_sq_now - grad_p_sq_prev) / delta;
    (lhs, 0.5 * (rhs_prev + rhs_now))
}

/// Default `q` values for `‖v − M‖_q`: `1, 1.5, 2, …` strictly below `q_max`.
pub fn q_exponents(q_max_exclusive: f64) -> Vec<f64> {
    let mut qs = Vec::new();
    let mut q: f64 = 1.0;
    while q < q_max_exclusive - 1e-12 && qs.len() < 64 {
        qs.push(q);
        q += 0.5;
    }
    qs
}

/// Test functions `1, cos(πx/Lx), cos(2πx/Lx)` of the weak metric.
pub fn test_bank(grid: &Grid) -> [ScalarField; 3] {
    let lx = grid.extents()[0];
    [
        ScalarField::constant(*grid, 1.0),
        grid.sample(|x, _| (PI * x / lx).cos()),
        grid.sample(|x, _| (2.0 * PI * x / lx).cos()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceMetrics {
    /// `(q, ‖v − M‖_q)`.
    pub vq_norms: Vec<(f64, f64)>,
    /// `‖u − M‖_p^p`.
    pub up_pow: f64,
    /// `|∫(u − M)ϑ|` for the test bank.
    pub weak: [f64; 3],
}

pub fn convergence_metrics(
    u: &ScalarField,
    v: &ScalarField,
    mass: f64,
    p: f64,
    qs: &[f64],
    bank: &[ScalarField; 3],
) -> ConvergenceMetrics {
    let vq_norms = qs.iter().map(|&q| (q, v.lp_dist(mass, q))).collect();
    let dev = u.shifted(-mass);
    ConvergenceMetrics {
        vq_norms,
        up_pow: u.lp_dist_pow(mass, p),
        weak: [dev.dot(&bank[0]).abs(), dev.dot(&bank[1]).abs(), dev.dot(&bank[2]).abs()],
    }
}

/// Everything sampled at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Largest time step taken since the previous sample (0 at the start).
    pub dt: f64,
    pub mean_u: f64,
    /// `∫u`.
    pub mass: f64,
    pub mean_v: f64,
    pub ell: [f64; 4],
    pub dee: [f64; 4],
    pub l0: f64,
    pub l1: f64,
    pub d0: f64,
    pub d1: f64,
    /// Cumulative trapezoid `∫₀ᵗ D0` and `∫₀ᵗ D1`.
    pub int_d0: f64,
    pub int_d1: f64,
    pub b02_residual: Option<f64>,
    /// `(lhs, rhs)` of the duality identity over the last sampling interval.
    pub duality: Option<(f64, f64)>,
    pub u_dev_l2: f64,
    pub v_dev_l1: f64,
    pub v_l2: f64,
    pub grad_p_sq: f64,
    pub psi_integral: f64,
    pub vq_norms: Vec<(f64, f64)>,
    pub up_pow: f64,
    /// Trapezoid of `‖u − M‖_p^p` over the trailing window.
    pub up_window: f64,
    pub weak: [f64; 3],
    /// `⟨v⁰⟩ < M`: `ℓ3`, `d3`, `L1`, `D1` are the relevant quantities.
    pub regime_b: bool,
}

impl DiagnosticsRecord {
    /// Fixed CSV column order (the `vq_*` columns follow in increasing `q`).
    pub const COLUMNS: [&'static str; 34] = [
        "t", "dt", "mean_u", "mass", "mean_v", "ell0", "ell1", "ell2", "ell3", "d0", "d1", "d2", "d3",
        "L0", "L1", "D0", "D1", "int_D0", "int_D1", "b02_residual", "duality_lhs",
        "duality_rhs", "u_dev_l2", "v_dev_l1", "v_l2", "grad_P_sq", "psi_integral", "up_pow",
        "up_window", "weak_1", "weak_cos1", "weak_cos2", "regime_b", "n_q",
    ];

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = Self::COLUMNS.iter().map(|s| s.to_string()).collect();
        h.extend(self.vq_norms.iter().map(|(q, _)| format!("vq_{q}")));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:e}");
        let opt = |x: Option<f64>| x.map(f).unwrap_or_default();
        let mut row = vec![
            f(self.t),
            f(self.dt),
            f(self.mean_u),
            f(self.mass),
            f(self.mean_v),
        ];
        row.extend(self.ell.iter().map(|&x| f(x)));
        row.extend(self.dee.iter().map(|&x| f(x)));
        row.extend([self.l0, self.l1, self.d0, self.d1, self.int_d0, self.int_d1].map(f));
        row.push(opt(self.b02_residual));
        row.push(opt(self.duality.map(|d| d.0)));
        row.push(opt(self.duality.map(|d| d.1)));
        row.extend(
            [
                self.u_dev_l2,
                self.v_dev_l1,
                self.v_l2,
                self.grad_p_sq,
                self.psi_integral,
                self.up_pow,
                self.up_window,
            ]
            .map(f),
        );
        row.extend(self.weak.iter().map(|&x| f(x)));
        row.push(u8::from(self.regime_b).to_string());
        row.push(self.vq_norms.len().to_string());
        row.extend(self.vq_norms.iter().map(|&(_, x)| f(x)));
        row
    }
}

/// Sampling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub interval: f64,
    /// Length of the trailing window for `up_window`.
    pub window: f64,
    pub p: f64,
    pub qs: Vec<f64>,
}

impl SamplerConfig {
    /// `p = p_max` and the default `q` list for `model`.
    pub fn for_model(model: &MotilityModel, interval: f64, window: f64) -> Self {
        let e = admissible_exponents(model);
        SamplerConfig {
            interval,
            window,
            p: e.p_max,
            qs: q_exponents(e.q_max_exclusive),
        }
    }
}

struct PrevSample {
    t: f64,
    pot: Potentials,
    grad_p_sq: f64,
    duality_rhs: f64,
    d0: f64,
    d1: f64,
}

/// Stateful sampler owned by one simulation.
pub struct DiagnosticsSampler {
    config: SamplerConfig,
    solver: PoissonSolver,
    bank: [ScalarField; 3],
    mass: Option<f64>,
    regime_b: bool,
    prev: Option<PrevSample>,
    window: VecDeque<(f64, f64)>,
    int_d0: f64,
    int_d1: f64,
}

impl DiagnosticsSampler {
    pub fn new(grid: Grid, config: SamplerConfig) -> Result<Self> {
        if !(config.interval > 0.0) {
            return Err(Error::InvalidParameter {
                name: "interval",
                reason: format!("sampling interval must be > 0, got {}", config.interval),
            });
        }
        if !(config.window > 0.0) {
            return Err(Error::InvalidParameter {
                name: "window",
                reason: format!("window must be > 0, got {}", config.window),
            });
        }
        if !(config.p >= 1.0) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("must be >= 1, got {}", config.p),
            });
        }
        Ok(DiagnosticsSampler {
            bank: test_bank(&grid),
            solver: PoissonSolver::new(grid),
            config,
            mass: None,
            regime_b: false,
            prev: None,
            window: VecDeque::new(),
            int_d0: 0.0,
            int_d1: 0.0,
        })
    }

    pub fn interval(&self) -> f64 {
        self.config.interval
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// `M`, fixed at the first sample.
    pub fn reference_mass(&self) -> Option<f64> {
        self.mass
    }

    pub fn integral_d0(&self) -> f64 {
        self.int_d0
    }

    pub fn integral_d1(&self) -> f64 {
        self.int_d1
    }

    pub fn sample<F: Motility + ?Sized>(
        &mut self,
        state: &SimState,
        model: &F,
    ) -> Result<DiagnosticsRecord> {
        let (u, v, t) = (&state.u, &state.v, state.t);
        let mass = *self.mass.get_or_insert_with(|| u.mean());
        if self.prev.is_none() {
            self.regime_b = v.mean() < mass;
        }
        let pot = potentials_from(u, v, mass, &mut self.solver, self.prev.as_ref().map(|p| &p.pot))?;
        let lia = liapunov(u, v, mass, model, &pot)?;
        let dis = dissipation(u, v, mass, model, &pot, lia.ell[3]).map_err(|e| match e {
            Error::SingularMotility { min_v, .. } => Error::SingularMotility { t, min_v },
            other => other,
        })?;
        let rhs = duality_rhs(u, v, mass, model)?;
        let conv =
            convergence_metrics(u, v, mass, self.config.p, &self.config.qs, &self.bank);

        let (b02, duality) = match &self.prev {
            Some(prev) if t > prev.t => {
                let delta = t - prev.t;
                self.int_d0 += 0.5 * delta * (prev.d0 + dis.d0);
                self.int_d1 += 0.5 * delta * (prev.d1 + dis.d1);
                (
                    Some(b02_residual(&prev.pot.q, &pot.q, v, &pot.r, delta)),
                    Some(duality_check(
                        (prev.t, prev.grad_p_sq, prev.duality_rhs),
                        (t, lia.grad_p_sq, rhs),
                    )),
                )
            }
            _ => (None, None),
        };

        let up_window = self.push_window(t, conv.up_pow);
        let record = DiagnosticsRecord {
            t,
            dt: state.dt,
            mean_u: u.mean(),
            mass: u.integral(),
            mean_v: v.mean(),
            ell: lia.ell,
            dee: dis.dee,
            l0: lia.l0,
            l1: lia.l1,
            d0: dis.d0,
            d1: dis.d1,
            int_d0: self.int_d0,
            int_d1: self.int_d1,
            b02_residual: b02,
            duality,
            u_dev_l2: u.lp_dist(mass, 2.0),
            v_dev_l1: v.lp_dist(mass, 1.0),
            v_l2: v.lp_norm(2.0),
            grad_p_sq: lia.grad_p_sq,
            psi_integral: lia.psi_integral,
            vq_norms: conv.vq_norms,
            up_pow: conv.up_pow,
            up_window,
            weak: conv.weak,
            regime_b: self.regime_b,
        };
        self.prev = Some(PrevSample {
            t,
            pot,
            grad_p_sq: lia.grad_p_sq,
            duality_rhs: rhs,
            d0: dis.d0,
            d1: dis.d1,
        });
        Ok(record)
    }

    /// Record `(t, y)` and return the trapezoid of `y` over `[t − W, t]`
    /// (clipped at the first sample), interpolating at the window start.
    fn push_window(&mut self, t: f64, y: f64) -> f64 {
        if self.window.back().is_some_and(|&(tb, _)| tb >= t) {
            self.window.pop_back();
        }
        self.window.push_back((t, y));
        let start = t - self.config.window;
        while self.window.len() >= 2 && self.window[1].0 <= start {
            self.window.pop_front();
        }
        let mut acc = 0.0;
        for i in 1..self.window.len() {
            let (mut t0, mut y0) = self.window[i - 1];
            let (t1, y1) = self.window[i];
            if t0 < start {
                y0 += (y1 - y0) * (start - t0) / (t1 - t0);
                t0 = start;
            }
            acc += 0.5 * (t1 - t0) * (y0 + y1);
        }
        acc
    }
}
