//! The power-law motility family `φ(s) = s^m`, `γ(s) = a + b/(s+s0)^k`.
//!
//! Besides pointwise evaluation this module carries the closed-form analysis
//! of the family: the sign criterion for `(φγ)'`, the excitable set where
//! `−φγ'/(φ'γ) > 1`, the primitive `Ψ` of `φγ`, the critical family on which
//! `(φγ)'` touches zero, and the exponent ranges for which homogenization is
//! guaranteed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding the equality case of the
/// monotonicity criterion.
pub const MONOTONE_REL_TOL: f64 = 1e-12;

/// Margin subtracted from 2 so that `p_max < 2` strictly.
pub const P_MAX_EPS: f64 = 1e-12;

/// Relative tolerance of the Ψ quadrature.
pub const PSI_REL_TOL: f64 = 1e-10;

/// Maximum number of accepted subintervals in the Ψ quadrature.
pub const PSI_MAX_LEAVES: usize = 1 << 20;

/// Bisection tolerance on the endpoints of excitable intervals.
pub const EXCITABLE_ENDPOINT_TOL: f64 = 1e-10;

/// Function-valued interface consumed by the solver and the diagnostics.
///
/// [`MotilityModel`] is the only implementation shipped here; other
/// diffusion rates and motilities can be plugged in by implementing it.
pub trait Motility {
    fn phi(&self, s: f64) -> f64;
    fn phi_prime(&self, s: f64) -> f64;
    fn gamma(&self, s: f64) -> Result<f64>;
    fn gamma_prime(&self, s: f64) -> Result<f64>;
    /// `Ψ(s) = ∫₀ˢ φγ`.
    fn psi(&self, s: f64) -> Result<f64>;
    /// `Ψ(hi) − Ψ(lo)` for `0 ≤ lo ≤ hi`.
    fn psi_increment(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.psi(hi)? - self.psi(lo)?)
    }
    fn phi_gamma_prime(&self, s: f64) -> f64;
    /// True when `γ` is unbounded at `s = 0`.
    fn singular_at_zero(&self) -> bool;
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelParams {
    m: f64,
    a: f64,
    b: f64,
    k: f64,
    s0: f64,
}

/// Parameters `(m, a, b, k, s0)` of the power-law family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParams")]
pub struct MotilityModel {
    m: f64,
    a: f64,
    b: f64,
    k: f64,
    s0: f64,
}

impl TryFrom<ModelParams> for MotilityModel {
    type Error = Error;

    fn try_from(p: ModelParams) -> Result<Self> {
        MotilityModel::new(p.m, p.a, p.b, p.k, p.s0)
    }
}

fn require(name: &'static str, ok: bool, value: f64, rule: &str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("{rule}, got {value}"),
        })
    }
}

/// `x^e`, taking the `powi` path for small integral exponents.
#[inline]
pub(crate) fn pow(x: f64, e: f64) -> f64 {
    if e == e.trunc() && e.abs() <= 16.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

impl MotilityModel {
    pub fn new(m: f64, a: f64, b: f64, k: f64, s0: f64) -> Result<Self> {
        require("m", m > 0.0, m, "must be > 0")?;
        require("a", a >= 0.0, a, "must be >= 0")?;
        require("b", b > 0.0, b, "must be > 0")?;
        require("k", k > 0.0, k, "must be > 0")?;
        require("s0", s0 >= 0.0, s0, "must be >= 0")?;
        Ok(MotilityModel { m, a, b, k, s0 })
    }

    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn phi(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        if s == 0.0 {
            0.0
        } else {
            pow(s, self.m)
        }
    }

    pub fn phi_prime(&self, s: f64) -> f64 {
        self.m * pow(s, self.m - 1.0)
    }

    pub fn gamma(&self, s: f64) -> Result<f64> {
        let base = s + self.s0;
        if base <= 0.0 {
            return Err(Error::SingularEvaluation);
        }
        Ok(self.a + self.b / pow(base, self.k))
    }

    pub fn gamma_prime(&self, s: f64) -> Result<f64> {
        let base = s + self.s0;
        if base <= 0.0 {
            return Err(Error::SingularEvaluation);
        }
        Ok(-self.k * self.b / pow(base, self.k + 1.0))
    }

    /// `(φγ)(s)`; `φγ(0) = 0` whenever `s0 > 0`.
    pub fn phi_gamma(&self, s: f64) -> Result<f64> {
        if s == 0.0 && self.s0 > 0.0 {
            return Ok(0.0);
        }
        Ok(self.phi(s) * self.gamma(s)?)
    }

    /// Closed form of `(φγ)'(s)` for `s > 0`:
    /// `s^{m−1} (s+s0)^{−(k+1)} [a m (s+s0)^{k+1} + b(m−k)s + b m s0]`.
    pub fn phi_gamma_prime(&self, s: f64) -> f64 {
        let MotilityModel { m, a, b, k, s0 } = *self;
        let t = s + s0;
        let tk1 = pow(t, k + 1.0);
        let bracket = a * m * tk1 + b * (m - k) * s + b * m * s0;
        pow(s, m - 1.0) / tk1 * bracket
    }

    /// Signed slack of the monotonicity criterion
    /// `(a/b) s0^k − (1/m) ((k−m)₊/(k+1))^{k+1}`.
    pub fn criterion_slack(&self) -> f64 {
        self.criterion_lhs() - self.criterion_rhs()
    }

    fn criterion_lhs(&self) -> f64 {
        if self.s0 == 0.0 {
            0.0
        } else {
            self.a / self.b * pow(self.s0, self.k)
        }
    }

    fn criterion_rhs(&self) -> f64 {
        let excess = (self.k - self.m).max(0.0);
        pow(excess / (self.k + 1.0), self.k + 1.0) / self.m
    }

    /// Whether `(φγ)' ≥ 0` on `(0, ∞)`, decided by the closed-form criterion.
    pub fn is_monotone(&self) -> bool {
        self.criterion_slack() >= -MONOTONE_REL_TOL * self.criterion_rhs()
    }

    /// Whether `(φγ)' > 0` on `(0, ∞)`.
    pub fn is_strictly_monotone(&self) -> bool {
        if self.m > self.k {
            return true;
        }
        if self.m == self.k {
            // φγ ≡ b is the only flat case.
            return self.a > 0.0 || self.s0 > 0.0;
        }
        self.criterion_slack() > MONOTONE_REL_TOL * self.criterion_rhs()
    }

    /// The quantity `−φγ'/(φ'γ)(s) = (k/m) · s/(s+s0) · b/(b + a(s+s0)^k)`
    /// whose superlevel set `{· > 1}` is the excitable set.
    pub fn excitability(&self, s: f64) -> f64 {
        let MotilityModel { m, a, b, k, s0 } = *self;
        let t = s + s0;
        (k / m) * (s / t) * (b / (b + a * pow(t, k)))
    }

    /// Maximal intervals of `s_grid` on which [`excitability`](Self::excitability)
    /// exceeds 1. Interior endpoints are refined by bisection; intervals that
    /// reach the first or last grid point are truncated there and flagged.
    pub fn excitable_set(&self, s_grid: &[f64]) -> Result<Vec<ExcitableInterval>> {
        if s_grid.is_empty() {
            return Ok(Vec::new());
        }
        if s_grid[0] <= 0.0 || s_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(
                "excitable-set grid must be positive and strictly increasing".into(),
            ));
        }
        let inside = |s: f64| self.excitability(s) > 1.0;
        let flags: Vec<bool> = s_grid.iter().map(|&s| inside(s)).collect();
        let mut intervals = Vec::new();
        let mut i = 0;
        while i < flags.len() {
            if !flags[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i + 1 < flags.len() && flags[i + 1] {
                i += 1;
            }
            let end = i;
            let (lo, lo_at_grid_edge) = if start == 0 {
                (s_grid[0], true)
            } else {
                (bisect(&inside, s_grid[start - 1], s_grid[start]), false)
            };
            let (hi, hi_at_grid_edge) = if end == flags.len() - 1 {
                (s_grid[end], true)
            } else {
                (bisect(&inside, s_grid[end + 1], s_grid[end]), false)
            };
            intervals.push(ExcitableInterval {
                lo,
                hi,
                lo_at_grid_edge,
                hi_at_grid_edge,
            });
            i += 1;
        }
        Ok(intervals)
    }

    /// `Ψ(s) = ∫₀ˢ (φγ)`.
    ///
    /// With `s0 = 0` the primitive is available in closed form (and exists
    /// only when `m − k > −1`). Otherwise adaptive Simpson is applied after
    /// the substitution `x = s τ^r`, which removes the `x^m` endpoint
    /// singularity for small `m`.
    pub fn psi(&self, s: f64) -> Result<f64> {
        let MotilityModel { m, a, b, k, s0 } = *self;
        if s0 == 0.0 && m - k <= -1.0 {
            return Err(Error::NonIntegrable { excess: m - k });
        }
        if s < 0.0 {
            return Err(Error::Domain(format!("psi requires s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        if s0 == 0.0 {
            let mut value = b * pow(s, m + 1.0 - k) / (m + 1.0 - k);
            if a > 0.0 {
                value += a * pow(s, m + 1.0) / (m + 1.0);
            }
            return Ok(value);
        }
        let r = (3.0 / (m + 1.0)).ceil().max(1.0);
        let exponent = r * (m + 1.0) - 1.0;
        let scale = pow(s, m + 1.0) * r;
        let integrand = |tau: f64| {
            if tau == 0.0 {
                return 0.0;
            }
            let x = s * pow(tau, r);
            pow(tau, exponent) * (a + b / pow(x + s0, k))
        };
        Ok(scale * adaptive_simpson(integrand, 0.0, 1.0, PSI_REL_TOL, PSI_MAX_LEAVES))
    }

    /// `Ψ(hi) − Ψ(lo)`, integrated directly over `[lo, hi]` when `lo > 0`.
    pub fn psi_increment(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::Domain(format!("psi_increment needs lo <= hi, got [{lo}, {hi}]")));
        }
        if lo == hi {
            return Ok(0.0);
        }
        if lo == 0.0 || self.s0 == 0.0 {
            return Ok(self.psi(hi)? - self.psi(lo)?);
        }
        let MotilityModel { m, a, b, k, s0 } = *self;
        let f = |x: f64| pow(x, m) * (a + b / pow(x + s0, k));
        Ok(adaptive_simpson(f, lo, hi, PSI_REL_TOL, PSI_MAX_LEAVES))
    }

    /// Sampled witness for the growth condition `φγ ≤ κ(1 + Ψ)`:
    /// the largest ratio `φγ(s)/(1+Ψ(s))` over a log-spaced sample of
    /// `(0, s_max]`. It is a lower bound for the best constant, not a proof.
    pub fn kappa_witness(&self, s_max: f64) -> Result<f64> {
        if !(s_max > 0.0) {
            return Err(Error::Domain(format!("kappa witness needs s_max > 0, got {s_max}")));
        }
        let grid = log_grid(s_max * 1e-9, s_max, 400);
        let mut psi = self.psi(grid[0])?;
        let mut best: f64 = 0.0;
        for (i, &s) in grid.iter().enumerate() {
            if i > 0 {
                psi += self.psi_increment(grid[i - 1], s)?;
            }
            best = best.max(self.phi_gamma(s)? / (1.0 + psi));
        }
        Ok(best)
    }

    /// Full analysis with the default scan range `[1e-6, 1e6]` and
    /// κ sampled on `(0, 1e3]`.
    pub fn analyze(&self) -> Result<MotilityAnalysis> {
        self.analyze_with(&log_grid(1e-6, 1e6, 4001), 1e3)
    }

    pub fn analyze_with(&self, s_grid: &[f64], kappa_s_max: f64) -> Result<MotilityAnalysis> {
        let excitable_intervals = self.excitable_set(s_grid)?;
        let kappa = match self.kappa_witness(kappa_s_max) {
            Ok(k) => Some(k),
            Err(Error::NonIntegrable { .. }) => None,
            Err(e) => return Err(e),
        };
        let exponents = admissible_exponents(self);
        Ok(MotilityAnalysis {
            model: *self,
            monotone: self.is_monotone(),
            strictly_monotone: self.is_strictly_monotone(),
            criterion_slack: self.criterion_slack(),
            excitable_intervals,
            kappa,
            p_max: exponents.p_max,
            q_max: exponents.q_max_exclusive,
        })
    }

    /// Membership of `s` in the excitable set (pointwise, no grid).
    pub fn is_excitable(&self, s: f64) -> bool {
        s > 0.0 && self.excitability(s) > 1.0
    }
}

impl Motility for MotilityModel {
    fn phi(&self, s: f64) -> f64 {
        MotilityModel::phi(self, s)
    }
    fn phi_prime(&self, s: f64) -> f64 {
        MotilityModel::phi_prime(self, s)
    }
    fn gamma(&self, s: f64) -> Result<f64> {
        MotilityModel::gamma(self, s)
    }
    fn gamma_prime(&self, s: f64) -> Result<f64> {
        MotilityModel::gamma_prime(self, s)
    }
    fn psi(&self, s: f64) -> Result<f64> {
        MotilityModel::psi(self, s)
    }
    fn psi_increment(&self, lo: f64, hi: f64) -> Result<f64> {
        MotilityModel::psi_increment(self, lo, hi)
    }
    fn phi_gamma_prime(&self, s: f64) -> f64 {
        MotilityModel::phi_gamma_prime(self, s)
    }
    fn singular_at_zero(&self) -> bool {
        self.s0 == 0.0
    }
}

/// An open interval of excitable densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcitableInterval {
    pub lo: f64,
    pub hi: f64,
    /// The interval was cut at the first grid point.
    pub lo_at_grid_edge: bool,
    /// The interval was cut at the last grid point.
    pub hi_at_grid_edge: bool,
}

impl ExcitableInterval {
    pub fn contains(&self, s: f64) -> bool {
        s > self.lo && s < self.hi
    }
}

/// Derived analytic facts about a [`MotilityModel`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotilityAnalysis {
    pub model: MotilityModel,
    pub monotone: bool,
    pub strictly_monotone: bool,
    pub criterion_slack: f64,
    pub excitable_intervals: Vec<ExcitableInterval>,
    /// Sampled witness for the growth condition; absent when Ψ diverges.
    pub kappa: Option<f64>,
    pub p_max: f64,
    /// Exclusive upper bound on the Lebesgue exponent for `v`.
    pub q_max: f64,
}

/// A point of the critical family: `a/b` making `(φγ)'` vanish at `s1`
/// while staying non-negative elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub a_over_b: f64,
    pub s1: f64,
}

/// Solves `a m (k+1)^{k+1} s0^k = b (k−m)^{k+1}` for `a/b` and returns the
/// touching point `s1 = (m+1) s0 / (k−m)`. Requires `0 < m < k/2`, `s0 > 0`.
pub fn critical_family(k: f64, m: f64, s0: f64) -> Result<CriticalPoint> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("critical family needs k > 0, got {k}")));
    }
    if !(m > 0.0 && m < k / 2.0) {
        return Err(Error::Domain(format!(
            "critical family needs 0 < m < k/2 = {}, got m = {m}",
            k / 2.0
        )));
    }
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::Domain(format!("critical family needs s0 > 0, got {s0}")));
    }
    let a_over_b = pow(k - m, k + 1.0) / (m * pow(k + 1.0, k + 1.0) * pow(s0, k));
    let s1 = (m + 1.0) * s0 / (k - m);
    Ok(CriticalPoint { a_over_b, s1 })
}

/// Exponent ranges for which convergence to the homogeneous state holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibleExponents {
    pub alpha: f64,
    pub theta: f64,
    /// Largest admissible `p` for the time-averaged `‖u − M‖_p^p`, `< 2`.
    pub p_max: f64,
    /// Exclusive bound for `q` in `‖v − M‖_q`.
    pub q_max_exclusive: f64,
}

/// `(α, θ) = (m, 0)` when `m ≥ 1`, else `(1, 1−m)`; then
/// `p_max = min(2(α+1)/(k+θ+2), 2(m+1)/(k+2), 2−ε)` clamped below at 1, and
/// `q_max = m+1−k` when that exceeds 2, else 2.
pub fn admissible_exponents(model: &MotilityModel) -> AdmissibleExponents {
    let (m, k) = (model.m, model.k);
    let (alpha, theta) = if m >= 1.0 { (m, 0.0) } else { (1.0, 1.0 - m) };
    let p_max = (2.0 * (alpha + 1.0) / (k + theta + 2.0))
        .min(2.0 * (m + 1.0) / (k + 2.0))
        .min(2.0 - P_MAX_EPS)
        .max(1.0);
    let q_max_exclusive = if m > k + 1.0 { (m + 1.0 - k).max(2.0) } else { 2.0 };
    AdmissibleExponents {
        alpha,
        theta,
        p_max,
        q_max_exclusive,
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Bisection between `outside` (predicate false) and `inside` (true).
fn bisect(pred: &impl Fn(f64) -> bool, mut outside: f64, mut inside: f64) -> f64 {
    for _ in 0..200 {
        let tol = EXCITABLE_ENDPOINT_TOL * outside.abs().max(inside.abs()).max(1.0);
        if (inside - outside).abs() <= tol {
            break;
        }
        let mid = 0.5 * (outside + inside);
        if pred(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (outside + inside)
}

/// Adaptive Simpson on `[lo, hi]` with relative tolerance `rel_tol` and at
/// most `max_leaves` accepted subintervals.
pub(crate) fn adaptive_simpson(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    max_leaves: usize,
) -> f64 {
    struct Segment {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    }
    let simpson = |a: f64, b: f64, fa: f64, fm: f64, fb: f64| (b - a) / 6.0 * (fa + 4.0 * fm + fb);

    // Start from 32 equal panels so that a lucky agreement on the whole
    // interval cannot end the refinement early.
    const PANELS: usize = 32;
    let width = (hi - lo) / PANELS as f64;
    let mut stack: Vec<Segment> = (0..PANELS)
        .map(|i| {
            let a = lo + i as f64 * width;
            let b = if i == PANELS - 1 { hi } else { a + width };
            let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
            Segment {
                a,
                b,
                fa,
                fm,
                fb,
                whole: simpson(a, b, fa, fm, fb),
                tol: 0.0,
                depth: 0,
            }
        })
        .collect();
    let coarse: f64 = stack.iter().map(|s| s.whole).sum();
    let abs_tol = rel_tol * coarse.abs().max(f64::MIN_POSITIVE);
    for seg in &mut stack {
        seg.tol = abs_tol / PANELS as f64;
    }
    let mut total = 0.0;
    let mut leaves = 0usize;
    while let Some(seg) = stack.pop() {
        let mid = 0.5 * (seg.a + seg.b);
        let (lm, rm) = (0.5 * (seg.a + mid), 0.5 * (mid + seg.b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(seg.a, mid, seg.fa, flm, seg.fm);
        let right = simpson(mid, seg.b, seg.fm, frm, seg.fb);
        let delta = left + right - seg.whole;
        let exhausted = leaves + stack.len() + 2 > max_leaves || seg.depth >= 60;
        if delta.abs() <= 15.0 * seg.tol || exhausted {
            total += left + right + delta / 15.0;
            leaves += 1;
        } else {
            let tol = 0.5 * seg.tol;
            stack.push(Segment {
                a: seg.a,
                b: mid,
                fa: seg.fa,
                fm: flm,
                fb: seg.fm,
                whole: left,
                tol,
                depth: seg.depth + 1,
            });
            stack.push(Segment {
                a: mid,
                b: seg.b,
                fa: seg.fm,
                fm: frm,
                fb: seg.fb,
                whole: right,
                tol,
                depth: seg.depth + 1,
            });
        }
    }
    total
}
