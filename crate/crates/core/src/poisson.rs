//! The operator `K`: `−ΔK[f] = f − ⟨f⟩` with homogeneous Neumann data and
//! `⟨K[f]⟩ = 0`.
//!
//! The discrete Neumann Laplacian is singular with the constants as kernel.
//! Conjugate gradients run on the zero-mean subspace, where `−L_h` is
//! symmetric positive definite. The right-hand side is projected first and
//! the removed mean is reported rather than rejected.

use crate::error::{Error, Result};
use crate::field::{neumann_laplacian, Grid, ScalarField};

pub const DEFAULT_TOLERANCE: f64 = 1e-11;

/// Reusable CG solver for `K`. Scratch buffers make it `&mut` while solving.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    grid: Grid,
    tolerance: f64,
    max_iterations: usize,
    scratch: CgScratch,
}

/// Result of one application of `K`.
#[derive(Debug, Clone)]
pub struct KSolution {
    pub potential: ScalarField,
    /// Mean removed from the input before solving.
    pub projected_mean: f64,
    pub iterations: usize,
    /// Final relative residual `‖f − ⟨f⟩ + L_h g‖₂ / ‖f − ⟨f⟩‖₂`.
    pub residual: f64,
}

impl PoissonSolver {
    pub fn new(grid: Grid) -> Self {
        PoissonSolver {
            grid,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: 10 * grid.len(),
            scratch: CgScratch::new(grid.len()),
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: format!("must be > 0, got {tolerance}"),
            });
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations.max(1);
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Apply `K` to `f`.
    pub fn solve(&mut self, f: &ScalarField) -> Result<KSolution> {
        self.solve_from(f, None)
    }

    /// Apply `K` to `f`, starting CG from `guess` (e.g. the previous
    /// potential along a trajectory).
    pub fn solve_from(&mut self, f: &ScalarField, guess: Option<&ScalarField>) -> Result<KSolution> {
        if f.grid() != &self.grid || guess.is_some_and(|g| g.grid() != &self.grid) {
            return Err(Error::FieldShape {
                expected: self.grid.len(),
                got: f.values().len(),
            });
        }
        let projected_mean = f.mean();
        let scale = 1.0 + f.lp_norm(2.0);
        if projected_mean.abs() > 1e-10 * scale {
            log::debug!("K: projected mean {projected_mean:e} out of the right-hand side");
        }
        let b: Vec<f64> = f.values().iter().map(|v| v - projected_mean).collect();
        let mut x = match guess {
            Some(g) => g.values().to_vec(),
            None => vec![0.0; b.len()],
        };
        let grid = self.grid;
        let report = conjugate_gradient(
            |p, out| {
                neumann_laplacian(&grid, p, out);
                out.iter_mut().for_each(|o| *o = -*o);
            },
            &b,
            &mut x,
            self.tolerance,
            self.max_iterations,
            true,
            &mut self.scratch,
        )?;
        let shift = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= shift);
        Ok(KSolution {
            potential: ScalarField::new(grid, x)?,
            projected_mean,
            iterations: report.iterations,
            residual: report.residual,
        })
    }

    /// `K[f]` without the report.
    pub fn solve_k(&mut self, f: &ScalarField) -> Result<ScalarField> {
        self.solve(f).map(|s| s.potential)
    }
}

/// Direct 1D `K` by double cumulative summation: the face fluxes
/// `−g'` are partial sums of `h (f − ⟨f⟩)`, and `g` is their partial sum
/// shifted to zero mean. Independent of the CG path; used as a cross-check.
pub fn solve_k_direct_1d(f: &ScalarField) -> Result<ScalarField> {
    let grid = *f.grid();
    if grid.dim() != 1 {
        return Err(Error::Domain("direct K solve is 1D only".into()));
    }
    let h = grid.h(0);
    let mean = f.mean();
    let n = grid.len();
    let mut g = vec![0.0; n];
    let mut flux = 0.0; // −g' on face i+1/2
    for i in 0..n - 1 {
        flux += h * (f.values()[i] - mean);
        g[i + 1] = g[i] - h * flux;
    }
    let shift = g.iter().sum::<f64>() / n as f64;
    g.iter_mut().for_each(|v| *v -= shift);
    ScalarField::new(grid, g)
}

/// `−L_h f`.
pub fn neg_laplacian(f: &ScalarField) -> ScalarField {
    f.laplacian().map(|v| -v)
}

#[derive(Debug, Clone)]
pub(crate) struct CgScratch {
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

impl CgScratch {
    pub(crate) fn new(n: usize) -> Self {
        CgScratch {
            r: vec![0.0; n],
            p: vec![0.0; n],
            ap: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Conjugate gradients for a symmetric positive (semi)definite operator,
/// starting from the guess in `x`. Converges when the true relative residual
/// drops below `tol`; the recursion is restarted from a recomputed residual
/// if it drifts. With `zero_mean` the residual is kept orthogonal to
/// constants.
pub(crate) fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iterations: usize,
    zero_mean: bool,
    s: &mut CgScratch,
) -> Result<CgReport> {
    let n = b.len();
    if s.r.len() != n {
        *s = CgScratch::new(n);
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = tol * b_norm;
    let mut iterations = 0;
    loop {
        // True residual r = b − A x.
        apply(x, &mut s.ap);
        for i in 0..n {
            s.r[i] = b[i] - s.ap[i];
        }
        if zero_mean {
            remove_mean(&mut s.r);
        }
        let mut rr = dot(&s.r, &s.r);
        if rr.sqrt() <= target {
            return Ok(CgReport {
                iterations,
                residual: rr.sqrt() / b_norm,
            });
        }
        if iterations >= max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                residual: rr.sqrt() / b_norm,
            });
        }
        s.p.copy_from_slice(&s.r);
        while iterations < max_iterations {
            apply(&s.p, &mut s.ap);
            let pap = dot(&s.p, &s.ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * s.p[i];
                s.r[i] -= alpha * s.ap[i];
            }
            if zero_mean {
                remove_mean(&mut s.r);
            }
            iterations += 1;
            let rr_new = dot(&s.r, &s.r);
            if rr_new.sqrt() <= 0.5 * target {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                s.p[i] = s.r[i] + beta * s.p[i];
            }
        }
    }
}
