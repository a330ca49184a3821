//! Linear growth rates of perturbations of `(M, M)` over a wavenumber grid.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::motility::{Motility, MotilityModel};
use crate::solver::linear_growth_rate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionRow {
    pub q: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionTable {
    pub mass: f64,
    pub rows: Vec<DispersionRow>,
    pub max_rate: f64,
    pub q_at_max: f64,
    /// Smallest and largest sampled `q` with a positive rate.
    pub unstable_band: Option<(f64, f64)>,
    /// `q²` below which the homogeneous state is unstable, when it is.
    pub critical_q2: Option<f64>,
}

/// Rates on `q = q_max·i/(n−1)`, `i = 0…n−1`.
pub fn dispersion_table(model: &MotilityModel, mass: f64, q_max: f64, n: usize) -> Result<DispersionTable> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "mass",
            reason: format!("must be > 0, got {mass}"),
        });
    }
    if !(q_max > 0.0 && q_max.is_finite()) || n < 2 {
        return Err(Error::InvalidParameter {
            name: "q_max",
            reason: format!("need q_max > 0 and at least 2 points, got {q_max}, {n}"),
        });
    }
    let rows: Vec<DispersionRow> = (0..n)
        .map(|i| {
            let q = if i == n - 1 { q_max } else { q_max * i as f64 / (n - 1) as f64 };
            DispersionRow {
                q,
                rate: linear_growth_rate(model, mass, q),
            }
        })
        .collect();
    let (q_at_max, max_rate) = rows
        .iter()
        .fold((0.0, f64::NEG_INFINITY), |(qa, ra), r| if r.rate > ra { (r.q, r.rate) } else { (qa, ra) });
    let positive: Vec<f64> = rows.iter().filter(|r| r.rate > 0.0).map(|r| r.q).collect();
    let unstable_band = positive.first().map(|&lo| (lo, *positive.last().unwrap()));
    Ok(DispersionTable {
        mass,
        max_rate,
        q_at_max,
        unstable_band,
        critical_q2: critical_q2(model, mass),
        rows,
    })
}

/// The determinant of the linearization changes sign at
/// `q² = −φγ'/(φ'γ) − 1`; positive only when `M ∈ E`.
pub fn critical_q2(model: &MotilityModel, mass: f64) -> Option<f64> {
    let g = Motility::gamma(model, mass).ok()?;
    let gp = Motility::gamma_prime(model, mass).ok()?;
    let q2 = -model.phi(mass) * gp / (model.phi_prime(mass) * g) - 1.0;
    (q2 > 0.0).then_some(q2)
}

impl DispersionTable {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["q", "q2", "rate", "unstable"])?;
        for r in &self.rows {
            csv.write_record([
                format!("{:e}", r.q),
                format!("{:e}", r.q * r.q),
                format!("{:e}", r.rate),
                u8::from(r.rate > 0.0).to_string(),
            ])?;
        }
        csv.flush().map_err(|e| Error::io("<dispersion>", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern() -> MotilityModel {
        MotilityModel::new(1.0, 0.0, 1.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn q_zero_row_is_zero() {
        for mass in [0.5, 2.0] {
            let t = dispersion_table(&pattern(), mass, 2.0, 11).unwrap();
            assert_eq!(t.rows[0].q, 0.0);
            assert_eq!(t.rows[0].rate, 0.0);
        }
    }

    #[test]
    fn stable_outside_excitable_set() {
        let t = dispersion_table(&pattern(), 0.5, 5.0, 501).unwrap();
        assert!(t.rows.iter().all(|r| r.rate <= 0.0));
        assert!(t.unstable_band.is_none() && t.critical_q2.is_none());
    }

    #[test]
    fn unstable_band_inside_excitable_set() {
        let t = dispersion_table(&pattern(), 2.0, 1.0, 1001).unwrap();
        let q2 = t.critical_q2.unwrap();
        assert!((q2 - 1.0 / 3.0).abs() < 1e-14);
        let (lo, hi) = t.unstable_band.unwrap();
        assert!(lo > 0.0 && lo <= 1e-3 + 1e-15);
        assert!(hi < q2.sqrt() && hi > q2.sqrt() - 1e-3);
        assert!(t.max_rate > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(dispersion_table(&pattern(), 0.0, 1.0, 10).is_err());
        assert!(dispersion_table(&pattern(), 1.0, 1.0, 1).is_err());
    }
}
