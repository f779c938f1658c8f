//! Fully parametric reference models: a scaled energy sum for energy and
//! an S-curve-corrected barycenter for position.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::calo::{Dataset, EventRecord, CELLS, CENTER, GRID};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyScale {
    pub c: f64,
}

impl EnergyScale {
    pub fn predict(&self, cluster: &[f64; CELLS]) -> f64 {
        self.c * cluster.iter().sum::<f64>()
    }
}

/// Closed-form minimizer of `sum_i (c * S_i / E_i - 1)^2`.
pub fn fit_energy_scale(train: &Dataset) -> Result<EnergyScale> {
    ensure!(!train.is_empty(), "energy-scale fit needs at least one event");
    let (mut num, mut den) = (0.0, 0.0);
    for ev in &train.records {
        ensure!(ev.energy > 0.0, "true energies must be positive");
        let r = ev.deposited() / ev.energy;
        num += r;
        den += r * r;
    }
    if den == 0.0 {
        return Err(Error::Degenerate("every cluster is empty".into()));
    }
    Ok(EnergyScale { c: num / den })
}

/// Energy-weighted centroid in cell widths, origin at the grid centre.
pub fn barycenter(cluster: &[f64; CELLS]) -> Result<(f64, f64)> {
    let (mut sum, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for row in 0..GRID {
        for col in 0..GRID {
            let e = cluster[row * GRID + col];
            sum += e;
            sx += e * (col as f64 - CENTER as f64);
            sy += e * (row as f64 - CENTER as f64);
        }
    }
    if sum <= 0.0 {
        return Err(Error::Degenerate("barycenter of a cluster with no energy".into()));
    }
    Ok((sx / sum, sy / sum))
}

/// One-parameter asinh S-curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SCurveParams {
    pub beta: f64,
    pub cell_width: f64,
}

pub const BETA_BRACKET: (f64, f64) = (0.1, 50.0);

impl SCurveParams {
    /// Corrects one barycenter coordinate.
    pub fn correct(&self, bary: f64) -> f64 {
        let w = self.cell_width;
        let cell = libm::round(bary / w);
        let u = bary / w - cell;
        let shaped = if self.beta == 0.0 { 2.0 * u } else { libm::asinh(self.beta * u * 2.0) / libm::asinh(self.beta) };
        (cell + 0.5 * shaped) * w
    }

    /// Corrected x position of a cluster.
    pub fn predict_position(&self, cluster: &[f64; CELLS]) -> Result<f64> {
        Ok(self.correct(barycenter(cluster)?.0))
    }
}

fn sse(beta: f64, pts: &[(f64, f64)]) -> f64 {
    let p = SCurveParams { beta, cell_width: 1.0 };
    pts.iter().map(|&(b, x)| (p.correct(b) - x) * (p.correct(b) - x)).sum()
}

/// Fits `beta` by golden-section search on the squared x error.
pub fn fit_scurve(train: &Dataset) -> Result<SCurveParams> {
    let pts: alloc::vec::Vec<(f64, f64)> = train
        .records
        .iter()
        .filter(|ev| ev.deposited() > 0.0)
        .map(|ev: &EventRecord| barycenter(&ev.cluster).map(|(bx, _)| (bx, ev.x)))
        .collect::<Result<_>>()?;
    ensure!(!pts.is_empty(), "S-curve fit needs events with deposited energy");
    let (mut a, mut b) = BETA_BRACKET;
    let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (sse(c, &pts), sse(d, &pts));
    for _ in 0..200 {
        if !(fc.is_finite() && fd.is_finite()) {
            return Err(Error::Degenerate(format!(
                "S-curve objective not finite in bracket [{a}, {b}] (f({c}) = {fc}, f({d}) = {fd})"
            )));
        }
        if b - a < 1e-9 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse(c, &pts);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse(d, &pts);
        }
    }
    Ok(SCurveParams { beta: 0.5 * (a + b), cell_width: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calo::{DatasetKind, GeneratorConfig};
    use alloc::vec;

    fn single(cluster: [f64; CELLS], energy: f64) -> Dataset {
        Dataset {
            records: vec![EventRecord { cluster, energy, x: 0.0, y: 0.0, theta_x: 0.0, theta_y: 0.0 }],
            provenance: None,
        }
    }

    #[test]
    fn one_point_energy_fit() {
        let mut cl = [0.0; CELLS];
        cl[CENTER * GRID + CENTER] = 50.0;
        let s = fit_energy_scale(&single(cl, 100.0)).unwrap();
        assert!((s.c - 2.0).abs() < 1e-15);
        assert!(matches!(fit_energy_scale(&single([0.0; CELLS], 10.0)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn noiseless_scale_inverts_containment() {
        let cfg = GeneratorConfig::new(DatasetKind::A).without_noise();
        let d = Dataset::generate(cfg, 500, 1).unwrap();
        let s = fit_energy_scale(&d).unwrap();
        assert!((s.c - 1.0 / cfg.containment).abs() < 1e-9);
    }

    #[test]
    fn barycenter_cases() {
        let mut cl = [0.0; CELLS];
        cl[CENTER * GRID + CENTER] = 4.0;
        assert_eq!(barycenter(&cl).unwrap(), (0.0, 0.0));
        let mut cl = [0.0; CELLS];
        cl[CENTER * GRID + CENTER - 2] = 2.0;
        cl[CENTER * GRID + CENTER + 2] = 2.0;
        assert_eq!(barycenter(&cl).unwrap(), (0.0, 0.0));
        let mut cl = [0.0; CELLS];
        cl[CENTER * GRID + CENTER - 1] = 1.0;
        cl[CENTER * GRID + CENTER + 1] = 3.0;
        assert_eq!(barycenter(&cl).unwrap().0, 0.5);
        assert!(barycenter(&[0.0; CELLS]).is_err());
    }

    #[test]
    fn scurve_limits() {
        let tiny = SCurveParams { beta: 1e-9, cell_width: 1.0 };
        for &b in &[-0.4, -0.1, 0.2, 0.45, 1.3] {
            assert!((tiny.correct(b) - b).abs() < 1e-9);
        }
        for beta in [0.1, 1.0, 20.0] {
            let p = SCurveParams { beta, cell_width: 1.0 };
            assert_eq!(p.correct(0.0), 0.0);
            assert_eq!(p.correct(0.3), -p.correct(-0.3));
        }
    }
}
