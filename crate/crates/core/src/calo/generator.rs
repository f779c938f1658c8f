use core::f64::consts::PI;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CELLS, CENTER, GRID};
use crate::error::{ensure, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    /// Normal incidence, flat 1-100 GeV spectrum.
    A,
    /// Inclined incidence and a falling spectrum.
    B,
}

/// Generator settings. Lengths are in cell widths, energies in GeV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: DatasetKind,
    pub energy_min: f64,
    pub energy_max: f64,
    /// Bound on |theta_x|, |theta_y| for kind B (radians).
    pub angle_bound: f64,
    /// Exponential slope of the kind-B spectrum (1/GeV).
    pub spectrum_slope: f64,
    pub core_radius: f64,
    pub halo_radius: f64,
    /// Share of the lateral profile carried by the core component.
    pub core_fraction: f64,
    /// Depth at which inclined showers are sampled laterally.
    pub shower_depth: f64,
    /// Mean visible fraction of the incident energy, in (0, 1].
    pub containment: f64,
    /// Stochastic resolution term `a` (GeV^1/2).
    pub stochastic_term: f64,
    /// Constant resolution term `b`.
    pub constant_term: f64,
}

impl GeneratorConfig {
    pub fn new(kind: DatasetKind) -> Self {
        Self {
            kind,
            energy_min: 1.0,
            energy_max: 100.0,
            angle_bound: 0.3,
            spectrum_slope: falling_spectrum_slope(1.0, 100.0, 20.0, 0.7),
            core_radius: 0.5,
            halo_radius: 1.2,
            core_fraction: 0.8,
            shower_depth: 2.0,
            containment: 0.85,
            stochastic_term: 0.10,
            constant_term: 0.01,
        }
    }

    /// Same configuration with both resolution terms switched off.
    pub fn without_noise(mut self) -> Self {
        self.stochastic_term = 0.0;
        self.constant_term = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.energy_min > 0.0 && self.energy_max > self.energy_min, "energy range must be positive and ordered");
        ensure!(self.angle_bound >= 0.0 && self.angle_bound < PI / 2.0, "angle bound out of range");
        ensure!(self.spectrum_slope > 0.0, "spectrum slope must be positive");
        ensure!(self.core_radius > 0.0 && self.halo_radius > 0.0, "shower radii must be positive");
        ensure!((0.0..=1.0).contains(&self.core_fraction), "core fraction must lie in [0, 1]");
        ensure!(self.containment > 0.0 && self.containment <= 1.0, "containment must lie in (0, 1]");
        ensure!(self.stochastic_term >= 0.0 && self.constant_term >= 0.0, "resolution terms must be nonnegative");
        ensure!(self.shower_depth >= 0.0, "shower depth must be nonnegative");
        Ok(())
    }

    /// Relative energy resolution `a/sqrt(E) (+) b` at energy `e`.
    pub fn resolution(&self, e: f64) -> f64 {
        libm::sqrt(self.stochastic_term * self.stochastic_term / e + self.constant_term * self.constant_term)
    }

    /// Mean of `resolution(E)^2` over the kind-A (flat) spectrum.
    pub fn mean_squared_resolution_flat(&self) -> f64 {
        let (lo, hi) = (self.energy_min, self.energy_max);
        self.stochastic_term * self.stochastic_term * libm::log(hi / lo) / (hi - lo)
            + self.constant_term * self.constant_term
    }
}

/// Slope of a truncated exponential on `[lo, hi]` that puts `mass` of the
/// probability below `edge`.
pub fn falling_spectrum_slope(lo: f64, hi: f64, edge: f64, mass: f64) -> f64 {
    let cdf = |rate: f64| libm::expm1(-rate * (edge - lo)) / libm::expm1(-rate * (hi - lo));
    let (mut a, mut b) = (1e-6, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if cdf(mid) < mass {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// One simulated particle.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// Row-major `GRID x GRID` energy deposits; row = y, column = x.
    pub cluster: [f64; CELLS],
    pub energy: f64,
    /// Impact point relative to the centre of the central cell.
    pub x: f64,
    pub y: f64,
    pub theta_x: f64,
    pub theta_y: f64,
}

impl EventRecord {
    pub fn deposited(&self) -> f64 {
        self.cluster.iter().sum()
    }
}

fn profile(r: f64, cfg: &GeneratorConfig) -> f64 {
    let (rc, rh, w) = (cfg.core_radius, cfg.halo_radius, cfg.core_fraction);
    w * libm::exp(-r / rc) / (2.0 * PI * rc * rc) + (1.0 - w) * libm::exp(-r / rh) / (2.0 * PI * rh * rh)
}

/// Samples the truth for one particle and deposits its energy on the grid.
pub fn generate_event(cfg: &GeneratorConfig, rng: &mut Rng) -> EventRecord {
    let (lo, hi) = (cfg.energy_min, cfg.energy_max);
    let u: f64 = rng.random();
    let energy = match cfg.kind {
        DatasetKind::A => lo + (hi - lo) * u,
        DatasetKind::B => {
            let k = cfg.spectrum_slope;
            lo - libm::log1p(u * libm::expm1(-k * (hi - lo))) / k
        }
    };
    let (theta_x, theta_y) = match cfg.kind {
        DatasetKind::A => (0.0, 0.0),
        DatasetKind::B => {
            // larger angles at lower energies
            let reach = cfg.angle_bound * (1.0 - energy / hi);
            (reach * rng.random_range(-1.0..1.0), reach * rng.random_range(-1.0..1.0))
        }
    };
    let x: f64 = rng.random_range(-0.5..0.5);
    let y: f64 = rng.random_range(-0.5..0.5);
    let cx = x + cfg.shower_depth * libm::tan(theta_x);
    let cy = y + cfg.shower_depth * libm::tan(theta_y);

    let mut cluster = [0.0; CELLS];
    let mut norm = 0.0;
    for row in 0..GRID {
        let dy = row as f64 - CENTER as f64 - cy;
        for col in 0..GRID {
            let dx = col as f64 - CENTER as f64 - cx;
            let v = profile(libm::hypot(dx, dy), cfg);
            cluster[row * GRID + col] = v;
            norm += v;
        }
    }
    let z: f64 = StandardNormal.sample(rng);
    let factor = 1.0 + cfg.resolution(energy) * z;
    let visible = (cfg.containment * energy * factor).clamp(0.0, energy);
    for c in cluster.iter_mut() {
        *c = *c / norm * visible;
    }
    EventRecord { cluster, energy, x, y, theta_x, theta_y }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn kind_a_event_is_centred() {
        let cfg = GeneratorConfig::new(DatasetKind::A);
        for s in 0..50 {
            let ev = generate_event(&cfg, &mut rng::substream(3, s));
            assert!((1.0..=100.0).contains(&ev.energy));
            assert_eq!((ev.theta_x, ev.theta_y), (0.0, 0.0));
            let argmax = (0..CELLS).max_by(|&a, &b| ev.cluster[a].total_cmp(&ev.cluster[b])).unwrap();
            let (r, c) = (argmax / GRID, argmax % GRID);
            assert!(r.abs_diff(CENTER) <= 1 && c.abs_diff(CENTER) <= 1);
            assert!(ev.cluster.iter().all(|&v| v >= 0.0));
            assert!(ev.deposited() <= ev.energy);
            assert!(ev.x.abs() <= 0.5 && ev.y.abs() <= 0.5);
        }
    }

    #[test]
    fn noiseless_full_containment_conserves_energy() {
        let mut cfg = GeneratorConfig::new(DatasetKind::B).without_noise();
        cfg.containment = 1.0;
        for s in 0..100 {
            let ev = generate_event(&cfg, &mut rng::substream(8, s));
            assert!((ev.deposited() - ev.energy).abs() < 1e-9 * ev.energy.max(1.0));
        }
    }

    #[test]
    fn kind_b_spectrum_is_skewed_low() {
        let cfg = GeneratorConfig::new(DatasetKind::B);
        let n = 10_000;
        let (mut sum, mut low) = (0.0, 0);
        for s in 0..n {
            let ev = generate_event(&cfg, &mut rng::substream(21, s));
            assert!(ev.theta_x.abs() < 0.3 && ev.theta_y.abs() < 0.3);
            assert!((1.0..=100.0).contains(&ev.energy));
            sum += ev.energy;
            low += (ev.energy <= 20.0) as usize;
        }
        assert!(sum / (n as f64) < 50.5);
        let frac = low as f64 / n as f64;
        assert!((frac - 0.7).abs() < 0.02, "{frac}");
    }

    #[test]
    fn slope_solver_hits_target_mass() {
        let k = falling_spectrum_slope(1.0, 100.0, 20.0, 0.7);
        let cdf = libm::expm1(-k * 19.0) / libm::expm1(-k * 99.0);
        assert!((cdf - 0.7).abs() < 1e-12);
    }
}
