use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Train for at least `min_epochs`, then stop once the largest loss in the
/// trailing `window` exceeds the smallest by more than `threshold`
/// (relative), or at `hard_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStopConfig {
    pub min_epochs: usize,
    pub window: usize,
    pub threshold: f64,
    pub hard_cap: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self { min_epochs: 100, window: 30, threshold: 0.10, hard_cap: 400 }
    }
}

impl EarlyStopConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.window >= 1, "early-stop window must be at least 1");
        ensure!(self.threshold > 0.0, "early-stop threshold must be positive");
        ensure!(self.min_epochs >= self.window, "min_epochs must cover the window");
        ensure!(self.hard_cap >= self.min_epochs, "hard cap below min_epochs");
        Ok(())
    }
}

/// Decision after `trace.len()` completed epochs.
pub fn should_stop(trace: &[f64], cfg: &EarlyStopConfig) -> bool {
    let epoch = trace.len();
    if epoch >= cfg.hard_cap {
        return true;
    }
    if epoch < cfg.min_epochs || epoch < cfg.window {
        return false;
    }
    let tail = &trace[epoch - cfg.window..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    tail.iter().any(|v| v.is_nan()) || max > (1.0 + cfg.threshold) * min
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn never_before_min_epochs() {
        let cfg = EarlyStopConfig::default();
        let trace: Vec<f64> = (0..99).map(|i| 10.0 / (1.0 + i as f64)).collect();
        assert!(!should_stop(&trace, &cfg));
    }

    #[test]
    fn flat_trace_keeps_going() {
        assert!(!should_stop(&vec![1.0; 130], &EarlyStopConfig::default()));
    }

    #[test]
    fn spike_in_window_stops() {
        let mut trace = vec![1.0; 110];
        trace[95] = 1.15;
        assert!(should_stop(&trace, &EarlyStopConfig::default()));
        // spike that already left the window
        let mut trace = vec![1.0; 130];
        trace[95] = 1.15;
        assert!(!should_stop(&trace, &EarlyStopConfig::default()));
    }

    #[test]
    fn hard_cap_stops() {
        let cfg = EarlyStopConfig { min_epochs: 3, window: 2, threshold: 0.1, hard_cap: 5 };
        assert!(!should_stop(&[1.0; 4], &cfg));
        assert!(should_stop(&[1.0; 5], &cfg));
    }
}
