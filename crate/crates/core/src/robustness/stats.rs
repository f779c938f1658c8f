use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Statistic over an instance-loss multiset used to rank models; lower is
/// better for every kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    Mean,
    Median,
    Min,
    Max,
    Std,
    Quantile(f64),
}

impl SelectionCriterion {
    /// The six criteria compared in the criterion study.
    pub const STUDY: [SelectionCriterion; 6] = [
        SelectionCriterion::Min,
        SelectionCriterion::Quantile(0.25),
        SelectionCriterion::Median,
        SelectionCriterion::Mean,
        SelectionCriterion::Quantile(0.75),
        SelectionCriterion::Max,
    ];

    pub fn validate(&self) -> Result<()> {
        if let SelectionCriterion::Quantile(p) = *self {
            ensure!(p > 0.0 && p < 1.0, "quantile level {p} outside (0, 1)");
        }
        Ok(())
    }

    pub fn label(&self) -> alloc::string::String {
        use alloc::string::ToString;
        match *self {
            SelectionCriterion::Mean => "mean".to_string(),
            SelectionCriterion::Median => "median".to_string(),
            SelectionCriterion::Min => "min".to_string(),
            SelectionCriterion::Max => "max".to_string(),
            SelectionCriterion::Std => "std".to_string(),
            SelectionCriterion::Quantile(p) => alloc::format!("q{p}"),
        }
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of sorted data (`h = (n-1)p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return sorted[lo];
    }
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    if a == b {
        a
    } else if b.is_infinite() {
        b
    } else {
        a + frac * (b - a)
    }
}

// Callers pass sorted data so the result does not depend on input order.
fn mean(values: &[f64]) -> f64 {
    if values.iter().any(|v| v.is_infinite()) {
        return values.iter().sum();
    }
    // shifted by the first value so a constant multiset averages exactly
    let x0 = values[0];
    x0 + values.iter().map(|v| v - x0).sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator), 0 for a single value and
/// `+inf` when any entry is infinite.
fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    if values.iter().any(|v| v.is_infinite()) {
        return f64::INFINITY;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

pub fn robustness_statistic(losses: &[f64], criterion: SelectionCriterion) -> Result<f64> {
    ensure!(!losses.is_empty(), "statistic of an empty loss set");
    criterion.validate()?;
    Ok(match criterion {
        SelectionCriterion::Mean => mean(&sorted(losses)),
        SelectionCriterion::Std => std_dev(&sorted(losses)),
        SelectionCriterion::Min => losses.iter().copied().fold(f64::INFINITY, f64::min),
        SelectionCriterion::Max => losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        SelectionCriterion::Median => quantile_sorted(&sorted(losses), 0.5),
        SelectionCriterion::Quantile(p) => quantile_sorted(&sorted(losses), p),
    })
}

/// All summary statistics of a loss multiset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

fn spread(lo: f64, hi: f64) -> f64 {
    if lo == hi {
        0.0
    } else {
        hi - lo
    }
}

pub fn summarize(losses: &[f64]) -> Result<Summary> {
    ensure!(!losses.is_empty(), "summary of an empty loss set");
    let s = sorted(losses);
    let (q1, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75));
    Ok(Summary {
        count: s.len(),
        mean: mean(&s),
        median: quantile_sorted(&s, 0.5),
        min: s[0],
        max: s[s.len() - 1],
        std: std_dev(&s),
        q1,
        q3,
        iqr: spread(q1, q3),
    })
}

/// Box-and-whisker summary with whiskers at the most extreme points within
/// 1.5 IQR of the quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

pub fn boxplot(values: &[f64]) -> Result<BoxplotStats> {
    ensure!(!values.is_empty(), "boxplot of an empty set");
    let s = sorted(values);
    let (q1, median, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75));
    let iqr = spread(q1, q3);
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |v: &f64| *v >= lo_fence && *v <= hi_fence;
    let whisker_lo = s.iter().copied().find(inside).unwrap_or(q1);
    let whisker_hi = s.iter().rev().copied().find(inside).unwrap_or(q3);
    Ok(BoxplotStats {
        n: s.len(),
        min: s[0],
        q1,
        median,
        q3,
        max: s[s.len() - 1],
        whisker_lo,
        whisker_hi,
        outliers: s.iter().copied().filter(|v| !inside(v)).collect(),
    })
}

/// Empirical CDF as `(value, fraction of entries <= value)` at each
/// distinct value, ascending.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let s = sorted(values);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn basic_statistics() {
        let l = [1.0, 2.0, 3.0];
        assert_eq!(robustness_statistic(&l, SelectionCriterion::Mean).unwrap(), 2.0);
        assert_eq!(robustness_statistic(&l, SelectionCriterion::Median).unwrap(), 2.0);
        assert_eq!(robustness_statistic(&l, SelectionCriterion::Std).unwrap(), 1.0);
        assert_eq!(robustness_statistic(&[1.0, 2.0, f64::INFINITY], SelectionCriterion::Max).unwrap(), f64::INFINITY);
        assert_eq!(robustness_statistic(&[1.0, 2.0, f64::INFINITY], SelectionCriterion::Mean).unwrap(), f64::INFINITY);
        assert_eq!(robustness_statistic(&[1.0, 2.0, f64::INFINITY], SelectionCriterion::Median).unwrap(), 2.0);
        assert!(robustness_statistic(&[], SelectionCriterion::Mean).is_err());
        assert!(robustness_statistic(&l, SelectionCriterion::Quantile(1.0)).is_err());
    }

    #[test]
    fn constant_losses_have_zero_std() {
        for v in [0.1, 0.3, 1.0 / 3.0, 7.77] {
            let l = vec![v; 17];
            assert_eq!(robustness_statistic(&l, SelectionCriterion::Std).unwrap(), 0.0);
            assert_eq!(robustness_statistic(&l, SelectionCriterion::Mean).unwrap(), v);
        }
    }

    #[test]
    fn quartiles_interpolate() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.iqr), (1.75, 2.5, 3.25, 1.5));
    }

    #[test]
    fn boxplot_flags_outliers() {
        let b = boxplot(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_hi, 4.0);
        assert_eq!(b.whisker_lo, 1.0);
        let p = boxplot(&[0.5]).unwrap();
        assert!([p.min, p.q1, p.median, p.q3, p.max, p.whisker_lo, p.whisker_hi].iter().all(|&v| v == 0.5));
        assert!(p.outliers.is_empty());
    }

    #[test]
    fn ecdf_single_step_for_identical_values() {
        assert_eq!(ecdf(&[2.0; 5]), vec![(2.0, 1.0)]);
        assert_eq!(ecdf(&[3.0, 1.0, 1.0, 2.0]), vec![(1.0, 0.5), (2.0, 0.75), (3.0, 1.0)]);
    }

    proptest! {
        #[test]
        fn statistics_ignore_order(mut v in prop::collection::vec(0.0f64..10.0, 1..30), seed in any::<u64>()) {
            let before: Vec<f64> = [SelectionCriterion::Mean, SelectionCriterion::Median, SelectionCriterion::Min,
                SelectionCriterion::Max, SelectionCriterion::Quantile(0.3)]
                .iter().map(|c| robustness_statistic(&v, *c).unwrap()).collect();
            use rand::seq::SliceRandom;
            v.shuffle(&mut crate::rng::from_seed(seed));
            let after: Vec<f64> = [SelectionCriterion::Mean, SelectionCriterion::Median, SelectionCriterion::Min,
                SelectionCriterion::Max, SelectionCriterion::Quantile(0.3)]
                .iter().map(|c| robustness_statistic(&v, *c).unwrap()).collect();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn order_relations(v in prop::collection::vec(0.0f64..10.0, 1..30)) {
            let s = summarize(&v).unwrap();
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            prop_assert!(s.min <= s.mean + 1e-12 && s.mean <= s.max + 1e-12);
            prop_assert!(s.std >= 0.0);
        }
    }
}
