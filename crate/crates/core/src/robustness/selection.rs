use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::stats::{robustness_statistic, SelectionCriterion};
use crate::error::{ensure, Result};
use crate::exec::Executor;
use crate::rng::{derive_seed, tag};

/// Produces the loss of one new instance of `spec`. `seed` is unique per
/// (spec index, round).
pub trait InstanceTrainer<S: ?Sized>: Sync {
    fn train(&self, spec: &S, spec_index: usize, round: usize, seed: u64) -> Result<f64>;
}

impl<S: ?Sized, F> InstanceTrainer<S> for F
where
    F: Fn(&S, usize, usize, u64) -> Result<f64> + Sync,
{
    fn train(&self, spec: &S, spec_index: usize, round: usize, seed: u64) -> Result<f64> {
        self(spec, spec_index, round, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Exclusion {
    /// First-round loss above `(1 + tolerance) * baseline`.
    AboveBaseline { loss: f64, threshold: f64 },
    /// Among the worse half of the survivors by the criterion.
    WorseHalf { statistic: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub spec: usize,
    pub reason: Exclusion,
}

/// Decides which survivors leave after a round.
pub trait PruningPolicy {
    fn removals(
        &self,
        round: usize,
        survivors: &[usize],
        losses: &[Vec<f64>],
        criterion: SelectionCriterion,
    ) -> Result<Vec<Removal>>;
}

/// Built-in pruning rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Policy {
    /// From round `start_round` on, drop the worse `ceil(n/2)` survivors.
    /// `start_round = k + 1` trains every model `k` times before pruning.
    Halving { start_round: usize },
    /// Round 1 drops models above `(1 + tolerance) * baseline_loss`; later
    /// rounds halve.
    BaselineThenHalving { baseline_loss: f64, tolerance: f64 },
}

impl Policy {
    pub fn halving() -> Self {
        Policy::Halving { start_round: 1 }
    }

    /// Prune only after every model has `k` instances.
    pub fn after_instances(k: usize) -> Self {
        Policy::Halving { start_round: k + 1 }
    }

    pub fn baseline_then_halving(baseline_loss: f64) -> Self {
        Policy::BaselineThenHalving { baseline_loss, tolerance: 0.2 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Policy::Halving { start_round } => ensure!(start_round >= 1, "rounds are numbered from 1"),
            Policy::BaselineThenHalving { baseline_loss, tolerance } => {
                ensure!(baseline_loss.is_finite() && baseline_loss > 0.0, "baseline loss must be positive");
                ensure!(tolerance >= 0.0, "tolerance must be non-negative");
            }
        }
        Ok(())
    }
}

/// Worse `ceil(n/2)` of `survivors`; equal statistics keep the earlier spec.
fn worse_half(survivors: &[usize], losses: &[Vec<f64>], criterion: SelectionCriterion) -> Result<Vec<Removal>> {
    if survivors.len() <= 1 {
        return Ok(Vec::new());
    }
    let mut ranked = survivors
        .iter()
        .map(|&s| Ok((robustness_statistic(&losses[s], criterion)?, s)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = survivors.len() / 2;
    let mut out: Vec<Removal> =
        ranked[keep..].iter().map(|&(statistic, spec)| Removal { spec, reason: Exclusion::WorseHalf { statistic } }).collect();
    out.sort_by_key(|r| r.spec);
    Ok(out)
}

impl PruningPolicy for Policy {
    fn removals(
        &self,
        round: usize,
        survivors: &[usize],
        losses: &[Vec<f64>],
        criterion: SelectionCriterion,
    ) -> Result<Vec<Removal>> {
        match *self {
            Policy::Halving { start_round } => {
                if round < start_round {
                    Ok(Vec::new())
                } else {
                    worse_half(survivors, losses, criterion)
                }
            }
            Policy::BaselineThenHalving { baseline_loss, tolerance } => {
                if round > 1 {
                    return worse_half(survivors, losses, criterion);
                }
                let threshold = (1.0 + tolerance) * baseline_loss;
                let mut out = Vec::new();
                for &s in survivors {
                    let loss = *losses[s].last().unwrap_or(&f64::INFINITY);
                    // NaN counts as a failure
                    if !(loss <= threshold) {
                        out.push(Removal { spec: s, reason: Exclusion::AboveBaseline { loss, threshold } });
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub criterion: SelectionCriterion,
    /// Instances per model of the exhaustive campaign the budget is
    /// compared against.
    pub k: usize,
    pub max_rounds: usize,
    pub base_seed: u64,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        self.criterion.validate()?;
        ensure!(self.k >= 1, "k must be at least 1");
        ensure!(self.max_rounds >= 1, "max_rounds must be at least 1");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Specs that received an instance this round.
    pub trained: Vec<usize>,
    pub removed: Vec<Removal>,
    pub survivors: Vec<usize>,
}

/// Audit trail of a selection campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLedger {
    pub candidates: usize,
    pub rounds: Vec<RoundRecord>,
    pub instance_counts: Vec<usize>,
    pub total_trainings: usize,
    /// `candidates * k`.
    pub exhaustive_cost: usize,
    /// Set when a round would have removed every survivor; that round's
    /// removals were not applied.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// Final survivors, best first by the criterion.
    pub winners: Vec<usize>,
    pub ledger: SelectionLedger,
    /// Instance losses per spec, in training order.
    pub losses: Vec<Vec<f64>>,
}

/// Seed of the instance trained for `spec_index` in `round`.
pub fn instance_seed(base_seed: u64, spec_index: usize, round: usize) -> u64 {
    derive_seed(derive_seed(base_seed, tag::SELECT, spec_index as u64), tag::SELECT, round as u64)
}

/// Trains one new instance of every survivor per round and prunes with
/// `policy` until at most one spec is left or `max_rounds` is reached.
pub fn select_models<S, T, P, E>(
    specs: &[S],
    cfg: &SelectionConfig,
    policy: &P,
    trainer: &T,
    exec: &E,
) -> Result<SelectionOutcome>
where
    S: Sync,
    T: InstanceTrainer<S>,
    P: PruningPolicy + ?Sized,
    E: Executor,
{
    ensure!(!specs.is_empty(), "no candidate specs");
    cfg.validate()?;
    let n = specs.len();
    let mut losses: Vec<Vec<f64>> = alloc::vec![Vec::new(); n];
    let mut survivors: Vec<usize> = (0..n).collect();
    let mut ledger = SelectionLedger {
        candidates: n,
        rounds: Vec::new(),
        instance_counts: alloc::vec![0; n],
        total_trainings: 0,
        exhaustive_cost: n * cfg.k,
        tie: false,
    };

    let mut round = 0;
    while survivors.len() > 1 && round < cfg.max_rounds {
        round += 1;
        let results = exec.map(survivors.len(), |i| {
            let s = survivors[i];
            trainer.train(&specs[s], s, round, instance_seed(cfg.base_seed, s, round))
        });
        for (&s, r) in survivors.iter().zip(results) {
            losses[s].push(r?);
            ledger.instance_counts[s] += 1;
            ledger.total_trainings += 1;
        }
        let mut removed = policy.removals(round, &survivors, &losses, cfg.criterion)?;
        removed.retain(|r| survivors.contains(&r.spec));
        if removed.len() == survivors.len() {
            ledger.tie = true;
            ledger.rounds.push(RoundRecord { round, trained: survivors.clone(), removed, survivors: survivors.clone() });
            break;
        }
        let trained = survivors.clone();
        survivors.retain(|s| !removed.iter().any(|r| r.spec == *s));
        ledger.rounds.push(RoundRecord { round, trained, removed, survivors: survivors.clone() });
    }

    let mut ranked = Vec::with_capacity(survivors.len());
    for &s in &survivors {
        let stat = if losses[s].is_empty() { 0.0 } else { robustness_statistic(&losses[s], cfg.criterion)? };
        ranked.push((stat, s));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(SelectionOutcome { winners: ranked.into_iter().map(|(_, s)| s).collect(), ledger, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Serial;
    use alloc::vec;

    fn cfg(k: usize) -> SelectionConfig {
        SelectionConfig { criterion: SelectionCriterion::Mean, k, max_rounds: 100, base_seed: 1 }
    }

    #[test]
    fn deterministic_mock_picks_lowest() {
        let specs = [1.0, 2.0, 3.0];
        let trainer = |s: &f64, _: usize, _: usize, _: u64| Ok(*s);
        let out = select_models(&specs, &cfg(10), &Policy::halving(), &trainer, &Serial).unwrap();
        assert_eq!(out.winners, vec![0]);
        assert!(out.ledger.total_trainings < 3 * 10);
        assert_eq!(out.ledger.total_trainings, out.ledger.instance_counts.iter().sum::<usize>());
    }

    #[test]
    fn halving_shrinks_eight_to_one() {
        let specs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let trainer = |s: &f64, _: usize, _: usize, _: u64| Ok(*s);
        let out = select_models(&specs, &cfg(5), &Policy::halving(), &trainer, &Serial).unwrap();
        let sizes: Vec<usize> = out.ledger.rounds.iter().map(|r| r.survivors.len()).collect();
        assert_eq!(sizes, vec![4, 2, 1]);
        assert_eq!(out.ledger.total_trainings, 14);
        assert!(out.ledger.total_trainings < 40);
    }

    #[test]
    fn single_spec_wins_without_rounds() {
        let trainer = |_: &u8, _: usize, _: usize, _: u64| Ok(1.0);
        let out = select_models(&[0u8], &cfg(3), &Policy::halving(), &trainer, &Serial).unwrap();
        assert_eq!(out.winners, vec![0]);
        assert!(out.ledger.rounds.is_empty());
        assert_eq!(out.ledger.total_trainings, 0);
    }

    #[test]
    fn baseline_cut_first_round() {
        let losses = vec![vec![0.055], vec![0.061], vec![0.10]];
        let r = Policy::baseline_then_halving(0.05).removals(1, &[0, 1, 2], &losses, SelectionCriterion::Mean).unwrap();
        assert_eq!(r.iter().map(|r| r.spec).collect::<Vec<_>>(), vec![1, 2]);
        let eight: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let ids: Vec<usize> = (0..8).collect();
        assert_eq!(Policy::baseline_then_halving(0.05).removals(2, &ids, &eight, SelectionCriterion::Mean).unwrap().len(), 4);
        assert!(Policy::baseline_then_halving(0.05).removals(2, &[3], &eight, SelectionCriterion::Mean).unwrap().is_empty());
    }

    #[test]
    fn ties_keep_earlier_specs() {
        let losses = vec![vec![1.0]; 4];
        let r = worse_half(&[0, 1, 2, 3], &losses, SelectionCriterion::Mean).unwrap();
        assert_eq!(r.iter().map(|r| r.spec).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn everything_removed_sets_tie() {
        let specs = [1.0, 2.0];
        let trainer = |s: &f64, _: usize, _: usize, _: u64| Ok(*s);
        let out = select_models(&specs, &cfg(3), &Policy::baseline_then_halving(0.01), &trainer, &Serial).unwrap();
        assert!(out.ledger.tie);
        assert_eq!(out.winners, vec![0, 1]);
    }

    #[test]
    fn deferred_pruning_waits_k_rounds() {
        let specs: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let trainer = |s: &f64, _: usize, _: usize, _: u64| Ok(*s);
        let out = select_models(&specs, &cfg(3), &Policy::after_instances(3), &trainer, &Serial).unwrap();
        assert_eq!(out.ledger.rounds[3].survivors.len(), 2);
        assert!(out.ledger.rounds[..3].iter().all(|r| r.removed.is_empty()));
        assert_eq!(out.winners, vec![0]);
    }
}
