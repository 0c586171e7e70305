//! Risk-seeking policy-gradient training loop with an audited evaluation
//! budget.
//!
//! Each iteration samples `N` designs, evaluates them, keeps those at or
//! above the empirical `(1 - ε)`-quantile `R_ε`, and ascends
//! `mean[(R - R_ε) ∇log p] + λ ∇H` with Adam.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::Library;
use crate::policy::{PolicyParams, WeightedSequence};
use crate::sampler::{derive_seed, sample_batch};
use crate::scalar::Scalar;
use crate::sequence::{HybridSequence, SampleMode};
use crate::task::{EvalCost, Task};

/// Salt separating reward-evaluation seeds from sampling streams.
const REWARD_STREAM: u64 = 0x5EED_0F_4E3A_12D;

/// Which ledger quantity the budget limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetUnit {
    #[default]
    Evaluations,
    Episodes,
}

impl BudgetUnit {
    pub fn units(self, cost: EvalCost) -> u64 {
        match self {
            BudgetUnit::Evaluations => cost.evaluations,
            BudgetUnit::Episodes => cost.episodes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epsilon: f64,
    pub entropy_coeff: f64,
    pub learning_rate: f64,
    pub budget: u64,
    pub budget_unit: BudgetUnit,
    pub seed: u64,
    /// Stop once the best reward reaches this value.
    pub target_reward: Option<f64>,
    /// Write real wall-clock times into the ledger. Off by default so that
    /// reruns produce byte-identical ledgers.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            epsilon: 0.2,
            entropy_coeff: 0.01,
            learning_rate: 0.001,
            budget: 1_000_000,
            budget_unit: BudgetUnit::Evaluations,
            seed: 0,
            target_reward: None,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.entropy_coeff >= 0.0) || !self.entropy_coeff.is_finite() {
            return bad(format!("entropy_coeff must be >= 0, got {}", self.entropy_coeff));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if let Some(t) = self.target_reward {
            if !t.is_finite() {
                return bad("target_reward must be finite".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub n_evals: u64,
    pub iteration: u64,
    pub best_reward: f64,
    pub mean_reward: f64,
    pub quantile_reward: f64,
    pub wall_ms: u64,
}

pub const LEDGER_HEADER: &str = "n_evals,iteration,best_reward,mean_reward,quantile_reward,wall_ms";

/// Running count of objective calls and environment episodes against the
/// configured budget, plus one log row per iteration.
#[derive(Clone, Debug)]
pub struct EvalBudgetLedger {
    budget: u64,
    unit: BudgetUnit,
    evaluations: u64,
    episodes: u64,
    rows: Vec<LedgerRow>,
    record_wall_time: bool,
    started: Instant,
}

impl EvalBudgetLedger {
    pub fn new(budget: u64, unit: BudgetUnit) -> Self {
        Self {
            budget,
            unit,
            evaluations: 0,
            episodes: 0,
            rows: Vec::new(),
            record_wall_time: false,
            started: Instant::now(),
        }
    }

    pub fn for_config(config: &TrainConfig) -> Self {
        let mut l = Self::new(config.budget, config.budget_unit);
        l.record_wall_time = config.record_wall_time;
        l
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn unit(&self) -> BudgetUnit {
        self.unit
    }

    /// Consumption in the budget's unit.
    pub fn consumed(&self) -> u64 {
        match self.unit {
            BudgetUnit::Evaluations => self.evaluations,
            BudgetUnit::Episodes => self.episodes,
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.consumed()
    }

    pub fn can_afford(&self, cost: EvalCost, count: u64) -> bool {
        self.unit.units(cost).saturating_mul(count) <= self.remaining()
    }

    /// Records `count` evaluations of the given cost. Refuses (and records
    /// nothing) if that would overrun the budget.
    pub fn charge(&mut self, cost: EvalCost, count: u64) -> Result<()> {
        if !self.can_afford(cost, count) {
            return Err(Error::InvalidArgument(format!(
                "charging {count} evaluations would exceed the budget of {}",
                self.budget
            )));
        }
        self.evaluations += cost.evaluations * count;
        self.episodes += cost.episodes * count;
        Ok(())
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn push_row(&mut self, iteration: u64, best: f64, mean: f64, quantile: f64) {
        let wall_ms = if self.record_wall_time { self.started.elapsed().as_millis() as u64 } else { 0 };
        self.rows.push(LedgerRow {
            n_evals: self.consumed(),
            iteration,
            best_reward: best,
            mean_reward: mean,
            quantile_reward: quantile,
            wall_ms,
        });
    }

    pub fn elapsed_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LEDGER_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n_evals, r.iteration, r.best_reward, r.mean_reward, r.quantile_reward, r.wall_ms
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Order statistic at rank `⌈(1 - ε) N⌉` (1-indexed, ascending).
pub fn empirical_quantile<F: Scalar>(rewards: &[F], epsilon: f64) -> Result<F> {
    if rewards.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty batch".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if let Some(index) = rewards.iter().position(|r| r.is_nan()) {
        return Err(Error::NonFinite { index, value: f64::NAN });
    }
    let n = rewards.len();
    // The tolerance keeps exact products like 0.8 * 10 from rounding up.
    let rank = (((1.0 - epsilon) * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut sorted = rewards.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted[rank - 1])
}

/// Indices with `R ≥ R_ε` and their advantages `R - R_ε`.
pub fn risk_filter<F: Scalar>(rewards: &[F], threshold: F) -> Vec<(usize, F)> {
    rewards
        .iter()
        .enumerate()
        .filter(|(_, &r)| r >= threshold)
        .map(|(i, &r)| (i, r - threshold))
        .collect()
}

/// Best design seen so far and the ledger count at which it was found.
#[derive(Clone, Debug, PartialEq)]
pub struct BestDesign<F> {
    pub sequence: HybridSequence<F>,
    pub reward: F,
    pub found_at: u64,
    pub iteration: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepStats<F> {
    pub iteration: u64,
    pub mean_reward: F,
    pub quantile_reward: F,
    pub max_reward: F,
    pub retained: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome<F> {
    Updated(StepStats<F>),
    /// Not enough budget left for a full batch; nothing was evaluated.
    Exhausted,
}

/// Filters the batch at the empirical quantile and applies one Adam step.
/// Returns `(R_ε, retained count)`.
pub fn risk_seeking_update<F: Scalar>(
    policy: &mut PolicyParams<F>,
    library: &Library<F>,
    sequences: &[HybridSequence<F>],
    rewards: &[F],
    config: &TrainConfig,
) -> Result<(F, usize)> {
    let threshold = empirical_quantile(rewards, config.epsilon)?;
    let kept = risk_filter(rewards, threshold);
    let batch: Vec<WeightedSequence<F>> =
        kept.iter().map(|&(i, a)| WeightedSequence { sequence: &sequences[i], weight: a }).collect();
    let grad = policy.loss_gradient(&batch, library, F::lit(config.entropy_coeff))?;
    policy.adam_update(&grad, F::lit(config.learning_rate))?;
    Ok((threshold, kept.len()))
}

/// Evaluates designs in parallel; each gets its own derived seed.
pub fn evaluate_batch<F, T>(task: &T, sequences: &[HybridSequence<F>], seed: u64, iteration: u64) -> Result<Vec<F>>
where
    F: Scalar,
    T: Task<F> + ?Sized,
{
    sequences
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let r = task.reward(&s.design(), derive_seed(seed ^ REWARD_STREAM, iteration, i as u64))?;
            if r.is_nan() {
                return Err(Error::NonFinite { index: i, value: f64::NAN });
            }
            Ok(r)
        })
        .collect()
}

/// Updates `best` with the highest reward in the batch, if it improves.
/// `consumed_before` is the ledger count before the batch was charged.
pub(crate) fn update_best<F: Scalar>(
    best: &mut Option<BestDesign<F>>,
    sequences: &[HybridSequence<F>],
    rewards: &[F],
    found_at: impl Fn(usize) -> u64,
    iteration: u64,
) {
    // First index attaining the batch max, so ties favour earlier samples.
    let mut arg = None;
    for (i, &r) in rewards.iter().enumerate() {
        if arg.is_none_or(|a: usize| r > rewards[a]) {
            arg = Some(i);
        }
    }
    let Some(i) = arg else { return };
    if best.as_ref().is_none_or(|b| rewards[i] > b.reward) {
        *best = Some(BestDesign {
            sequence: sequences[i].clone(),
            reward: rewards[i],
            found_at: found_at(i),
            iteration,
        });
    }
}

fn mean<F: Scalar>(xs: &[F]) -> F {
    xs.iter().fold(F::zero(), |a, &b| a + b) / F::lit(xs.len() as f64)
}

/// One iteration of the joint trainer.
pub fn train_step<F, T>(
    policy: &mut PolicyParams<F>,
    task: &T,
    config: &TrainConfig,
    ledger: &mut EvalBudgetLedger,
    best: &mut Option<BestDesign<F>>,
    iteration: u64,
) -> Result<StepOutcome<F>>
where
    F: Scalar,
    T: Task<F> + ?Sized,
{
    let n = config.batch_size;
    let cost = task.cost();
    if !ledger.can_afford(cost, n as u64) {
        return Ok(StepOutcome::Exhausted);
    }
    let sequences = sample_batch(policy, task, SampleMode::Joint, n, config.seed, iteration)?;
    let rewards = evaluate_batch(task, &sequences, config.seed, iteration)?;
    let before = ledger.consumed();
    ledger.charge(cost, n as u64)?;
    let unit = ledger.unit().units(cost);
    update_best(best, &sequences, &rewards, |i| before + unit * (i as u64 + 1), iteration);
    let (quantile, retained) = risk_seeking_update(policy, task.library(), &sequences, &rewards, config)?;
    let max_reward = rewards.iter().fold(F::neg_infinity(), |m, &r| m.max(r));
    let stats = StepStats { iteration, mean_reward: mean(&rewards), quantile_reward: quantile, max_reward, retained };
    let best_reward = best.as_ref().map(|b| b.reward.as_f64()).unwrap_or(f64::NEG_INFINITY);
    ledger.push_row(iteration, best_reward, stats.mean_reward.as_f64(), quantile.as_f64());
    Ok(StepOutcome::Updated(stats))
}

#[derive(Clone, Debug)]
pub struct RunResult<F> {
    pub best: BestDesign<F>,
    pub ledger: EvalBudgetLedger,
    pub iterations: u64,
}

/// Trains until the budget cannot cover another batch (or the target
/// reward is reached).
pub fn run<F, T>(policy: &mut PolicyParams<F>, task: &T, config: &TrainConfig) -> Result<RunResult<F>>
where
    F: Scalar,
    T: Task<F> + ?Sized,
{
    config.validate()?;
    let mut ledger = EvalBudgetLedger::for_config(config);
    let mut best = None;
    let mut iteration = 0;
    while let StepOutcome::Updated(_) = train_step(policy, task, config, &mut ledger, &mut best, iteration)? {
        iteration += 1;
        if reached_target(config, &best) {
            break;
        }
    }
    let best = best.ok_or(Error::EmptyBest)?;
    Ok(RunResult { best, ledger, iterations: iteration })
}

pub(crate) fn reached_target<F: Scalar>(config: &TrainConfig, best: &Option<BestDesign<F>>) -> bool {
    match (config.target_reward, best) {
        (Some(t), Some(b)) => b.reward.as_f64() >= t,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        let r: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&r, 0.2).unwrap(), 8.0);
        assert_eq!(empirical_quantile(&r, 0.999).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&[3.0; 7], 0.2).unwrap(), 3.0);
        assert!(empirical_quantile::<f64>(&[], 0.2).is_err());
    }

    #[test]
    fn filter_examples() {
        let r: Vec<f64> = (1..=10).map(f64::from).collect();
        let kept = risk_filter(&r, 8.0);
        assert_eq!(kept, vec![(7, 0.0), (8, 1.0), (9, 2.0)]);
        assert_eq!(risk_filter(&[0.0, 1.0], 1.0), vec![(1, 0.0)]);
        let flat = risk_filter(&[2.0; 4], 2.0);
        assert_eq!(flat.len(), 4);
        assert!(flat.iter().all(|&(_, a)| a == 0.0));
    }

    #[test]
    fn ledger_refuses_overrun() {
        let mut l = EvalBudgetLedger::new(10, BudgetUnit::Evaluations);
        l.charge(EvalCost::ONE, 7).unwrap();
        assert!(l.charge(EvalCost::ONE, 4).is_err());
        assert_eq!(l.consumed(), 7);
        let episodes = EvalCost { evaluations: 1, episodes: 100 };
        let mut l = EvalBudgetLedger::new(250, BudgetUnit::Episodes);
        assert!(l.can_afford(episodes, 2));
        assert!(!l.can_afford(episodes, 3));
        l.charge(episodes, 2).unwrap();
        assert_eq!((l.evaluations(), l.episodes()), (2, 200));
    }

    #[test]
    fn csv_has_fixed_header() {
        let mut l = EvalBudgetLedger::new(10, BudgetUnit::Evaluations);
        l.charge(EvalCost::ONE, 5).unwrap();
        l.push_row(0, 0.5, 0.25, 0.4);
        assert_eq!(l.to_csv(), format!("{LEDGER_HEADER}\n5,0,0.5,0.25,0.4,0\n"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epsilon: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
