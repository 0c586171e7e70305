use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{optimize_anneal, optimize_devo, optimize_fd_quasi_newton, InnerResult, InnerSettings};
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::sampler::{derive_seed, sample_batch, sample_sequence, stream_rng, TruncBounds};
use crate::scalar::Scalar;
use crate::sequence::{HybridSequence, SampleMode};
use crate::task::Task;
use crate::trainer::{reached_target, risk_seeking_update, BestDesign, EvalBudgetLedger, StepOutcome, StepStats, TrainConfig};

const INNER_STREAM: u64 = 0x1A4E_2B0C_77D1_9E35;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerOptimizer {
    Anneal,
    Evo,
    Bfgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoupledConfig {
    pub optimizer: InnerOptimizer,
    /// Objective evaluations allowed per skeleton.
    pub inner_budget: usize,
    pub settings: InnerSettings,
}

impl Default for DecoupledConfig {
    fn default() -> Self {
        Self { optimizer: InnerOptimizer::Anneal, inner_budget: 100, settings: InnerSettings::default() }
    }
}

/// A sampled discrete skeleton and the search box of each parameter slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton<F> {
    pub sequence: HybridSequence<F>,
    /// Positions of the parameterized tokens.
    pub slots: Vec<usize>,
    pub bounds: Vec<TruncBounds<f64>>,
}

impl<F: Scalar> Skeleton<F> {
    pub fn from_sequence<T: Task<F> + ?Sized>(sequence: HybridSequence<F>, task: &T) -> Self {
        let library = task.library();
        let slots: Vec<usize> =
            sequence.steps.iter().enumerate().filter(|(_, s)| library.is_parameterized(s.token)).map(|(i, _)| i).collect();
        let bounds = slots
            .iter()
            .map(|&i| {
                let step = &sequence.steps[i];
                let b = task.slot_bounds(step.token, step.context.bounds_for(step.token));
                TruncBounds { lo: b.lo.as_f64(), hi: b.hi.as_f64() }
            })
            .collect();
        Self { sequence, slots, bounds }
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Slot midpoints, or 0 (clamped into the slot) where a side is
    /// infinite.
    pub fn start_point(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| if b.is_finite() { b.midpoint() } else { 0.0f64.clamp(b.lo, b.hi) }).collect()
    }

    /// The skeleton with its slots set to `values`.
    pub fn filled(&self, values: &[f64]) -> HybridSequence<F> {
        let mut seq = self.sequence.clone();
        for (&pos, &v) in self.slots.iter().zip(values) {
            seq.steps[pos].beta = F::lit(v);
        }
        seq
    }
}

pub fn sample_skeleton<F, T, R>(policy: &PolicyParams<F>, task: &T, rng: &mut R) -> Result<Skeleton<F>>
where
    F: Scalar,
    T: Task<F> + ?Sized,
    R: rand::Rng + ?Sized,
{
    Ok(Skeleton::from_sequence(sample_sequence(policy, task, SampleMode::Skeleton, rng)?, task))
}

/// Token names with `(?)` marking parameter slots.
pub fn skeleton_string<F: Scalar>(seq: &HybridSequence<F>, library: &crate::library::Library<F>) -> String {
    seq.steps
        .iter()
        .map(|s| {
            let name = &library.tokens()[s.token].name;
            if library.is_parameterized(s.token) {
                format!("{name}(?)")
            } else {
                name.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub iteration: u64,
    pub skeleton: String,
    pub inner_evals: usize,
    pub best_inner_reward: f64,
}

fn run_inner<F, T>(
    task: &T,
    skeleton: &Skeleton<F>,
    cfg: &DecoupledConfig,
    max_evals: usize,
    seed: u64,
    iteration: u64,
    index: u64,
) -> Result<InnerResult>
where
    F: Scalar,
    T: Task<F> + ?Sized,
{
    let stream = derive_seed(seed ^ INNER_STREAM, iteration, index);
    let mut rng = stream_rng(stream, 0, 0);
    let mut calls = 0u64;
    let mut failure = None;
    let mut objective = |x: &[f64]| -> f64 {
        let design = skeleton.filled(x).design();
        let s = derive_seed(stream, 1, calls);
        calls += 1;
        match task.reward(&design, s) {
            Ok(r) => r.as_f64(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let x0 = skeleton.start_point();
    let result = match cfg.optimizer {
        InnerOptimizer::Anneal => optimize_anneal(&mut objective, &x0, &skeleton.bounds, max_evals, &cfg.settings, &mut rng),
        InnerOptimizer::Evo => optimize_devo(&mut objective, &skeleton.bounds, max_evals, &cfg.settings, &mut rng),
        InnerOptimizer::Bfgs => optimize_fd_quasi_newton(&mut objective, &x0, &skeleton.bounds, max_evals, &cfg.settings),
    };
    if let Some(e) = failure {
        return Err(e);
    }
    match result {
        Ok(r) => Ok(r),
        // A start point the objective cannot score still costs its one call;
        // the skeleton simply gets the lowest reward.
        Err(Error::NonFinite { .. }) if cfg.optimizer == InnerOptimizer::Bfgs => Ok(InnerResult {
            x: x0,
            reward: f64::NEG_INFINITY,
            evaluations: 1,
            best_call: 1,
        }),
        Err(e) => Err(e),
    }
}

/// One decoupled iteration: `N` skeletons, one inner optimization each,
/// then the risk-seeking update on the skeletons' discrete log-probability.
///
/// When the remaining budget cannot cover every skeleton's full inner
/// budget, skeletons are processed in order with whatever budget is left;
/// if it runs out the batch is incomplete and no update is made.
#[allow(clippy::too_many_arguments)]
pub fn decoupled_train_step<F, T>(
    policy: &mut PolicyParams<F>,
    task: &T,
    cfg: &DecoupledConfig,
    config: &TrainConfig,
    ledger: &mut EvalBudgetLedger,
    best: &mut Option<BestDesign<F>>,
    audit: &mut Vec<AuditRow>,
    iteration: u64,
) -> Result<StepOutcome<F>>
where
    F: Scalar,
    T: Task<F> + ?Sized,
{
    if cfg.inner_budget == 0 {
        return Err(Error::Config("inner_budget must be at least 1".into()));
    }
    let n = config.batch_size;
    let cost = task.cost();
    let unit = ledger.unit().units(cost).max(1);
    if !ledger.can_afford(cost, 1) {
        return Ok(StepOutcome::Exhausted);
    }
    let skeletons: Vec<Skeleton<F>> = sample_batch(policy, task, SampleMode::Skeleton, n, config.seed, iteration)?
        .into_iter()
        .map(|s| Skeleton::from_sequence(s, task))
        .collect();

    let full = ledger.can_afford(cost, (n * cfg.inner_budget) as u64);
    let results: Vec<InnerResult> = if full {
        skeletons
            .par_iter()
            .enumerate()
            .map(|(i, sk)| run_inner(task, sk, cfg, cfg.inner_budget, config.seed, iteration, i as u64))
            .collect::<Result<_>>()?
    } else {
        let mut left = ledger.remaining() / unit;
        let mut out = Vec::new();
        for (i, sk) in skeletons.iter().enumerate() {
            let allot = (cfg.inner_budget as u64).min(left) as usize;
            if allot == 0 {
                break;
            }
            let r = run_inner(task, sk, cfg, allot, config.seed, iteration, i as u64)?;
            left -= r.evaluations as u64;
            out.push(r);
        }
        out
    };

    let complete = results.len() == n;
    let mut rewards = Vec::with_capacity(results.len());
    let mut filled = Vec::with_capacity(results.len());
    for (sk, r) in skeletons.iter().zip(&results) {
        let before = ledger.consumed();
        ledger.charge(cost, r.evaluations as u64)?;
        let reward = F::lit(r.reward);
        let seq = sk.filled(&r.x);
        if best.as_ref().is_none_or(|b| reward > b.reward) && r.reward.is_finite() {
            *best = Some(BestDesign {
                sequence: seq.clone(),
                reward,
                found_at: before + unit * r.best_call as u64,
                iteration,
            });
        }
        audit.push(AuditRow {
            iteration,
            skeleton: skeleton_string(&sk.sequence, task.library()),
            inner_evals: r.evaluations,
            best_inner_reward: r.reward,
        });
        rewards.push(reward);
        filled.push(seq);
    }
    if rewards.is_empty() {
        return Ok(StepOutcome::Exhausted);
    }
    // Skeletons whose every evaluation failed rank at the bottom.
    let floor = rewards.iter().copied().filter(|r| r.is_finite()).fold(F::infinity(), F::min);
    let floor = if floor.is_finite() { floor } else { F::zero() };
    let rewards: Vec<F> = rewards.into_iter().map(|r| if r.is_finite() { r } else { floor }).collect();
    let mean = rewards.iter().fold(F::zero(), |a, &b| a + b) / F::lit(rewards.len() as f64);
    let max_reward = rewards.iter().fold(F::neg_infinity(), |m, &r| m.max(r));
    let best_reward = best.as_ref().map(|b| b.reward.as_f64()).unwrap_or(f64::NEG_INFINITY);
    if !complete {
        let q = crate::trainer::empirical_quantile(&rewards, config.epsilon)?;
        ledger.push_row(iteration, best_reward, mean.as_f64(), q.as_f64());
        return Ok(StepOutcome::Exhausted);
    }
    let seqs: Vec<HybridSequence<F>> = skeletons.into_iter().map(|s| s.sequence).collect();
    let (quantile, retained) = risk_seeking_update(policy, task.library(), &seqs, &rewards, config)?;
    ledger.push_row(iteration, best_reward, mean.as_f64(), quantile.as_f64());
    Ok(StepOutcome::Updated(StepStats { iteration, mean_reward: mean, quantile_reward: quantile, max_reward, retained }))
}

#[derive(Clone, Debug)]
pub struct DecoupledRun<F> {
    pub best: BestDesign<F>,
    pub ledger: EvalBudgetLedger,
    pub audit: Vec<AuditRow>,
    pub iterations: u64,
}

impl<F> DecoupledRun<F> {
    pub fn audit_csv(&self) -> String {
        let mut out = String::from("iteration,skeleton,inner_evals,best_inner_reward\n");
        for r in &self.audit {
            let _ = writeln!(out, "{},\"{}\",{},{}", r.iteration, r.skeleton, r.inner_evals, r.best_inner_reward);
        }
        out
    }

    pub fn write_audit(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.audit_csv())?;
        Ok(())
    }
}

pub fn run_decoupled<F, T>(
    policy: &mut PolicyParams<F>,
    task: &T,
    cfg: &DecoupledConfig,
    config: &TrainConfig,
) -> Result<DecoupledRun<F>>
where
    F: Scalar,
    T: Task<F> + ?Sized,
{
    config.validate()?;
    let mut ledger = EvalBudgetLedger::for_config(config);
    let mut best = None;
    let mut audit = Vec::new();
    let mut iteration = 0;
    loop {
        let outcome = decoupled_train_step(policy, task, cfg, config, &mut ledger, &mut best, &mut audit, iteration)?;
        iteration += 1;
        if outcome == StepOutcome::Exhausted || reached_target(config, &best) {
            break;
        }
    }
    let best = best.ok_or(Error::EmptyBest)?;
    Ok(DecoupledRun { best, ledger, audit, iterations: iteration })
}
