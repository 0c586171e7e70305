//! Ancestral sampling of hybrid sequences from the policy, and the random
//! streams that make batches reproducible.

mod truncnorm;

pub use truncnorm::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::{step_terms, PolicyParams};
use crate::scalar::Scalar;
use crate::sequence::{HybridSequence, PriorVector, SampleMode, Step};
use crate::task::Task;

/// Absolute cap on sequence length, whatever the task declares.
pub const HARD_MAX_LENGTH: usize = 64;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th draw of `iteration` under run seed `seed`.
pub fn derive_seed(seed: u64, iteration: u64, index: u64) -> u64 {
    mix(mix(mix(seed) ^ iteration) ^ index)
}

/// Independent generator for one sample. Streams depend only on their
/// coordinates, so batches can be drawn in parallel without changing
/// results.
pub fn stream_rng(seed: u64, iteration: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, iteration, index))
}

/// Draws a token from `softmax(logits + prior)`. Consumes exactly one
/// uniform draw.
pub fn sample_masked_categorical<F: Scalar, R: Rng + ?Sized>(
    logits: &[F],
    prior: &PriorVector<F>,
    rng: &mut R,
) -> Result<usize> {
    if logits.len() != prior.len() {
        return Err(Error::InvalidArgument(format!(
            "{} logits but {} prior entries",
            logits.len(),
            prior.len()
        )));
    }
    let feasible: Vec<usize> = (0..logits.len()).filter(|&i| !prior.is_masked(i)).collect();
    if feasible.is_empty() {
        return Err(Error::AllMasked { step: 0 });
    }
    if let Some(&i) = feasible.iter().find(|&&i| !logits[i].is_finite()) {
        return Err(Error::NonFinite { index: i, value: logits[i].as_f64() });
    }
    let max = feasible.iter().map(|&i| logits[i].as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = feasible.iter().map(|&i| (logits[i].as_f64() - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (&i, &w) in feasible.iter().zip(&weights) {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(*feasible.last().unwrap())
}

/// Samples one complete sequence, recording the context of every step and
/// the log-probability under the mode's density.
///
/// In [`SampleMode::Skeleton`] the parameter draw still happens, so the
/// random stream advances exactly as in joint mode, but the value is
/// discarded and the slot gets the midpoint of its window (0 when
/// unbounded). The policy sees 0 as the previous parameter.
pub fn sample_sequence<F, T, R>(
    policy: &PolicyParams<F>,
    task: &T,
    mode: SampleMode,
    rng: &mut R,
) -> Result<HybridSequence<F>>
where
    F: Scalar,
    T: Task<F> + ?Sized,
    R: Rng + ?Sized,
{
    let library = task.library();
    let k = library.len();
    if k != policy.library_size() {
        return Err(Error::InvalidArgument(format!(
            "library has {k} tokens, policy expects {}",
            policy.library_size()
        )));
    }
    let parameterized: Vec<bool> = (0..k).map(|i| library.is_parameterized(i)).collect();
    let max_len = task.max_length().min(HARD_MAX_LENGTH);
    let mut state = task.initial_state();
    let mut hidden = policy.zero_state();
    let mut prev = None;
    let mut beta_in = F::zero();
    let mut steps = Vec::new();
    let mut log_prob = F::zero();
    while !task.is_complete(&state) {
        if steps.len() >= max_len {
            return Err(Error::MaxLength(max_len));
        }
        let ctx = task.constraints(&state);
        if ctx.prior.feasible_count() == 0 {
            return Err(Error::AllMasked { step: steps.len() });
        }
        let out = policy.policy_step(&hidden, prev, beta_in)?;
        let token = sample_masked_categorical(&out.logits, &ctx.prior, rng)?;
        let beta = if parameterized[token] {
            let bounds = ctx.bounds_for(token);
            let drawn = sample_truncated_normal(out.locations[token], policy.sigma(), &bounds, rng);
            match mode {
                SampleMode::Joint => drawn?,
                SampleMode::Skeleton => bounds.midpoint(),
            }
        } else {
            F::zero()
        };
        let terms = step_terms(
            &out.logits,
            &out.locations,
            &ctx,
            &parameterized,
            token,
            beta,
            mode,
            policy.sigma(),
            false,
        )?;
        log_prob = log_prob + terms.log_prob;
        task.advance(&mut state, token, beta)?;
        steps.push(Step { token, beta, context: ctx });
        hidden = out.state;
        prev = Some(token);
        beta_in = match mode {
            SampleMode::Joint => beta,
            SampleMode::Skeleton => F::zero(),
        };
    }
    Ok(HybridSequence { steps, mode, log_prob: Some(log_prob) })
}

/// Samples `n` sequences for one iteration, each from its own stream.
pub fn sample_batch<F, T>(
    policy: &PolicyParams<F>,
    task: &T,
    mode: SampleMode,
    n: usize,
    seed: u64,
    iteration: u64,
) -> Result<Vec<HybridSequence<F>>>
where
    F: Scalar,
    T: Task<F> + ?Sized,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, iteration, i as u64);
            sample_sequence(policy, task, mode, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_tokens_never_drawn() {
        let prior = PriorVector::<f64>::from_mask(&[true, false, true, false]);
        let logits = [10.0, -1.0, 10.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let t = sample_masked_categorical(&logits, &prior, &mut rng).unwrap();
            assert!(t == 1 || t == 3);
        }
    }

    #[test]
    fn all_masked_is_an_error() {
        let prior = PriorVector::<f64>::from_mask(&[true, true]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            sample_masked_categorical(&[0.0, 0.0], &prior, &mut rng),
            Err(Error::AllMasked { .. })
        ));
    }

    #[test]
    fn categorical_frequencies_match_softmax() {
        let prior = PriorVector::<f64>::zeros(3);
        let logits = [0.0, 1.0, -0.5];
        let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_masked_categorical(&logits, &prior, &mut rng).unwrap()] += 1;
        }
        for i in 0..3 {
            let p = logits[i].exp() / z;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((counts[i] as f64 / n as f64 - p).abs() < 5.0 * se);
        }
    }

    #[test]
    fn streams_are_distinct_and_repeatable() {
        let a: u64 = stream_rng(1, 2, 3).gen();
        let b: u64 = stream_rng(1, 2, 3).gen();
        let c: u64 = stream_rng(1, 2, 4).gen();
        let d: u64 = stream_rng(1, 3, 3).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
