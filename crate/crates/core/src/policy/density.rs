//! Per-position log-probability and entropy of the hybrid distribution,
//! with their derivatives with respect to the logits and locations.

use crate::error::{Error, Result};
use crate::sampler::{
    truncated_normal_dentropy_dmean, truncated_normal_dlogpdf_dmean, truncated_normal_entropy,
    truncated_normal_logpdf,
};
use crate::scalar::Scalar;
use crate::sequence::{SampleMode, StepContext};

#[derive(Clone, Debug, Default)]
pub struct StepTerms<F> {
    /// `log softmax(ψ + prior)[l]`, plus the parameter log-density when the
    /// token is parameterized and the sequence is joint.
    pub log_prob: F,
    pub entropy: F,
    /// `∂ log_prob / ∂ logits`
    pub dlp_dlogits: Vec<F>,
    /// `∂ log_prob / ∂ locations[token]`
    pub dlp_dloc: F,
    /// `∂ entropy / ∂ logits`
    pub dent_dlogits: Vec<F>,
    /// `∂ entropy / ∂ locations`
    pub dent_dloc: Vec<F>,
}

/// Evaluates one position. `parameterized[k]` tells which tokens carry a
/// parameter. Gradients are filled only when `with_grad` is set.
#[allow(clippy::too_many_arguments)]
pub fn step_terms<F: Scalar>(
    logits: &[F],
    locations: &[F],
    ctx: &StepContext<F>,
    parameterized: &[bool],
    token: usize,
    beta: F,
    mode: SampleMode,
    sigma: F,
    with_grad: bool,
) -> Result<StepTerms<F>> {
    let k = logits.len();
    let prior = ctx.prior.values();
    if prior.len() != k {
        return Err(Error::InvalidArgument(format!(
            "prior has {} entries, library has {k}",
            prior.len()
        )));
    }
    if token >= k {
        return Err(Error::InvalidArgument(format!("token index {token} out of range")));
    }
    if ctx.prior.is_masked(token) {
        return Err(Error::InvalidArgument(format!("token {token} is masked by its own prior")));
    }

    let mut max = F::neg_infinity();
    for i in 0..k {
        if !ctx.prior.is_masked(i) && logits[i] > max {
            max = logits[i];
        }
    }
    let mut denom = F::zero();
    for i in 0..k {
        if !ctx.prior.is_masked(i) {
            denom = denom + (logits[i] - max).exp();
        }
    }
    let log_denom = denom.ln();
    let mut logp = vec![F::neg_infinity(); k];
    let mut p = vec![F::zero(); k];
    for i in 0..k {
        if !ctx.prior.is_masked(i) {
            logp[i] = logits[i] - max - log_denom;
            p[i] = logp[i].exp();
        }
    }

    let joint = mode == SampleMode::Joint;
    let mut log_prob = logp[token];
    let mut dlp_dloc = F::zero();
    if joint && parameterized[token] {
        let b = ctx.bounds_for(token);
        log_prob = log_prob + truncated_normal_logpdf(beta, locations[token], sigma, &b)?;
        if with_grad {
            dlp_dloc = truncated_normal_dlogpdf_dmean(beta, locations[token], sigma, &b)?;
        }
    }

    // Per-token contribution e_i = H_cont(i) - log p_i; entropy = Σ p_i e_i.
    let mut cont_entropy = vec![F::zero(); k];
    let mut entropy = F::zero();
    for i in 0..k {
        if p[i] == F::zero() {
            continue;
        }
        if joint && parameterized[i] {
            cont_entropy[i] = truncated_normal_entropy(locations[i], sigma, &ctx.bounds_for(i))?;
        }
        entropy = entropy + p[i] * (cont_entropy[i] - logp[i]);
    }

    let mut terms = StepTerms { log_prob, entropy, dlp_dloc, ..Default::default() };
    if with_grad {
        terms.dlp_dlogits = p.iter().map(|&pi| -pi).collect();
        terms.dlp_dlogits[token] = terms.dlp_dlogits[token] + F::one();
        terms.dent_dlogits = (0..k)
            .map(|i| if p[i] == F::zero() { F::zero() } else { p[i] * (cont_entropy[i] - logp[i] - entropy) })
            .collect();
        terms.dent_dloc = vec![F::zero(); k];
        if joint {
            for i in 0..k {
                if parameterized[i] && p[i] > F::zero() {
                    let b = ctx.bounds_for(i);
                    if !b.is_unbounded() {
                        terms.dent_dloc[i] = p[i] * truncated_normal_dentropy_dmean(locations[i], sigma, &b)?;
                    }
                }
            }
        }
    }
    Ok(terms)
}
