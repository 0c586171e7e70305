//! Sequence log-probability, entropy and the exact gradient of the
//! risk-seeking objective by backpropagation through the unrolled LSTM.

use rayon::prelude::*;

use super::density::{step_terms, StepTerms};
use super::{PolicyParams, StepCache};
use crate::error::{Error, Result};
use crate::library::Library;
use crate::scalar::Scalar;
use crate::sequence::{HybridSequence, SampleMode};

#[derive(Clone, Debug, PartialEq)]
pub struct LogProb<F> {
    pub total: F,
    pub per_step: Vec<F>,
}

/// A batch element: a sequence and its scalar weight (the advantage).
#[derive(Clone, Copy, Debug)]
pub struct WeightedSequence<'a, F> {
    pub sequence: &'a HybridSequence<F>,
    pub weight: F,
}

/// Flat gradient aligned index-for-index with the policy weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector<F>(pub Vec<F>);

impl<F: Scalar> GradientVector<F> {
    pub fn zeros(n: usize) -> Self {
        Self(vec![F::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }

    pub fn max_abs(&self) -> F {
        self.0.iter().fold(F::zero(), |m, &g| m.max(g.abs()))
    }
}

const GRAD_CHUNK: usize = 8;

impl<F: Scalar> PolicyParams<F> {
    fn check_library(&self, library: &Library<F>) -> Result<Vec<bool>> {
        if library.len() != self.library_size() {
            return Err(Error::InvalidArgument(format!(
                "library has {} tokens, policy expects {}",
                library.len(),
                self.library_size()
            )));
        }
        Ok((0..library.len()).map(|i| library.is_parameterized(i)).collect())
    }

    /// Runs the policy along `seq`, returning per-step terms and (optionally)
    /// the activations needed for backpropagation.
    fn unroll(
        &self,
        seq: &HybridSequence<F>,
        parameterized: &[bool],
        with_grad: bool,
    ) -> Result<(Vec<StepTerms<F>>, Vec<StepCache<F>>)> {
        let k = self.library_size();
        let mut state = self.zero_state();
        let mut logits = vec![F::zero(); k];
        let mut locations = vec![F::zero(); k];
        let mut terms = Vec::with_capacity(seq.len());
        let mut caches = Vec::with_capacity(if with_grad { seq.len() } else { 0 });
        let mut row = self.layout.start_row();
        let mut beta_in = F::zero();
        for step in &seq.steps {
            if step.context.prior.len() != k {
                return Err(Error::InvalidArgument("prior length does not match library".into()));
            }
            if with_grad {
                let mut cache = StepCache::default();
                self.forward_step(&mut state, row, beta_in, &mut logits, &mut locations, Some(&mut cache));
                caches.push(cache);
            } else {
                self.forward_step(&mut state, row, beta_in, &mut logits, &mut locations, None);
            }
            terms.push(step_terms(
                &logits,
                &locations,
                &step.context,
                parameterized,
                step.token,
                step.beta,
                seq.mode,
                self.sigma(),
                with_grad,
            )?);
            row = step.token;
            beta_in = match seq.mode {
                SampleMode::Joint => step.beta,
                SampleMode::Skeleton => F::zero(),
            };
            if !beta_in.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite parameter {beta_in} in sequence")));
            }
        }
        Ok((terms, caches))
    }

    /// Chain-rule log-probability of a sequence under the prior masks
    /// recorded in it.
    pub fn sequence_log_prob(&self, seq: &HybridSequence<F>, library: &Library<F>) -> Result<LogProb<F>> {
        let parameterized = self.check_library(library)?;
        let (terms, _) = self.unroll(seq, &parameterized, false)?;
        let per_step: Vec<F> = terms.iter().map(|t| t.log_prob).collect();
        let total = per_step.iter().fold(F::zero(), |a, &b| a + b);
        Ok(LogProb { total, per_step })
    }

    /// Sum over positions of the hybrid step entropy.
    pub fn sequence_entropy(&self, seq: &HybridSequence<F>, library: &Library<F>) -> Result<F> {
        let parameterized = self.check_library(library)?;
        let (terms, _) = self.unroll(seq, &parameterized, false)?;
        Ok(terms.iter().fold(F::zero(), |a, t| a + t.entropy))
    }

    /// `(1/|B|) Σ w_b log p(τ_b) + λ (1/|B|) Σ H(τ_b)`.
    pub fn objective(&self, batch: &[WeightedSequence<F>], library: &Library<F>, entropy_coeff: F) -> Result<F> {
        let parameterized = self.check_library(library)?;
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n = F::lit(batch.len() as f64);
        let mut total = F::zero();
        for item in batch {
            let (terms, _) = self.unroll(item.sequence, &parameterized, false)?;
            for t in &terms {
                total = total + item.weight * t.log_prob + entropy_coeff * t.entropy;
            }
        }
        Ok(total / n)
    }

    /// Exact gradient of [`PolicyParams::objective`]. The result is an ascent
    /// direction.
    pub fn loss_gradient(
        &self,
        batch: &[WeightedSequence<F>],
        library: &Library<F>,
        entropy_coeff: F,
    ) -> Result<GradientVector<F>> {
        let parameterized = self.check_library(library)?;
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if let Some(index) = self.weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite { index, value: self.weights[index].as_f64() });
        }
        let inv_n = F::one() / F::lit(batch.len() as f64);
        // Fixed-size chunks summed in order keep the result independent of
        // thread scheduling.
        let partials: Vec<Result<Vec<F>>> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut acc = vec![F::zero(); self.layout.len];
                for item in chunk {
                    self.accumulate_sequence_gradient(
                        item.sequence,
                        &parameterized,
                        item.weight * inv_n,
                        entropy_coeff * inv_n,
                        &mut acc,
                    )?;
                }
                Ok(acc)
            })
            .collect();
        let mut grad = vec![F::zero(); self.layout.len];
        for part in partials {
            for (g, p) in grad.iter_mut().zip(part?) {
                *g = *g + p;
            }
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { index, value: grad[index].as_f64() });
        }
        Ok(GradientVector(grad))
    }

    fn accumulate_sequence_gradient(
        &self,
        seq: &HybridSequence<F>,
        parameterized: &[bool],
        lp_scale: F,
        ent_scale: F,
        grad: &mut [F],
    ) -> Result<()> {
        if lp_scale == F::zero() && ent_scale == F::zero() {
            return Ok(());
        }
        let (terms, caches) = self.unroll(seq, parameterized, true)?;
        let l = self.layout;
        let h = l.hidden;
        let k = l.library_size;
        let g4 = 4 * h;
        let w = &self.weights;
        let mut dh_next = vec![F::zero(); h];
        let mut dc_next = vec![F::zero(); h];
        let mut dlogits = vec![F::zero(); k];
        let mut dloc = vec![F::zero(); k];
        let mut dh = vec![F::zero(); h];
        let mut dz = vec![F::zero(); g4];
        for t in (0..terms.len()).rev() {
            let term = &terms[t];
            let cache = &caches[t];
            let token = seq.steps[t].token;
            for i in 0..k {
                dlogits[i] = lp_scale * term.dlp_dlogits[i] + ent_scale * term.dent_dlogits[i];
                dloc[i] = ent_scale * term.dent_dloc[i];
            }
            dloc[token] = dloc[token] + lp_scale * term.dlp_dloc;

            dh.copy_from_slice(&dh_next);
            for i in 0..k {
                let (a, b) = (dlogits[i], dloc[i]);
                grad[l.logit_b + i] = grad[l.logit_b + i] + a;
                grad[l.loc_b + i] = grad[l.loc_b + i] + b;
                let lw = l.logit_w + i * h;
                let mw = l.loc_w + i * h;
                for j in 0..h {
                    grad[lw + j] = grad[lw + j] + a * cache.h[j];
                    grad[mw + j] = grad[mw + j] + b * cache.h[j];
                    dh[j] = dh[j] + a * w[lw + j] + b * w[mw + j];
                }
            }

            let gates = &cache.gates;
            for j in 0..h {
                let (ig, fg, gg, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = cache.tanh_c[j];
                let d_o = dh[j] * tc;
                let dc = dh[j] * og * (F::one() - tc * tc) + dc_next[j];
                let di = dc * gg;
                let dg = dc * ig;
                let df = dc * cache.c_prev[j];
                dc_next[j] = dc * fg;
                dz[j] = di * ig * (F::one() - ig);
                dz[h + j] = df * fg * (F::one() - fg);
                dz[2 * h + j] = dg * (F::one() - gg * gg);
                dz[3 * h + j] = d_o * og * (F::one() - og);
            }

            let emb = l.embed + cache.row * g4;
            for r in 0..g4 {
                grad[emb + r] = grad[emb + r] + dz[r];
                grad[l.beta_in + r] = grad[l.beta_in + r] + dz[r] * cache.beta;
                grad[l.gate_bias + r] = grad[l.gate_bias + r] + dz[r];
            }
            dh_next.iter_mut().for_each(|x| *x = F::zero());
            for r in 0..g4 {
                let d = dz[r];
                if d == F::zero() {
                    continue;
                }
                let base = l.recurrent + r * h;
                for j in 0..h {
                    grad[base + j] = grad[base + j] + d * cache.h_prev[j];
                    dh_next[j] = dh_next[j] + d * w[base + j];
                }
            }
        }
        Ok(())
    }
}
