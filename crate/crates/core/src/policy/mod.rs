//! Autoregressive sequence policy.
//!
//! A single-layer LSTM reads the previous `(token, parameter)` pair and emits
//! two heads per position: `K` logits for the categorical over tokens and `K`
//! locations, one per token, for the parameter distribution. The parameter
//! distribution is a normal with fixed scale, truncated to whatever window
//! the task supplies for that token and position.
//!
//! All trainable weights live in one flat vector so gradients, optimizer
//! moments and checkpoints share a single index space.

mod adam;
mod checkpoint;
mod density;
mod gradcheck;
mod grad;

pub use adam::{AdamConfig, MOVING_AVERAGE_COEFF};
pub use checkpoint::CheckpointHeader;
pub use density::{step_terms, StepTerms};
pub use gradcheck::finite_diff_gradient;
pub use grad::{GradientVector, LogProb, WeightedSequence};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scale of the parameter distribution. Not trained.
pub const DEFAULT_SIGMA: f64 = 0.5;
pub const DEFAULT_HIDDEN: usize = 32;

/// Offsets of every weight block inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub library_size: usize,
    pub hidden: usize,
    /// `(K + 1) x 4h`: one input embedding row per token plus the start marker.
    pub embed: usize,
    /// `4h`: input weights for the previous parameter value.
    pub beta_in: usize,
    /// `4h x h`, row-major.
    pub recurrent: usize,
    /// `4h`
    pub gate_bias: usize,
    /// `K x h`
    pub logit_w: usize,
    pub logit_b: usize,
    /// `K x h`
    pub loc_w: usize,
    pub loc_b: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(library_size: usize, hidden: usize) -> Self {
        let g = 4 * hidden;
        let embed = 0;
        let beta_in = embed + (library_size + 1) * g;
        let recurrent = beta_in + g;
        let gate_bias = recurrent + g * hidden;
        let logit_w = gate_bias + g;
        let logit_b = logit_w + library_size * hidden;
        let loc_w = logit_b + library_size;
        let loc_b = loc_w + library_size * hidden;
        let len = loc_b + library_size;
        Self {
            library_size,
            hidden,
            embed,
            beta_in,
            recurrent,
            gate_bias,
            logit_w,
            logit_b,
            loc_w,
            loc_b,
            len,
        }
    }

    /// Embedding row used for the start of a sequence.
    pub fn start_row(&self) -> usize {
        self.library_size
    }
}

/// Recurrent state carried between positions.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<F> {
    /// Pre-prior, pre-softmax scores, one per token.
    pub logits: Vec<F>,
    /// Parameter-distribution means, one per token.
    pub locations: Vec<F>,
    pub state: HiddenState<F>,
}

/// Trainable weights, optimizer moments and the fixed continuous-head
/// settings.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams<F> {
    layout: Layout,
    pub(crate) weights: Vec<F>,
    pub(crate) first_moment: Vec<F>,
    pub(crate) second_moment: Vec<F>,
    pub(crate) step: u64,
    sigma: F,
    shift: F,
}

/// Activations of one forward step, kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub(crate) struct StepCache<F> {
    pub row: usize,
    pub beta: F,
    /// Post-activation gates `[i, f, g, o]`.
    pub gates: Vec<F>,
    pub c_prev: Vec<F>,
    pub h_prev: Vec<F>,
    pub tanh_c: Vec<F>,
    pub h: Vec<F>,
}

#[inline]
fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

impl<F: Scalar> PolicyParams<F> {
    /// Fresh policy with weights uniform in `±1/sqrt(fan_in)`.
    pub fn new(library_size: usize, hidden: usize, seed: u64) -> Result<Self> {
        if library_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "library size must be at least 2, got {library_size}"
            )));
        }
        if hidden == 0 {
            return Err(Error::InvalidArgument("hidden units must be positive".into()));
        }
        let layout = Layout::new(library_size, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![F::zero(); layout.len];
        // Gate pre-activations see a one-hot row, the parameter and h.
        let gate_bound = 1.0 / ((library_size + 2 + hidden) as f64).sqrt();
        let head_bound = 1.0 / (hidden as f64).sqrt();
        for (i, w) in weights.iter_mut().enumerate() {
            let bound = if i < layout.logit_w { gate_bound } else { head_bound };
            *w = F::lit(rng.gen_range(-bound..bound));
        }
        Ok(Self {
            layout,
            first_moment: vec![F::zero(); layout.len],
            second_moment: vec![F::zero(); layout.len],
            weights,
            step: 0,
            sigma: F::lit(DEFAULT_SIGMA),
            shift: F::zero(),
        })
    }

    /// Overrides the fixed scale and additive shift of the parameter head.
    pub fn with_continuous_head(mut self, sigma: F, shift: F) -> Result<Self> {
        if !(sigma > F::zero()) || !sigma.is_finite() || !shift.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "continuous head needs sigma > 0 and finite shift, got ({sigma}, {shift})"
            )));
        }
        self.sigma = sigma;
        self.shift = shift;
        Ok(self)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn library_size(&self) -> usize {
        self.layout.library_size
    }

    pub fn hidden_units(&self) -> usize {
        self.layout.hidden
    }

    pub fn num_params(&self) -> usize {
        self.layout.len
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// Replaces the weight vector; the length must match and every entry
    /// must be finite.
    pub fn set_weights(&mut self, weights: Vec<F>) -> Result<()> {
        if weights.len() != self.layout.len {
            return Err(Error::InvalidArgument(format!(
                "expected {} weights, got {}",
                self.layout.len,
                weights.len()
            )));
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite { index, value: weights[index].as_f64() });
        }
        self.weights = weights;
        Ok(())
    }

    pub fn weights_mut(&mut self) -> &mut [F] {
        &mut self.weights
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn sigma(&self) -> F {
        self.sigma
    }

    pub fn shift(&self) -> F {
        self.shift
    }

    pub fn zero_state(&self) -> HiddenState<F> {
        HiddenState { h: vec![F::zero(); self.layout.hidden], c: vec![F::zero(); self.layout.hidden] }
    }

    /// One autoregressive step. `prev = None` is the start marker.
    pub fn policy_step(
        &self,
        state: &HiddenState<F>,
        prev: Option<usize>,
        prev_param: F,
    ) -> Result<StepOutput<F>> {
        if !prev_param.is_finite() {
            return Err(Error::InvalidArgument(format!("previous parameter is not finite: {prev_param}")));
        }
        let row = match prev {
            None => self.layout.start_row(),
            Some(t) if t < self.layout.library_size => t,
            Some(t) => {
                return Err(Error::InvalidArgument(format!("token index {t} out of range")));
            }
        };
        let mut next = state.clone();
        let k = self.layout.library_size;
        let mut logits = vec![F::zero(); k];
        let mut locations = vec![F::zero(); k];
        self.forward_step(&mut next, row, prev_param, &mut logits, &mut locations, None);
        Ok(StepOutput { logits, locations, state: next })
    }

    /// In-place forward step. When `cache` is given it receives everything
    /// backpropagation needs.
    pub(crate) fn forward_step(
        &self,
        state: &mut HiddenState<F>,
        row: usize,
        beta: F,
        logits: &mut [F],
        locations: &mut [F],
        cache: Option<&mut StepCache<F>>,
    ) {
        let l = &self.layout;
        let h = l.hidden;
        let g4 = 4 * h;
        let w = &self.weights;
        let mut z = vec![F::zero(); g4];
        let emb = &w[l.embed + row * g4..l.embed + (row + 1) * g4];
        let bin = &w[l.beta_in..l.beta_in + g4];
        let bias = &w[l.gate_bias..l.gate_bias + g4];
        for r in 0..g4 {
            let wr = &w[l.recurrent + r * h..l.recurrent + (r + 1) * h];
            let mut acc = emb[r] + bin[r] * beta + bias[r];
            for (a, b) in wr.iter().zip(&state.h) {
                acc = acc + *a * *b;
            }
            z[r] = acc;
        }
        for j in 0..h {
            z[j] = sigmoid(z[j]);
            z[h + j] = sigmoid(z[h + j]);
            z[2 * h + j] = z[2 * h + j].tanh();
            z[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        let c_prev = state.c.clone();
        let h_prev = if cache.is_some() { state.h.clone() } else { Vec::new() };
        let mut tanh_c = vec![F::zero(); h];
        for j in 0..h {
            let c = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
            state.c[j] = c;
            tanh_c[j] = c.tanh();
            state.h[j] = z[3 * h + j] * tanh_c[j];
        }
        let k = l.library_size;
        for t in 0..k {
            let wl = &w[l.logit_w + t * h..l.logit_w + (t + 1) * h];
            let wm = &w[l.loc_w + t * h..l.loc_w + (t + 1) * h];
            let mut a = w[l.logit_b + t];
            let mut b = w[l.loc_b + t];
            for j in 0..h {
                a = a + wl[j] * state.h[j];
                b = b + wm[j] * state.h[j];
            }
            logits[t] = a;
            locations[t] = b + self.shift;
        }
        if let Some(cache) = cache {
            cache.row = row;
            cache.beta = beta;
            cache.gates = z;
            cache.c_prev = c_prev;
            cache.h_prev = h_prev;
            cache.tanh_c = tanh_c;
            cache.h = state.h.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_library_and_hidden_size() {
        let p = PolicyParams::<f64>::new(5, 32, 0).unwrap();
        let l = p.layout();
        assert_eq!(l.loc_b + 5, p.num_params());
        assert_eq!(l.logit_b - l.logit_w, 5 * 32);
        let out = p.policy_step(&p.zero_state(), None, 0.0).unwrap();
        assert_eq!(out.logits.len(), 5);
        assert_eq!(out.locations.len(), 5);
        assert!(out.logits.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let a = PolicyParams::<f64>::new(5, 32, 0).unwrap();
        let b = PolicyParams::<f64>::new(5, 32, 0).unwrap();
        assert_eq!(a, b);
        let c = PolicyParams::<f64>::new(5, 32, 1).unwrap();
        assert_ne!(a.weights(), c.weights());
        assert!(a.first_moment.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn rejects_tiny_library() {
        assert!(PolicyParams::<f64>::new(1, 32, 0).is_err());
    }

    #[test]
    fn step_is_pure() {
        let p = PolicyParams::<f64>::new(4, 8, 3).unwrap();
        let s = p.policy_step(&p.zero_state(), None, 0.0).unwrap();
        let a = p.policy_step(&s.state, Some(2), 0.7).unwrap();
        let b = p.policy_step(&s.state, Some(2), 0.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn previous_parameter_changes_output() {
        let p = PolicyParams::<f64>::new(4, 8, 3).unwrap();
        let s0 = p.zero_state();
        let a = p.policy_step(&s0, Some(1), 0.1).unwrap();
        let b = p.policy_step(&s0, Some(1), 0.9).unwrap();
        assert!(a.logits.iter().zip(&b.logits).any(|(x, y)| x != y));
    }

    #[test]
    fn non_finite_parameter_rejected() {
        let p = PolicyParams::<f64>::new(4, 8, 3).unwrap();
        assert!(p.policy_step(&p.zero_state(), Some(1), f64::NAN).is_err());
    }

    #[test]
    fn f32_policy_runs() {
        let p = PolicyParams::<f32>::new(4, 8, 3).unwrap();
        let out = p.policy_step(&p.zero_state(), None, 0.0).unwrap();
        assert!(out.logits.iter().all(|x| x.is_finite()));
    }
}
