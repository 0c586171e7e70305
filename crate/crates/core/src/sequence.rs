//! Hybrid sequences: ordered `(token, parameter)` pairs plus the sampling
//! context (prior mask and truncation windows) recorded at every step.

use crate::error::{Error, Result};
use crate::library::Library;
use crate::sampler::TruncBounds;
use crate::scalar::Scalar;

/// Additive logit prior: each entry is `0` (feasible) or `-inf` (masked).
#[derive(Clone, Debug, PartialEq)]
pub struct PriorVector<F>(Vec<F>);

impl<F: Scalar> PriorVector<F> {
    pub fn zeros(k: usize) -> Self {
        Self(vec![F::zero(); k])
    }

    pub fn from_mask(masked: &[bool]) -> Self {
        Self(masked.iter().map(|&m| if m { F::neg_infinity() } else { F::zero() }).collect())
    }

    /// Validates raw entries (each `0` or `-inf`, at least one `0`).
    pub fn from_values(values: Vec<F>) -> Result<Self> {
        if values.iter().any(|&v| !(v == F::zero() || v == F::neg_infinity())) {
            return Err(Error::InvalidArgument("prior entries must be 0 or -inf".into()));
        }
        let p = Self(values);
        if p.feasible_count() == 0 {
            return Err(Error::AllMasked { step: 0 });
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mask(&mut self, index: usize) {
        self.0[index] = F::neg_infinity();
    }

    pub fn is_masked(&self, index: usize) -> bool {
        self.0[index] == F::neg_infinity()
    }

    pub fn feasible_count(&self) -> usize {
        self.0.iter().filter(|&&v| v != F::neg_infinity()).count()
    }

    pub fn values(&self) -> &[F] {
        &self.0
    }
}

/// How a sequence was generated; decides which terms enter its density.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SampleMode {
    /// Tokens and parameters drawn jointly.
    #[default]
    Joint,
    /// Discrete skeleton only; parameters are placeholders and carry no
    /// density.
    Skeleton,
}

/// Prior mask and per-token truncation windows for one position.
#[derive(Clone, Debug, PartialEq)]
pub struct StepContext<F> {
    pub prior: PriorVector<F>,
    /// One window per library token; empty means every token is unbounded.
    pub bounds: Vec<TruncBounds<F>>,
}

impl<F: Scalar> StepContext<F> {
    pub fn unconstrained(k: usize) -> Self {
        Self { prior: PriorVector::zeros(k), bounds: Vec::new() }
    }

    pub fn bounds_for(&self, token: usize) -> TruncBounds<F> {
        self.bounds.get(token).copied().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step<F> {
    pub token: usize,
    pub beta: F,
    pub context: StepContext<F>,
}

/// The concrete design: token indices and parameters, without sampling
/// context. This is what tasks evaluate and what gets serialized.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Design<F> {
    pub tokens: Vec<usize>,
    pub betas: Vec<F>,
}

impl<F: Scalar> Design<F> {
    pub fn new(pairs: &[(usize, F)]) -> Self {
        Self {
            tokens: pairs.iter().map(|p| p.0).collect(),
            betas: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Positions of parameterized tokens, in traversal order.
    pub fn slots(&self, library: &Library<F>) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| library.is_parameterized(t))
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy with the parameter slots replaced by `values`.
    pub fn with_slot_values(&self, slots: &[usize], values: &[F]) -> Self {
        let mut out = self.clone();
        for (&pos, &v) in slots.iter().zip(values) {
            out.betas[pos] = v;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct HybridSequence<F> {
    pub steps: Vec<Step<F>>,
    pub mode: SampleMode,
    /// Log-probability recorded at sampling time.
    pub log_prob: Option<F>,
}

impl<F: Scalar> HybridSequence<F> {
    /// Builds an unconstrained joint sequence from raw pairs (no masking,
    /// unbounded windows).
    pub fn from_pairs(pairs: &[(usize, F)], library_size: usize) -> Self {
        Self {
            steps: pairs
                .iter()
                .map(|&(token, beta)| Step {
                    token,
                    beta,
                    context: StepContext::unconstrained(library_size),
                })
                .collect(),
            mode: SampleMode::Joint,
            log_prob: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn design(&self) -> Design<F> {
        Design {
            tokens: self.steps.iter().map(|s| s.token).collect(),
            betas: self.steps.iter().map(|s| s.beta).collect(),
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.token)
    }
}
