//! The contract every optimization task implements.

use crate::error::Result;
use crate::library::Library;
use crate::sampler::TruncBounds;
use crate::scalar::Scalar;
use crate::sequence::{Design, StepContext};

/// What one objective evaluation costs, in both ledger units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalCost {
    pub evaluations: u64,
    pub episodes: u64,
}

impl EvalCost {
    pub const ONE: EvalCost = EvalCost { evaluations: 1, episodes: 0 };
}

/// A pluggable problem: token library, prefix constraints, stopping rule
/// and reward.
///
/// Sequences are built incrementally; `State` carries whatever the task
/// needs to answer constraint queries for the next position in O(1)
/// amortized time.
pub trait Task<F: Scalar>: Send + Sync {
    type State: Clone + Send;

    fn name(&self) -> &str;

    fn library(&self) -> &Library<F>;

    /// Hard cap on sequence length. The constraints must force completion
    /// at or before it.
    fn max_length(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    /// Prior mask and per-token truncation windows for the next position.
    fn constraints(&self, state: &Self::State) -> StepContext<F>;

    fn advance(&self, state: &mut Self::State, token: usize, beta: F) -> Result<()>;

    fn is_complete(&self, state: &Self::State) -> bool;

    /// One objective evaluation. `seed` drives any randomness inside the
    /// evaluation (e.g. environment resets).
    fn reward(&self, design: &Design<F>, seed: u64) -> Result<F>;

    fn cost(&self) -> EvalCost {
        EvalCost::ONE
    }

    /// Search box handed to inner optimizers for a parameter slot, given the
    /// window that was active when the slot's token was placed.
    fn slot_bounds(&self, token: usize, window: TruncBounds<F>) -> TruncBounds<F> {
        if window.is_finite() {
            return window;
        }
        let range = self.library().tokens()[token].range();
        if range.is_finite() {
            range
        } else {
            TruncBounds::unbounded()
        }
    }

    /// Replays a design through the state machine, returning the context at
    /// every position. Fails if the design breaks a constraint or is
    /// incomplete.
    fn replay(&self, design: &Design<F>) -> Result<Vec<StepContext<F>>> {
        use crate::error::Error;
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(design.len());
        for (i, (&tok, &beta)) in design.tokens.iter().zip(&design.betas).enumerate() {
            if self.is_complete(&state) {
                return Err(Error::MalformedTraversal(format!("trailing tokens after position {i}")));
            }
            if tok >= self.library().len() {
                return Err(Error::MalformedTraversal(format!("token index {tok} out of range")));
            }
            let ctx = self.constraints(&state);
            if ctx.prior.is_masked(tok) {
                return Err(Error::MalformedTraversal(format!(
                    "token `{}` is infeasible at position {i}",
                    self.library().tokens()[tok].name
                )));
            }
            self.advance(&mut state, tok, beta)?;
            out.push(ctx);
        }
        if !self.is_complete(&state) {
            return Err(Error::MalformedTraversal("incomplete traversal".into()));
        }
        Ok(out)
    }
}

/// Wraps a task and counts every `reward` call. Used to audit budget
/// ledgers against the objective's own view.
pub struct CountingTask<T> {
    inner: T,
    calls: std::sync::atomic::AtomicU64,
}

impl<T> CountingTask<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, calls: std::sync::atomic::AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<F: Scalar, T: Task<F>> Task<F> for CountingTask<T> {
    type State = T::State;

    fn name(&self) -> &str {
        self.inner.name()
    }

    fn library(&self) -> &Library<F> {
        self.inner.library()
    }

    fn max_length(&self) -> usize {
        self.inner.max_length()
    }

    fn initial_state(&self) -> Self::State {
        self.inner.initial_state()
    }

    fn constraints(&self, state: &Self::State) -> StepContext<F> {
        self.inner.constraints(state)
    }

    fn advance(&self, state: &mut Self::State, token: usize, beta: F) -> Result<()> {
        self.inner.advance(state, token, beta)
    }

    fn is_complete(&self, state: &Self::State) -> bool {
        self.inner.is_complete(state)
    }

    fn reward(&self, design: &Design<F>, seed: u64) -> Result<F> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.reward(design, seed)
    }

    fn cost(&self) -> EvalCost {
        self.inner.cost()
    }

    fn slot_bounds(&self, token: usize, window: TruncBounds<F>) -> TruncBounds<F> {
        self.inner.slot_bounds(token, window)
    }
}
