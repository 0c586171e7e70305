//! Decision-tree policies for classic-control environments.
//!
//! A tree is written in pre-order with decision tokens `x{j}<` (two
//! children, threshold parameter) and action leaves `a{k}`; both indices
//! are 1-based. A decision sends the observation left when `x_j < β`.
//! Thresholds are sampled inside nested bounds: descending left below a
//! split on feature `j` caps that feature at `β - h`, descending right
//! floors it at `β + h`.

use crate::envs::{derive_episode_seed, EnvironmentSpec, MAX_OBS};
use crate::error::{Error, Result};
use crate::library::{Library, Token};
use crate::sampler::TruncBounds;
use crate::scalar::Scalar;
use crate::sequence::{Design, PriorVector, StepContext};
use crate::task::{EvalCost, Task};

pub const DEFAULT_EPISODES: usize = 100;
pub const DEFAULT_MAX_TOKENS: usize = 32;
/// Resolution `h` as a fraction of each feature's root width.
pub const DEFAULT_RESOLUTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Per-feature `(lo, hi)` windows for a child of a split on `feature` at
/// `beta`. If the moved endpoint leaves a gap narrower than `h`, it is
/// pulled back to `h / 2` from the other end, which keeps the interval
/// valid and makes the feature unsplittable below this node.
pub fn param_bounds(feature: usize, beta: f64, parent: &[(f64, f64)], side: Side, h: f64) -> Vec<(f64, f64)> {
    let mut out = parent.to_vec();
    let (lo, hi) = &mut out[feature];
    match side {
        Side::Right => {
            *lo = beta + h;
            if *hi - *lo < h {
                *lo = *hi - h / 2.0;
            }
        }
        Side::Left => {
            *hi = beta - h;
            if *hi - *lo < h {
                *hi = *lo + h / 2.0;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    /// Go to `index + 1` when `obs[feature] < threshold`, else to `right`.
    Decision { feature: usize, threshold: f64, right: usize },
    Leaf { action: usize },
}

/// A validated pre-order tree.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Builds a tree from a design over a library with `n_features`
    /// decision tokens followed by `n_actions` action tokens.
    pub fn from_design<F: Scalar>(design: &Design<F>, n_features: usize, n_actions: usize) -> Result<Self> {
        let mut nodes = Vec::with_capacity(design.len());
        // Indices of decision nodes still waiting for their right child.
        let mut pending: Vec<usize> = Vec::new();
        let mut open = 1usize;
        for (i, (&tok, &beta)) in design.tokens.iter().zip(&design.betas).enumerate() {
            if open == 0 {
                return Err(Error::MalformedTraversal(format!("trailing tokens after position {i}")));
            }
            if tok < n_features {
                let threshold = beta.as_f64();
                if !threshold.is_finite() {
                    return Err(Error::MalformedTraversal(format!("non-finite threshold at position {i}")));
                }
                nodes.push(Node::Decision { feature: tok, threshold, right: usize::MAX });
                pending.push(i);
                open += 1;
            } else if tok < n_features + n_actions {
                nodes.push(Node::Leaf { action: tok - n_features });
                open -= 1;
                // The next node, if any, is the right child of the most
                // recent decision still missing one.
                if open > 0 {
                    let parent = pending.pop().expect("open slot implies a pending decision");
                    if let Node::Decision { right, .. } = &mut nodes[parent] {
                        *right = i + 1;
                    }
                }
            } else {
                return Err(Error::MalformedTraversal(format!("token index {tok} out of range at position {i}")));
            }
        }
        if open != 0 || nodes.is_empty() {
            return Err(Error::MalformedTraversal(format!("incomplete tree: {open} open slots")));
        }
        Ok(Self { nodes })
    }

    pub fn decision_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Decision { .. })).count()
    }
}

/// Walks from the root to a leaf and returns its action index (0-based).
pub fn eval_tree(tree: &DecisionTree, obs: &[f64]) -> usize {
    let mut i = 0;
    loop {
        match tree.nodes[i] {
            Node::Leaf { action } => return action,
            Node::Decision { feature, threshold, right } => {
                i = if obs[feature] < threshold { i + 1 } else { right };
            }
        }
    }
}

/// Mean return of `tree` over `n_episodes` fresh episodes. Episode `e`
/// starts from the reset drawn with a seed derived from `(seed, e)`.
pub fn tree_reward(tree: &DecisionTree, env: &EnvironmentSpec, n_episodes: usize, seed: u64) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("need at least one episode".into()));
    }
    if let Some(bad) = tree.nodes.iter().find_map(|n| match *n {
        Node::Leaf { action } if action >= env.n_actions => Some(action),
        Node::Decision { feature, .. } if feature >= env.obs_dim => Some(feature),
        _ => None,
    }) {
        return Err(Error::InvalidArgument(format!("tree refers to index {bad} outside {}", env.name)));
    }
    let mut obs = [0.0; MAX_OBS];
    let mut total = 0.0;
    for e in 0..n_episodes {
        let mut ep = env.reset(derive_episode_seed(seed, e as u64));
        loop {
            ep.observe_into(&mut obs);
            let t = ep.step(eval_tree(tree, &obs[..env.obs_dim]))?;
            total += t.reward;
            if t.done {
                break;
            }
        }
    }
    Ok(total / n_episodes as f64)
}

/// Prefix state: bounds for the slot about to be filled plus the pending
/// right-child slots.
#[derive(Clone, Debug, PartialEq)]
pub struct DtState {
    pub bounds: Vec<(f64, f64)>,
    /// Action that may not fill the current slot (its left sibling leaf).
    pub forbidden: Option<usize>,
    current_is_left: bool,
    stack: Vec<PendingRight>,
    pub len: usize,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
struct PendingRight {
    bounds: Vec<(f64, f64)>,
    forbidden: Option<usize>,
}

impl DtState {
    /// Slots still to fill, including the current one.
    pub fn open_slots(&self) -> usize {
        if self.done {
            0
        } else {
            1 + self.stack.len()
        }
    }
}

pub struct DecisionTreeTask<F> {
    env: EnvironmentSpec,
    library: Library<F>,
    resolution: Vec<f64>,
    n_episodes: usize,
    max_tokens: usize,
}

impl<F: Scalar> DecisionTreeTask<F> {
    pub fn new(env: EnvironmentSpec) -> Result<Self> {
        Self::with_settings(env, DEFAULT_EPISODES, DEFAULT_MAX_TOKENS, DEFAULT_RESOLUTION)
    }

    pub fn with_settings(env: EnvironmentSpec, n_episodes: usize, max_tokens: usize, resolution: f64) -> Result<Self> {
        if env.n_actions < 2 {
            return Err(Error::InvalidArgument("decision trees need at least two actions".into()));
        }
        if n_episodes == 0 {
            return Err(Error::InvalidArgument("n_episodes must be positive".into()));
        }
        if max_tokens == 0 {
            return Err(Error::InvalidArgument("max_tokens must be positive".into()));
        }
        if !(resolution > 0.0 && resolution < 0.5) {
            return Err(Error::InvalidArgument(format!("resolution must lie in (0, 0.5), got {resolution}")));
        }
        let mut tokens = Vec::new();
        for (j, &(lo, hi)) in env.root_bounds.iter().enumerate() {
            tokens.push(Token::parameterized(format!("x{}<", j + 1), 2, TruncBounds::new(F::lit(lo), F::lit(hi))?));
        }
        for k in 0..env.n_actions {
            tokens.push(Token::discrete(format!("a{}", k + 1), 0));
        }
        let resolution = env.root_bounds.iter().map(|&(lo, hi)| resolution * (hi - lo)).collect();
        Ok(Self { library: Library::new(tokens)?, env, resolution, n_episodes, max_tokens })
    }

    pub fn env(&self) -> &EnvironmentSpec {
        &self.env
    }

    pub fn n_episodes(&self) -> usize {
        self.n_episodes
    }

    /// Per-feature resolution `h`.
    pub fn resolution(&self) -> &[f64] {
        &self.resolution
    }

    pub fn n_features(&self) -> usize {
        self.env.obs_dim
    }

    pub fn tree(&self, design: &Design<F>) -> Result<DecisionTree> {
        DecisionTree::from_design(design, self.n_features(), self.env.n_actions)
    }

    /// Mean return over `n_episodes` episodes.
    pub fn evaluate(&self, design: &Design<F>, n_episodes: usize, seed: u64) -> Result<f64> {
        tree_reward(&self.tree(design)?, &self.env, n_episodes, seed)
    }
}

impl<F: Scalar> Task<F> for DecisionTreeTask<F> {
    type State = DtState;

    fn name(&self) -> &str {
        self.env.name
    }

    fn library(&self) -> &Library<F> {
        &self.library
    }

    fn max_length(&self) -> usize {
        self.max_tokens
    }

    fn initial_state(&self) -> DtState {
        DtState {
            bounds: self.env.root_bounds.clone(),
            forbidden: None,
            current_is_left: false,
            stack: Vec::new(),
            len: 0,
            done: false,
        }
    }

    fn constraints(&self, state: &DtState) -> StepContext<F> {
        let n = self.n_features();
        let k = self.library.len();
        let mut prior = PriorVector::zeros(k);
        // A new decision adds a slot; the shortest completion is then every
        // open slot filled by a leaf.
        let too_long = state.len + state.open_slots() + 2 > self.max_tokens;
        let mut bounds = Vec::with_capacity(k);
        for j in 0..n {
            let (lo, hi) = state.bounds[j];
            if too_long || hi - lo < self.resolution[j] {
                prior.mask(j);
            }
            bounds.push(TruncBounds { lo: F::lit(lo), hi: F::lit(hi) });
        }
        if let Some(a) = state.forbidden {
            prior.mask(n + a);
        }
        bounds.resize(k, TruncBounds::unbounded());
        StepContext { prior, bounds }
    }

    fn advance(&self, state: &mut DtState, token: usize, beta: F) -> Result<()> {
        if state.done {
            return Err(Error::MalformedTraversal("tree is already complete".into()));
        }
        let n = self.n_features();
        if token < n {
            let b = beta.as_f64();
            let (lo, hi) = state.bounds[token];
            if !(b >= lo && b <= hi) {
                return Err(Error::OutOfSupport { beta: b, lo, hi });
            }
            let h = self.resolution[token];
            state.stack.push(PendingRight {
                bounds: param_bounds(token, b, &state.bounds, Side::Right, h),
                forbidden: None,
            });
            state.bounds = param_bounds(token, b, &state.bounds, Side::Left, h);
            state.forbidden = None;
            state.current_is_left = true;
        } else if token < self.library.len() {
            let action = token - n;
            if state.current_is_left {
                state.stack.last_mut().expect("left slot has a parent").forbidden = Some(action);
            }
            match state.stack.pop() {
                Some(next) => {
                    state.bounds = next.bounds;
                    state.forbidden = next.forbidden;
                    state.current_is_left = false;
                }
                None => state.done = true,
            }
        } else {
            return Err(Error::InvalidArgument(format!("token index {token} out of range")));
        }
        state.len += 1;
        Ok(())
    }

    fn is_complete(&self, state: &DtState) -> bool {
        state.done
    }

    fn reward(&self, design: &Design<F>, seed: u64) -> Result<F> {
        Ok(F::lit(self.evaluate(design, self.n_episodes, seed)?))
    }

    fn cost(&self) -> EvalCost {
        EvalCost { evaluations: 1, episodes: self.n_episodes as u64 }
    }
}
