//! Token alphabets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::TruncBounds;
use crate::scalar::Scalar;

/// Whether a token carries a continuous parameter, and over which range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamSpec<F> {
    /// Strictly discrete; the parameter slot is ignored and stored as 0.
    Discrete,
    Continuous(TruncBounds<F>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token<F> {
    pub name: String,
    /// Children count in tree-structured tasks, 0 otherwise.
    pub arity: usize,
    pub param: ParamSpec<F>,
}

impl<F: Scalar> Token<F> {
    pub fn discrete(name: impl Into<String>, arity: usize) -> Self {
        Self { name: name.into(), arity, param: ParamSpec::Discrete }
    }

    pub fn parameterized(name: impl Into<String>, arity: usize, range: TruncBounds<F>) -> Self {
        Self { name: name.into(), arity, param: ParamSpec::Continuous(range) }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self.param, ParamSpec::Continuous(_))
    }

    /// Declared range of the parameter; the dummy `[0, 1]` for discrete tokens.
    pub fn range(&self) -> TruncBounds<F> {
        match self.param {
            ParamSpec::Discrete => TruncBounds { lo: F::zero(), hi: F::one() },
            ParamSpec::Continuous(r) => r,
        }
    }
}

/// Ordered token alphabet. A token's index is its position.
#[derive(Clone, Debug, PartialEq)]
pub struct Library<F> {
    tokens: Vec<Token<F>>,
}

impl<F: Scalar> Library<F> {
    pub fn new(tokens: Vec<Token<F>>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::InvalidArgument("a library needs at least two tokens".into()));
        }
        for (i, t) in tokens.iter().enumerate() {
            if tokens[..i].iter().any(|u| u.name == t.name) {
                return Err(Error::InvalidArgument(format!("duplicate token name `{}`", t.name)));
            }
        }
        Ok(Self { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token<F>] {
        &self.tokens
    }

    pub fn get(&self, index: usize) -> Option<&Token<F>> {
        self.tokens.get(index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t.name == name)
    }

    pub fn is_parameterized(&self, index: usize) -> bool {
        self.tokens[index].is_parameterized()
    }

    pub fn arity(&self, index: usize) -> usize {
        self.tokens[index].arity
    }

    pub fn parameterized_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_parameterized()).count()
    }
}

/// Serializable view of a token, used by manifests and checkpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TokenInfo {
    pub name: String,
    pub arity: usize,
    pub parameterized: bool,
}

impl<F: Scalar> From<&Token<F>> for TokenInfo {
    fn from(t: &Token<F>) -> Self {
        Self { name: t.name.clone(), arity: t.arity, parameterized: t.is_parameterized() }
    }
}
