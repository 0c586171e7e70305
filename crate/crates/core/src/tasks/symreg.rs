//! Symbolic regression with a jointly sampled constant token.
//!
//! Expressions are pre-order traversals over binary `add sub mul div`,
//! unary `sin cos exp log sqrt`, variables `x1..xd` and a parameterized
//! `const`. Operators are unprotected: any non-finite prediction scores 0.
//! The reward is `1 / (1 + NMSE)` with the variance of the split's targets
//! as normalizer.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design_io::parse_design;
use crate::error::{Error, Result};
use crate::library::{Library, Token};
use crate::sampler::{derive_seed, TruncBounds};
use crate::scalar::Scalar;
use crate::sequence::{Design, PriorVector, StepContext};
use crate::task::Task;

pub const DEFAULT_MIN_LENGTH: usize = 4;
pub const DEFAULT_MAX_LENGTH: usize = 32;

const MANIFEST: &str = include_str!("../../data/benchmarks.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Var(usize),
    Const,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            Op::Sin | Op::Cos | Op::Exp | Op::Log | Op::Sqrt => 1,
            Op::Var(_) | Op::Const => 0,
        }
    }

    pub fn is_trig(self) -> bool {
        matches!(self, Op::Sin | Op::Cos)
    }

    pub fn name(self) -> String {
        match self {
            Op::Add => "add".into(),
            Op::Sub => "sub".into(),
            Op::Mul => "mul".into(),
            Op::Div => "div".into(),
            Op::Sin => "sin".into(),
            Op::Cos => "cos".into(),
            Op::Exp => "exp".into(),
            Op::Log => "log".into(),
            Op::Sqrt => "sqrt".into(),
            Op::Var(i) => format!("x{}", i + 1),
            Op::Const => "const".into(),
        }
    }
}

/// Library order: the nine operators, then `x1..xd`, then `const`.
pub fn sr_ops(n_vars: usize) -> Vec<Op> {
    let mut ops = vec![Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Sin, Op::Cos, Op::Exp, Op::Log, Op::Sqrt];
    ops.extend((0..n_vars).map(Op::Var));
    ops.push(Op::Const);
    ops
}

pub fn sr_library<F: Scalar>(n_vars: usize) -> Library<F> {
    let tokens = sr_ops(n_vars)
        .into_iter()
        .map(|op| match op {
            Op::Const => Token::parameterized("const", 0, TruncBounds::unbounded()),
            _ => Token::discrete(op.name(), op.arity()),
        })
        .collect();
    Library::new(tokens).expect("operator names are distinct")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// `n` points drawn uniformly on `(lo, hi)` in every variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Domain {
    /// Test-split domain: both endpoints and the point count doubled.
    pub fn doubled(self) -> Self {
        Self { lo: 2.0 * self.lo, hi: 2.0 * self.hi, n: 2 * self.n }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub domain: Domain,
    pub n_vars: usize,
    /// Row-major `n x d`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    y_var: f64,
}

fn population_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

impl Dataset {
    pub fn new(name: impl Into<String>, split: Split, domain: Domain, n_vars: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() || n_vars == 0 || x.len() != y.len() * n_vars {
            return Err(Error::InvalidArgument(format!(
                "dataset shape mismatch: {} inputs for {} rows of {n_vars} variables",
                x.len(),
                y.len()
            )));
        }
        if let Some(index) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index, value: y[index] });
        }
        let y_var = population_variance(&y);
        if !(y_var > 0.0) {
            return Err(Error::DegenerateDataset);
        }
        Ok(Self { name: name.into(), split, domain, n_vars, x, y, y_var })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_vars..(i + 1) * self.n_vars]
    }

    pub fn target_variance(&self) -> f64 {
        self.y_var
    }
}

/// Evaluates a pre-order traversal on one input row by scanning it
/// backwards with a value stack.
fn eval_row(ops: &[Op], betas: &[f64], row: &[f64], stack: &mut Vec<f64>) -> f64 {
    stack.clear();
    for i in (0..ops.len()).rev() {
        let v = match ops[i] {
            Op::Var(j) => row[j],
            Op::Const => betas[i],
            Op::Sin => stack.pop().unwrap().sin(),
            Op::Cos => stack.pop().unwrap().cos(),
            Op::Exp => stack.pop().unwrap().exp(),
            Op::Log => stack.pop().unwrap().ln(),
            Op::Sqrt => stack.pop().unwrap().sqrt(),
            binary => {
                // The left child was scanned last, so it is on top.
                let a = stack.pop().unwrap();
                let b = stack.pop().unwrap();
                match binary {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    _ => a / b,
                }
            }
        };
        stack.push(v);
    }
    stack[0]
}

/// Resolved traversal ready for repeated evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    pub ops: Vec<Op>,
    pub betas: Vec<f64>,
}

impl Expression {
    pub fn from_design<F: Scalar>(design: &Design<F>, n_vars: usize) -> Result<Self> {
        let table = sr_ops(n_vars);
        let mut open = 1usize;
        let mut ops = Vec::with_capacity(design.len());
        for (i, &t) in design.tokens.iter().enumerate() {
            if open == 0 {
                return Err(Error::MalformedTraversal(format!("trailing tokens after position {i}")));
            }
            let op = *table
                .get(t)
                .ok_or_else(|| Error::MalformedTraversal(format!("token index {t} out of range at position {i}")))?;
            open = open - 1 + op.arity();
            ops.push(op);
        }
        if open != 0 || ops.is_empty() {
            return Err(Error::MalformedTraversal(format!("incomplete expression: {open} open slots")));
        }
        Ok(Self { ops, betas: design.betas.iter().map(|b| b.as_f64()).collect() })
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        eval_row(&self.ops, &self.betas, row, &mut Vec::with_capacity(self.ops.len()))
    }
}

/// Predictions on every row of `x` (row-major, `n_vars` columns). Values
/// may be non-finite.
pub fn eval_expression<F: Scalar>(design: &Design<F>, x: &[f64], n_vars: usize) -> Result<Vec<f64>> {
    let expr = Expression::from_design(design, n_vars)?;
    let mut stack = Vec::with_capacity(expr.ops.len());
    Ok(x.chunks(n_vars).map(|row| eval_row(&expr.ops, &expr.betas, row, &mut stack)).collect())
}

/// Normalized mean squared error, or `None` if any prediction is
/// non-finite.
pub fn nmse(expr: &Expression, data: &Dataset) -> Option<f64> {
    let mut stack = Vec::with_capacity(expr.ops.len());
    let mut sse = 0.0;
    for i in 0..data.len() {
        let p = eval_row(&expr.ops, &expr.betas, data.row(i), &mut stack);
        if !p.is_finite() {
            return None;
        }
        sse += (p - data.y[i]) * (p - data.y[i]);
    }
    let v = sse / data.len() as f64 / data.target_variance();
    v.is_finite().then_some(v)
}

pub fn sr_reward<F: Scalar>(design: &Design<F>, data: &Dataset) -> Result<F> {
    let expr = Expression::from_design(design, data.n_vars)?;
    Ok(F::lit(nmse(&expr, data).map_or(0.0, |e| 1.0 / (1.0 + e))))
}

/// Prefix state: one entry per open slot (last = slot filled next),
/// flagged when the slot lies under a `sin` or `cos`.
#[derive(Clone, Debug, PartialEq)]
pub struct SrState {
    pub slots: Vec<bool>,
    pub len: usize,
}

/// Prior for the next token given the prefix state.
pub fn sr_constraints<F: Scalar>(ops: &[Op], state: &SrState, min_len: usize, max_len: usize) -> PriorVector<F> {
    let mut prior = PriorVector::zeros(ops.len());
    let open = state.slots.len();
    let in_trig = state.slots.last().copied().unwrap_or(false);
    for (i, op) in ops.iter().enumerate() {
        let a = op.arity();
        let masked = (in_trig && op.is_trig())
            || (a == 0 && open == 1 && state.len + 1 < min_len)
            || (state.len + 1 + (open - 1 + a) > max_len);
        if masked {
            prior.mask(i);
        }
    }
    prior
}

#[derive(Clone, Debug, Deserialize, Serialize)]
struct ManifestEntry {
    name: String,
    formula: String,
    n_vars: usize,
    constants: Vec<f64>,
    domain: Domain,
    expression: String,
}

/// One shipped benchmark and its instantiated constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkInfo {
    pub name: String,
    pub formula: String,
    pub n_vars: usize,
    pub constants: Vec<f64>,
    pub domain: Domain,
    /// Ground truth in the design text format.
    pub expression: String,
}

pub fn benchmark_manifest() -> Vec<BenchmarkInfo> {
    let entries: Vec<ManifestEntry> = serde_json::from_str(MANIFEST).expect("shipped manifest parses");
    entries
        .into_iter()
        .map(|e| BenchmarkInfo {
            name: e.name,
            formula: e.formula,
            n_vars: e.n_vars,
            constants: e.constants,
            domain: e.domain,
            expression: e.expression,
        })
        .collect()
}

pub fn benchmark_info(name: &str) -> Result<BenchmarkInfo> {
    benchmark_manifest()
        .into_iter()
        .find(|b| b.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Unknown { kind: "benchmark", name: name.to_string() })
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub info: BenchmarkInfo,
    pub train: Dataset,
    pub test: Dataset,
    pub ground_truth: Design<f64>,
}

fn sample_split(info: &BenchmarkInfo, split: Split, truth: &Expression, seed: u64) -> Result<Dataset> {
    let domain = match split {
        Split::Train => info.domain,
        Split::Test => info.domain.doubled(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = info.n_vars;
    let x: Vec<f64> = (0..domain.n * d)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            domain.lo + (domain.hi - domain.lo) * u
        })
        .collect();
    let y = x.chunks(d).map(|row| truth.eval(row)).collect();
    Dataset::new(info.name.clone(), split, domain, d, x, y)
}

/// Train and test datasets for a shipped benchmark, determined by `seed`.
pub fn load_benchmark(name: &str, seed: u64) -> Result<Benchmark> {
    let info = benchmark_info(name)?;
    let library = sr_library::<f64>(info.n_vars);
    let ground_truth = parse_design(&info.expression, &library)?;
    let truth = Expression::from_design(&ground_truth, info.n_vars)?;
    let train = sample_split(&info, Split::Train, &truth, derive_seed(seed, 0, 0))?;
    let test = sample_split(&info, Split::Test, &truth, derive_seed(seed, 0, 1))?;
    Ok(Benchmark { info, train, test, ground_truth })
}

pub struct SymRegTask<F> {
    name: String,
    library: Library<F>,
    ops: Vec<Op>,
    train: Dataset,
    test: Option<Dataset>,
    min_len: usize,
    max_len: usize,
}

impl<F: Scalar> SymRegTask<F> {
    pub fn new(train: Dataset, test: Option<Dataset>) -> Result<Self> {
        Self::with_lengths(train, test, DEFAULT_MIN_LENGTH, DEFAULT_MAX_LENGTH)
    }

    pub fn with_lengths(train: Dataset, test: Option<Dataset>, min_len: usize, max_len: usize) -> Result<Self> {
        if min_len == 0 || min_len > max_len {
            return Err(Error::InvalidArgument(format!("invalid length range [{min_len}, {max_len}]")));
        }
        if let Some(t) = &test {
            if t.n_vars != train.n_vars {
                return Err(Error::InvalidArgument("train and test splits differ in dimension".into()));
            }
        }
        Ok(Self {
            name: format!("symreg:{}", train.name),
            library: sr_library(train.n_vars),
            ops: sr_ops(train.n_vars),
            train,
            test,
            min_len,
            max_len,
        })
    }

    pub fn from_benchmark(bench: &Benchmark) -> Result<Self> {
        Self::new(bench.train.clone(), Some(bench.test.clone()))
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn test(&self) -> Option<&Dataset> {
        self.test.as_ref()
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn test_reward(&self, design: &Design<F>) -> Result<F> {
        let test = self.test.as_ref().ok_or_else(|| Error::InvalidArgument("task has no test split".into()))?;
        sr_reward(design, test)
    }
}

impl<F: Scalar> Task<F> for SymRegTask<F> {
    type State = SrState;

    fn name(&self) -> &str {
        &self.name
    }

    fn library(&self) -> &Library<F> {
        &self.library
    }

    fn max_length(&self) -> usize {
        self.max_len
    }

    fn initial_state(&self) -> SrState {
        SrState { slots: vec![false], len: 0 }
    }

    fn constraints(&self, state: &SrState) -> StepContext<F> {
        StepContext { prior: sr_constraints(&self.ops, state, self.min_len, self.max_len), bounds: Vec::new() }
    }

    fn advance(&self, state: &mut SrState, token: usize, _beta: F) -> Result<()> {
        let op = *self
            .ops
            .get(token)
            .ok_or_else(|| Error::InvalidArgument(format!("token index {token} out of range")))?;
        let parent_trig = state
            .slots
            .pop()
            .ok_or_else(|| Error::MalformedTraversal("expression is already complete".into()))?;
        let flag = parent_trig || op.is_trig();
        state.slots.extend(std::iter::repeat_n(flag, op.arity()));
        state.len += 1;
        Ok(())
    }

    fn is_complete(&self, state: &SrState) -> bool {
        state.slots.is_empty()
    }

    fn reward(&self, design: &Design<F>, _seed: u64) -> Result<F> {
        sr_reward(design, &self.train)
    }
}
