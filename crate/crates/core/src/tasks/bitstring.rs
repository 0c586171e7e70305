//! Parameterized bitstring: recover hidden bits and a hidden parameter per
//! bit. A position scores only when its bit is right, and then
//! `α + (1 - α) f(β, β*)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{Library, Token};
use crate::sampler::TruncBounds;
use crate::scalar::Scalar;
use crate::sequence::{Design, StepContext};
use crate::task::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// `|sinc(50 Δ)|`: smooth with many local maxima.
    F1,
    /// Piecewise constant: 1 within 0.05, 0.5 within 0.1, else 0.
    F2,
}

pub fn f1(x: f64, x_star: f64) -> f64 {
    let d = 50.0 * (x - x_star);
    if (x - x_star).abs() < 1e-12 {
        1.0
    } else {
        (d.sin() / d).abs()
    }
}

pub fn f2(x: f64, x_star: f64) -> f64 {
    let d = (x - x_star).abs();
    if d <= 0.05 {
        1.0
    } else if d <= 0.1 {
        0.5
    } else {
        0.0
    }
}

impl Objective {
    pub fn eval(self, x: f64, x_star: f64) -> f64 {
        match self {
            Objective::F1 => f1(x, x_star),
            Objective::F2 => f2(x, x_star),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitstringInstance {
    #[serde(rename = "T")]
    pub length: usize,
    pub bits: Vec<bool>,
    pub betas: Vec<f64>,
    pub alpha: f64,
    pub objective: Objective,
    pub seed: u64,
}

/// Hidden bits from fair coin flips and hidden parameters uniform on
/// `[0, 1]`, both determined by `seed`.
pub fn make_instance(length: usize, alpha: f64, objective: Objective, seed: u64) -> Result<BitstringInstance> {
    if length == 0 {
        return Err(Error::InvalidArgument("bitstring length must be positive".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = (0..length).map(|_| rng.gen_bool(0.5)).collect();
    let betas = (0..length).map(|_| rng.gen_range(0.0..=1.0)).collect();
    Ok(BitstringInstance { length, bits, betas, alpha, objective, seed })
}

/// Reward of a design whose token `i` is `bit0` (index 0) or `bit1`
/// (index 1).
pub fn bitstring_reward<F: Scalar>(instance: &BitstringInstance, design: &Design<F>) -> Result<F> {
    if design.len() != instance.length {
        return Err(Error::InvalidArgument(format!(
            "design has {} positions, instance has {}",
            design.len(),
            instance.length
        )));
    }
    let a = instance.alpha;
    let mut total = 0.0;
    for i in 0..instance.length {
        if (design.tokens[i] == 1) == instance.bits[i] {
            total += a + (1.0 - a) * instance.objective.eval(design.betas[i].as_f64(), instance.betas[i]);
        }
    }
    Ok(F::lit(total / instance.length as f64))
}

pub struct BitstringTask<F> {
    instance: BitstringInstance,
    library: Library<F>,
}

impl<F: Scalar> BitstringTask<F> {
    pub fn new(instance: BitstringInstance) -> Self {
        let range = TruncBounds { lo: F::zero(), hi: F::one() };
        let library = Library::new(vec![Token::parameterized("bit0", 0, range), Token::parameterized("bit1", 0, range)])
            .expect("two distinct tokens");
        Self { instance, library }
    }

    pub fn instance(&self) -> &BitstringInstance {
        &self.instance
    }

    /// The design that scores 1.
    pub fn optimum(&self) -> Design<F> {
        Design {
            tokens: self.instance.bits.iter().map(|&b| b as usize).collect(),
            betas: self.instance.betas.iter().map(|&b| F::lit(b)).collect(),
        }
    }
}

impl<F: Scalar> Task<F> for BitstringTask<F> {
    /// Number of positions filled so far.
    type State = usize;

    fn name(&self) -> &str {
        "bitstring"
    }

    fn library(&self) -> &Library<F> {
        &self.library
    }

    fn max_length(&self) -> usize {
        self.instance.length
    }

    fn initial_state(&self) -> usize {
        0
    }

    /// No masking; parameters are drawn from the unbounded normal.
    fn constraints(&self, _state: &usize) -> StepContext<F> {
        StepContext::unconstrained(2)
    }

    fn advance(&self, state: &mut usize, _token: usize, _beta: F) -> Result<()> {
        *state += 1;
        Ok(())
    }

    fn is_complete(&self, state: &usize) -> bool {
        *state >= self.instance.length
    }

    fn reward(&self, design: &Design<F>, _seed: u64) -> Result<F> {
        bitstring_reward(&self.instance, design)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(t: usize, alpha: f64) -> BitstringInstance {
        make_instance(t, alpha, Objective::F2, 3).unwrap()
    }

    #[test]
    fn f_examples() {
        assert_eq!(f1(0.3, 0.3), 1.0);
        assert!(f1(0.3 + std::f64::consts::PI / 50.0, 0.3) < 1e-15);
        assert!((f1(0.35, 0.3) - (2.5f64.sin() / 2.5)).abs() < 1e-12);
        assert!((f1(0.35, 0.3) - 0.23939).abs() < 1e-5);
        assert_eq!(f2(0.0, 0.05), 1.0);
        assert_eq!(f2(0.25, 0.5), 0.0);
        assert_eq!(f2(0.5, 0.25 + 0.25), 1.0);
        // Boundary checks on exactly representable offsets.
        assert_eq!(f2(0.125, 0.0625), 0.5);
        assert_eq!(f2(0.0, 0.1), 0.5);
    }

    #[test]
    fn reward_examples() {
        let inst = instance(4, 0.9);
        let task = BitstringTask::<f64>::new(inst.clone());
        assert_eq!(task.reward(&task.optimum(), 0).unwrap(), 1.0);
        let mut wrong = task.optimum();
        wrong.tokens.iter_mut().for_each(|t| *t = 1 - *t);
        assert_eq!(task.reward(&wrong, 0).unwrap(), 0.0);

        let two = BitstringInstance {
            length: 2,
            bits: vec![true, false],
            betas: vec![0.5, 0.5],
            alpha: 0.9,
            objective: Objective::F2,
            seed: 0,
        };
        let d = Design::new(&[(1, 0.57), (1, 0.5)]);
        assert!((bitstring_reward::<f64>(&two, &d).unwrap() - 0.475).abs() < 1e-15);
    }

    #[test]
    fn alpha_one_counts_bits() {
        let inst = instance(5, 1.0);
        let task = BitstringTask::<f64>::new(inst.clone());
        let mut d = task.optimum();
        d.betas.iter_mut().for_each(|b| *b = 17.0);
        d.tokens[0] = 1 - d.tokens[0];
        assert!((task.reward(&d, 0).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn alpha_zero_exact_is_one() {
        let task = BitstringTask::<f64>::new(instance(6, 0.0));
        assert_eq!(task.reward(&task.optimum(), 0).unwrap(), 1.0);
    }

    #[test]
    fn instances_are_seeded() {
        assert_eq!(make_instance(10, 0.9, Objective::F1, 0).unwrap(), make_instance(10, 0.9, Objective::F1, 0).unwrap());
        assert_ne!(make_instance(10, 0.9, Objective::F1, 0).unwrap(), make_instance(10, 0.9, Objective::F1, 1).unwrap());
        assert!(make_instance(0, 0.9, Objective::F1, 0).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let task = BitstringTask::<f64>::new(instance(3, 0.5));
        assert!(task.reward(&Design::new(&[(0, 0.1)]), 0).is_err());
    }

    #[test]
    fn instance_json_fields() {
        let v = serde_json::to_value(instance(2, 0.5)).unwrap();
        for key in ["T", "bits", "betas", "alpha", "objective", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["objective"], "f2");
    }
}
