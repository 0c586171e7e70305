use hybridopt::library::{Library, Token};
use hybridopt::policy::{finite_diff_gradient, GradientVector, PolicyParams, WeightedSequence};
use hybridopt::sampler::TruncBounds;
use hybridopt::sequence::{HybridSequence, PriorVector, SampleMode, Step, StepContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn library() -> Library<f64> {
    Library::new(vec![
        Token::parameterized("p0", 2, TruncBounds::unbounded()),
        Token::discrete("d1", 0),
        Token::parameterized("p2", 0, TruncBounds::new(-1.0, 1.0).unwrap()),
        Token::discrete("d3", 1),
        Token::parameterized("p4", 0, TruncBounds::unbounded()),
    ])
    .unwrap()
}

fn random_window(rng: &mut ChaCha8Rng) -> TruncBounds<f64> {
    match rng.gen_range(0..4) {
        0 => TruncBounds::unbounded(),
        1 => TruncBounds::new(rng.gen_range(-2.0..0.0), f64::INFINITY).unwrap(),
        2 => {
            let lo = rng.gen_range(-1.5..0.5);
            TruncBounds::new(lo, lo + rng.gen_range(0.05..2.0)).unwrap()
        }
        // A window well away from any mean the policy produces.
        _ => TruncBounds::new(2.0, 2.6).unwrap(),
    }
}

fn random_sequence(rng: &mut ChaCha8Rng, k: usize, mode: SampleMode) -> HybridSequence<f64> {
    let len = rng.gen_range(1..7);
    let mut steps = Vec::new();
    for _ in 0..len {
        let masked: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.3)).collect();
        let mut prior = PriorVector::from_mask(&masked);
        let token = rng.gen_range(0..k);
        if masked.iter().all(|&m| m) || masked[token] {
            prior = PriorVector::from_mask(&(0..k).map(|i| i != token && masked[i]).collect::<Vec<_>>());
        }
        let bounds: Vec<_> = (0..k).map(|_| random_window(rng)).collect();
        let b = bounds[token];
        let beta = if b.is_finite() {
            rng.gen_range(b.lo + 0.01 * b.width()..b.hi - 0.01 * b.width())
        } else if b.lo.is_finite() {
            b.lo + rng.gen_range(0.01..2.0)
        } else {
            rng.gen_range(-2.0..2.0)
        };
        steps.push(Step { token, beta, context: StepContext { prior, bounds } });
    }
    HybridSequence { steps, mode, log_prob: None }
}

fn max_relative_error(analytic: &GradientVector<f64>, numeric: &GradientVector<f64>) -> f64 {
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        // Entries below 1e-3 are compared absolutely: central differences on an
        // O(10) objective carry roundoff near 1e-10 / h.
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let lib = library();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..24 {
        let policy = PolicyParams::<f64>::new(lib.len(), 6, trial).unwrap();
        let seqs: Vec<_> = (0..3)
            .map(|i| {
                let mode = if (trial + i) % 4 == 0 { SampleMode::Skeleton } else { SampleMode::Joint };
                random_sequence(&mut rng, lib.len(), mode)
            })
            .collect();
        let weights: Vec<f64> = (0..seqs.len()).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let lambda = if trial % 3 == 0 { 0.0 } else { rng.gen_range(0.0..0.5) };
        let batch: Vec<_> =
            seqs.iter().zip(&weights).map(|(s, &w)| WeightedSequence { sequence: s, weight: w }).collect();
        let analytic = policy.loss_gradient(&batch, &lib, lambda).unwrap();
        let mut probe = policy.clone();
        let numeric = finite_diff_gradient(
            policy.weights(),
            |w| {
                probe.set_weights(w.to_vec()).unwrap();
                probe.objective(&batch, &lib, lambda).unwrap()
            },
            1e-5,
        );
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "trial {trial}: max relative error {err}");
        worst = worst.max(err);
    }
    println!("worst relative error over 24 trials: {worst:.3e}");
}

#[test]
fn zero_weight_without_entropy_gives_zero_gradient() {
    let lib = library();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let policy = PolicyParams::<f64>::new(lib.len(), 8, 3).unwrap();
    let seq = random_sequence(&mut rng, lib.len(), SampleMode::Joint);
    let g = policy.loss_gradient(&[WeightedSequence { sequence: &seq, weight: 0.0 }], &lib, 0.0).unwrap();
    assert_eq!(g.max_abs(), 0.0);
}

#[test]
fn gradient_is_independent_of_thread_count() {
    let lib = library();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let policy = PolicyParams::<f64>::new(lib.len(), 16, 5).unwrap();
    let seqs: Vec<_> = (0..40).map(|_| random_sequence(&mut rng, lib.len(), SampleMode::Joint)).collect();
    let batch: Vec<_> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| WeightedSequence { sequence: s, weight: i as f64 * 0.1 })
        .collect();
    let reference = policy.loss_gradient(&batch, &lib, 0.01).unwrap();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let g = pool.install(|| policy.loss_gradient(&batch, &lib, 0.01).unwrap());
        assert_eq!(g, reference);
    }
}

#[test]
fn skeleton_log_prob_ignores_parameters() {
    let lib = library();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let policy = PolicyParams::<f64>::new(lib.len(), 8, 2).unwrap();
    let seq = random_sequence(&mut rng, lib.len(), SampleMode::Skeleton);
    let mut moved = seq.clone();
    for s in &mut moved.steps {
        s.beta += 0.003;
    }
    let a = policy.sequence_log_prob(&seq, &lib).unwrap().total;
    let b = policy.sequence_log_prob(&moved, &lib).unwrap().total;
    assert_eq!(a, b);
}
