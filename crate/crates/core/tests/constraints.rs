use hybridopt::envs::EnvironmentSpec;
use hybridopt::policy::PolicyParams;
use hybridopt::sampler::{sample_batch, TruncBounds};
use hybridopt::sequence::{Design, SampleMode};
use hybridopt::task::Task;
use hybridopt::tasks::dtree::{DecisionTree, DecisionTreeTask, Node};
use hybridopt::tasks::symreg::{load_benchmark, sr_ops, Dataset, Domain, Split, SymRegTask};

fn policy_for<T: Task<f64>>(task: &T, seed: u64) -> PolicyParams<f64> {
    PolicyParams::<f64>::new(task.library().len(), 16, seed).unwrap()
}

/// Depth of trig nesting along each root-to-leaf path.
fn max_trig_nesting(ops: &[hybridopt::tasks::symreg::Op], tokens: &[usize]) -> usize {
    fn walk(ops: &[hybridopt::tasks::symreg::Op], tokens: &[usize], at: usize, depth: usize, worst: &mut usize) -> usize {
        let op = ops[tokens[at]];
        let d = depth + op.is_trig() as usize;
        *worst = (*worst).max(d);
        let mut next = at + 1;
        for _ in 0..op.arity() {
            next = walk(ops, tokens, next, d, worst);
        }
        next
    }
    let mut worst = 0;
    assert_eq!(walk(ops, tokens, 0, 0, &mut worst), tokens.len());
    worst
}

#[test]
fn sampled_expressions_respect_constraints() {
    for (name, seed) in [("Constant-2", 1u64), ("Jin-6", 2)] {
        let bench = load_benchmark(name, 0).unwrap();
        let task = SymRegTask::<f64>::from_benchmark(&bench).unwrap();
        let ops = sr_ops(bench.info.n_vars);
        let policy = policy_for(&task, seed);
        let seqs = sample_batch(&policy, &task, SampleMode::Joint, 5_000, seed, 0).unwrap();
        for s in &seqs {
            let tokens: Vec<usize> = s.tokens().collect();
            assert!((4..=32).contains(&tokens.len()), "length {}", tokens.len());
            assert!(max_trig_nesting(&ops, &tokens) <= 1);
        }
    }
}

/// Recomputes every decision's window from the root bounds and checks the
/// threshold lies inside it, and that no decision has two identical leaves.
fn check_tree(tree: &DecisionTree, root: &[(f64, f64)], h: &[f64]) {
    fn walk(tree: &DecisionTree, at: usize, bounds: Vec<(f64, f64)>, h: &[f64]) -> usize {
        match tree.nodes[at] {
            Node::Leaf { .. } => at + 1,
            Node::Decision { feature, threshold, right } => {
                let (lo, hi) = bounds[feature];
                assert!(threshold >= lo && threshold <= hi, "{threshold} outside [{lo}, {hi}]");
                let hj = h[feature];
                let mut left = bounds.clone();
                left[feature].1 = threshold - hj;
                if left[feature].1 - lo < hj {
                    left[feature].1 = lo + hj / 2.0;
                }
                let mut rb = bounds;
                rb[feature].0 = threshold + hj;
                if hi - rb[feature].0 < hj {
                    rb[feature].0 = hi - hj / 2.0;
                }
                let end_left = walk(tree, at + 1, left, h);
                assert_eq!(end_left, right);
                if let (Node::Leaf { action: a }, Node::Leaf { action: b }) = (tree.nodes[at + 1], tree.nodes[right]) {
                    assert_ne!(a, b, "identical sibling leaves");
                }
                walk(tree, right, rb, h)
            }
        }
    }
    assert_eq!(walk(tree, 0, root.to_vec(), h), tree.nodes.len());
}

#[test]
fn sampled_trees_respect_constraints() {
    for (env, seed) in [(EnvironmentSpec::cartpole(), 3u64), (EnvironmentSpec::mountain_car(), 4), (EnvironmentSpec::acrobot(), 5)] {
        let task = DecisionTreeTask::<f64>::new(env.clone()).unwrap();
        let policy = policy_for(&task, seed);
        let n = if env.name.starts_with("Acrobot") { 2_000 } else { 4_000 };
        let seqs = sample_batch(&policy, &task, SampleMode::Joint, n, seed, 0).unwrap();
        for s in &seqs {
            let design = s.design();
            assert!(design.len() <= 32);
            assert!(task.replay(&design).is_ok());
            let tree = task.tree(&design).unwrap();
            check_tree(&tree, &env.root_bounds, task.resolution());
        }
    }
}

/// Every prefix reachable under the masks has a feasible next token, and
/// every completion lands within the length limits.
#[test]
fn every_feasible_prefix_completes_regression() {
    let x: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let y: Vec<f64> = x.iter().map(|v| v * v).collect();
    let data = Dataset::new("sq", Split::Train, Domain { lo: 0.0, hi: 1.0, n: 10 }, 1, x, y).unwrap();
    for (min, max) in [(1usize, 5usize), (4, 7), (3, 3)] {
        let task = SymRegTask::<f64>::with_lengths(data.clone(), None, min, max).unwrap();
        let mut complete = 0u64;
        let mut stack = vec![task.initial_state()];
        while let Some(state) = stack.pop() {
            if task.is_complete(&state) {
                assert!((min..=max).contains(&state.len));
                complete += 1;
                continue;
            }
            let ctx = task.constraints(&state);
            assert!(ctx.prior.feasible_count() > 0, "dead end at length {}", state.len);
            for t in 0..task.library().len() {
                if !ctx.prior.is_masked(t) {
                    let mut next = state.clone();
                    task.advance(&mut next, t, 1.0).unwrap();
                    stack.push(next);
                }
            }
        }
        assert!(complete > 0);
    }
}

#[test]
fn every_feasible_prefix_completes_trees() {
    let task = DecisionTreeTask::<f64>::with_settings(EnvironmentSpec::mountain_car(), 1, 7, 0.2).unwrap();
    let mut count = 0u64;
    let mut stack = vec![task.initial_state()];
    while let Some(state) = stack.pop() {
        if task.is_complete(&state) {
            assert!(state.len <= 7);
            count += 1;
            continue;
        }
        let ctx = task.constraints(&state);
        assert!(ctx.prior.feasible_count() > 0);
        for t in 0..task.library().len() {
            if ctx.prior.is_masked(t) {
                continue;
            }
            let b: TruncBounds<f64> = ctx.bounds_for(t);
            let betas = if task.library().is_parameterized(t) { vec![b.lo, b.midpoint(), b.hi] } else { vec![0.0] };
            for beta in betas {
                let mut next = state.clone();
                task.advance(&mut next, t, beta).unwrap();
                stack.push(next);
            }
        }
    }
    assert!(count > 100);
    // A short leaf-only tree is always available.
    assert!(task.replay(&Design::new(&[(2, 0.0)])).is_ok());
}
