use hybridopt::design_io::{format_param, parse_design, serialize_design};
use hybridopt::policy::PolicyParams;
use hybridopt::sampler::{sample_sequence, sample_truncated_normal, stream_rng, TruncBounds};
use hybridopt::sequence::{Design, SampleMode};
use hybridopt::task::Task;
use hybridopt::tasks::bitstring::{bitstring_reward, make_instance, BitstringTask, Objective};
use hybridopt::tasks::dtree::{param_bounds, DecisionTreeTask, Side};
use hybridopt::tasks::symreg::{load_benchmark, sr_reward, SymRegTask};
use hybridopt::trainer::{empirical_quantile, risk_filter};
use hybridopt::envs::EnvironmentSpec;
use proptest::prelude::*;

fn rank(n: usize, eps: f64) -> usize {
    (((1.0 - eps) * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize
}

proptest! {
    #[test]
    fn quantile_is_an_order_statistic(
        rewards in prop::collection::vec(-5.0f64..5.0, 1..200),
        eps in 0.01f64..0.99,
    ) {
        let q = empirical_quantile(&rewards, eps).unwrap();
        let r = rank(rewards.len(), eps);
        let below = rewards.iter().filter(|&&x| x < q).count();
        let at_most = rewards.iter().filter(|&&x| x <= q).count();
        prop_assert!(below < r && r <= at_most);
        prop_assert!(rewards.contains(&q));
    }

    #[test]
    fn distinct_rewards_keep_top_block(n in 1usize..300, eps in 0.01f64..0.99, shift in -3.0f64..3.0) {
        let rewards: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 + shift).collect();
        let q = empirical_quantile(&rewards, eps).unwrap();
        let kept = risk_filter(&rewards, q);
        prop_assert_eq!(kept.len(), n - rank(n, eps) + 1);
        prop_assert!(kept.iter().all(|&(i, a)| a >= 0.0 && a == rewards[i] - q));
    }

    #[test]
    fn quantile_ignores_order(mut rewards in prop::collection::vec(0.0f64..1.0, 1..100), eps in 0.05f64..0.95) {
        let q = empirical_quantile(&rewards, eps).unwrap();
        rewards.reverse();
        prop_assert_eq!(q, empirical_quantile(&rewards, eps).unwrap());
    }

    #[test]
    fn bitstring_reward_in_unit_interval(
        seed in any::<u64>(),
        alpha in 0.0f64..=1.0,
        f1 in any::<bool>(),
        picks in prop::collection::vec((any::<bool>(), -2.0f64..3.0), 12),
    ) {
        let obj = if f1 { Objective::F1 } else { Objective::F2 };
        let inst = make_instance(12, alpha, obj, seed).unwrap();
        let design = Design::new(&picks.iter().map(|&(b, v)| (b as usize, v)).collect::<Vec<_>>());
        let r: f64 = bitstring_reward(&inst, &design).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        let task = BitstringTask::<f64>::new(inst);
        prop_assert_eq!(task.reward(&task.optimum(), 0).unwrap(), 1.0);
    }

    #[test]
    fn child_windows_nest_in_parent(
        lo in -10.0f64..0.0,
        width in 0.05f64..20.0,
        u in 0.0f64..1.0,
        frac in 0.001f64..0.2,
        left in any::<bool>(),
    ) {
        let hi = lo + width;
        let h = frac * width;
        let beta = lo + u * width;
        let parent = vec![(lo, hi), (-1.0, 1.0)];
        let side = if left { Side::Left } else { Side::Right };
        let child = param_bounds(0, beta, &parent, side, h);
        prop_assert_eq!(child[1], parent[1]);
        let (clo, chi) = child[0];
        prop_assert!(clo >= lo && chi <= hi && clo < chi);
        match side {
            Side::Left => prop_assert_eq!(clo, lo),
            Side::Right => prop_assert_eq!(chi, hi),
        }
    }

    #[test]
    fn truncated_samples_stay_inside(
        mean in -20.0f64..20.0,
        sigma in 0.01f64..5.0,
        lo in -10.0f64..10.0,
        width in 1e-6f64..10.0,
        seed in any::<u64>(),
    ) {
        let b = TruncBounds::new(lo, lo + width).unwrap();
        let mut rng = stream_rng(seed, 0, 0);
        for _ in 0..20 {
            let x = sample_truncated_normal(mean, sigma, &b, &mut rng).unwrap();
            prop_assert!(b.contains(x), "{x} outside [{}, {}]", b.lo, b.hi);
        }
    }

    #[test]
    fn params_round_trip_text(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let text = format_param(v);
        prop_assert_eq!(text.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_regression_designs_round_trip(seed in any::<u64>()) {
        let bench = load_benchmark("Constant-1", 0).unwrap();
        let task = SymRegTask::<f64>::from_benchmark(&bench).unwrap();
        let policy = PolicyParams::<f64>::new(task.library().len(), 8, seed).unwrap();
        let seq = sample_sequence(&policy, &task, SampleMode::Joint, &mut stream_rng(seed, 1, 2)).unwrap();
        let design = seq.design();
        let text = serialize_design(&design, task.library());
        let back = parse_design(&text, task.library()).unwrap();
        prop_assert_eq!(&back.tokens, &design.tokens);
        for (a, b) in back.betas.iter().zip(&design.betas) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        let r: f64 = sr_reward(&design, task.train()).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert_eq!(r, sr_reward(&back, task.train()).unwrap());
    }

    #[test]
    fn sampled_trees_round_trip(seed in any::<u64>(), env in 0usize..3) {
        let task = DecisionTreeTask::<f64>::new(EnvironmentSpec::all().swap_remove(env)).unwrap();
        let policy = PolicyParams::<f64>::new(task.library().len(), 8, seed).unwrap();
        let seq = sample_sequence(&policy, &task, SampleMode::Joint, &mut stream_rng(seed, 0, 0)).unwrap();
        let design = seq.design();
        let back = parse_design(&serialize_design(&design, task.library()), task.library()).unwrap();
        prop_assert_eq!(&back, &design);
        prop_assert!(task.replay(&back).is_ok());
    }
}
