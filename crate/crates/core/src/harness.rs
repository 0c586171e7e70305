//! Config-driven experiments: one TOML file names a task, a method, the
//! training settings and a list of seeds; each seed gets its own output
//! directory with a ledger, the best design and (for decoupled methods) the
//! per-skeleton audit log.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_decoupled, DecoupledConfig, InnerOptimizer, InnerSettings};
use crate::design_io::{parse_design, serialize_design};
use crate::envs::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::policy::{PolicyParams, DEFAULT_HIDDEN, DEFAULT_SIGMA};
use crate::sampler::derive_seed;
use crate::sequence::Design;
use crate::task::Task;
use crate::tasks::bitstring::{make_instance, BitstringTask, Objective};
use crate::tasks::dtree::{DecisionTreeTask, DEFAULT_EPISODES, DEFAULT_MAX_TOKENS, DEFAULT_RESOLUTION};
use crate::tasks::symreg::{benchmark_info, load_benchmark, SymRegTask, DEFAULT_MAX_LENGTH, DEFAULT_MIN_LENGTH};
use crate::trainer::{run, BestDesign, EvalBudgetLedger, TrainConfig};

/// Overrides `[output].dir` when set.
pub const OUTPUT_ROOT_ENV: &str = "HYBRIDOPT_OUTPUT_ROOT";

/// Episodes used to score the best tree after training.
pub const FRESH_EPISODES: usize = 100;
const FRESH_STREAM: u64 = 0x5EED_F4E5_0000_0001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskSpec {
    Bitstring {
        #[serde(default = "default_length")]
        length: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_objective")]
        objective: Objective,
        #[serde(default)]
        instance_seed: u64,
    },
    #[serde(rename = "decision_tree")]
    DecisionTree {
        env: String,
        #[serde(default = "default_episodes")]
        episodes: usize,
        #[serde(default = "default_max_tokens")]
        max_tokens: usize,
        #[serde(default = "default_resolution")]
        resolution: f64,
    },
    Symreg {
        benchmark: String,
        /// Seed for the sampled datasets. Defaults to the run seed.
        #[serde(default)]
        data_seed: Option<u64>,
        #[serde(default = "default_min_len")]
        min_length: usize,
        #[serde(default = "default_max_len")]
        max_length: usize,
    },
}

fn default_length() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.9
}
fn default_objective() -> Objective {
    Objective::F2
}
fn default_episodes() -> usize {
    DEFAULT_EPISODES
}
fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}
fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}
fn default_min_len() -> usize {
    DEFAULT_MIN_LENGTH
}
fn default_max_len() -> usize {
    DEFAULT_MAX_LENGTH
}

impl TaskSpec {
    /// Resolves a bare task name: an environment, a shipped benchmark, or
    /// `bitstring` (default instance).
    pub fn from_name(name: &str) -> Result<Self> {
        if name.eq_ignore_ascii_case("bitstring") {
            return Ok(Self::Bitstring {
                length: default_length(),
                alpha: default_alpha(),
                objective: default_objective(),
                instance_seed: 0,
            });
        }
        if EnvironmentSpec::by_name(name).is_ok() {
            return Ok(Self::DecisionTree {
                env: name.to_string(),
                episodes: DEFAULT_EPISODES,
                max_tokens: DEFAULT_MAX_TOKENS,
                resolution: DEFAULT_RESOLUTION,
            });
        }
        if benchmark_info(name).is_ok() {
            return Ok(Self::Symreg {
                benchmark: name.to_string(),
                data_seed: None,
                min_length: DEFAULT_MIN_LENGTH,
                max_length: DEFAULT_MAX_LENGTH,
            });
        }
        Err(Error::Unknown { kind: "task", name: name.to_string() })
    }

    pub fn build(&self, seed: u64) -> Result<AnyTask> {
        Ok(match self {
            Self::Bitstring { length, alpha, objective, instance_seed } => {
                AnyTask::Bitstring(BitstringTask::new(make_instance(*length, *alpha, *objective, *instance_seed)?))
            }
            Self::DecisionTree { env, episodes, max_tokens, resolution } => AnyTask::DecisionTree(
                DecisionTreeTask::with_settings(EnvironmentSpec::by_name(env)?, *episodes, *max_tokens, *resolution)?,
            ),
            Self::Symreg { benchmark, data_seed, min_length, max_length } => {
                let bench = load_benchmark(benchmark, data_seed.unwrap_or(seed))?;
                AnyTask::Symreg(SymRegTask::with_lengths(bench.train, Some(bench.test), *min_length, *max_length)?)
            }
        })
    }
}

/// A built task of any shipped kind.
pub enum AnyTask {
    Bitstring(BitstringTask<f64>),
    DecisionTree(DecisionTreeTask<f64>),
    Symreg(SymRegTask<f64>),
}

impl AnyTask {
    pub fn library(&self) -> &crate::library::Library<f64> {
        match self {
            Self::Bitstring(t) => t.library(),
            Self::DecisionTree(t) => t.library(),
            Self::Symreg(t) => t.library(),
        }
    }

    pub fn reward(&self, design: &Design<f64>, seed: u64) -> Result<f64> {
        match self {
            Self::Bitstring(t) => t.reward(design, seed),
            Self::DecisionTree(t) => t.reward(design, seed),
            Self::Symreg(t) => t.reward(design, seed),
        }
    }

    /// Held-out score: test-split reward for regression, mean return over
    /// fresh episodes for trees, none for bitstrings.
    pub fn held_out(&self, design: &Design<f64>, seed: u64) -> Result<Option<f64>> {
        match self {
            Self::Bitstring(_) => Ok(None),
            Self::DecisionTree(t) => t.evaluate(design, FRESH_EPISODES, derive_seed(seed ^ FRESH_STREAM, 0, 0)).map(Some),
            Self::Symreg(t) => t.test_reward(design).map(Some),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Joint,
    DecoupledAnneal,
    DecoupledEvo,
    DecoupledBfgs,
}

impl Method {
    pub fn inner(self) -> Option<InnerOptimizer> {
        match self {
            Self::Joint => None,
            Self::DecoupledAnneal => Some(InnerOptimizer::Anneal),
            Self::DecoupledEvo => Some(InnerOptimizer::Evo),
            Self::DecoupledBfgs => Some(InnerOptimizer::Bfgs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: Method,
    #[serde(default = "default_inner_budget")]
    pub inner_budget: usize,
    #[serde(default)]
    pub settings: InnerSettings,
}

fn default_inner_budget() -> usize {
    DecoupledConfig::default().inner_budget
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self { name: Method::Joint, inner_budget: default_inner_budget(), settings: InnerSettings::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySpec {
    pub hidden: usize,
    pub sigma: f64,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self { hidden: DEFAULT_HIDDEN, sigma: DEFAULT_SIGMA }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub task: TaskSpec,
    #[serde(default)]
    pub method: MethodSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    /// `seed` is ignored here; each run takes its seed from `output.seeds`.
    #[serde(default)]
    pub train: TrainConfig,
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Checks everything that can be checked without running: names resolve,
    /// tasks build, seeds are distinct and settings are in range.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let seeds = &self.output.seeds;
        if seeds.is_empty() {
            return Err(Error::Config("output.seeds is empty".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("output.seeds must be distinct".into()));
        }
        if self.policy.hidden == 0 || !(self.policy.sigma > 0.0 && self.policy.sigma.is_finite()) {
            return Err(Error::Config("policy.hidden and policy.sigma must be positive".into()));
        }
        if self.method.name != Method::Joint && self.method.inner_budget == 0 {
            return Err(Error::Config("method.inner_budget must be at least 1".into()));
        }
        if self.method.settings.de_population < 4 {
            return Err(Error::Config("method.settings.de_population must be at least 4".into()));
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(Error::Config("output.dir is empty".into()));
        }
        self.task.build(seeds[0])?;
        Ok(())
    }

    fn train_for(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train.clone() }
    }
}

/// What one seed produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub best_reward: f64,
    /// Test-split reward (regression) or mean return over fresh episodes
    /// (trees).
    pub held_out: Option<f64>,
    pub best_design: String,
    pub best_found_at: u64,
    pub evaluations: u64,
    pub episodes: u64,
    pub iterations: u64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub name: Option<String>,
    pub task: TaskSpec,
    pub method: Method,
    pub runs: Vec<SeedSummary>,
}

/// Everything a single seed's run returns before anything is written.
pub struct SeedRun {
    pub summary: SeedSummary,
    pub ledger: EvalBudgetLedger,
    pub audit_csv: Option<String>,
    pub policy: PolicyParams<f64>,
}

fn run_task<T: Task<f64>>(cfg: &ExperimentConfig, task: &T, seed: u64) -> Result<(BestDesign<f64>, EvalBudgetLedger, u64, Option<String>, PolicyParams<f64>)> {
    let train = cfg.train_for(seed);
    let mut policy = PolicyParams::<f64>::new(task.library().len(), cfg.policy.hidden, seed)?
        .with_continuous_head(cfg.policy.sigma, 0.0)?;
    match cfg.method.name.inner() {
        None => {
            let r = run(&mut policy, task, &train)?;
            Ok((r.best, r.ledger, r.iterations, None, policy))
        }
        Some(optimizer) => {
            let dc = DecoupledConfig { optimizer, inner_budget: cfg.method.inner_budget, settings: cfg.method.settings.clone() };
            let r = run_decoupled(&mut policy, task, &dc, &train)?;
            let audit = r.audit_csv();
            Ok((r.best, r.ledger, r.iterations, Some(audit), policy))
        }
    }
}

/// Trains one seed without touching the filesystem.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let start = Instant::now();
    let task = cfg.task.build(seed)?;
    let (best, ledger, iterations, audit_csv, policy) = match &task {
        AnyTask::Bitstring(t) => run_task(cfg, t, seed)?,
        AnyTask::DecisionTree(t) => run_task(cfg, t, seed)?,
        AnyTask::Symreg(t) => run_task(cfg, t, seed)?,
    };
    let design = best.sequence.design();
    let held_out = task.held_out(&design, seed)?;
    let summary = SeedSummary {
        seed,
        best_reward: best.reward,
        held_out,
        best_design: serialize_design(&design, task.library()),
        best_found_at: best.found_at,
        evaluations: ledger.evaluations(),
        episodes: ledger.episodes(),
        iterations,
        wall_ms: start.elapsed().as_millis() as u64,
    };
    Ok(SeedRun { summary, ledger, audit_csv, policy })
}

/// Output directory after applying the environment override.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => cfg.output.dir.clone(),
    }
}

/// Runs every seed in parallel and writes
/// `<dir>/seed_<k>/{ledger.csv,best_design.txt,policy.ckpt[,audit.csv]}`
/// plus `<dir>/summary.json`. Nothing is written unless every seed
/// succeeds.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Summary> {
    cfg.validate()?;
    let runs: Vec<SeedRun> = cfg.output.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect::<Result<_>>()?;
    for r in &runs {
        let sub = dir.join(format!("seed_{}", r.summary.seed));
        std::fs::create_dir_all(&sub)?;
        r.ledger.write_csv(&sub.join("ledger.csv"))?;
        std::fs::write(sub.join("best_design.txt"), format!("{}\n", r.summary.best_design))?;
        r.policy.save_checkpoint(&sub.join("policy.ckpt"))?;
        if let Some(audit) = &r.audit_csv {
            std::fs::write(sub.join("audit.csv"), audit)?;
        }
    }
    let summary = Summary {
        name: cfg.name.clone(),
        task: cfg.task.clone(),
        method: cfg.method.name,
        runs: runs.into_iter().map(|r| r.summary).collect(),
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub design: String,
    pub reward: f64,
    pub held_out: Option<f64>,
}

/// Parses a design against a task and scores it with the given seed.
pub fn evaluate_design(spec: &TaskSpec, text: &str, seed: u64) -> Result<EvalReport> {
    let task = spec.build(seed)?;
    let design = parse_design(text.trim(), task.library())?;
    let reward = task.reward(&design, seed)?;
    let held_out = task.held_out(&design, seed)?;
    let name = match spec {
        TaskSpec::Bitstring { .. } => "bitstring".to_string(),
        TaskSpec::DecisionTree { env, .. } => env.clone(),
        TaskSpec::Symreg { benchmark, .. } => benchmark.clone(),
    };
    Ok(EvalReport { task: name, design: serialize_design(&design, task.library()), reward, held_out })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[task]
name = "bitstring"
length = 6

[train]
batch_size = 20
budget = 200

[output]
dir = "out"
seeds = [1, 2]
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.method.name, Method::Joint);
        assert_eq!(cfg.train.batch_size, 20);
        assert_eq!(cfg.train.epsilon, 0.2);
        assert_eq!(cfg.policy, PolicySpec::default());
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let text = MINIMAL.replace("[1, 2]", "[3, 3]");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_names_rejected() {
        let text = MINIMAL.replace("\"bitstring\"", "\"bitstrng\"");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let text = MINIMAL.replace("length = 6", "length = 6\nwidth = 2");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let tree = "[task]\nname = \"decision_tree\"\nenv = \"pendulum\"\n[output]\ndir = \"o\"\nseeds = [0]\n";
        assert!(matches!(ExperimentConfig::from_toml_str(tree), Err(Error::Unknown { .. })));
        let sr = "[task]\nname = \"symreg\"\nbenchmark = \"Nguyen-99\"\n[output]\ndir = \"o\"\nseeds = [0]\n";
        assert!(matches!(ExperimentConfig::from_toml_str(sr), Err(Error::Unknown { .. })));
    }

    #[test]
    fn method_names() {
        for (s, m) in [
            ("joint", Method::Joint),
            ("decoupled-anneal", Method::DecoupledAnneal),
            ("decoupled-evo", Method::DecoupledEvo),
            ("decoupled-bfgs", Method::DecoupledBfgs),
        ] {
            let text = format!("{MINIMAL}\n[method]\nname = \"{s}\"\ninner_budget = 5\n");
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap().method.name, m);
        }
    }

    #[test]
    fn bare_names_resolve() {
        assert!(matches!(TaskSpec::from_name("CartPole").unwrap(), TaskSpec::DecisionTree { .. }));
        assert!(matches!(TaskSpec::from_name("constant-5").unwrap(), TaskSpec::Symreg { .. }));
        assert!(matches!(TaskSpec::from_name("bitstring").unwrap(), TaskSpec::Bitstring { .. }));
        assert!(TaskSpec::from_name("nope").is_err());
    }

    #[test]
    fn evaluate_ground_truth() {
        let spec = TaskSpec::from_name("Constant-5").unwrap();
        let text = benchmark_info("Constant-5").unwrap().expression;
        let report = evaluate_design(&spec, &text, 3).unwrap();
        assert_eq!(report.reward, 1.0);
        assert_eq!(report.held_out, Some(1.0));
        let err = evaluate_design(&spec, "mul,x1,zz", 0).unwrap_err();
        assert!(matches!(err, Error::Parse { position: 7, .. }));
    }
}
