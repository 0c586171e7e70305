//! Classic-control environments with their standard published dynamics,
//! behind one episode interface. Observations are `f64` regardless of the
//! policy's scalar type.

mod acrobot;
mod cartpole;
mod mountain_car;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use acrobot::total_energy as acrobot_energy;

/// Largest observation dimension among the shipped environments.
pub const MAX_OBS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    CartPole,
    MountainCar,
    Acrobot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentSpec {
    pub kind: EnvKind,
    pub name: &'static str,
    pub obs_dim: usize,
    pub n_actions: usize,
    /// Finite per-feature range used as the root of the threshold bounds.
    /// Features the environment leaves unbounded are clamped to a range
    /// that trajectories stay inside in practice.
    pub root_bounds: Vec<(f64, f64)>,
    pub max_steps: usize,
    pub feature_names: Vec<&'static str>,
    pub action_names: Vec<&'static str>,
}

impl EnvironmentSpec {
    pub fn cartpole() -> Self {
        Self {
            kind: EnvKind::CartPole,
            name: "CartPole-v1",
            obs_dim: 4,
            n_actions: 2,
            root_bounds: vec![(-4.8, 4.8), (-3.0, 3.0), (-0.418879, 0.418879), (-3.5, 3.5)],
            max_steps: 500,
            feature_names: vec!["cart_position", "cart_velocity", "pole_angle", "pole_angular_velocity"],
            action_names: vec!["push_left", "push_right"],
        }
    }

    pub fn mountain_car() -> Self {
        Self {
            kind: EnvKind::MountainCar,
            name: "MountainCar-v0",
            obs_dim: 2,
            n_actions: 3,
            root_bounds: vec![(-1.2, 0.6), (-0.07, 0.07)],
            max_steps: 200,
            feature_names: vec!["position", "velocity"],
            action_names: vec!["accelerate_left", "no_push", "accelerate_right"],
        }
    }

    pub fn acrobot() -> Self {
        use std::f64::consts::PI;
        Self {
            kind: EnvKind::Acrobot,
            name: "Acrobot-v1",
            obs_dim: 6,
            n_actions: 3,
            root_bounds: vec![
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-4.0 * PI, 4.0 * PI),
                (-9.0 * PI, 9.0 * PI),
            ],
            max_steps: 500,
            feature_names: vec!["cos_theta1", "sin_theta1", "cos_theta2", "sin_theta2", "omega1", "omega2"],
            action_names: vec!["torque_neg", "torque_zero", "torque_pos"],
        }
    }

    /// Accepts the registered names and short lower-case aliases.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cartpole-v1" | "cartpole" => Ok(Self::cartpole()),
            "mountaincar-v0" | "mountaincar" | "mountain_car" => Ok(Self::mountain_car()),
            "acrobot-v1" | "acrobot" => Ok(Self::acrobot()),
            _ => Err(Error::Unknown { kind: "environment", name: name.to_string() }),
        }
    }

    pub fn all() -> Vec<Self> {
        vec![Self::cartpole(), Self::mountain_car(), Self::acrobot()]
    }

    /// Initial state drawn from the environment's standard distribution,
    /// determined by `seed`.
    pub fn reset(&self, seed: u64) -> EpisodeState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = [0.0; 4];
        match self.kind {
            EnvKind::CartPole => s.iter_mut().for_each(|v| *v = rng.gen_range(-0.05..0.05)),
            EnvKind::MountainCar => s[0] = rng.gen_range(-0.6..-0.4),
            EnvKind::Acrobot => s.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1)),
        }
        EpisodeState { kind: self.kind, n_actions: self.n_actions, max_steps: self.max_steps, state: s, steps: 0, done: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub done: bool,
}

/// Physical state of one running episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    kind: EnvKind,
    n_actions: usize,
    max_steps: usize,
    /// CartPole `(x, ẋ, θ, θ̇)`, MountainCar `(position, velocity, -, -)`,
    /// Acrobot `(θ1, θ2, θ̇1, θ̇2)`.
    pub state: [f64; 4],
    pub steps: usize,
    pub done: bool,
}

impl EpisodeState {
    pub fn observe_into(&self, out: &mut [f64]) {
        let s = &self.state;
        match self.kind {
            EnvKind::CartPole => out[..4].copy_from_slice(s),
            EnvKind::MountainCar => out[..2].copy_from_slice(&s[..2]),
            EnvKind::Acrobot => {
                out[0] = s[0].cos();
                out[1] = s[0].sin();
                out[2] = s[1].cos();
                out[3] = s[1].sin();
                out[4] = s[2];
                out[5] = s[3];
            }
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        let mut out = [0.0; MAX_OBS];
        self.observe_into(&mut out);
        let n = match self.kind {
            EnvKind::CartPole => 4,
            EnvKind::MountainCar => 2,
            EnvKind::Acrobot => 6,
        };
        out[..n].to_vec()
    }

    /// Advances one control step. The episode ends on the environment's
    /// terminal condition or at its step cap.
    pub fn step(&mut self, action: usize) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if action >= self.n_actions {
            return Err(Error::InvalidArgument(format!(
                "action {action} out of range for {} actions",
                self.n_actions
            )));
        }
        let (reward, terminal) = match self.kind {
            EnvKind::CartPole => cartpole::step(&mut self.state, action),
            EnvKind::MountainCar => mountain_car::step(&mut self.state, action),
            EnvKind::Acrobot => acrobot::step(&mut self.state, action),
        };
        self.steps += 1;
        self.done = terminal || self.steps >= self.max_steps;
        Ok(Transition { reward, done: self.done })
    }
}

/// Reset seed for episode `episode` of an evaluation seeded with `seed`.
pub fn derive_episode_seed(seed: u64, episode: u64) -> u64 {
    crate::sampler::derive_seed(seed, u64::MAX, episode)
}

/// Return of one episode under `policy`, which maps an observation to an
/// action index.
pub fn run_episode(spec: &EnvironmentSpec, seed: u64, mut policy: impl FnMut(&[f64]) -> usize) -> Result<f64> {
    let mut ep = spec.reset(seed);
    let mut obs = [0.0; MAX_OBS];
    let mut total = 0.0;
    loop {
        ep.observe_into(&mut obs);
        let t = ep.step(policy(&obs[..spec.obs_dim]))?;
        total += t.reward;
        if t.done {
            return Ok(total);
        }
    }
}
