//! Cart-pole balancing, Euler-integrated at 50 Hz.

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
/// Half the pole length.
const LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const X_LIMIT: f64 = 2.4;

/// Returns `(reward, terminal)`. Every step, including the failing one,
/// earns +1.
pub(super) fn step(s: &mut [f64; 4], action: usize) -> (f64, bool) {
    let [x, x_dot, theta, theta_dot] = *s;
    let force = if action == 1 { FORCE } else { -FORCE };
    let (sin, cos) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
    let theta_acc =
        (GRAVITY * sin - cos * temp) / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    *s = [x + TAU * x_dot, x_dot + TAU * x_acc, theta + TAU * theta_dot, theta_dot + TAU * theta_acc];
    let terminal = s[0] < -X_LIMIT || s[0] > X_LIMIT || s[2] < -THETA_LIMIT || s[2] > THETA_LIMIT;
    (1.0, terminal)
}

#[cfg(test)]
mod tests {
    use super::super::{run_episode, EnvironmentSpec};

    #[test]
    fn reset_is_seeded_and_small() {
        let spec = EnvironmentSpec::cartpole();
        assert_eq!(spec.reset(0), spec.reset(0));
        assert_ne!(spec.reset(0), spec.reset(1));
        for seed in 0..200 {
            assert!(spec.reset(seed).state.iter().all(|v| v.abs() < 0.05));
        }
    }

    #[test]
    fn constant_push_falls_quickly() {
        let spec = EnvironmentSpec::cartpole();
        let r = run_episode(&spec, 0, |_| 0).unwrap();
        assert!(r < 20.0, "{r}");
        assert_eq!(r, run_episode(&spec, 0, |_| 0).unwrap());
    }

    #[test]
    fn alternating_actions_are_deterministic() {
        let spec = EnvironmentSpec::cartpole();
        let play = || {
            let mut k = 0;
            run_episode(&spec, 7, |_| {
                k += 1;
                k % 2
            })
            .unwrap()
        };
        assert_eq!(play(), play());
    }

    #[test]
    fn angle_feedback_balances() {
        // Push toward the side the pole is falling to.
        let spec = EnvironmentSpec::cartpole();
        let r = run_episode(&spec, 3, |o| (o[2] + 0.5 * o[3] > 0.0) as usize).unwrap();
        assert_eq!(r, 500.0);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let mut s = [0.0, 0.0, 0.1, 0.0];
        super::step(&mut s, 1);
        let (sin, cos) = 0.1f64.sin_cos();
        let temp = 10.0 / 1.1;
        let ta = (9.8 * sin - cos * temp) / (0.5 * (4.0 / 3.0 - 0.1 * cos * cos / 1.1));
        let xa = temp - 0.05 * ta * cos / 1.1;
        assert_eq!(s, [0.0, 0.02 * xa, 0.1, 0.02 * ta]);
    }
}
