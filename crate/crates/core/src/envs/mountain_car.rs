//! Under-powered car in a valley; must rock back and forth to reach the
//! flag at position 0.5.

const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;
const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL_POSITION: f64 = 0.5;

/// Returns `(reward, terminal)`; -1 per step.
pub(super) fn step(s: &mut [f64; 4], action: usize) -> (f64, bool) {
    let (mut position, mut velocity) = (s[0], s[1]);
    velocity += (action as f64 - 1.0) * FORCE + (3.0 * position).cos() * (-GRAVITY);
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    position += velocity;
    position = position.clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    s[0] = position;
    s[1] = velocity;
    (-1.0, position >= GOAL_POSITION && velocity >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::super::{run_episode, EnvironmentSpec};

    #[test]
    fn reset_distribution() {
        let spec = EnvironmentSpec::mountain_car();
        for seed in 0..1000 {
            let o = spec.reset(seed).observation();
            assert!((-0.6..=-0.4).contains(&o[0]));
            assert_eq!(o[1], 0.0);
        }
    }

    #[test]
    fn idle_car_hits_the_cap() {
        let spec = EnvironmentSpec::mountain_car();
        for seed in 0..10 {
            assert_eq!(run_episode(&spec, seed, |_| 1).unwrap(), -200.0);
        }
    }

    #[test]
    fn energy_pumping_reaches_goal() {
        let spec = EnvironmentSpec::mountain_car();
        let mean = (0..100)
            .map(|seed| run_episode(&spec, seed, |o| if o[1] < 0.0 { 0 } else { 2 }).unwrap())
            .sum::<f64>()
            / 100.0;
        assert!(mean > -130.0, "{mean}");
    }
}
