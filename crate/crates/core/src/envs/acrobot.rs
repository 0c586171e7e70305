//! Two-link under-actuated pendulum; torque acts on the middle joint.
//! Dynamics follow the textbook equations of motion, integrated with one
//! fourth-order Runge-Kutta step per control interval.

use std::f64::consts::PI;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const G: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

fn dsdt(s: &[f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2, l1, lc1, lc2, i1, i2) = (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1, LINK_COM_1, LINK_COM_2, LINK_MOI, LINK_MOI);
    let [theta1, theta2, dtheta1, dtheta2] = *s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * G * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * G * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(s: &[f64; 4], torque: f64, h: f64) -> [f64; 4] {
    let add = |a: &[f64; 4], k: &[f64; 4], c: f64| std::array::from_fn(|i| a[i] + c * k[i]);
    let k1 = dsdt(s, torque);
    let k2 = dsdt(&add(s, &k1, h / 2.0), torque);
    let k3 = dsdt(&add(s, &k2, h / 2.0), torque);
    let k4 = dsdt(&add(s, &k3, h), torque);
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn wrap(mut x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    while x > hi {
        x -= span;
    }
    while x < lo {
        x += span;
    }
    x
}

/// Integrates one control interval without wrapping or velocity limits.
pub(super) fn integrate(s: &[f64; 4], torque: f64) -> [f64; 4] {
    rk4(s, torque, DT)
}

/// Returns `(reward, terminal)`: -1 per step until the free end swings
/// one link length above the pivot, 0 on that step.
pub(super) fn step(s: &mut [f64; 4], action: usize) -> (f64, bool) {
    let mut ns = integrate(s, TORQUES[action]);
    ns[0] = wrap(ns[0], -PI, PI);
    ns[1] = wrap(ns[1], -PI, PI);
    ns[2] = ns[2].clamp(-MAX_VEL_1, MAX_VEL_1);
    ns[3] = ns[3].clamp(-MAX_VEL_2, MAX_VEL_2);
    *s = ns;
    let terminal = -ns[0].cos() - (ns[1] + ns[0]).cos() > 1.0;
    (if terminal { 0.0 } else { -1.0 }, terminal)
}

/// Kinetic plus potential energy, angles measured from hanging straight
/// down.
pub fn total_energy(s: &[f64; 4]) -> f64 {
    let [t1, t2, w1, w2] = *s;
    let (l1, lc1, lc2) = (LINK_LENGTH_1, LINK_COM_1, LINK_COM_2);
    // Centre-of-mass velocities.
    let v1 = lc1 * w1;
    let vx2 = l1 * t1.cos() * w1 + lc2 * (t1 + t2).cos() * (w1 + w2);
    let vy2 = l1 * t1.sin() * w1 + lc2 * (t1 + t2).sin() * (w1 + w2);
    let kinetic = 0.5 * LINK_MASS_1 * v1 * v1
        + 0.5 * LINK_MASS_2 * (vx2 * vx2 + vy2 * vy2)
        + 0.5 * LINK_MOI * w1 * w1
        + 0.5 * LINK_MOI * (w1 + w2) * (w1 + w2);
    let y1 = -lc1 * t1.cos();
    let y2 = -l1 * t1.cos() - lc2 * (t1 + t2).cos();
    kinetic + G * (LINK_MASS_1 * y1 + LINK_MASS_2 * y2)
}

#[cfg(test)]
mod tests {
    use super::super::{run_episode, EnvironmentSpec};
    use super::*;

    fn max_drift(start: [f64; 4], steps: usize, h: f64) -> f64 {
        let e0 = total_energy(&start);
        let mut s = start;
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            s = rk4(&s, 0.0, h);
            worst = worst.max((total_energy(&s) - e0).abs());
        }
        worst
    }

    #[test]
    fn zero_torque_conserves_energy() {
        // Potential measured from the pivot, as in the energy function.
        for start in [[0.1, 0.1, 0.1, 0.1], [0.5, 0.0, 0.0, 0.0], [0.3, 0.2, 0.5, -1.0], [0.6, -0.4, 0.0, 0.0]] {
            let e0 = total_energy(&start);
            let drift = max_drift(start, 100, DT);
            assert!(drift < 0.01 * e0.abs(), "drift {drift} vs energy {e0}");
        }
    }

    #[test]
    fn equations_of_motion_are_conservative() {
        // With a fine step the integrator error vanishes, so any remaining
        // drift would come from the dynamics themselves. Measured against the
        // swing energy above the hanging rest state.
        let floor = total_energy(&[0.0; 4]);
        for start in [[1.0, -0.5, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0], [0.3, 0.2, 0.5, -1.0]] {
            let drift = max_drift(start, 2000, 0.01);
            assert!(drift < 1e-5 * (total_energy(&start) - floor), "{drift}");
        }
    }

    #[test]
    fn observation_shape_and_determinism() {
        let spec = EnvironmentSpec::acrobot();
        let a = spec.reset(4);
        assert_eq!(a.observation().len(), 6);
        assert_eq!(a, spec.reset(4));
        let play = |s| run_episode(&spec, s, |o| if o[4] > 0.0 { 2 } else { 0 }).unwrap();
        assert_eq!(play(2), play(2));
    }

    #[test]
    fn idle_acrobot_hits_the_cap() {
        let spec = EnvironmentSpec::acrobot();
        assert_eq!(run_episode(&spec, 0, |_| 1).unwrap(), -500.0);
    }

    #[test]
    fn velocity_pumping_swings_up() {
        // Torque in the direction the elbow is already turning.
        let spec = EnvironmentSpec::acrobot();
        let mean = (0..20)
            .map(|seed| run_episode(&spec, seed, |o| if o[5] > 0.0 { 2 } else { 0 }).unwrap())
            .sum::<f64>()
            / 20.0;
        assert!(mean > -200.0, "{mean}");
    }

    #[test]
    fn wrap_maps_into_range() {
        assert!((wrap(3.5 * PI, -PI, PI) - (-0.5 * PI)).abs() < 1e-12);
        assert_eq!(wrap(0.3, -PI, PI), 0.3);
    }
}
