use crate::scalar::Scalar;

use super::GradientVector;

/// Central-difference gradient of `loss` at `point`. Used as the reference
/// when checking analytic gradients.
pub fn finite_diff_gradient<F, L>(point: &[F], mut loss: L, epsilon: F) -> GradientVector<F>
where
    F: Scalar,
    L: FnMut(&[F]) -> F,
{
    assert!(epsilon > F::zero(), "epsilon must be positive");
    let mut x = point.to_vec();
    let two = F::lit(2.0);
    let grad = (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + epsilon;
            let up = loss(&x);
            x[i] = orig - epsilon;
            let down = loss(&x);
            x[i] = orig;
            (up - down) / (two * epsilon)
        })
        .collect();
    GradientVector(grad)
}
