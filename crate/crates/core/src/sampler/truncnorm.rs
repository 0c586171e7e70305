//! Normal and truncated-normal primitives.
//!
//! The lower tail is always evaluated through the Laplace continued fraction
//! for the Mills ratio, so `Φ(x)` keeps full relative precision down to
//! `x ≈ -38`. Truncated sampling uses the inverse CDF; windows lying in the
//! upper tail are reflected into the lower tail first.

use rand::distributions::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Interval `(lo, hi)` restricting a normal distribution. Either end may be
/// infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncBounds<F> {
    pub lo: F,
    pub hi: F,
}

impl<F: Scalar> TruncBounds<F> {
    pub fn new(lo: F, hi: F) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "truncation bounds require lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded() -> Self {
        Self { lo: F::neg_infinity(), hi: F::infinity() }
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo == F::neg_infinity() && self.hi == F::infinity()
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: F) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn contains_strict(&self, x: F) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn width(&self) -> F {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> F {
        if self.is_finite() {
            self.lo + (self.hi - self.lo) / F::lit(2.0)
        } else {
            F::zero()
        }
    }
}

impl<F: Scalar> Default for TruncBounds<F> {
    fn default() -> Self {
        Self::unbounded()
    }
}

fn ln_sqrt_2pi<F: Scalar>() -> F {
    F::lit(0.918_938_533_204_672_7)
}

/// `ln φ(z)` for the standard normal density.
pub fn std_log_pdf<F: Scalar>(z: F) -> F {
    -z * z / F::lit(2.0) - ln_sqrt_2pi()
}

pub fn std_pdf<F: Scalar>(z: F) -> F {
    std_log_pdf(z).exp()
}

/// Mills-ratio continued fraction `Q(t)/φ(t) = 1/(t + 1/(t + 2/(t + ...)))`,
/// valid for `t > 0`, evaluated with the modified Lentz method.
fn mills_ratio<F: Scalar>(t: F) -> F {
    let tiny = F::lit(1e-300).max(F::min_positive_value());
    let eps = F::epsilon();
    let mut f = t;
    if f == F::zero() {
        f = tiny;
    }
    let mut c = f;
    let mut d = F::zero();
    for k in 1..5000 {
        let a = F::lit(k as f64);
        d = t + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = t + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - F::one()).abs() < eps {
            break;
        }
    }
    f.recip()
}

const SERIES_SWITCH: f64 = 1.5;

/// Series `Φ(x) - 1/2 = φ(x) Σ x^(2n+1) / (2n+1)!!`, accurate for moderate |x|.
fn ndtr_series<F: Scalar>(x: F) -> F {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let eps = F::epsilon();
    for n in 1..500 {
        term = term * x2 / F::lit((2 * n + 1) as f64);
        sum = sum + term;
        if term.abs() <= eps * sum.abs() {
            break;
        }
    }
    F::lit(0.5) + std_pdf(x) * sum
}

/// Standard normal CDF `Φ(x)`.
pub fn ndtr<F: Scalar>(x: F) -> F {
    if x.is_nan() {
        return x;
    }
    if x == F::neg_infinity() {
        return F::zero();
    }
    if x == F::infinity() {
        return F::one();
    }
    let s = F::lit(SERIES_SWITCH);
    if x < -s {
        std_pdf(x) * mills_ratio(-x)
    } else if x > s {
        F::one() - std_pdf(x) * mills_ratio(x)
    } else {
        ndtr_series(x)
    }
}

/// `ln Φ(x)`, finite for every finite `x`.
pub fn log_ndtr<F: Scalar>(x: F) -> F {
    if x == F::neg_infinity() {
        return F::neg_infinity();
    }
    if x == F::infinity() {
        return F::zero();
    }
    let s = F::lit(SERIES_SWITCH);
    if x < -s {
        std_log_pdf(x) + mills_ratio(-x).ln()
    } else if x > s {
        (-(std_pdf(x) * mills_ratio(x))).ln_1p()
    } else {
        ndtr_series(x).ln()
    }
}

/// Rational approximation of the normal quantile (relative error ~1e-9),
/// used as the starting point for Newton refinement.
fn ndtri_initial(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Quantile below the median from `ln p`, refined by Newton steps on
/// `ln Φ(x) = ln p`. Works for probabilities far below `f64::MIN_POSITIVE`.
fn ndtri_log_lower<F: Scalar>(log_p: F) -> F {
    let lp = log_p.as_f64();
    let x0 = if lp > -700.0 { ndtri_initial(lp.exp()) } else { -(-2.0 * lp).sqrt() };
    let mut x = F::lit(x0);
    for _ in 0..12 {
        let lf = log_ndtr(x);
        // d/dx ln Φ(x) = φ(x)/Φ(x)
        let slope = (std_log_pdf(x) - lf).exp();
        let step = (lf - log_p) / slope;
        x = x - step;
        if step.abs() <= F::epsilon() * (F::one() + x.abs()) {
            break;
        }
    }
    x
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn ndtri<F: Scalar>(p: F) -> F {
    if p.is_nan() || p < F::zero() || p > F::one() {
        return F::nan();
    }
    if p == F::zero() {
        return F::neg_infinity();
    }
    if p == F::one() {
        return F::infinity();
    }
    if p <= F::lit(0.5) {
        ndtri_log_lower(p.ln())
    } else {
        -ndtri_log_lower((F::one() - p).ln())
    }
}

/// Quantile from `ln p`.
pub fn ndtri_log<F: Scalar>(log_p: F) -> F {
    if log_p.is_nan() || log_p > F::zero() {
        return F::nan();
    }
    if log_p < F::lit(-std::f64::consts::LN_2) {
        ndtri_log_lower(log_p)
    } else {
        // Upper half: 1 - p = -expm1(ln p) keeps precision as p -> 1.
        -ndtri_log_lower((-log_p.exp_m1()).ln())
    }
}

/// `ln(Φ(b) - Φ(a))` for standardized bounds `a < b`.
pub fn log_mass<F: Scalar>(a: F, b: F) -> F {
    // Keep the window on the side where Φ is small and accurate.
    let (a, b) = if a > F::zero() { (-b, -a) } else { (a, b) };
    let lb = log_ndtr(b);
    let la = log_ndtr(a);
    let d = la - lb;
    if d == F::neg_infinity() {
        return lb;
    }
    let ln2 = F::lit(std::f64::consts::LN_2);
    if d > -ln2 {
        lb + (-d.exp_m1()).ln()
    } else {
        lb + (-d.exp()).ln_1p()
    }
}

fn standardize<F: Scalar>(mean: F, sigma: F, bounds: &TruncBounds<F>) -> (F, F) {
    ((bounds.lo - mean) / sigma, (bounds.hi - mean) / sigma)
}

fn check_sigma<F: Scalar>(sigma: F) -> Result<()> {
    if sigma > F::zero() && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")))
    }
}

fn degenerate<F: Scalar>(mean: F, sigma: F, bounds: &TruncBounds<F>) -> Error {
    Error::DegenerateTruncation {
        mean: mean.as_f64(),
        sigma: sigma.as_f64(),
        lo: bounds.lo.as_f64(),
        hi: bounds.hi.as_f64(),
    }
}

/// Log of the normal mass on the truncation window.
pub fn truncated_log_mass<F: Scalar>(mean: F, sigma: F, bounds: &TruncBounds<F>) -> Result<F> {
    check_sigma(sigma)?;
    if bounds.is_unbounded() {
        return Ok(F::zero());
    }
    let (a, b) = standardize(mean, sigma, bounds);
    let lz = log_mass(a, b);
    if !lz.is_finite() {
        return Err(degenerate(mean, sigma, bounds));
    }
    Ok(lz)
}

/// Log density of the (possibly truncated) normal at `x`.
pub fn truncated_normal_logpdf<F: Scalar>(
    x: F,
    mean: F,
    sigma: F,
    bounds: &TruncBounds<F>,
) -> Result<F> {
    if !bounds.contains(x) || x.is_nan() {
        return Err(Error::OutOfSupport {
            beta: x.as_f64(),
            lo: bounds.lo.as_f64(),
            hi: bounds.hi.as_f64(),
        });
    }
    let lz = truncated_log_mass(mean, sigma, bounds)?;
    Ok(std_log_pdf((x - mean) / sigma) - sigma.ln() - lz)
}

/// `∂/∂mean` of [`truncated_normal_logpdf`].
pub fn truncated_normal_dlogpdf_dmean<F: Scalar>(
    x: F,
    mean: F,
    sigma: F,
    bounds: &TruncBounds<F>,
) -> Result<F> {
    let lz = truncated_log_mass(mean, sigma, bounds)?;
    let mut d = (x - mean) / (sigma * sigma);
    if !bounds.is_unbounded() {
        let (a, b) = standardize(mean, sigma, bounds);
        // d ln Z / d mean = (φ(a) - φ(b)) / (σ Z)
        let ra = if a.is_finite() { (std_log_pdf(a) - lz).exp() } else { F::zero() };
        let rb = if b.is_finite() { (std_log_pdf(b) - lz).exp() } else { F::zero() };
        d = d - (ra - rb) / sigma;
    }
    Ok(d)
}

/// Differential entropy of the (possibly truncated) normal.
pub fn truncated_normal_entropy<F: Scalar>(mean: F, sigma: F, bounds: &TruncBounds<F>) -> Result<F> {
    let lz = truncated_log_mass(mean, sigma, bounds)?;
    let base = ln_sqrt_2pi::<F>() + F::lit(0.5) + sigma.ln();
    if bounds.is_unbounded() {
        return Ok(base);
    }
    let (a, b) = standardize(mean, sigma, bounds);
    let (ta, _) = tail_terms(a, lz);
    let (tb, _) = tail_terms(b, lz);
    Ok(base + lz + (ta - tb) / F::lit(2.0))
}

/// `(x φ(x)/Z, φ(x)/Z)` with the infinite-endpoint limits set to zero.
fn tail_terms<F: Scalar>(x: F, log_z: F) -> (F, F) {
    if !x.is_finite() {
        return (F::zero(), F::zero());
    }
    let r = (std_log_pdf(x) - log_z).exp();
    (x * r, r)
}

/// `∂/∂mean` of [`truncated_normal_entropy`]; zero for the unbounded case.
pub fn truncated_normal_dentropy_dmean<F: Scalar>(
    mean: F,
    sigma: F,
    bounds: &TruncBounds<F>,
) -> Result<F> {
    let lz = truncated_log_mass(mean, sigma, bounds)?;
    if bounds.is_unbounded() {
        return Ok(F::zero());
    }
    let (a, b) = standardize(mean, sigma, bounds);
    let (xa, ra) = tail_terms(a, lz);
    let (xb, rb) = tail_terms(b, lz);
    // Shift operator S = ∂/∂a + ∂/∂b; d/dmean = -S/σ.
    // S ln Z = rb - ra
    // S [(aφa - bφb)/(2Z)] = [ra(1-a²) - rb(1-b²)]/2 - (xa - xb)(rb - ra)/2
    let s_ln_z = rb - ra;
    let sq = |x: F, xr: F| if x.is_finite() { x * xr } else { F::zero() };
    let s_n = (ra - sq(a, xa) - (rb - sq(b, xb))) / F::lit(2.0) - (xa - xb) * s_ln_z / F::lit(2.0);
    Ok(-(s_ln_z + s_n) / sigma)
}

/// CDF of the truncated normal at `x`.
pub fn truncated_normal_cdf<F: Scalar>(x: F, mean: F, sigma: F, bounds: &TruncBounds<F>) -> Result<F> {
    let lz = truncated_log_mass(mean, sigma, bounds)?;
    if x <= bounds.lo {
        return Ok(F::zero());
    }
    if x >= bounds.hi {
        return Ok(F::one());
    }
    let (a, _) = standardize(mean, sigma, bounds);
    let z = (x - mean) / sigma;
    Ok((log_mass(a, z) - lz).exp())
}

/// Draws from the normal `N(mean, sigma²)` restricted to `bounds` by
/// inverting the CDF. The result lies strictly inside the window.
pub fn sample_truncated_normal<F: Scalar, R: Rng + ?Sized>(
    mean: F,
    sigma: F,
    bounds: &TruncBounds<F>,
    rng: &mut R,
) -> Result<F> {
    check_sigma(sigma)?;
    let u: f64 = rng.sample(Open01);
    let u = F::lit(u);
    if bounds.is_unbounded() {
        return Ok(mean + sigma * ndtri(u));
    }
    let (a, b) = standardize(mean, sigma, bounds);
    let reflect = a > F::zero();
    let (a, b) = if reflect { (-b, -a) } else { (a, b) };
    let la = log_ndtr(a);
    let lb = log_ndtr(b);
    if !lb.is_finite() || !(la < lb) {
        return Err(degenerate(mean, sigma, bounds));
    }
    // ln(Φ(a) + u (Φ(b) - Φ(a))), kept in log space for deep-tail windows.
    let log_p = lb + (u + (F::one() - u) * (la - lb).exp()).ln();
    let z = ndtri_log(log_p);
    let z = if reflect { -z } else { z };
    let mut x = mean + sigma * z;
    if !bounds.contains_strict(x) {
        // Rounding pushed the draw onto (or past) an edge.
        let w = bounds.width();
        let nudge = if w.is_finite() { w * F::lit(1e-9) } else { sigma * F::lit(1e-9) };
        if !(x > bounds.lo) {
            x = bounds.lo + nudge;
        }
        if !(x < bounds.hi) {
            x = bounds.hi - nudge;
        }
        if !bounds.contains_strict(x) {
            x = bounds.midpoint();
        }
    }
    Ok(x)
}
