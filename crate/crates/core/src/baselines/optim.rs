//! Black-box maximizers for the continuous slots of a fixed skeleton.
//!
//! Each optimizer evaluates its starting point first, never calls the
//! objective more than `max_evals` times, keeps every probe inside the
//! bounds and returns the best point it evaluated. Non-finite objective
//! values rank below every finite one.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::TruncBounds;

/// Half-width of the search box used for unbounded sides where a finite
/// box is required (initial populations).
pub const UNBOUNDED_BOX: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub reward: f64,
    pub evaluations: usize,
    /// 1-based index of the call that produced `reward`.
    pub best_call: usize,
}

/// Settings for the three optimizers, with the usual library defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerSettings {
    pub anneal_initial_temperature: f64,
    pub anneal_decay: f64,
    pub anneal_decay_every: usize,
    /// Proposal scale as a fraction of a bounded slot's width.
    pub anneal_step_fraction: f64,
    /// Proposal scale for slots with an infinite side.
    pub anneal_unbounded_step: f64,
    pub de_population: usize,
    pub de_mutation: f64,
    pub de_crossover: f64,
    pub qn_memory: usize,
    pub qn_rel_step: f64,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            anneal_initial_temperature: 1.0,
            anneal_decay: 0.95,
            anneal_decay_every: 10,
            anneal_step_fraction: 0.1,
            anneal_unbounded_step: 1.0,
            de_population: 15,
            de_mutation: 0.8,
            de_crossover: 0.9,
            qn_memory: 10,
            qn_rel_step: 1e-6,
        }
    }
}

fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Wraps an objective with best-point tracking and a hard call limit.
struct Tracker<'a, O> {
    objective: &'a mut O,
    max_evals: usize,
    calls: usize,
    best_x: Vec<f64>,
    best: f64,
    best_call: usize,
}

impl<'a, O: FnMut(&[f64]) -> f64> Tracker<'a, O> {
    fn new(objective: &'a mut O, max_evals: usize) -> Self {
        Self { objective, max_evals, calls: 0, best_x: Vec::new(), best: f64::NEG_INFINITY, best_call: 0 }
    }

    fn left(&self) -> usize {
        self.max_evals - self.calls
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        assert!(self.calls < self.max_evals, "evaluation budget overrun");
        self.calls += 1;
        let v = score((self.objective)(x));
        if self.best_call == 0 || v > self.best {
            self.best = v;
            self.best_x = x.to_vec();
            self.best_call = self.calls;
        }
        v
    }

    fn finish(self) -> InnerResult {
        InnerResult { x: self.best_x, reward: self.best, evaluations: self.calls, best_call: self.best_call }
    }
}

fn clip(x: f64, b: &TruncBounds<f64>) -> f64 {
    x.clamp(b.lo, b.hi)
}

fn check_inputs(x0: Option<&[f64]>, bounds: &[TruncBounds<f64>], max_evals: usize) -> Result<()> {
    if max_evals == 0 {
        return Err(Error::InvalidArgument("inner budget must be at least 1".into()));
    }
    if let Some(x0) = x0 {
        if x0.len() != bounds.len() {
            return Err(Error::InvalidArgument(format!(
                "start point has {} entries, bounds have {}",
                x0.len(),
                bounds.len()
            )));
        }
        if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, value: x0[i] });
        }
    }
    Ok(())
}

/// Finite box for population initialisation: infinite sides are replaced
/// by `±UNBOUNDED_BOX`, widened if that would leave the box empty.
pub fn search_box(b: &TruncBounds<f64>) -> (f64, f64) {
    match (b.lo.is_finite(), b.hi.is_finite()) {
        (true, true) => (b.lo, b.hi),
        (true, false) => (b.lo, b.lo.max(-UNBOUNDED_BOX) + 2.0 * UNBOUNDED_BOX),
        (false, true) => (b.hi.min(UNBOUNDED_BOX) - 2.0 * UNBOUNDED_BOX, b.hi),
        (false, false) => (-UNBOUNDED_BOX, UNBOUNDED_BOX),
    }
}

/// Simulated annealing with Gaussian proposals and a geometric schedule:
/// the temperature is multiplied by `anneal_decay` after every
/// `anneal_decay_every` proposals.
pub fn optimize_anneal<O, R>(
    objective: &mut O,
    x0: &[f64],
    bounds: &[TruncBounds<f64>],
    max_evals: usize,
    settings: &InnerSettings,
    rng: &mut R,
) -> Result<InnerResult>
where
    O: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    check_inputs(Some(x0), bounds, max_evals)?;
    let steps: Vec<f64> = bounds
        .iter()
        .map(|b| if b.is_finite() { settings.anneal_step_fraction * b.width() } else { settings.anneal_unbounded_step })
        .collect();
    let mut t = Tracker::new(objective, max_evals);
    let mut x: Vec<f64> = x0.iter().zip(bounds).map(|(&v, b)| clip(v, b)).collect();
    let mut fx = t.eval(&x);
    if x.is_empty() {
        return Ok(t.finish());
    }
    let mut temperature = settings.anneal_initial_temperature;
    let mut proposals = 0;
    while t.left() > 0 {
        let y: Vec<f64> = x
            .iter()
            .zip(&steps)
            .zip(bounds)
            .map(|((&v, &s), b)| clip(v + s * rng.sample::<f64, _>(StandardNormal), b))
            .collect();
        let fy = t.eval(&y);
        let u: f64 = rng.gen();
        let accept = fy >= fx || (fy.is_finite() && u < ((fy - fx) / temperature).exp());
        if accept {
            x = y;
            fx = fy;
        }
        proposals += 1;
        if proposals % settings.anneal_decay_every.max(1) == 0 {
            temperature *= settings.anneal_decay;
        }
    }
    Ok(t.finish())
}

/// Differential evolution, `rand/1/bin`. Members start uniform in the
/// search box; trials are clipped to the true bounds.
pub fn optimize_devo<O, R>(
    objective: &mut O,
    bounds: &[TruncBounds<f64>],
    max_evals: usize,
    settings: &InnerSettings,
    rng: &mut R,
) -> Result<InnerResult>
where
    O: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let pop_size = settings.de_population;
    if pop_size < 4 {
        return Err(Error::InvalidArgument(format!("population must be at least 4, got {pop_size}")));
    }
    check_inputs(None, bounds, max_evals)?;
    let mut t = Tracker::new(objective, max_evals);
    let p = bounds.len();
    if p == 0 {
        t.eval(&[]);
        return Ok(t.finish());
    }
    let boxes: Vec<(f64, f64)> = bounds.iter().map(search_box).collect();
    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(pop_size);
    let mut fit = Vec::with_capacity(pop_size);
    for _ in 0..pop_size {
        if t.left() == 0 {
            break;
        }
        let x: Vec<f64> = boxes.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
        fit.push(t.eval(&x));
        pop.push(x);
    }
    if pop.len() < pop_size {
        return Ok(t.finish());
    }
    'outer: loop {
        for i in 0..pop_size {
            if t.left() == 0 {
                break 'outer;
            }
            let mut pick = || loop {
                let r = rng.gen_range(0..pop_size);
                if r != i {
                    return r;
                }
            };
            let r1 = pick();
            let r2 = loop {
                let r = pick();
                if r != r1 {
                    break r;
                }
            };
            let r3 = loop {
                let r = pick();
                if r != r1 && r != r2 {
                    break r;
                }
            };
            let jrand = rng.gen_range(0..p);
            let trial: Vec<f64> = (0..p)
                .map(|j| {
                    if j == jrand || rng.gen::<f64>() < settings.de_crossover {
                        let v = pop[r1][j] + settings.de_mutation * (pop[r2][j] - pop[r3][j]);
                        clip(v, &bounds[j])
                    } else {
                        pop[i][j]
                    }
                })
                .collect();
            let f = t.eval(&trial);
            if f >= fit[i] {
                pop[i] = trial;
                fit[i] = f;
            }
        }
    }
    Ok(t.finish())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bound-projected quasi-Newton ascent with forward-difference gradients
/// and a limited-memory inverse-Hessian estimate.
///
/// Each gradient estimate re-evaluates the current point and probes every
/// coordinate once, so it costs `p + 1` calls. The run stops when the
/// gradient vanishes (e.g. on a plateau), the line search fails, or the
/// budget cannot cover another gradient.
pub fn optimize_fd_quasi_newton<O>(
    objective: &mut O,
    x0: &[f64],
    bounds: &[TruncBounds<f64>],
    max_evals: usize,
    settings: &InnerSettings,
) -> Result<InnerResult>
where
    O: FnMut(&[f64]) -> f64,
{
    check_inputs(Some(x0), bounds, max_evals)?;
    let p = x0.len();
    let mut x: Vec<f64> = x0.iter().zip(bounds).map(|(&v, b)| clip(v, b)).collect();
    let first = objective(&x);
    if !first.is_finite() {
        return Err(Error::NonFinite { index: 0, value: first });
    }
    // Count the start evaluation through the tracker without calling again.
    let mut replay = Some(first);
    let mut wrapped = |z: &[f64]| match replay.take() {
        Some(v) => v,
        None => objective(z),
    };
    let mut t = Tracker::new(&mut wrapped, max_evals);
    t.eval(&x);
    if p == 0 {
        return Ok(t.finish());
    }

    // Minimise g = -f.
    let gradient = |t: &mut Tracker<'_, _>, x: &[f64]| -> Option<(f64, Vec<f64>)> {
        if t.left() < p + 1 {
            return None;
        }
        let g0 = -t.eval(x);
        let mut grad = vec![0.0; p];
        let mut probe = x.to_vec();
        for i in 0..p {
            let h = settings.qn_rel_step * x[i].abs().max(1.0);
            let fwd = x[i] + h <= bounds[i].hi;
            probe[i] = if fwd { x[i] + h } else { x[i] - h };
            let gi = -t.eval(&probe);
            probe[i] = x[i];
            grad[i] = if fwd { (gi - g0) / h } else { (g0 - gi) / h };
        }
        Some((g0, grad))
    };

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let Some((mut gx, mut grad)) = gradient(&mut t, &x) else { return Ok(t.finish()) };
    loop {
        if !gx.is_finite() || grad.iter().any(|g| !g.is_finite()) || grad.iter().all(|&g| g == 0.0) {
            break;
        }
        // Two-loop recursion.
        let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for k in (0..m).rev() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            alpha[k] = rho * dot(&s_hist[k], &d);
            d.iter_mut().zip(&y_hist[k]).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        let gamma = if m > 0 { dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]) } else { 1.0 };
        d.iter_mut().for_each(|di| *di *= gamma);
        for k in 0..m {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            let beta = rho * dot(&y_hist[k], &d);
            d.iter_mut().zip(&s_hist[k]).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
        }
        // Drop components pushing against an active bound.
        for i in 0..p {
            if (x[i] <= bounds[i].lo && d[i] < 0.0) || (x[i] >= bounds[i].hi && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &grad) >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            d = grad.iter().map(|g| -g).collect();
        }
        let mut step = if m == 0 { 1.0f64.min(1.0 / grad.iter().fold(0.0f64, |a, g| a.max(g.abs()))) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..30 {
            if t.left() == 0 {
                break;
            }
            let xn: Vec<f64> = (0..p).map(|i| clip(x[i] + step * d[i], &bounds[i])).collect();
            let decrease: f64 = (0..p).map(|i| grad[i] * (xn[i] - x[i])).sum();
            let gn = -t.eval(&xn);
            if gn.is_finite() && gn <= gx + 1e-4 * decrease {
                accepted = Some((xn, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, g_new)) = accepted else { break };
        let s: Vec<f64> = (0..p).map(|i| xn[i] - x[i]).collect();
        if s.iter().all(|&v| v == 0.0) {
            break;
        }
        let stalled = gx - g_new <= 1e-14 * gx.abs().max(1.0);
        x = xn;
        if stalled {
            break;
        }
        let Some((gn, grad_n)) = gradient(&mut t, &x) else { break };
        let y: Vec<f64> = (0..p).map(|i| grad_n[i] - grad[i]).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > settings.qn_memory.max(1) {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        gx = gn;
        grad = grad_n;
    }
    Ok(t.finish())
}
