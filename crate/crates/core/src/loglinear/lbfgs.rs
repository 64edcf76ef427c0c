//! Limited-memory BFGS minimizer.
//!
//! Search directions come from the two-loop recursion over the last `memory`
//! curvature pairs, scaled by `s'y / y'y`. Step lengths satisfy the strong
//! Wolfe conditions (`c1 = 1e-4`, `c2 = 0.9`) via the bracketing and zoom
//! procedure with safeguarded cubic interpolation. Pairs with `s'y <= 0`
//! are skipped. If the line search fails the memory is cleared and the step
//! is retried along the steepest-descent direction once before giving up.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub tol: f64,
    pub max_iter: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            tol: 1e-5,
            max_iter: 500,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective after the initial point and after every accepted step.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Objective<F> {
    f: F,
    evaluations: usize,
}

impl<F> Objective<F>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        self.evaluations += 1;
        let v = (self.f)(x, g)?;
        if !v.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "objective {v} at evaluation {}",
                self.evaluations
            )));
        }
        Ok(v)
    }
}

/// Minimizer of the cubic interpolating `(a, fa, ga)` and `(b, fb, gb)`,
/// clamped into the interior of the interval.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    let candidate = if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2)
    } else {
        f64::NAN
    };
    let width = hi - lo;
    if candidate.is_finite() && candidate > lo + 0.1 * width && candidate < hi - 0.1 * width {
        candidate
    } else {
        0.5 * (lo + hi)
    }
}

struct LineSearchOutcome {
    step: f64,
    value: f64,
}

#[allow(clippy::too_many_arguments)]
fn strong_wolfe<F>(
    obj: &mut Objective<F>,
    cfg: &LbfgsConfig,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    initial_step: f64,
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Result<Option<LineSearchOutcome>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let dg0 = dot(g0, dir);
    if dg0 >= 0.0 {
        return Ok(None);
    }
    let mut phi = |step: f64, x_new: &mut [f64], g_new: &mut [f64]| -> Result<(f64, f64)> {
        for ((xn, xi), di) in x_new.iter_mut().zip(x).zip(dir) {
            *xn = xi + step * di;
        }
        let v = obj.eval(x_new, g_new)?;
        Ok((v, dot(g_new, dir)))
    };

    let mut prev_step = 0.0;
    let mut prev_f = f0;
    let mut prev_dg = dg0;
    let mut step = initial_step;
    let mut remaining = cfg.max_line_search;

    // Bracketing phase.
    let (mut lo, mut f_lo, mut dg_lo, mut hi, mut f_hi, mut dg_hi);
    loop {
        if remaining == 0 {
            return Ok(None);
        }
        remaining -= 1;
        let (f, dg) = phi(step, x_new, g_new)?;
        if f > f0 + cfg.c1 * step * dg0 || (f >= prev_f && prev_step > 0.0) {
            (lo, f_lo, dg_lo, hi, f_hi, dg_hi) = (prev_step, prev_f, prev_dg, step, f, dg);
            break;
        }
        if dg.abs() <= -cfg.c2 * dg0 {
            return Ok(Some(LineSearchOutcome { step, value: f }));
        }
        if dg >= 0.0 {
            (lo, f_lo, dg_lo, hi, f_hi, dg_hi) = (step, f, dg, prev_step, prev_f, prev_dg);
            break;
        }
        prev_step = step;
        prev_f = f;
        prev_dg = dg;
        step *= 2.0;
    }

    // Zoom phase.
    while remaining > 0 {
        remaining -= 1;
        let trial = cubic_min(lo, f_lo, dg_lo, hi, f_hi, dg_hi);
        let (f, dg) = phi(trial, x_new, g_new)?;
        if f > f0 + cfg.c1 * trial * dg0 || f >= f_lo {
            hi = trial;
            f_hi = f;
            dg_hi = dg;
        } else {
            if dg.abs() <= -cfg.c2 * dg0 {
                return Ok(Some(LineSearchOutcome { step: trial, value: f }));
            }
            if dg * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
                dg_hi = dg_lo;
            }
            lo = trial;
            f_lo = f;
            dg_lo = dg;
        }
        if (hi - lo).abs() < 1e-16 * lo.abs().max(1.0) {
            break;
        }
    }
    // Fall back to the best sufficient-decrease point found, if any.
    if lo > 0.0 && f_lo < f0 {
        let (f, _) = phi(lo, x_new, g_new)?;
        return Ok(Some(LineSearchOutcome { step: lo, value: f }));
    }
    Ok(None)
}

/// Minimizes `f`, which writes the gradient into its second argument and
/// returns the objective value.
pub fn minimize<F>(f: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let dim = x0.len();
    let mut obj = Objective { f, evaluations: 0 };
    let mut x = x0;
    let mut g = vec![0.0; dim];
    let mut value = obj.eval(&x, &mut g)?;
    let mut trace = vec![value];

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut dir = vec![0.0; dim];
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut alpha = vec![0.0; cfg.memory];
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < cfg.max_iter {
        if inf_norm(&g) <= cfg.tol {
            termination = Termination::Converged;
            break;
        }

        // Two-loop recursion: dir = -H g.
        for (d, gi) in dir.iter_mut().zip(&g) {
            *d = -gi;
        }
        for (j, (s, y, rho)) in history.iter().enumerate().rev() {
            alpha[j] = rho * dot(s, &dir);
            for (d, yi) in dir.iter_mut().zip(y) {
                *d -= alpha[j] * yi;
            }
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            for d in dir.iter_mut() {
                *d *= gamma;
            }
        }
        for (j, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            for (d, si) in dir.iter_mut().zip(s) {
                *d += (alpha[j] - beta) * si;
            }
        }

        let initial = if history.is_empty() {
            1.0 / dot(&g, &g).sqrt().max(1e-12)
        } else {
            1.0
        };
        let mut outcome = strong_wolfe(&mut obj, cfg, &x, value, &g, &dir, initial, &mut x_new, &mut g_new)?;
        if outcome.is_none() && !history.is_empty() {
            history.clear();
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi;
            }
            let initial = 1.0 / dot(&g, &g).sqrt().max(1e-12);
            outcome = strong_wolfe(&mut obj, cfg, &x, value, &g, &dir, initial, &mut x_new, &mut g_new)?;
        }
        let Some(LineSearchOutcome { step, value: new_value }) = outcome else {
            termination = Termination::LineSearchFailed;
            break;
        };
        log::trace!("accepted step {step:e}");

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        value = new_value;
        trace.push(value);
        iterations += 1;
        log::trace!("lbfgs iter {iterations}: f = {value:.6e}, |g|inf = {:.3e}", inf_norm(&g));
    }
    if termination == Termination::MaxIterations && inf_norm(&g) <= cfg.tol {
        termination = Termination::Converged;
    }

    Ok(LbfgsResult {
        grad_inf_norm: inf_norm(&g),
        x,
        value,
        iterations,
        evaluations: obj.evaluations,
        termination,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> Result<f64> {
        let mut f = 0.0;
        g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..x.len() - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * a * x[i] - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        Ok(f)
    }

    #[test]
    fn solves_rosenbrock() {
        let res = minimize(rosenbrock, vec![-1.2, 1.0, -1.2, 1.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(res.termination, Termination::Converged);
        for v in &res.x {
            assert!((v - 1.0).abs() < 1e-4, "{:?}", res.x);
        }
    }

    #[test]
    fn trace_is_monotone() {
        let res = minimize(rosenbrock, vec![-1.2, 1.0], &LbfgsConfig::default()).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn quadratic_converges_quickly() {
        let diag = [1.0, 10.0, 100.0];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                v += 0.5 * diag[i] * (x[i] - 1.0).powi(2);
                g[i] = diag[i] * (x[i] - 1.0);
            }
            Ok(v)
        };
        let res = minimize(f, vec![0.0; 3], &LbfgsConfig { tol: 1e-10, ..Default::default() }).unwrap();
        assert_eq!(res.termination, Termination::Converged);
        assert!(res.iterations < 30);
    }

    #[test]
    fn non_finite_objective_aborts() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            Ok(if x[0] < -0.5 { f64::NAN } else { x[0] })
        };
        assert!(matches!(
            minimize(f, vec![0.0], &LbfgsConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn cubic_interpolation_is_interior() {
        let t = cubic_min(0.0, 0.0, -1.0, 1.0, 0.5, 2.0);
        assert!(t > 0.1 && t < 0.9);
    }
}
