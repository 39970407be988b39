//! Deterministic limited-memory BFGS with a backtracking Armijo line search.
//!
//! Every accepted step strictly decreases the objective, so the returned point
//! is never worse than the starting point.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// How the stopping test measures the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradNorm {
    L2,
    LInf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptConfig {
    /// Stop once the gradient norm falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub norm: GradNorm,
    /// Number of curvature pairs kept.
    pub history: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_iterations: 500,
            norm: GradNorm::L2,
            history: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptReport {
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

fn norm(g: &[f64], kind: GradNorm) -> f64 {
    match kind {
        GradNorm::L2 => g.iter().map(|x| x * x).sum::<f64>().sqrt(),
        GradNorm::LInf => g.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative rounding error tolerated in the objective by the line search.
pub const NOISE: f64 = 1e-13;

/// Minimizes `f`, which returns the objective and its gradient at a point.
///
/// `x` holds the starting point on entry and the best point found on return.
/// A non-finite objective or gradient anywhere along the way yields
/// [`Error::Divergence`]. Accepted steps decrease the objective, except that
/// close to a minimizer a step may raise it by at most [`NOISE`] relative
/// when it reduces the gradient.
pub fn minimize<F>(mut f: F, x: &mut Vec<f64>, config: &OptConfig) -> Result<OptReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x.len();
    let (mut fx, mut g) = f(x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence);
    }
    let mut trace = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut gnorm = norm(&g, config.norm);

    while gnorm > config.tolerance && iterations < config.max_iterations {
        // Two-loop recursion for the search direction.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }

        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // Curvature history went bad; fall back to steepest descent.
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if pairs.is_empty() {
            (1.0 / norm(&d, GradNorm::L2)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial)?;
            if ft.is_nan() || gt.iter().any(|v| v.is_nan()) {
                return Err(Error::Divergence);
            }
            if !ft.is_finite() {
                step *= 0.5;
                continue;
            }
            let armijo = ft <= fx + 1e-4 * step * slope && ft < fx;
            // Near a minimizer the decrease drops below the rounding error of
            // the objective; accept a step that is flat within that error and
            // shrinks both the directional derivative and the gradient.
            let flat = ft <= fx + NOISE * fx.abs().max(1.0)
                && dot(&gt, &d).abs() <= 0.9 * slope.abs()
                && norm(&gt, config.norm) < gnorm;
            if armijo || flat {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            // No decrease representable in floating point.
            break;
        };

        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == config.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        *x = trial;
        fx = ft;
        g = gt;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence);
        }
        gnorm = norm(&g, config.norm);
        trace.push(fx);
        iterations += 1;
    }

    debug_assert_eq!(x.len(), n);
    Ok(OptReport {
        objective: fx,
        gradient_norm: gnorm,
        iterations,
        converged: gnorm <= config.tolerance,
        trace,
    })
}
