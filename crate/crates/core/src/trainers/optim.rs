//! Full-batch smooth minimization: L-BFGS with a backtracking Armijo line
//! search, or plain gradient descent with the same line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Lbfgs,
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    /// Stop when the max-norm of the gradient falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// L2 penalty on standardized non-intercept coefficients.
    pub ridge: f64,
    /// Recorded in diagnostics; the optimizer itself is deterministic.
    pub seed: u64,
    pub method: Method,
    pub memory: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self { tol: 1e-7, max_iters: 1000, ridge: 1e-6, seed: 0, method: Method::Lbfgs, memory: 10 }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if self.max_iters == 0 || self.memory == 0 {
            return Err(Error::Config("max_iters and memory must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

fn max_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f`, which returns the objective and writes the gradient into its
/// second argument. Evaluation errors at trial points are treated as an
/// infinite objective and the step is shortened; an error at the start point
/// is returned.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, cfg: &OptConfig) -> Result<OptimOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g)?;
    if !fx.is_finite() {
        return Err(Error::Numerical(format!("objective is {fx} at the starting point")));
    }
    let mut trace = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if max_norm(&g) < cfg.tol {
            break;
        }
        let mut dir = match cfg.method {
            Method::Lbfgs => two_loop(&g, &pairs),
            Method::GradientDescent => g.iter().map(|v| -v).collect(),
        };
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let mut step = if pairs.is_empty() { (1.0 / dir.iter().map(|d| d * d).sum::<f64>().sqrt()).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..80 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            match f(&x_new, &mut g_new) {
                Ok(v) if v.is_finite() && v <= fx + 1e-4 * step * slope => {
                    accepted = Some(v);
                    break;
                }
                Ok(_) | Err(Error::NonFinite { .. }) | Err(Error::Numerical(_)) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some(f_new) = accepted else {
            if pairs.is_empty() {
                break;
            }
            // Stale curvature; retry from steepest descent.
            pairs.clear();
            continue;
        };

        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        trace.push(fx);
    }

    let grad_norm = max_norm(&g);
    Ok(OptimOutcome { x, value: fx, grad_norm, iterations, converged: grad_norm < cfg.tol, trace })
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
