//! Primal heuristic supplying incumbents (upper bounds).
//!
//! A local search runs projected gradient steps on the exact-penalty merit
//! `f(x) + mu * sum_k max(0, g_k(x))`, doubling `mu` whenever the violation
//! stalls. The result is polished by trust-region sequential linear
//! programming on the same merit and, if still slightly infeasible, pushed
//! back with Newton-type restoration LPs. Only points that re-evaluate within
//! the feasibility tolerance become incumbents.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::instance::{QcqpInstance, VarBox};
use crate::lp::{solve_lp, LpProblem, LpStatus, RowSense};
use crate::relaxation::{RelaxOutcome, Relaxer};

/// Default incumbent feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSearchParams {
    pub feas_tol: f64,
    pub gradient_iterations: usize,
    pub slp_iterations: usize,
    pub max_starts: usize,
}

impl Default for LocalSearchParams {
    fn default() -> Self {
        LocalSearchParams {
            feas_tol: FEAS_TOL,
            gradient_iterations: 500,
            slp_iterations: 60,
            max_starts: 20,
        }
    }
}

/// A feasible point with its exact objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Incumbent {
    x: Vec<f64>,
    objective: f64,
    residual: f64,
}

impl Incumbent {
    /// Re-evaluates `x`; `None` unless it is feasible to `feas_tol`.
    pub fn from_point(instance: &QcqpInstance, x: Vec<f64>, feas_tol: f64) -> Option<Incumbent> {
        let e = instance.evaluate(&x).ok()?;
        let residual = e.residual();
        (residual <= feas_tol && e.objective.is_finite()).then_some(Incumbent {
            x,
            objective: e.objective,
            residual,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

struct Model<'a> {
    inst: &'a QcqpInstance,
}

impl Model<'_> {
    /// Constraint values `g_k(x) = activity - rhs` (positive when violated).
    fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.inst
            .constraints()
            .iter()
            .map(|c| c.activity(x) - c.rhs())
            .collect()
    }

    fn violation(&self, x: &[f64]) -> f64 {
        self.constraint_values(x).iter().map(|g| g.max(0.0)).sum()
    }

    fn merit(&self, x: &[f64], mu: f64) -> f64 {
        self.inst.objective().value(x) + mu * self.violation(x)
    }

    fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.inst.objective().add_gradient(x, &mut g);
        g
    }

    fn constraint_gradient(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.inst.constraints()[k].add_gradient(x, &mut g);
        g
    }
}

fn box_scale(b: &VarBox) -> f64 {
    (0..b.len()).map(|i| b.width(i)).fold(0.0, f64::max).max(1e-3)
}

fn projected_gradient(
    model: &Model,
    b: &VarBox,
    mut x: Vec<f64>,
    mut mu: f64,
    iterations: usize,
) -> (Vec<f64>, f64) {
    let scale = box_scale(b);
    let mut step = 0.1 * scale;
    let mut merit = model.merit(&x, mu);
    let mut last_violation = model.violation(&x);
    for it in 0..iterations {
        let mut grad = model.objective_gradient(&x);
        let g = model.constraint_values(&x);
        for (k, gk) in g.iter().enumerate() {
            if *gk > 0.0 {
                for (a, v) in grad.iter_mut().zip(model.constraint_gradient(k, &x)) {
                    *a += mu * v;
                }
            }
        }
        let norm = grad.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if norm == 0.0 {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 * scale {
            let mut trial: Vec<f64> = x
                .iter()
                .zip(&grad)
                .map(|(v, d)| v - step * d / norm)
                .collect();
            b.clamp(&mut trial);
            let trial_merit = model.merit(&trial, mu);
            if trial_merit < merit {
                x = trial;
                merit = trial_merit;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if (it + 1) % 25 == 0 {
            let v = model.violation(&x);
            if v > 0.0 && v > 0.9 * last_violation {
                mu = (mu * 2.0).min(1e8);
                merit = model.merit(&x, mu);
            }
            last_violation = v;
        }
    }
    (x, mu)
}

/// Trust-region SLP on the exact-penalty merit.
fn slp_polish(
    model: &Model,
    b: &VarBox,
    mut x: Vec<f64>,
    mut mu: f64,
    iterations: usize,
    feas_tol: f64,
) -> Vec<f64> {
    let n = x.len();
    let m = model.inst.m();
    let max_radius = box_scale(b);
    let mut radius = 0.1 * max_radius;
    for _ in 0..iterations {
        let g = model.constraint_values(&x);
        let grad_f = model.objective_gradient(&x);
        let grads: Vec<Vec<f64>> = (0..m).map(|k| model.constraint_gradient(k, &x)).collect();
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for j in 0..n {
            lower.push((b.lower(j) - x[j]).max(-radius).min(0.0));
            upper.push((b.upper(j) - x[j]).min(radius).max(0.0));
        }
        for k in 0..m {
            let reach: f64 = grads[k].iter().map(|v| v.abs()).sum::<f64>() * radius;
            lower.push(0.0);
            upper.push(g[k].max(0.0) + reach + 1.0);
        }
        let mut objective = grad_f.clone();
        objective.extend(std::iter::repeat(mu).take(m));
        let mut lp = LpProblem::new(lower, upper, objective);
        for k in 0..m {
            let mut coefs: Vec<(usize, f64)> = grads[k]
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect();
            coefs.push((n + k, -1.0));
            lp.add_row(coefs, RowSense::Le, -g[k]);
        }
        let sol = match solve_lp(&lp) {
            Ok(s) if s.status == LpStatus::Optimal => s,
            _ => break,
        };
        let step = sol.optimum.expect("optimal").x;
        let current_violation: f64 = g.iter().map(|v| v.max(0.0)).sum();
        let model_value: f64 = (0..n).map(|j| grad_f[j] * step[j]).sum::<f64>()
            + mu * step[n..].iter().sum::<f64>();
        let predicted = mu * current_violation - model_value;
        let scale = 1.0 + model.inst.objective().value(&x).abs();
        if predicted <= 1e-12 * scale {
            if current_violation > feas_tol && mu < 1e8 {
                mu *= 10.0;
                continue;
            }
            break;
        }
        let mut trial: Vec<f64> = x.iter().zip(&step).map(|(v, d)| v + d).collect();
        b.clamp(&mut trial);
        let actual = model.merit(&x, mu) - model.merit(&trial, mu);
        if actual >= 0.1 * predicted {
            x = trial;
            if actual >= 0.75 * predicted {
                radius = (2.0 * radius).min(max_radius);
            }
        } else {
            radius *= 0.25;
            if radius < 1e-10 * max_radius {
                break;
            }
        }
    }
    x
}

/// Minimum-displacement Newton steps onto the linearised feasible set.
fn restore(model: &Model, b: &VarBox, mut x: Vec<f64>, feas_tol: f64) -> Vec<f64> {
    let n = x.len();
    let m = model.inst.m();
    for _ in 0..20 {
        let g = model.constraint_values(&x);
        if g.iter().all(|v| *v <= 0.1 * feas_tol) {
            break;
        }
        let mut lower = vec![0.0; 2 * n];
        let mut upper = vec![0.0; 2 * n];
        for j in 0..n {
            upper[j] = (b.upper(j) - x[j]).max(0.0);
            upper[n + j] = (x[j] - b.lower(j)).max(0.0);
            lower[j] = 0.0;
            lower[n + j] = 0.0;
        }
        let mut lp = LpProblem::new(lower, upper, vec![1.0; 2 * n]);
        for k in 0..m {
            let grad = model.constraint_gradient(k, &x);
            let mut coefs = Vec::with_capacity(2 * n);
            for (j, v) in grad.iter().enumerate() {
                if *v != 0.0 {
                    coefs.push((j, *v));
                    coefs.push((n + j, -*v));
                }
            }
            // Aim slightly inside so the curvature term does not push back out.
            lp.add_row(coefs, RowSense::Le, -g[k] - 0.1 * feas_tol);
        }
        let Ok(sol) = solve_lp(&lp) else { break };
        let Some(opt) = sol.optimum else { break };
        for j in 0..n {
            x[j] += opt.x[j] - opt.x[n + j];
        }
        b.clamp(&mut x);
    }
    x
}

/// Local search from `start` inside `b`.
///
/// The returned point is feasible to `params.feas_tol`; when `start` itself is
/// feasible the result never has a larger objective.
pub fn local_improve(
    instance: &QcqpInstance,
    b: &VarBox,
    start: &[f64],
    params: &LocalSearchParams,
) -> Option<Incumbent> {
    if b.is_empty() || start.len() != instance.n() {
        return None;
    }
    let model = Model { inst: instance };
    let mut x0 = start.to_vec();
    b.clamp(&mut x0);
    let start_incumbent = Incumbent::from_point(instance, x0.clone(), params.feas_tol);

    let (x, mu) = projected_gradient(&model, b, x0, 10.0, params.gradient_iterations);
    let x = slp_polish(&model, b, x, mu, params.slp_iterations, params.feas_tol);
    let x = restore(&model, b, x, params.feas_tol);
    let found = Incumbent::from_point(instance, x, params.feas_tol);

    match (found, start_incumbent) {
        (Some(f), Some(s)) => Some(if s.objective < f.objective { s } else { f }),
        (f, s) => f.or(s),
    }
}

/// Multi-start search over the global box: box center, root relaxation
/// point, then seeded perturbations of the relaxation point and uniform
/// random points. At most `params.max_starts` starts; the budget is checked
/// after every start, so a zero budget runs the center start only.
pub fn root_incumbent(
    instance: &QcqpInstance,
    budget: Duration,
    seed: u64,
    params: &LocalSearchParams,
) -> Option<Incumbent> {
    let clock = Instant::now();
    let b = instance.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relax_point = match Relaxer::new(instance).solve(b) {
        Ok(RelaxOutcome::Optimal { point, .. }) => Some(point[..instance.n()].to_vec()),
        _ => None,
    };
    let mut best: Option<Incumbent> = None;
    for start_index in 0..params.max_starts.max(1) {
        let start: Vec<f64> = match (start_index, &relax_point) {
            (0, _) => b.center(),
            (1, Some(p)) => p.clone(),
            (k, Some(p)) if k % 2 == 0 => p
                .iter()
                .enumerate()
                .map(|(i, v)| v + 0.2 * b.width(i) * (rng.gen::<f64>() - 0.5))
                .collect(),
            _ => (0..b.len())
                .map(|i| b.lower(i) + b.width(i) * rng.gen::<f64>())
                .collect(),
        };
        if let Some(inc) = local_improve(instance, b, &start, params) {
            if best.as_ref().map_or(true, |cur| inc.objective < cur.objective) {
                best = Some(inc);
            }
        }
        if clock.elapsed() >= budget {
            break;
        }
    }
    best
}
