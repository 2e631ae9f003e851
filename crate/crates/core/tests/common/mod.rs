//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the solver's LP engine: the textbook simplex works
//! on the standard form `min c'y, Ay (<=,>=,=) b, y >= 0` with every bound
//! written as an explicit row, and always uses Bland's rule.
#![allow(dead_code)]

use qcqp_esb::instance::QcqpInstance;
use qcqp_esb::lp::{LpProblem, RowSense};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleResult {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
}

impl OracleResult {
    pub fn objective(&self) -> Option<f64> {
        match self {
            OracleResult::Optimal { objective, .. } => Some(*objective),
            OracleResult::Infeasible => None,
        }
    }
}

/// Two-phase dense tableau simplex with Bland's rule.
pub fn textbook_simplex(p: &LpProblem) -> OracleResult {
    let n = p.lower.len();
    // Shift x = l + y, y in [0, u - l].
    let mut rows: Vec<(Vec<f64>, RowSense, f64)> = Vec::new();
    for r in &p.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &r.coefs {
            a[j] += v;
        }
        let shift: f64 = a.iter().zip(&p.lower).map(|(u, l)| u * l).sum();
        rows.push((a, r.sense, r.rhs - shift));
    }
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        rows.push((a, RowSense::Le, p.upper[j] - p.lower[j]));
    }
    for row in rows.iter_mut() {
        if row.2 < 0.0 {
            row.0.iter_mut().for_each(|v| *v = -*v);
            row.2 = -row.2;
            row.1 = match row.1 {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
    }
    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let nart = rows.iter().filter(|r| r.1 != RowSense::Le).count();
    let ncols = n + nslack + nart;
    let width = ncols + 1;
    let mut t = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let mut is_art = vec![false; ncols];
    let (mut s, mut a) = (n, n + nslack);
    for (i, (coefs, sense, rhs)) in rows.iter().enumerate() {
        t[i * width..i * width + n].copy_from_slice(coefs);
        t[i * width + ncols] = *rhs;
        match sense {
            RowSense::Le => {
                t[i * width + s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            RowSense::Ge => {
                t[i * width + s] = -1.0;
                s += 1;
                t[i * width + a] = 1.0;
                basis[i] = a;
                is_art[a] = true;
                a += 1;
            }
            RowSense::Eq => {
                t[i * width + a] = 1.0;
                basis[i] = a;
                is_art[a] = true;
                a += 1;
            }
        }
    }

    let run = |t: &mut Vec<f64>, basis: &mut Vec<usize>, cost: &[f64], allowed: &dyn Fn(usize) -> bool| {
        for _ in 0..100_000 {
            // Reduced costs.
            let mut enter = None;
            for j in 0..ncols {
                if !allowed(j) || basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..m {
                    d -= cost[basis[i]] * t[i * width + j];
                }
                if d < -1e-10 {
                    enter = Some(j);
                    break;
                }
            }
            let Some(j) = enter else { return };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let aij = t[i * width + j];
                if aij > 1e-10 {
                    let ratio = t[i * width + ncols] / aij;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && basis[i] < basis[r])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                panic!("oracle LP unbounded (bounded input expected)")
            };
            let piv = t[r * width + j];
            for k in 0..width {
                t[r * width + k] /= piv;
            }
            for i in 0..m {
                if i != r {
                    let f = t[i * width + j];
                    if f != 0.0 {
                        for k in 0..width {
                            t[i * width + k] -= f * t[r * width + k];
                        }
                    }
                }
            }
            basis[r] = j;
        }
        panic!("oracle simplex iteration cap");
    };

    let phase1: Vec<f64> = (0..ncols).map(|j| if is_art[j] { 1.0 } else { 0.0 }).collect();
    run(&mut t, &mut basis, &phase1, &|_| true);
    let infeas: f64 = (0..m)
        .filter(|&i| is_art[basis[i]])
        .map(|i| t[i * width + ncols])
        .sum();
    let scale = 1.0 + rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
    if infeas > 1e-9 * scale {
        return OracleResult::Infeasible;
    }
    let mut phase2 = vec![0.0; ncols];
    phase2[..n].copy_from_slice(&p.objective);
    let not_art = |j: usize| !is_art[j];
    run(&mut t, &mut basis, &phase2, &not_art);
    let mut y = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            y[basis[i]] = t[i * width + ncols];
        }
    }
    let x: Vec<f64> = y.iter().zip(&p.lower).map(|(v, l)| v + l).collect();
    let objective = p.objective_value(&x);
    OracleResult::Optimal { objective, x }
}

/// Random bounded LP; about one in six is made infeasible on purpose.
pub fn random_lp<R: Rng>(rng: &mut R, max_vars: usize, max_rows: usize) -> LpProblem {
    let n = rng.gen_range(1..=max_vars);
    let nrows = rng.gen_range(0..=max_rows);
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..2.0)).collect();
    let upper: Vec<f64> = lower
        .iter()
        .map(|l| if rng.gen_bool(0.05) { *l } else { l + rng.gen_range(0.1..6.0) })
        .collect();
    let objective: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let anchor: Vec<f64> = lower
        .iter()
        .zip(&upper)
        .map(|(l, u)| rng.gen_range(*l..=*u))
        .collect();
    let mut p = LpProblem::new(lower, upper, objective);
    p.offset = rng.gen_range(-1.0..1.0);
    let make_infeasible = rng.gen_bool(1.0 / 6.0);
    for r in 0..nrows {
        let density = rng.gen_range(0.2..1.0);
        let mut coefs: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(density) {
                coefs.push((j, rng.gen_range(-1.0..1.0)));
            }
        }
        let act: f64 = coefs.iter().map(|&(j, a)| a * anchor[j]).sum();
        let sense = match rng.gen_range(0..10) {
            0..=5 => RowSense::Le,
            6..=8 => RowSense::Ge,
            _ => RowSense::Eq,
        };
        let mut rhs = match sense {
            RowSense::Le => act + rng.gen_range(0.0..1.0),
            RowSense::Ge => act - rng.gen_range(0.0..1.0),
            RowSense::Eq => act,
        };
        if make_infeasible && r == 0 && !coefs.is_empty() {
            // Push the row beyond what the box allows.
            let reach: f64 = coefs
                .iter()
                .map(|&(j, a)| (a * p.lower[j]).max(a * p.upper[j]))
                .sum();
            let floor: f64 = coefs
                .iter()
                .map(|&(j, a)| (a * p.lower[j]).min(a * p.upper[j]))
                .sum();
            rhs = match sense {
                RowSense::Le => floor - 0.5,
                _ => reach + 0.5,
            };
        }
        p.add_row(coefs, sense, rhs);
    }
    p
}

/// Exhaustive grid oracle for instances whose product terms all involve
/// variable 0 (bilinear bipartite with a single left variable).
///
/// For each grid value of `x_0` the remaining problem is an LP, solved with
/// [`textbook_simplex`]. The grid has `1e-3 * width` spacing, followed by three
/// levels of local refinement around the best grid point.
pub struct GridOptimum {
    pub objective: f64,
    pub x: Vec<f64>,
}

pub fn grid_oracle(inst: &QcqpInstance) -> Option<GridOptimum> {
    for (i, j) in inst.quadratic_pairs() {
        assert!(i == 0 && j != 0, "grid oracle needs every product to be x0 * x_j");
    }
    let (lo, hi) = (inst.bounds().lower(0), inst.bounds().upper(0));
    let eval = |v: f64| fixed_lp(inst, v);
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let consider = |v: f64, best: &mut Option<(f64, f64, Vec<f64>)>| {
        if let Some((obj, x)) = eval(v) {
            if best.as_ref().map_or(true, |b| obj < b.0) {
                *best = Some((obj, v, x));
            }
        }
    };
    let steps = 1000;
    let width = hi - lo;
    for k in 0..=steps {
        let v = if k == steps { hi } else { lo + width * k as f64 / steps as f64 };
        consider(v, &mut best);
    }
    let mut radius = width / steps as f64;
    for _ in 0..3 {
        let Some((_, center, _)) = best.clone() else { break };
        let sub = 100;
        for k in 0..=2 * sub {
            let v = center - radius + radius * k as f64 / sub as f64;
            if v >= lo && v <= hi {
                consider(v, &mut best);
            }
        }
        radius /= sub as f64;
    }
    best.map(|(objective, _, x)| GridOptimum { objective, x })
}

/// Optimum over the other variables with `x_0` fixed at `v`.
fn fixed_lp(inst: &QcqpInstance, v: f64) -> Option<(f64, Vec<f64>)> {
    let n = inst.n();
    let mut lower = inst.bounds().lb().to_vec();
    let mut upper = inst.bounds().ub().to_vec();
    lower[0] = v;
    upper[0] = v;
    let obj = inst.objective();
    let mut c = obj.linear().to_vec();
    for t in obj.quad() {
        c[t.j] += t.coef * v;
    }
    let mut p = LpProblem::new(lower, upper, c);
    p.offset = obj.constant();
    for k in inst.constraints() {
        let mut a = k.linear().to_vec();
        for t in k.quad() {
            a[t.j] += t.coef * v;
        }
        p.add_row(a.into_iter().enumerate().collect(), RowSense::Le, k.rhs());
    }
    match textbook_simplex(&p) {
        OracleResult::Optimal { x, .. } => {
            let e = inst.evaluate(&x).unwrap();
            (e.residual() <= 1e-7).then_some((e.objective, x))
        }
        OracleResult::Infeasible => None,
    }
    .filter(|_| n > 0)
}
