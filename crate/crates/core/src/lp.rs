//! Dense bounded-variable primal simplex.
//!
//! Every structural column carries finite bounds. Rows are equilibrated by
//! their largest coefficient, then turned into equalities with one slack per
//! row; rows whose initial residual is outside the slack's range get an
//! artificial column and a phase-1 cost. Pricing is Dantzig's rule, falling
//! back to Bland's rule after a streak of degenerate pivots. The tableau is
//! rebuilt from the original matrix every `max(REINVERT_EVERY, rows)` pivots
//! and at the end of each phase.

use serde::Serialize;
use thiserror::Error;

/// Primal feasibility tolerance of reported optima.
pub const LP_FEAS_TOL: f64 = 1e-8;
/// Reduced-cost / duality-gap tolerance of reported optima.
pub const LP_OPT_TOL: f64 = 1e-7;

const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;
const REINVERT_EVERY: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("variable {0} has non-finite or inverted bounds")]
    Bounds(usize),
    #[error("row {row} references column {col} >= {n}")]
    Index { row: usize, col: usize, n: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("objective has {got} coefficients for {n} variables")]
    ObjectiveLength { got: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl LpRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// `min c'x + offset` over bounded columns and sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub offset: f64,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, objective: Vec<f64>) -> Self {
        LpProblem {
            lower,
            upper,
            objective,
            offset: 0.0,
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        self.rows.push(LpRow { coefs, sense, rhs });
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.len() != n {
            return Err(LpError::ObjectiveLength {
                got: self.objective.len(),
                n,
            });
        }
        if self.upper.len() != n {
            return Err(LpError::Bounds(self.upper.len().min(n)));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(LpError::Bounds(j));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::NonFinite(format!("objective[{j}]")));
            }
        }
        if !self.offset.is_finite() {
            return Err(LpError::NonFinite("offset".into()));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("rows[{r}].rhs")));
            }
            for &(col, a) in &row.coefs {
                if col >= n {
                    return Err(LpError::Index { row: r, col, n });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("rows[{r}]")));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    /// Largest row or bound violation at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let bounds = x
            .iter()
            .enumerate()
            .map(|(j, v)| (self.lower[j] - v).max(v - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        self.rows
            .iter()
            .map(|r| r.violation(x))
            .fold(bounds, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOptimum {
    /// Includes the problem offset.
    pub objective: f64,
    pub x: Vec<f64>,
    /// Row multipliers `y` with `c = A'y + d`; `y <= 0` on `<=` rows.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub optimum: Option<LpOptimum>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        LpSolution {
            status,
            optimum: None,
            iterations,
        }
    }

    pub fn objective(&self) -> Option<f64> {
        self.optimum.as_ref().map(|o| o.objective)
    }

    pub fn x(&self) -> Option<&[f64]> {
        self.optimum.as_ref().map(|o| o.x.as_slice())
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LpOptimum {
    /// `|c'x - dual objective|` computed from the stored multipliers.
    pub fn duality_gap(&self, problem: &LpProblem) -> f64 {
        let mut dual = problem.offset;
        for (row, y) in problem.rows.iter().zip(&self.duals) {
            dual += y * row.rhs;
        }
        for (j, d) in self.reduced_costs.iter().enumerate() {
            dual += if *d > 0.0 {
                d * problem.lower[j]
            } else {
                d * problem.upper[j]
            };
        }
        (problem.objective_value(&self.x) - dual).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    AtLower,
    AtUpper,
}

enum Phase {
    Done,
    Limit,
    Breakdown,
}

struct Tableau {
    m: usize,
    ncols: usize,
    nstruct: usize,
    /// Row-scaled constraint matrix including slack and artificial columns.
    a: Vec<f64>,
    b: Vec<f64>,
    tab: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    value: Vec<f64>,
    state: Vec<ColState>,
    basis: Vec<usize>,
    iterations: usize,
    max_iterations: usize,
    since_reinvert: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.tab[i * self.ncols + j]
    }

    fn reduced_costs(&self) -> Vec<f64> {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * self.ncols..(i + 1) * self.ncols];
                for (dj, t) in d.iter_mut().zip(row) {
                    *dj -= cb * t;
                }
            }
        }
        for &bj in &self.basis {
            d[bj] = 0.0;
        }
        d
    }

    /// Rebuilds `B^-1 A` and the basic values from the original matrix.
    fn reinvert(&mut self) -> bool {
        let (m, nc) = (self.m, self.ncols);
        let mut t = self.a.clone();
        let mut rhs = self.b.clone();
        for j in 0..nc {
            if self.state[j] != ColState::Basic && self.value[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= self.a[i * nc + j] * self.value[j];
                }
            }
        }
        let mut assigned = vec![false; m];
        let mut new_basis = vec![usize::MAX; m];
        for &col in &self.basis.clone() {
            let mut best = None;
            let mut best_abs = 1e-11;
            for i in 0..m {
                if !assigned[i] && t[i * nc + col].abs() > best_abs {
                    best_abs = t[i * nc + col].abs();
                    best = Some(i);
                }
            }
            let Some(p) = best else { return false };
            assigned[p] = true;
            new_basis[p] = col;
            eliminate(&mut t, &mut rhs, m, nc, p, col);
        }
        self.tab = t;
        self.basis = new_basis;
        for i in 0..m {
            self.value[self.basis[i]] = rhs[i];
        }
        self.since_reinvert = 0;
        true
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let mut dummy = vec![0.0; self.m];
        eliminate(&mut self.tab, &mut dummy, self.m, self.ncols, r, j);
        self.since_reinvert += 1;
    }

    fn run(&mut self) -> Phase {
        let mut degenerate = 0usize;
        let mut confirmations = 0usize;
        let mut d = self.reduced_costs();
        loop {
            if self.iterations >= self.max_iterations {
                return Phase::Limit;
            }
            if self.since_reinvert >= REINVERT_EVERY.max(self.m) {
                if !self.reinvert() {
                    return Phase::Breakdown;
                }
                d = self.reduced_costs();
            }
            let bland = degenerate > DEGENERATE_STREAK;
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncols {
                let dir = match self.state[j] {
                    ColState::Basic => continue,
                    _ if self.lo[j] == self.up[j] => continue,
                    ColState::AtLower if d[j] < -PRICE_TOL => 1.0,
                    ColState::AtUpper if d[j] > PRICE_TOL => -1.0,
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if d[j].abs() > best {
                    best = d[j].abs();
                    entering = Some((j, dir));
                }
            }
            let Some((j, dir)) = entering else {
                // Confirm optimality on a freshly rebuilt tableau.
                if self.since_reinvert == 0 || confirmations >= 3 {
                    return Phase::Done;
                }
                confirmations += 1;
                if !self.reinvert() {
                    return Phase::Breakdown;
                }
                d = self.reduced_costs();
                continue;
            };
            self.iterations += 1;

            let mut step = self.up[j] - self.lo[j];
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let alpha = self.at(i, j);
                if alpha.abs() < PIVOT_TOL {
                    continue;
                }
                let rate = -dir * alpha;
                let col = self.basis[i];
                let v = self.value[col];
                let (limit, target) = if rate < 0.0 {
                    ((v - self.lo[col]) / -rate, self.lo[col])
                } else {
                    ((self.up[col] - v) / rate, self.up[col])
                };
                if !limit.is_finite() && limit > 0.0 {
                    continue;
                }
                let limit = limit.max(0.0);
                let better = match leaving {
                    None => limit < step - 1e-12,
                    Some((r, _)) => {
                        if limit < step - 1e-12 {
                            true
                        } else if limit <= step + 1e-12 {
                            if bland {
                                col < self.basis[r]
                            } else {
                                alpha.abs() > self.at(r, j).abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = step.min(limit);
                    leaving = Some((i, target));
                }
            }
            if !step.is_finite() {
                return Phase::Breakdown;
            }
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..self.m {
                let alpha = self.at(i, j);
                if alpha != 0.0 {
                    self.value[self.basis[i]] -= dir * alpha * step;
                }
            }
            match leaving {
                None => {
                    let (state, v) = if dir > 0.0 {
                        (ColState::AtUpper, self.up[j])
                    } else {
                        (ColState::AtLower, self.lo[j])
                    };
                    self.state[j] = state;
                    self.value[j] = v;
                }
                Some((r, target)) => {
                    let out = self.basis[r];
                    self.value[j] += dir * step;
                    self.value[out] = target;
                    self.state[out] = if target == self.lo[out] {
                        ColState::AtLower
                    } else {
                        ColState::AtUpper
                    };
                    self.state[j] = ColState::Basic;
                    self.basis[r] = j;
                    self.pivot(r, j);
                    let dj = d[j];
                    let row = &self.tab[r * self.ncols..(r + 1) * self.ncols];
                    for (dk, t) in d.iter_mut().zip(row) {
                        if *t != 0.0 {
                            *dk -= dj * t;
                        }
                    }
                    d[j] = 0.0;
                }
            }
        }
    }
}

/// Gauss-Jordan step making column `col` the unit vector `e_p`.
fn eliminate(t: &mut [f64], rhs: &mut [f64], m: usize, nc: usize, p: usize, col: usize) {
    let piv = t[p * nc + col];
    for k in 0..nc {
        t[p * nc + k] /= piv;
    }
    rhs[p] /= piv;
    t[p * nc + col] = 1.0;
    // The pivot row is usually sparse; touch only its nonzeros.
    let prow: Vec<(usize, f64)> = t[p * nc..(p + 1) * nc]
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, v)| (k, *v))
        .collect();
    for i in 0..m {
        if i == p {
            continue;
        }
        let f = t[i * nc + col];
        if f == 0.0 {
            continue;
        }
        let row = &mut t[i * nc..(i + 1) * nc];
        for &(k, pv) in &prow {
            row[k] -= f * pv;
        }
        row[col] = 0.0;
        rhs[i] -= f * rhs[p];
    }
}

/// Solves `problem` from scratch. Deterministic for identical input.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars();

    // Merge duplicate columns inside rows; settle empty rows immediately.
    let mut rows: Vec<(Vec<(usize, f64)>, RowSense, f64, usize)> = Vec::new();
    for (r, row) in problem.rows.iter().enumerate() {
        let mut coefs = row.coefs.clone();
        coefs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        for (j, a) in coefs {
            match merged.last_mut() {
                Some((lj, la)) if *lj == j => *la += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        if merged.is_empty() {
            let ok = match row.sense {
                RowSense::Le => 0.0 <= row.rhs + LP_FEAS_TOL,
                RowSense::Ge => 0.0 >= row.rhs - LP_FEAS_TOL,
                RowSense::Eq => row.rhs.abs() <= LP_FEAS_TOL,
            };
            if !ok {
                return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
            }
            continue;
        }
        rows.push((merged, row.sense, row.rhs, r));
    }

    let m = rows.len();
    let scale: Vec<f64> = rows
        .iter()
        .map(|(c, _, _, _)| c.iter().fold(0.0f64, |s, &(_, a)| s.max(a.abs())))
        .collect();

    let mut x0: Vec<f64> = problem.lower.clone();
    // Start each column at the bound favoured by its cost.
    for j in 0..n {
        if problem.objective[j] < 0.0 {
            x0[j] = problem.upper[j];
        }
    }
    let residual: Vec<f64> = rows
        .iter()
        .zip(&scale)
        .map(|((c, _, rhs, _), s)| (rhs - c.iter().map(|&(j, a)| a * x0[j]).sum::<f64>()) / s)
        .collect();
    let mut artificial_rows = Vec::new();
    for (i, (_, sense, _, _)) in rows.iter().enumerate() {
        let fits = match sense {
            RowSense::Le => residual[i] >= 0.0,
            RowSense::Ge => residual[i] <= 0.0,
            RowSense::Eq => residual[i] == 0.0,
        };
        if !fits {
            artificial_rows.push(i);
        }
    }
    let nart = artificial_rows.len();
    let ncols = n + m + nart;

    let mut a = vec![0.0; m * ncols];
    let mut b = vec![0.0; m];
    let mut lo = vec![0.0; ncols];
    let mut up = vec![0.0; ncols];
    lo[..n].copy_from_slice(&problem.lower);
    up[..n].copy_from_slice(&problem.upper);
    for (i, (coefs, sense, rhs, _)) in rows.iter().enumerate() {
        for &(j, v) in coefs {
            a[i * ncols + j] = v / scale[i];
        }
        b[i] = rhs / scale[i];
        a[i * ncols + n + i] = 1.0;
        let (l, u) = match sense {
            RowSense::Le => (0.0, f64::INFINITY),
            RowSense::Ge => (f64::NEG_INFINITY, 0.0),
            RowSense::Eq => (0.0, 0.0),
        };
        lo[n + i] = l;
        up[n + i] = u;
    }
    let mut value = vec![0.0; ncols];
    value[..n].copy_from_slice(&x0);
    let mut state = vec![ColState::AtLower; ncols];
    for j in 0..n {
        if x0[j] == problem.upper[j] && x0[j] != problem.lower[j] {
            state[j] = ColState::AtUpper;
        }
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut cost = vec![0.0; ncols];
    for (k, &i) in artificial_rows.iter().enumerate() {
        let col = n + m + k;
        let sigma = if residual[i] > 0.0 { 1.0 } else { -1.0 };
        a[i * ncols + col] = sigma;
        lo[col] = 0.0;
        up[col] = f64::INFINITY;
        cost[col] = 1.0;
        basis[i] = col;
        // The slack leaves at its finite bound (zero).
        let slack = n + i;
        state[slack] = if lo[slack].is_finite() {
            ColState::AtLower
        } else {
            ColState::AtUpper
        };
        value[slack] = 0.0;
    }
    for &bj in &basis {
        state[bj] = ColState::Basic;
    }

    let mut tab = Tableau {
        m,
        ncols,
        nstruct: n,
        a,
        b,
        tab: Vec::new(),
        lo,
        up,
        cost,
        value,
        state,
        basis,
        iterations: 0,
        max_iterations: 50 * (m + ncols) + 1000,
        since_reinvert: 0,
    };
    if !tab.reinvert() {
        return Ok(LpSolution::without_point(LpStatus::Numerical, 0));
    }

    if nart > 0 {
        match tab.run() {
            Phase::Done => {}
            Phase::Limit => {
                return Ok(LpSolution::without_point(
                    LpStatus::IterationLimit,
                    tab.iterations,
                ))
            }
            Phase::Breakdown => {
                return Ok(LpSolution::without_point(LpStatus::Numerical, tab.iterations))
            }
        }
        let infeasibility: f64 = (n + m..ncols).map(|j| tab.value[j].max(0.0)).sum();
        if infeasibility > LP_FEAS_TOL {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, tab.iterations));
        }
        for j in n + m..ncols {
            tab.up[j] = 0.0;
            tab.cost[j] = 0.0;
            if tab.state[j] != ColState::Basic {
                tab.state[j] = ColState::AtLower;
                tab.value[j] = 0.0;
            }
        }
    }
    tab.cost[..n].copy_from_slice(&problem.objective);
    match tab.run() {
        Phase::Done => {}
        Phase::Limit => {
            return Ok(LpSolution::without_point(
                LpStatus::IterationLimit,
                tab.iterations,
            ))
        }
        Phase::Breakdown => {
            return Ok(LpSolution::without_point(LpStatus::Numerical, tab.iterations))
        }
    }
    if tab.since_reinvert > 0 && !tab.reinvert() {
        return Ok(LpSolution::without_point(LpStatus::Numerical, tab.iterations));
    }

    let x: Vec<f64> = (0..n)
        .map(|j| tab.value[j].max(problem.lower[j]).min(problem.upper[j]))
        .collect();
    let scaled_residual = rows
        .iter()
        .zip(&scale)
        .map(|((coefs, sense, rhs, _), s)| {
            LpRow {
                coefs: coefs.clone(),
                sense: *sense,
                rhs: *rhs,
            }
            .violation(&x)
                / s.max(1.0)
        })
        .fold(0.0, f64::max);
    if scaled_residual > LP_FEAS_TOL {
        return Ok(LpSolution::without_point(LpStatus::Numerical, tab.iterations));
    }

    let d = tab.reduced_costs();
    let mut duals = vec![0.0; problem.rows.len()];
    for (i, (_, _, _, orig)) in rows.iter().enumerate() {
        duals[*orig] = -d[tab.nstruct + i] / scale[i];
    }
    let reduced_costs: Vec<f64> = (0..n)
        .map(|j| {
            let mut dj = problem.objective[j];
            for (row, y) in problem.rows.iter().zip(&duals) {
                for &(col, a) in &row.coefs {
                    if col == j {
                        dj -= y * a;
                    }
                }
            }
            dj
        })
        .collect();
    let optimum = LpOptimum {
        objective: problem.objective_value(&x),
        x,
        duals,
        reduced_costs,
    };
    Ok(LpSolution {
        status: LpStatus::Optimal,
        optimum: Some(optimum),
        iterations: tab.iterations,
    })
}
