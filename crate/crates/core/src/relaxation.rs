//! McCormick LP relaxation of a QCQP node.
//!
//! Every product `x_i x_j` that appears in the instance is replaced by an
//! auxiliary column `w_ij` bounded by the four McCormick inequalities of the
//! current box. Columns are laid out as `x_0..x_{n-1}` followed by one `w`
//! per pair of [`QcqpInstance::quadratic_pairs`].

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::instance::{QcqpInstance, QuadTerm, VarBox};
use crate::lp::{solve_lp, LpProblem, LpStatus, RowSense};

#[derive(Debug, Error, PartialEq)]
pub enum RelaxationError {
    #[error("box is empty at variable {0}")]
    BoxEmpty(usize),
    #[error("branching point {alpha} outside [{lb}, {ub}] of variable {var}")]
    AlphaOutsideBox { var: usize, alpha: f64, lb: f64, ub: f64 },
    #[error("box has {got} variables, instance has {n}")]
    Dimension { got: usize, n: usize },
}

/// Which child of a split `x_i <= alpha` / `x_i >= alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Side {
    /// `x_i <= alpha`
    Left,
    /// `x_i >= alpha`
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Column layout of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationMap {
    n: usize,
    pairs: Vec<(usize, usize)>,
    index: BTreeMap<(usize, usize), usize>,
}

impl RelaxationMap {
    pub fn new(instance: &QcqpInstance) -> Self {
        let n = instance.n();
        let pairs = instance.quadratic_pairs();
        let index = pairs
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, n + k))
            .collect();
        RelaxationMap { n, pairs, index }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn num_columns(&self) -> usize {
        self.n + self.pairs.len()
    }

    /// LP column of `w_ij` (order of `i`, `j` irrelevant).
    pub fn column(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.index.get(&key).copied()
    }

    fn term_column(&self, t: &QuadTerm) -> usize {
        self.index[&(t.i, t.j)]
    }
}

/// One McCormick inequality `w + cx_i * x_i + cx_j * x_j (sense) rhs`.
/// For a diagonal pair `cx_j` is zero and `cx_i` carries the whole slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRow {
    pub cx_i: f64,
    pub cx_j: f64,
    pub sense: RowSense,
    pub rhs: f64,
}

impl EnvelopeRow {
    /// Positive amount by which `(x_i, x_j, w)` violates the row.
    pub fn violation(&self, xi: f64, xj: f64, w: f64) -> f64 {
        let act = w + self.cx_i * xi + self.cx_j * xj;
        match self.sense {
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// McCormick rows for `w = x_i x_j` over `[li, ui] x [lj, uj]`.
///
/// Off-diagonal pairs get the four classic rows (under, over, over, under).
/// A diagonal pair gets the two tangent underestimators at the interval ends
/// and the secant overestimator.
pub fn envelope_rows(li: f64, ui: f64, lj: f64, uj: f64, diagonal: bool) -> Vec<EnvelopeRow> {
    if diagonal {
        vec![
            EnvelopeRow {
                cx_i: -2.0 * li,
                cx_j: 0.0,
                sense: RowSense::Ge,
                rhs: -li * li,
            },
            EnvelopeRow {
                cx_i: -(li + ui),
                cx_j: 0.0,
                sense: RowSense::Le,
                rhs: -li * ui,
            },
            EnvelopeRow {
                cx_i: -2.0 * ui,
                cx_j: 0.0,
                sense: RowSense::Ge,
                rhs: -ui * ui,
            },
        ]
    } else {
        vec![
            EnvelopeRow {
                cx_i: -lj,
                cx_j: -li,
                sense: RowSense::Ge,
                rhs: -li * lj,
            },
            EnvelopeRow {
                cx_i: -uj,
                cx_j: -li,
                sense: RowSense::Le,
                rhs: -li * uj,
            },
            EnvelopeRow {
                cx_i: -lj,
                cx_j: -ui,
                sense: RowSense::Le,
                rhs: -ui * lj,
            },
            EnvelopeRow {
                cx_i: -uj,
                cx_j: -ui,
                sense: RowSense::Ge,
                rhs: -ui * uj,
            },
        ]
    }
}

/// Largest violation of the envelope of the pair at the given point.
pub fn envelope_violation(
    b: &VarBox,
    (i, j): (usize, usize),
    x: &[f64],
    w: f64,
) -> f64 {
    envelope_rows(b.lower(i), b.upper(i), b.lower(j), b.upper(j), i == j)
        .iter()
        .map(|r| r.violation(x[i], x[j], w))
        .fold(0.0, f64::max)
}

/// Range of `x_i x_j` over the box.
pub fn product_range(li: f64, ui: f64, lj: f64, uj: f64, diagonal: bool) -> (f64, f64) {
    if diagonal {
        let (a, b) = (li * li, ui * ui);
        let hi = a.max(b);
        let lo = if li <= 0.0 && ui >= 0.0 { 0.0 } else { a.min(b) };
        (lo, hi)
    } else {
        let c = [li * lj, li * uj, ui * lj, ui * uj];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Builds the McCormick LP of `instance` over `node_box`.
pub fn build_relaxation(
    instance: &QcqpInstance,
    map: &RelaxationMap,
    node_box: &VarBox,
) -> Result<LpProblem, RelaxationError> {
    let n = instance.n();
    if node_box.len() != n {
        return Err(RelaxationError::Dimension {
            got: node_box.len(),
            n,
        });
    }
    if let Some(i) = node_box.empty_at() {
        return Err(RelaxationError::BoxEmpty(i));
    }
    let ncols = map.num_columns();
    let mut lower = Vec::with_capacity(ncols);
    let mut upper = Vec::with_capacity(ncols);
    lower.extend_from_slice(node_box.lb());
    upper.extend_from_slice(node_box.ub());
    for &(i, j) in map.pairs() {
        let (lo, hi) = product_range(
            node_box.lower(i),
            node_box.upper(i),
            node_box.lower(j),
            node_box.upper(j),
            i == j,
        );
        lower.push(lo);
        upper.push(hi);
    }

    let objective_form = instance.objective();
    let mut objective = vec![0.0; ncols];
    objective[..n].copy_from_slice(objective_form.linear());
    for t in objective_form.quad() {
        objective[map.term_column(t)] += t.coef;
    }
    let mut lp = LpProblem::new(lower, upper, objective);
    lp.offset = objective_form.constant();

    for c in instance.constraints() {
        let mut coefs: Vec<(usize, f64)> = c
            .linear()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        coefs.extend(c.quad().iter().map(|t| (map.term_column(t), t.coef)));
        lp.add_row(coefs, RowSense::Le, c.rhs());
    }

    for &(i, j) in map.pairs() {
        let w = map.column(i, j).expect("pair has a column");
        let rows = envelope_rows(
            node_box.lower(i),
            node_box.upper(i),
            node_box.lower(j),
            node_box.upper(j),
            i == j,
        );
        for r in rows {
            let coefs = if i == j {
                vec![(w, 1.0), (i, r.cx_i)]
            } else {
                vec![(w, 1.0), (i, r.cx_i), (j, r.cx_j)]
            };
            lp.add_row(coefs, r.sense, r.rhs);
        }
    }
    Ok(lp)
}

/// The node box with variable `var` restricted to one side of `alpha`.
pub fn child_box(
    node_box: &VarBox,
    var: usize,
    side: Side,
    alpha: f64,
) -> Result<VarBox, RelaxationError> {
    let (lb, ub) = (node_box.lower(var), node_box.upper(var));
    if !(alpha >= lb && alpha <= ub) {
        return Err(RelaxationError::AlphaOutsideBox { var, alpha, lb, ub });
    }
    let mut child = node_box.clone();
    match side {
        Side::Left => child.set_upper(var, alpha),
        Side::Right => child.set_lower(var, alpha),
    }
    Ok(child)
}

/// Relaxation of the child `x_var <= alpha` (Left) or `x_var >= alpha`
/// (Right); the envelopes touching `var` are rebuilt with the new bound.
pub fn child_relaxation(
    instance: &QcqpInstance,
    map: &RelaxationMap,
    node_box: &VarBox,
    var: usize,
    side: Side,
    alpha: f64,
) -> Result<LpProblem, RelaxationError> {
    let child = child_box(node_box, var, side, alpha)?;
    build_relaxation(instance, map, &child)
}

/// Result of solving a relaxation.
#[derive(Debug, Clone, PartialEq)]
pub enum RelaxOutcome {
    /// `point` holds all LP columns (`x` then `w`).
    Optimal { objective: f64, point: Vec<f64> },
    Infeasible,
    /// Numerical trouble or iteration limit; carries no usable bound.
    Failed(LpStatus),
}

impl RelaxOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            RelaxOutcome::Optimal { objective, .. } => Some(*objective),
            _ => None,
        }
    }
}

/// Instance plus its column layout; solves node and child relaxations.
#[derive(Debug, Clone)]
pub struct Relaxer<'a> {
    instance: &'a QcqpInstance,
    map: RelaxationMap,
}

impl<'a> Relaxer<'a> {
    pub fn new(instance: &'a QcqpInstance) -> Self {
        Relaxer {
            instance,
            map: RelaxationMap::new(instance),
        }
    }

    pub fn instance(&self) -> &'a QcqpInstance {
        self.instance
    }

    pub fn map(&self) -> &RelaxationMap {
        &self.map
    }

    pub fn solve(&self, node_box: &VarBox) -> Result<RelaxOutcome, RelaxationError> {
        let lp = build_relaxation(self.instance, &self.map, node_box)?;
        let sol = solve_lp(&lp).expect("relaxation LPs are well-formed");
        Ok(match sol.status {
            LpStatus::Optimal => {
                let opt = sol.optimum.expect("optimal solution carries a point");
                RelaxOutcome::Optimal {
                    objective: opt.objective,
                    point: opt.x,
                }
            }
            LpStatus::Infeasible => RelaxOutcome::Infeasible,
            s => RelaxOutcome::Failed(s),
        })
    }

    pub fn solve_child(
        &self,
        node_box: &VarBox,
        var: usize,
        side: Side,
        alpha: f64,
    ) -> Result<RelaxOutcome, RelaxationError> {
        let child = child_box(node_box, var, side, alpha)?;
        self.solve(&child)
    }
}
