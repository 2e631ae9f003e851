//! QCQP data model, JSON instance format, and exact evaluation.
//!
//! An instance is
//!
//! ```text
//! min  x'Q0x + p0'x + c0
//! s.t. x'Qkx + pk'x <= rk    k = 1..m
//!      lb <= x <= ub
//! ```
//!
//! Quadratic forms are stored as polynomial terms `coef * x_i * x_j` with
//! `i <= j`; the two symmetric halves of an off-diagonal entry are summed
//! into a single term when the instance is built.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("non-finite coefficient at {path}")]
    NonFinite { path: String },
    #[error("index out of range at {path}: {index} not in 1..={n}")]
    IndexOutOfRange { path: String, index: usize, n: usize },
    #[error("bound inversion at variable {var}")]
    BoundInversion { var: usize },
    #[error("length mismatch at {path}: expected {expected}, got {got}")]
    Length { path: String, expected: usize, got: usize },
    #[error("unsupported constraint sense {sense:?} at {path}")]
    Sense { path: String, sense: String },
    #[error("dimension mismatch: expected a point of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A single product term `coef * x_i * x_j`, zero-based, `i <= j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTerm {
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

impl QuadTerm {
    pub fn is_diagonal(&self) -> bool {
        self.i == self.j
    }
}

/// Sums symmetric duplicates, orients every term with `i <= j` and drops
/// exact zeros. The output is sorted by `(i, j)`.
fn merge_terms(terms: impl IntoIterator<Item = (usize, usize, f64)>) -> Vec<QuadTerm> {
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, j, coef) in terms {
        let key = if i <= j { (i, j) } else { (j, i) };
        *merged.entry(key).or_insert(0.0) += coef;
    }
    merged
        .into_iter()
        .filter(|&(_, c)| c != 0.0)
        .map(|((i, j), coef)| QuadTerm { i, j, coef })
        .collect()
}

fn quad_value(terms: &[QuadTerm], x: &[f64]) -> f64 {
    terms.iter().map(|t| t.coef * x[t.i] * x[t.j]).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Adds the gradient of `x'Qx + p'x` at `x` into `grad`.
fn add_gradient(terms: &[QuadTerm], linear: &[f64], x: &[f64], grad: &mut [f64]) {
    for (g, p) in grad.iter_mut().zip(linear) {
        *g += p;
    }
    for t in terms {
        if t.is_diagonal() {
            grad[t.i] += 2.0 * t.coef * x[t.i];
        } else {
            grad[t.i] += t.coef * x[t.j];
            grad[t.j] += t.coef * x[t.i];
        }
    }
}

/// Quadratic objective `x'Q0x + p0'x + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    quad: Vec<QuadTerm>,
    linear: Vec<f64>,
    constant: f64,
}

impl QuadForm {
    /// Terms are zero-based `(i, j, coef)` triples in any orientation.
    pub fn new(
        terms: impl IntoIterator<Item = (usize, usize, f64)>,
        linear: Vec<f64>,
        constant: f64,
    ) -> Self {
        QuadForm {
            quad: merge_terms(terms),
            linear,
            constant,
        }
    }

    pub fn quad(&self) -> &[QuadTerm] {
        &self.quad
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        quad_value(&self.quad, x) + dot(&self.linear, x) + self.constant
    }

    pub fn add_gradient(&self, x: &[f64], grad: &mut [f64]) {
        add_gradient(&self.quad, &self.linear, x, grad);
    }
}

/// Constraint `x'Qx + p'x <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    quad: Vec<QuadTerm>,
    linear: Vec<f64>,
    rhs: f64,
}

impl QuadConstraint {
    pub fn new(
        terms: impl IntoIterator<Item = (usize, usize, f64)>,
        linear: Vec<f64>,
        rhs: f64,
    ) -> Self {
        QuadConstraint {
            quad: merge_terms(terms),
            linear,
            rhs,
        }
    }

    pub fn quad(&self) -> &[QuadTerm] {
        &self.quad
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    /// Left-hand side `x'Qx + p'x`.
    pub fn activity(&self, x: &[f64]) -> f64 {
        quad_value(&self.quad, x) + dot(&self.linear, x)
    }

    /// `rhs - activity`; negative when violated.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.activity(x)
    }

    pub fn add_gradient(&self, x: &[f64], grad: &mut [f64]) {
        add_gradient(&self.quad, &self.linear, x, grad);
    }

    fn negated(&self) -> QuadConstraint {
        QuadConstraint {
            quad: self
                .quad
                .iter()
                .map(|t| QuadTerm { coef: -t.coef, ..*t })
                .collect(),
            linear: self.linear.iter().map(|v| -v).collect(),
            rhs: -self.rhs,
        }
    }
}

/// Per-variable bounds of a node. An inverted interval is kept as-is and
/// reported by [`VarBox::empty_at`]; nothing is clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarBox {
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl VarBox {
    pub fn new(lb: Vec<f64>, ub: Vec<f64>) -> Self {
        assert_eq!(lb.len(), ub.len(), "box bound vectors differ in length");
        VarBox { lb, ub }
    }

    pub fn len(&self) -> usize {
        self.lb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty_at().is_some()
    }

    /// First variable whose interval is inverted.
    pub fn empty_at(&self) -> Option<usize> {
        self.lb.iter().zip(&self.ub).position(|(l, u)| l > u)
    }

    pub fn lb(&self) -> &[f64] {
        &self.lb
    }

    pub fn ub(&self) -> &[f64] {
        &self.ub
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.lb[i]
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.ub[i]
    }

    pub fn width(&self, i: usize) -> f64 {
        self.ub[i] - self.lb[i]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.lb[i] + self.ub[i])
    }

    pub fn set_lower(&mut self, i: usize, v: f64) {
        self.lb[i] = v;
    }

    pub fn set_upper(&mut self, i: usize, v: f64) {
        self.ub[i] = v;
    }

    /// Raises `lb_i` to `v` if that tightens it.
    pub fn raise_lower(&mut self, i: usize, v: f64) -> bool {
        if v > self.lb[i] {
            self.lb[i] = v;
            true
        } else {
            false
        }
    }

    /// Lowers `ub_i` to `v` if that tightens it.
    pub fn lower_upper(&mut self, i: usize, v: f64) -> bool {
        if v < self.ub[i] {
            self.ub[i] = v;
            true
        } else {
            false
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.len()
            && x
                .iter()
                .zip(self.lb.iter().zip(&self.ub))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lb.iter().zip(&self.ub)) {
            *v = v.max(*l).min(*u);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.midpoint(i)).collect()
    }

    /// Largest distance of `x` outside the box.
    pub fn violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lb.iter().zip(&self.ub))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Intersection with another box of the same dimension.
    pub fn intersect(&self, other: &VarBox) -> VarBox {
        VarBox {
            lb: self.lb.iter().zip(&other.lb).map(|(a, b)| a.max(*b)).collect(),
            ub: self.ub.iter().zip(&other.ub).map(|(a, b)| a.min(*b)).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &VarBox) -> bool {
        self.lb.iter().zip(&other.lb).all(|(a, b)| a >= b)
            && self.ub.iter().zip(&other.ub).all(|(a, b)| a <= b)
    }
}

/// Objective value and constraint slacks at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub slacks: Vec<f64>,
    /// Largest box violation of the point.
    pub box_violation: f64,
}

impl Evaluation {
    /// Max of constraint and box violations.
    pub fn residual(&self) -> f64 {
        self.slacks
            .iter()
            .map(|s| (-s).max(0.0))
            .fold(self.box_violation, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.residual() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    name: String,
    objective: QuadForm,
    constraints: Vec<QuadConstraint>,
    bounds: VarBox,
}

impl QcqpInstance {
    /// Validates dimensions, indices, finiteness and bound order.
    pub fn new(
        name: impl Into<String>,
        objective: QuadForm,
        constraints: Vec<QuadConstraint>,
        bounds: VarBox,
    ) -> Result<Self, InstanceError> {
        let n = bounds.len();
        let check_form = |path: &str,
                          quad: &[QuadTerm],
                          linear: &[f64],
                          scalar: f64|
         -> Result<(), InstanceError> {
            if linear.len() != n {
                return Err(InstanceError::Length {
                    path: format!("{path}.linear"),
                    expected: n,
                    got: linear.len(),
                });
            }
            for (k, t) in quad.iter().enumerate() {
                if t.j >= n {
                    return Err(InstanceError::IndexOutOfRange {
                        path: format!("{path}.pairs[{k}]"),
                        index: t.j + 1,
                        n,
                    });
                }
                if !t.coef.is_finite() {
                    return Err(InstanceError::NonFinite {
                        path: format!("{path}.pairs[{k}]"),
                    });
                }
            }
            if let Some(k) = linear.iter().position(|v| !v.is_finite()) {
                return Err(InstanceError::NonFinite {
                    path: format!("{path}.linear[{k}]"),
                });
            }
            if !scalar.is_finite() {
                return Err(InstanceError::NonFinite {
                    path: path.to_string(),
                });
            }
            Ok(())
        };
        check_form(
            "objective",
            &objective.quad,
            &objective.linear,
            objective.constant,
        )?;
        for (k, c) in constraints.iter().enumerate() {
            check_form(&format!("constraints[{k}]"), &c.quad, &c.linear, c.rhs)?;
        }
        for i in 0..n {
            if !bounds.lb[i].is_finite() {
                return Err(InstanceError::NonFinite {
                    path: format!("lb[{i}]"),
                });
            }
            if !bounds.ub[i].is_finite() {
                return Err(InstanceError::NonFinite {
                    path: format!("ub[{i}]"),
                });
            }
            if bounds.lb[i] > bounds.ub[i] {
                return Err(InstanceError::BoundInversion { var: i + 1 });
            }
        }
        Ok(QcqpInstance {
            name: name.into(),
            objective,
            constraints,
            bounds,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.bounds.len()
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &QuadForm {
        &self.objective
    }

    pub fn constraints(&self) -> &[QuadConstraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &VarBox {
        &self.bounds
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation, InstanceError> {
        if x.len() != self.n() {
            return Err(InstanceError::Dimension {
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(Evaluation {
            objective: self.objective.value(x),
            slacks: self.constraints.iter().map(|c| c.slack(x)).collect(),
            box_violation: self.bounds.violation(x),
        })
    }

    /// Unordered index pairs `(i, j)`, `i <= j`, that carry a nonzero product
    /// coefficient in the objective or any constraint. Sorted.
    pub fn quadratic_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .objective
            .quad
            .iter()
            .chain(self.constraints.iter().flat_map(|c| c.quad.iter()))
            .map(|t| (t.i, t.j))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Variables that appear in at least one product term. Sorted.
    pub fn quadratic_variables(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self
            .quadratic_pairs()
            .into_iter()
            .flat_map(|(i, j)| [i, j])
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RawInstance::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        parse_instance(text)
    }
}

impl fmt::Display for QcqpInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (n={}, m={}, pairs={})",
            self.name,
            self.n(),
            self.m(),
            self.quadratic_pairs().len()
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForm {
    #[serde(default)]
    pairs: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    linear: Option<Vec<f64>>,
    #[serde(default)]
    constant: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    #[serde(default)]
    pairs: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    linear: Option<Vec<f64>>,
    rhs: f64,
    #[serde(default = "default_sense")]
    sense: String,
}

fn default_sense() -> String {
    "<=".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    name: String,
    n: usize,
    objective: RawForm,
    #[serde(default)]
    constraints: Vec<RawConstraint>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

fn to_one_based(terms: &[QuadTerm]) -> Vec<(usize, usize, f64)> {
    terms.iter().map(|t| (t.i + 1, t.j + 1, t.coef)).collect()
}

impl From<&QcqpInstance> for RawInstance {
    fn from(inst: &QcqpInstance) -> Self {
        RawInstance {
            name: inst.name.clone(),
            n: inst.n(),
            objective: RawForm {
                pairs: to_one_based(&inst.objective.quad),
                linear: Some(inst.objective.linear.clone()),
                constant: inst.objective.constant,
            },
            constraints: inst
                .constraints
                .iter()
                .map(|c| RawConstraint {
                    pairs: to_one_based(&c.quad),
                    linear: Some(c.linear.clone()),
                    rhs: c.rhs,
                    sense: default_sense(),
                })
                .collect(),
            lb: inst.bounds.lb.clone(),
            ub: inst.bounds.ub.clone(),
        }
    }
}

fn convert_pairs(
    path: &str,
    n: usize,
    pairs: &[(usize, usize, f64)],
) -> Result<Vec<(usize, usize, f64)>, InstanceError> {
    pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j, c))| {
            for idx in [i, j] {
                if idx == 0 || idx > n {
                    return Err(InstanceError::IndexOutOfRange {
                        path: format!("{path}.pairs[{k}]"),
                        index: idx,
                        n,
                    });
                }
            }
            if !c.is_finite() {
                return Err(InstanceError::NonFinite {
                    path: format!("{path}.pairs[{k}]"),
                });
            }
            Ok((i - 1, j - 1, c))
        })
        .collect()
}

fn convert_linear(path: &str, n: usize, linear: Option<Vec<f64>>) -> Result<Vec<f64>, InstanceError> {
    let linear = linear.unwrap_or_else(|| vec![0.0; n]);
    if linear.len() != n {
        return Err(InstanceError::Length {
            path: format!("{path}.linear"),
            expected: n,
            got: linear.len(),
        });
    }
    Ok(linear)
}

/// Parses and validates a JSON instance document (1-based indices).
///
/// `>=` constraints are negated and `==` constraints are split into a pair
/// of `<=` rows, so the resulting model only carries `<=` constraints.
pub fn parse_instance(text: &str) -> Result<QcqpInstance, InstanceError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawInstance = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        InstanceError::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    let n = raw.n;
    for (field, v) in [("lb", &raw.lb), ("ub", &raw.ub)] {
        if v.len() != n {
            return Err(InstanceError::Length {
                path: field.to_string(),
                expected: n,
                got: v.len(),
            });
        }
    }
    for i in 0..n {
        if raw.lb[i] > raw.ub[i] {
            return Err(InstanceError::BoundInversion { var: i + 1 });
        }
    }
    let objective = QuadForm::new(
        convert_pairs("objective", n, &raw.objective.pairs)?,
        convert_linear("objective", n, raw.objective.linear)?,
        raw.objective.constant,
    );
    let mut constraints = Vec::with_capacity(raw.constraints.len());
    for (k, c) in raw.constraints.into_iter().enumerate() {
        let path = format!("constraints[{k}]");
        let row = QuadConstraint::new(
            convert_pairs(&path, n, &c.pairs)?,
            convert_linear(&path, n, c.linear)?,
            c.rhs,
        );
        match c.sense.as_str() {
            "<=" => constraints.push(row),
            ">=" => constraints.push(row.negated()),
            "=" | "==" => {
                let neg = row.negated();
                constraints.push(row);
                constraints.push(neg);
            }
            other => {
                return Err(InstanceError::Sense {
                    path: format!("{path}.sense"),
                    sense: other.to_string(),
                })
            }
        }
    }
    QcqpInstance::new(raw.name, objective, constraints, VarBox::new(raw.lb, raw.ub))
}
