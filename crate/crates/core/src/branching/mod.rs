//! Branching rules: extreme strong branching (`esb`), basic spatial strong
//! branching (`basic`) and the violation-balancing rule (`balance`).
//!
//! All rules see the node through a [`NodeContext`] and obtain child
//! relaxation values through a [`ChildEvaluator`], which lets the selection
//! logic run against stubbed objective curves as well as real LPs.

mod balance;
mod basic;
mod esb;
mod score;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::instance::{QcqpInstance, VarBox};
use crate::relaxation::{RelaxOutcome, Relaxer, Side};

pub use balance::{balance_scan_points, balance_select, balance_violations};
pub use basic::basic_select;
pub use esb::{binary_search_step, esb_search, esb_select};
pub use score::branch_score;

/// Stability constant of the product score.
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Slack added to the incumbent value before a child counts as dominated.
pub const PRUNE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Esb,
    Basic,
    Balance,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::Basic, Rule::Balance, Rule::Esb];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Esb => "esb",
            Rule::Basic => "basic",
            Rule::Balance => "balance",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "esb" => Ok(Rule::Esb),
            "basic" => Ok(Rule::Basic),
            "balance" => Ok(Rule::Balance),
            other => Err(format!("unknown rule {other:?} (expected esb, basic or balance)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchParams {
    /// Binary-search steps per side and variable.
    pub iter_max: usize,
    pub epsilon: f64,
    /// Weight of the interval midpoint in the `basic` branching point.
    pub lambda: f64,
    pub prune_tol: f64,
    /// Consider every variable, not only those appearing in products.
    pub branch_all_vars: bool,
    /// Intervals narrower than this are not split.
    pub min_width: f64,
    /// Relative margin keeping the `basic` point off the interval ends.
    pub basic_margin: f64,
    /// Interior scan points of the `balance` rule.
    pub balance_points: usize,
}

impl Default for BranchParams {
    fn default() -> Self {
        BranchParams {
            iter_max: 4,
            epsilon: DEFAULT_EPSILON,
            lambda: 0.25,
            prune_tol: PRUNE_TOL,
            branch_all_vars: false,
            min_width: 1e-9,
            basic_margin: 0.01,
            balance_points: 63,
        }
    }
}

/// Value of one child relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProbeOutcome {
    Bound(f64),
    Infeasible,
    /// The LP gave no usable answer.
    Failed,
}

impl ProbeOutcome {
    /// Infeasible, or bound above `obj_ub + prune_tol`: the child can hold
    /// no point better than the incumbent.
    pub fn dominated(self, obj_ub: f64, prune_tol: f64) -> bool {
        match self {
            ProbeOutcome::Infeasible => true,
            ProbeOutcome::Bound(v) => v > obj_ub + prune_tol,
            ProbeOutcome::Failed => false,
        }
    }
}

pub trait ChildEvaluator {
    /// Relaxation value of the child `x_var <= alpha` (Left) or
    /// `x_var >= alpha` (Right) of `node_box`.
    fn child_objective(&mut self, node_box: &VarBox, var: usize, side: Side, alpha: f64)
        -> ProbeOutcome;
}

impl<F> ChildEvaluator for F
where
    F: FnMut(&VarBox, usize, Side, f64) -> ProbeOutcome,
{
    fn child_objective(&mut self, node_box: &VarBox, var: usize, side: Side, alpha: f64) -> ProbeOutcome {
        self(node_box, var, side, alpha)
    }
}

/// Solves child McCormick LPs, counting the solves.
pub struct LpChildEvaluator<'r, 'a> {
    relaxer: &'r Relaxer<'a>,
    pub solves: usize,
}

impl<'r, 'a> LpChildEvaluator<'r, 'a> {
    pub fn new(relaxer: &'r Relaxer<'a>) -> Self {
        LpChildEvaluator { relaxer, solves: 0 }
    }
}

impl ChildEvaluator for LpChildEvaluator<'_, '_> {
    fn child_objective(&mut self, node_box: &VarBox, var: usize, side: Side, alpha: f64) -> ProbeOutcome {
        self.solves += 1;
        match self.relaxer.solve_child(node_box, var, side, alpha) {
            Ok(RelaxOutcome::Optimal { objective, .. }) => ProbeOutcome::Bound(objective),
            Ok(RelaxOutcome::Infeasible) => ProbeOutcome::Infeasible,
            Ok(RelaxOutcome::Failed(_)) | Err(_) => ProbeOutcome::Failed,
        }
    }
}

/// What a rule sees of the node being branched.
#[derive(Debug, Clone, Copy)]
pub struct NodeContext<'a> {
    pub instance: &'a QcqpInstance,
    pub node_box: &'a VarBox,
    /// Incumbent value, `+inf` when none is known.
    pub obj_ub: f64,
    /// Optimal value of the node relaxation.
    pub obj_p: f64,
    /// Node relaxation solution: `x` followed by the `w` columns.
    pub relax_point: &'a [f64],
}

impl NodeContext<'_> {
    /// Variables eligible for branching, in index order.
    pub fn candidates(&self, params: &BranchParams) -> Vec<usize> {
        let vars = if params.branch_all_vars {
            (0..self.instance.n()).collect()
        } else {
            self.instance.quadratic_variables()
        };
        vars.into_iter()
            .filter(|&i| self.node_box.width(i) > params.min_width)
            .collect()
    }
}

/// A bound moved by a dominated probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tightening {
    pub var: usize,
    /// Side of the dominated child; Left raises the lower bound, Right
    /// lowers the upper bound.
    pub side: Side,
    pub alpha: f64,
    pub previous: f64,
    pub outcome: ProbeOutcome,
    /// Incumbent value the probe was compared against.
    pub obj_ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeKind {
    Search,
    FillIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub side: Side,
    pub alpha: f64,
    pub outcome: ProbeOutcome,
    pub kind: ProbeKind,
}

/// Binary-search state of one side of one variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideSearch {
    pub side: Side,
    pub p1: f64,
    pub p2: f64,
    /// Candidate points `B` in discovery order.
    pub candidates: Vec<f64>,
    /// Child objective per evaluated point, `O`.
    pub objectives: Vec<(f64, f64)>,
}

impl SideSearch {
    /// Left starts with `(p1, p2) = (lb, ub)`, Right with `(ub, lb)`; `p1`
    /// always marks the dominated end.
    pub fn new(side: Side, lb: f64, ub: f64) -> Self {
        let (p1, p2) = match side {
            Side::Left => (lb, ub),
            Side::Right => (ub, lb),
        };
        SideSearch {
            side,
            p1,
            p2,
            candidates: Vec::new(),
            objectives: Vec::new(),
        }
    }

    pub fn objective_at(&self, alpha: f64) -> Option<f64> {
        self.objectives
            .iter()
            .find(|(a, _)| *a == alpha)
            .map(|&(_, v)| v)
    }
}

/// Everything the `esb` rule learned about one variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub var: usize,
    pub left: SideSearch,
    pub right: SideSearch,
    pub probes: Vec<Probe>,
    /// Bounds after tightening.
    pub lb: f64,
    pub ub: f64,
    /// Scored points `(alpha, obj_L, obj_R, score)` in ascending `alpha`.
    pub scored: Vec<(f64, f64, f64, f64)>,
}

impl CandidateRecord {
    /// Left objectives non-increasing and right objectives non-decreasing
    /// in `alpha`, up to `tol`.
    pub fn curves_monotone(&self, tol: f64) -> bool {
        let sorted = |o: &[(f64, f64)]| {
            let mut v = o.to_vec();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v
        };
        let left = sorted(&self.left.objectives);
        let right = sorted(&self.right.objectives);
        left.windows(2).all(|w| w[1].1 <= w[0].1 + tol)
            && right.windows(2).all(|w| w[1].1 >= w[0].1 - tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchAction {
    Branch { var: usize, alpha: f64, score: f64 },
    /// The node holds no point better than the incumbent.
    Prune,
    /// No variable interval is wide enough to split.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchDecision {
    pub action: BranchAction,
    /// Node box after all tightenings found while branching.
    pub tightened: VarBox,
    pub fallback: bool,
    /// Known child values `(obj_L, obj_R)` at the chosen point.
    pub child_bounds: Option<(f64, f64)>,
    pub tightenings: Vec<Tightening>,
    pub records: Vec<CandidateRecord>,
    pub solves: usize,
}

impl BranchDecision {
    fn new(action: BranchAction, tightened: VarBox) -> Self {
        BranchDecision {
            action,
            tightened,
            fallback: false,
            child_bounds: None,
            tightenings: Vec::new(),
            records: Vec::new(),
            solves: 0,
        }
    }

    pub fn branch(&self) -> Option<(usize, f64)> {
        match self.action {
            BranchAction::Branch { var, alpha, .. } => Some((var, alpha)),
            _ => None,
        }
    }

    pub fn is_prune(&self) -> bool {
        self.action == BranchAction::Prune
    }
}

/// Widest product variable (or any variable with `branch_all_vars`) split
/// at its midpoint.
pub fn fallback_decision(
    instance: &QcqpInstance,
    node_box: &VarBox,
    params: &BranchParams,
) -> BranchDecision {
    let vars = if params.branch_all_vars {
        (0..instance.n()).collect()
    } else {
        instance.quadratic_variables()
    };
    let mut best: Option<(usize, f64)> = None;
    for i in vars {
        let w = node_box.width(i);
        if w > params.min_width && best.map_or(true, |(_, bw)| w > bw) {
            best = Some((i, w));
        }
    }
    let action = match best {
        Some((var, _)) => BranchAction::Branch {
            var,
            alpha: node_box.midpoint(var),
            score: f64::NEG_INFINITY,
        },
        None => BranchAction::Exhausted,
    };
    let mut d = BranchDecision::new(action, node_box.clone());
    d.fallback = true;
    d
}

/// Runs the configured rule on a node.
pub fn select(
    rule: Rule,
    ctx: &NodeContext,
    evaluator: &mut dyn ChildEvaluator,
    params: &BranchParams,
) -> BranchDecision {
    match rule {
        Rule::Esb => esb_select(ctx, evaluator, params),
        Rule::Basic => basic_select(ctx, evaluator, params),
        Rule::Balance => balance_select(ctx, params),
    }
}
