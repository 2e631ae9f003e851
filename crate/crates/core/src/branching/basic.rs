//! Basic spatial strong branching: one trial point per variable, a convex
//! combination of the interval midpoint and the relaxation value.

use crate::relaxation::Side;

use super::{
    branch_score, fallback_decision, BranchAction, BranchDecision, BranchParams, ChildEvaluator,
    NodeContext, ProbeOutcome,
};

/// Trial point `lambda * mid + (1 - lambda) * x_star`, kept `margin * width`
/// away from both ends.
pub fn basic_point(lb: f64, ub: f64, x_star: f64, lambda: f64, margin: f64) -> f64 {
    let w = ub - lb;
    let mid = 0.5 * (lb + ub);
    let a = lambda * mid + (1.0 - lambda) * x_star;
    a.clamp(lb + margin * w, ub - margin * w)
}

pub fn basic_select(
    ctx: &NodeContext,
    evaluator: &mut dyn ChildEvaluator,
    params: &BranchParams,
) -> BranchDecision {
    let mut best: Option<(f64, usize, f64, f64, f64)> = None;
    let mut solves = 0;
    // Stand-in value of an infeasible child.
    let penalty = |other: f64| {
        if ctx.obj_ub.is_finite() {
            ctx.obj_ub + params.prune_tol
        } else {
            other.max(ctx.obj_p) + ctx.obj_p.abs().max(1.0)
        }
    };
    for var in ctx.candidates(params) {
        let b = ctx.node_box;
        let alpha = basic_point(
            b.lower(var),
            b.upper(var),
            ctx.relax_point[var],
            params.lambda,
            params.basic_margin,
        );
        let l = evaluator.child_objective(b, var, Side::Left, alpha);
        let r = evaluator.child_objective(b, var, Side::Right, alpha);
        solves += 2;
        if l.dominated(ctx.obj_ub, params.prune_tol) && r.dominated(ctx.obj_ub, params.prune_tol) {
            let mut d = BranchDecision::new(BranchAction::Prune, b.clone());
            d.solves = solves;
            return d;
        }
        let (ol, or) = match (l, r) {
            (ProbeOutcome::Failed, _) | (_, ProbeOutcome::Failed) => continue,
            (ProbeOutcome::Bound(a), ProbeOutcome::Bound(c)) => (a, c),
            (ProbeOutcome::Infeasible, ProbeOutcome::Bound(c)) => (penalty(c), c),
            (ProbeOutcome::Bound(a), ProbeOutcome::Infeasible) => (a, penalty(a)),
            (ProbeOutcome::Infeasible, ProbeOutcome::Infeasible) => unreachable!(),
        };
        let s = branch_score(ol, or, ctx.obj_p, params.epsilon);
        if best.map_or(true, |b| s > b.0) {
            best = Some((s, var, alpha, ol, or));
        }
    }
    let mut d = match best {
        Some((score, var, alpha, ol, or)) => {
            let mut d = BranchDecision::new(BranchAction::Branch { var, alpha, score }, ctx.node_box.clone());
            d.child_bounds = Some((ol, or));
            d
        }
        None => fallback_decision(ctx.instance, ctx.node_box, params),
    };
    d.solves = solves;
    d
}
