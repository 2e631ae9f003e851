//! Extreme strong branching.
//!
//! For every candidate variable two binary searches run in lockstep: the
//! left search walks from `lb` towards the smallest point whose left child
//! is not dominated by the incumbent, the right search does the same from
//! `ub`. Every dominated probe moves the corresponding bound of the node.
//! The surviving probe points are completed with the missing opposite child
//! and scored with the product rule.

use crate::instance::VarBox;
use crate::relaxation::Side;

use super::{
    branch_score, fallback_decision, BranchAction, BranchDecision, BranchParams, CandidateRecord,
    ChildEvaluator, NodeContext, Probe, ProbeKind, ProbeOutcome, SideSearch, Tightening,
};

/// One binary-search step on one side of `var`.
///
/// A dominated probe moves `p1` to the probe point and tightens the node
/// box; any other usable probe moves `p2` and becomes a candidate.
pub fn binary_search_step(
    evaluator: &mut dyn ChildEvaluator,
    node_box: &mut VarBox,
    var: usize,
    search: &mut SideSearch,
    obj_ub: f64,
    prune_tol: f64,
) -> (Probe, Option<Tightening>) {
    let (lb, ub) = (node_box.lower(var), node_box.upper(var));
    let mut alpha = 0.5 * (search.p1 + search.p2);
    if !(lb..=ub).contains(&alpha) {
        // The other side moved a bound past this search's bracket.
        search.p1 = search.p1.clamp(lb, ub);
        search.p2 = search.p2.clamp(lb, ub);
        alpha = 0.5 * (search.p1 + search.p2);
    }
    let outcome = evaluator.child_objective(node_box, var, search.side, alpha);
    let probe = Probe {
        side: search.side,
        alpha,
        outcome,
        kind: ProbeKind::Search,
    };
    if outcome.dominated(obj_ub, prune_tol) {
        search.p1 = alpha;
        let tightening = tighten(node_box, var, search.side, alpha, outcome, obj_ub);
        return (probe, tightening);
    }
    if let ProbeOutcome::Bound(v) = outcome {
        search.p2 = alpha;
        search.candidates.push(alpha);
        search.objectives.push((alpha, v));
    }
    (probe, None)
}

fn tighten(
    node_box: &mut VarBox,
    var: usize,
    side: Side,
    alpha: f64,
    outcome: ProbeOutcome,
    obj_ub: f64,
) -> Option<Tightening> {
    let previous = match side {
        Side::Left => node_box.lower(var),
        Side::Right => node_box.upper(var),
    };
    let moved = match side {
        Side::Left => node_box.raise_lower(var, alpha),
        Side::Right => node_box.lower_upper(var, alpha),
    };
    moved.then_some(Tightening {
        var,
        side,
        alpha,
        previous,
        outcome,
        obj_ub,
    })
}

/// Tightening state of one variable. A dominated child excludes its
/// boundary point too, so a bound set by a dominated probe is open.
struct Bounds {
    lb_open: bool,
    ub_open: bool,
}

impl Bounds {
    fn note(&mut self, side: Side) {
        match side {
            Side::Left => self.lb_open = true,
            Side::Right => self.ub_open = true,
        }
    }

    fn excludes_all(&self, lb: f64, ub: f64) -> bool {
        lb > ub || (lb >= ub && (self.lb_open || self.ub_open))
    }
}

/// `esb` over an explicit candidate list; the core of [`esb_select`].
pub fn esb_search(
    evaluator: &mut dyn ChildEvaluator,
    node_box: &VarBox,
    candidates: &[usize],
    obj_ub: f64,
    obj_p: f64,
    params: &BranchParams,
) -> BranchDecision {
    let mut tightened = node_box.clone();
    let mut records = Vec::with_capacity(candidates.len());
    let mut tightenings = Vec::new();
    let mut solves = 0;
    // (score, var, alpha, obj_L, obj_R)
    let mut best: Option<(f64, usize, f64, f64, f64)> = None;

    for &var in candidates {
        if tightened.width(var) <= params.min_width {
            continue;
        }
        let (lb0, ub0) = (tightened.lower(var), tightened.upper(var));
        let mut left = SideSearch::new(Side::Left, lb0, ub0);
        let mut right = SideSearch::new(Side::Right, lb0, ub0);
        let mut probes = Vec::new();
        let mut bounds = Bounds {
            lb_open: false,
            ub_open: false,
        };

        for _ in 0..params.iter_max {
            for search in [&mut left, &mut right] {
                if tightened.width(var) <= params.min_width {
                    break;
                }
                let (probe, t) = binary_search_step(
                    evaluator,
                    &mut tightened,
                    var,
                    search,
                    obj_ub,
                    params.prune_tol,
                );
                solves += 1;
                probes.push(probe);
                if probe.outcome.dominated(obj_ub, params.prune_tol) {
                    bounds.note(probe.side);
                }
                tightenings.extend(t);
            }
        }

        // Complete each candidate point with the missing child.
        let mut points: Vec<f64> = left
            .candidates
            .iter()
            .chain(&right.candidates)
            .copied()
            .collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut scored = Vec::new();
        for alpha in points {
            let mut usable = true;
            for search in [&mut left, &mut right] {
                if !usable {
                    break;
                }
                let (lb, ub) = (tightened.lower(var), tightened.upper(var));
                if !(alpha > lb && alpha < ub) {
                    usable = false;
                    break;
                }
                if search.objective_at(alpha).is_some() {
                    continue;
                }
                let outcome = evaluator.child_objective(&tightened, var, search.side, alpha);
                solves += 1;
                probes.push(Probe {
                    side: search.side,
                    alpha,
                    outcome,
                    kind: ProbeKind::FillIn,
                });
                if outcome.dominated(obj_ub, params.prune_tol) {
                    bounds.note(search.side);
                    tightenings.extend(tighten(
                        &mut tightened,
                        var,
                        search.side,
                        alpha,
                        outcome,
                        obj_ub,
                    ));
                    usable = false;
                } else if let ProbeOutcome::Bound(v) = outcome {
                    search.objectives.push((alpha, v));
                } else {
                    usable = false;
                }
            }
            if usable {
                let ol = left.objective_at(alpha).expect("left value present");
                let or = right.objective_at(alpha).expect("right value present");
                scored.push((alpha, ol, or, branch_score(ol, or, obj_p, params.epsilon)));
            }
        }

        let (lb, ub) = (tightened.lower(var), tightened.upper(var));
        // Points kept before a later tightening may now lie outside.
        scored.retain(|&(alpha, ..)| alpha > lb && alpha < ub);
        for &(alpha, ol, or, s) in &scored {
            if best.map_or(true, |b| s > b.0) {
                best = Some((s, var, alpha, ol, or));
            }
        }
        let prune = bounds.excludes_all(lb, ub);
        records.push(CandidateRecord {
            var,
            left,
            right,
            probes,
            lb,
            ub,
            scored,
        });
        if prune {
            return BranchDecision {
                action: BranchAction::Prune,
                tightened,
                fallback: false,
                child_bounds: None,
                tightenings,
                records,
                solves,
            };
        }
    }

    // The chosen point must lie strictly inside the final box.
    if let Some((_, var, alpha, ..)) = best {
        if !(alpha > tightened.lower(var) && alpha < tightened.upper(var)) {
            best = None;
        }
    }
    let (action, child_bounds) = match best {
        Some((score, var, alpha, ol, or)) => {
            (BranchAction::Branch { var, alpha, score }, Some((ol, or)))
        }
        None => (BranchAction::Exhausted, None),
    };
    BranchDecision {
        action,
        tightened,
        fallback: false,
        child_bounds,
        tightenings,
        records,
        solves,
    }
}

/// `esb` on a node, with a widest-variable fallback when no point scores.
pub fn esb_select(
    ctx: &NodeContext,
    evaluator: &mut dyn ChildEvaluator,
    params: &BranchParams,
) -> BranchDecision {
    let candidates = ctx.candidates(params);
    let d = esb_search(evaluator, ctx.node_box, &candidates, ctx.obj_ub, ctx.obj_p, params);
    if d.action != BranchAction::Exhausted {
        return d;
    }
    let mut fb = fallback_decision(ctx.instance, &d.tightened, params);
    fb.tightenings = d.tightenings;
    fb.records = d.records;
    fb.solves = d.solves;
    fb
}
