//! Violation-balancing rule: split the most violated product at the point
//! where the two children inherit envelope violations that are as close
//! to equal as possible.

use crate::instance::VarBox;
use crate::relaxation::{envelope_violation, RelaxationMap, Side};

use super::{fallback_decision, BranchAction, BranchDecision, BranchParams, NodeContext};

/// Below this gap `|x_i x_j - w|` counts as satisfied.
const VIOLATION_TOL: f64 = 1e-9;

/// Equally spaced interior points `lb + k * width / (count + 1)`.
pub fn balance_scan_points(lb: f64, ub: f64, count: usize) -> Vec<f64> {
    let w = ub - lb;
    (1..=count)
        .map(|k| lb + w * k as f64 / (count + 1) as f64)
        .collect()
}

/// Envelope violations `(v_L, v_R)` inherited by the two children of a
/// split of `var` at `alpha`. The relaxation point is projected into each
/// child box; `w` keeps its value.
pub fn balance_violations(
    node_box: &VarBox,
    pair: (usize, usize),
    x: &[f64],
    w: f64,
    var: usize,
    alpha: f64,
) -> (f64, f64) {
    let side = |s: Side| {
        let mut b = node_box.clone();
        match s {
            Side::Left => b.set_upper(var, alpha),
            Side::Right => b.set_lower(var, alpha),
        }
        let mut p = x.to_vec();
        b.clamp(&mut p);
        envelope_violation(&b, pair, &p, w)
    };
    (side(Side::Left), side(Side::Right))
}

pub fn balance_select(ctx: &NodeContext, params: &BranchParams) -> BranchDecision {
    let map = RelaxationMap::new(ctx.instance);
    let b = ctx.node_box;
    let x = ctx.relax_point;
    let splittable = |v: usize| b.width(v) > params.min_width;

    let mut worst: Option<((usize, usize), f64, f64)> = None;
    for &(i, j) in map.pairs() {
        if !splittable(i) && !splittable(j) {
            continue;
        }
        let col = map.column(i, j).expect("pair has a column");
        let w = x[col];
        let gap = (w - x[i] * x[j]).abs();
        if worst.map_or(true, |(_, g, _)| gap > g) {
            worst = Some(((i, j), gap, w));
        }
    }
    let Some((pair, gap, w)) = worst.filter(|&(_, g, _)| g > VIOLATION_TOL) else {
        return fallback_decision(ctx.instance, b, params);
    };

    // (|v_L - v_R|, min(v_L, v_R), var, alpha)
    let mut best: Option<(f64, f64, usize, f64)> = None;
    let mut vars = vec![pair.0, pair.1];
    vars.dedup();
    for var in vars.into_iter().filter(|&v| splittable(v)) {
        for alpha in balance_scan_points(b.lower(var), b.upper(var), params.balance_points) {
            let (vl, vr) = balance_violations(b, pair, x, w, var, alpha);
            let diff = (vl - vr).abs();
            let low = vl.min(vr);
            let better = match best {
                None => true,
                Some((bd, bl, ..)) => {
                    let tol = 1e-12 * (1.0 + gap);
                    diff < bd - tol || (diff <= bd + tol && low > bl + tol)
                }
            };
            if better {
                best = Some((diff, low, var, alpha));
            }
        }
    }
    match best {
        Some((diff, _, var, alpha)) => BranchDecision::new(
            BranchAction::Branch {
                var,
                alpha,
                score: -diff,
            },
            b.clone(),
        ),
        None => fallback_decision(ctx.instance, b, params),
    }
}
