mod common;

use common::grid_oracle;
use qcqp_esb::bench::{gen_bbp, gen_pooling_toy, haverly1, PoolingKind};
use qcqp_esb::bnb::{solve, NodeEvent, SolverConfig, Verdict};
use qcqp_esb::branching::Rule;
use qcqp_esb::instance::{QcqpInstance, QuadConstraint, QuadForm, VarBox};

fn traced(rule: Rule) -> SolverConfig {
    SolverConfig {
        trace: true,
        ..SolverConfig::with_rule(rule)
    }
}

#[test]
fn haverly_optimum_is_found_by_every_rule() {
    let inst = haverly1();
    for rule in Rule::ALL {
        let r = solve(&inst, &SolverConfig::with_rule(rule));
        assert_eq!(r.verdict, Verdict::GapReached, "{rule}");
        let z = r.z_star.unwrap();
        assert!((z + 400.0).abs() <= 0.4, "{rule}: {z}");
        let x = r.incumbent.as_ref().unwrap();
        assert!(inst.evaluate(x).unwrap().is_feasible(1e-6));
    }
}

#[test]
fn pooling_toys_match_the_oracle() {
    let mut checked = 0;
    for seed in 0..40 {
        let inst = gen_pooling_toy(PoolingKind::HaverlyLike, seed);
        if inst.n() > 4 {
            continue;
        }
        let oracle = grid_oracle(&inst).expect("pooling toys are feasible");
        let r = solve(&inst, &SolverConfig::default());
        assert_eq!(r.verdict, Verdict::GapReached);
        let z = r.z_star.unwrap();
        let tol = 1e-3 * oracle.objective.abs().max(1.0);
        assert!((z - oracle.objective).abs() <= tol, "seed {seed}: {z} vs {}", oracle.objective);
        checked += 1;
        if checked == 6 {
            break;
        }
    }
    assert_eq!(checked, 6);
}

#[test]
fn trace_invariants_hold_for_every_rule() {
    for seed in 0..4 {
        let inst = gen_bbp(2, 3, 0.8, 300 + seed).unwrap();
        for rule in Rule::ALL {
            let r = solve(&inst, &traced(rule));
            let trace = r.trace.as_ref().unwrap();
            assert_eq!(trace.len(), r.nodes, "{rule}");
            let mut prev_lb = f64::NEG_INFINITY;
            let mut prev_pop = f64::NEG_INFINITY;
            let mut prev_ub = f64::INFINITY;
            for e in trace {
                // Best-bound order and monotone global bounds.
                assert!(e.popped_bound >= prev_pop - 1e-9, "{rule} node {}", e.node);
                prev_pop = e.popped_bound;
                if let Some(lb) = e.z_lb {
                    assert!(lb >= prev_lb - 1e-9, "{rule} node {}: z_lb fell", e.node);
                    prev_lb = lb;
                }
                if let Some(ub) = e.z_star {
                    assert!(ub <= prev_ub + 1e-12);
                    prev_ub = ub;
                    assert!(e.z_lb.unwrap() <= ub + 1e-9);
                }
                if let NodeEvent::Branched { var, alpha, .. } = e.event {
                    let b = inst.bounds();
                    assert!(alpha >= b.lower(var) && alpha <= b.upper(var));
                }
            }
            let z = r.z_star.unwrap();
            let lb = r.z_lb.unwrap();
            assert!(lb <= z + 1e-9);
            if r.verdict == Verdict::GapReached {
                assert!(z - lb <= 1e-3 * z.abs().max(1.0) + 1e-9);
            }
        }
    }
}

#[test]
fn rules_agree_on_small_bbp() {
    for seed in 0..4 {
        let inst = gen_bbp(2, 2, 1.0, 500 + seed).unwrap();
        let values: Vec<f64> = Rule::ALL
            .iter()
            .map(|&rule| solve(&inst, &SolverConfig::with_rule(rule)).z_star.unwrap())
            .collect();
        for v in &values {
            assert!((v - values[0]).abs() <= 2e-3 * values[0].abs().max(1.0), "seed {seed}: {values:?}");
        }
    }
}

#[test]
fn infeasible_box_is_reported() {
    // x0 * x1 >= 2 cannot hold on [0, 1]^2.
    let inst = QcqpInstance::new(
        "infeasible",
        QuadForm::new([], vec![1.0, 1.0], 0.0),
        vec![QuadConstraint::new([(0, 1, -1.0)], vec![0.0, 0.0], -2.0)],
        VarBox::new(vec![0.0, 0.0], vec![1.0, 1.0]),
    )
    .unwrap();
    for rule in Rule::ALL {
        let r = solve(&inst, &SolverConfig::with_rule(rule));
        assert_eq!(r.verdict, Verdict::Infeasible, "{rule}");
        assert!(r.z_star.is_none() && r.incumbent.is_none());
    }
}

#[test]
fn node_cap_stops_the_search() {
    let inst = gen_bbp(3, 3, 1.0, 9).unwrap();
    let config = SolverConfig {
        node_cap: 1,
        gap_tol: 1e-9,
        ..SolverConfig::with_rule(Rule::Basic)
    };
    let r = solve(&inst, &config);
    assert_eq!(r.verdict, Verdict::NodeLimit);
    assert_eq!(r.nodes, 1);
    assert!(r.z_lb.unwrap() <= r.z_star.unwrap_or(f64::INFINITY));
    assert!(r.gap_pct.is_none_or(|g| g > 0.0));
}

#[test]
fn solves_are_deterministic() {
    let inst = gen_bbp(2, 2, 0.9, 17).unwrap();
    for rule in Rule::ALL {
        let mut a = solve(&inst, &traced(rule));
        let mut b = solve(&inst, &traced(rule));
        a.wall_seconds = None;
        b.wall_seconds = None;
        assert_eq!(a.to_json(), b.to_json(), "{rule}");
    }
}
