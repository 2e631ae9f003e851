//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use common::{grid_oracle, random_lp, textbook_simplex, GridOptimum, OracleResult};
use qcqp_esb::bench::{arithmetic_mean, gen_bbp, gen_pooling_toy, geometric_mean, PoolingKind};
use qcqp_esb::bnb::{remaining_gap, solve, SolveReport, SolverConfig, Verdict};
use qcqp_esb::branching::{
    branch_score, esb_search, BranchParams, ProbeKind, ProbeOutcome, Rule, PRUNE_TOL,
};
use qcqp_esb::instance::{QcqpInstance, VarBox};
use qcqp_esb::lp::{solve_lp, LpStatus, RowSense, LP_OPT_TOL};
use qcqp_esb::relaxation::{envelope_rows, RelaxOutcome, Relaxer, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Instances small enough for the grid oracle: every product is `x0 * x_j`.
fn oracle_instances() -> Vec<QcqpInstance> {
    let mut out = Vec::new();
    for seed in 0..15u64 {
        let n_right = 1 + (seed % 3) as usize;
        let density = if seed % 2 == 0 { 1.0 } else { 0.7 };
        out.push(gen_bbp(1, n_right, density, 100 + seed).unwrap());
    }
    let mut seed = 0;
    while out.len() < 23 {
        let inst = gen_pooling_toy(PoolingKind::HaverlyLike, seed);
        if inst.n() <= 4 {
            out.push(inst);
        }
        seed += 1;
    }
    out
}

struct OracleRun {
    instance: QcqpInstance,
    oracle: GridOptimum,
    report: SolveReport,
}

fn oracle_runs() -> Vec<OracleRun> {
    oracle_instances()
        .into_iter()
        .map(|instance| {
            let oracle = grid_oracle(&instance).expect("generated instances are feasible");
            let config = SolverConfig {
                trace: true,
                ..SolverConfig::default()
            };
            let report = solve(&instance, &config);
            OracleRun {
                instance,
                oracle,
                report,
            }
        })
        .collect()
}

fn stub_curve(side: Side, alpha: f64) -> ProbeOutcome {
    let table: &[(f64, f64)] = match side {
        Side::Left => &[(0.5, 2.5), (0.375, 4.0), (0.3125, 5.5), (0.25, 7.8), (0.5625, 2.0)],
        Side::Right => &[(0.5, 3.0), (0.5625, 4.5), (0.625, 6.2), (0.75, 7.5), (0.3125, 1.0), (0.375, 1.5)],
    };
    match table.iter().find(|(a, _)| *a == alpha) {
        Some(&(_, v)) => ProbeOutcome::Bound(v),
        None => ProbeOutcome::Failed,
    }
}

fn criterion_1() -> Outcome {
    let clock = Instant::now();
    let b = VarBox::new(vec![0.0], vec![1.0]);
    let mut unexpected = Vec::new();
    let mut eval = |_: &VarBox, _: usize, side: Side, a: f64| {
        let o = stub_curve(side, a);
        if o == ProbeOutcome::Failed {
            unexpected.push((side, a));
        }
        o
    };
    let params = BranchParams {
        iter_max: 4,
        ..BranchParams::default()
    };
    let d = esb_search(&mut eval, &b, &[0], 6.0, 0.0, &params);
    if !unexpected.is_empty() {
        return Err(format!("probes outside the plotted points: {unexpected:?}"));
    }
    let rec = &d.records[0];
    let probes = |side: Side, kind: ProbeKind| -> Vec<f64> {
        rec.probes
            .iter()
            .filter(|p| p.side == side && p.kind == kind)
            .map(|p| p.alpha)
            .collect()
    };
    let left = probes(Side::Left, ProbeKind::Search);
    let right = probes(Side::Right, ProbeKind::Search);
    if left != [0.5, 0.25, 0.375, 0.3125] {
        return Err(format!("left probes {left:?}"));
    }
    if right != [0.5, 0.75, 0.625, 0.5625] {
        return Err(format!("right probes {right:?}"));
    }
    let bx = (d.tightened.lower(0), d.tightened.upper(0));
    if bx != (0.25, 0.625) {
        return Err(format!("tightened box {bx:?}"));
    }
    let cands: Vec<f64> = rec.scored.iter().map(|s| s.0).collect();
    if cands != [0.3125, 0.375, 0.5, 0.5625] {
        return Err(format!("candidates {cands:?}"));
    }
    let mut fills: Vec<(Side, f64)> = rec
        .probes
        .iter()
        .filter(|p| p.kind == ProbeKind::FillIn)
        .map(|p| (p.side, p.alpha))
        .collect();
    fills.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let want = vec![(Side::Left, 0.5625), (Side::Right, 0.3125), (Side::Right, 0.375)];
    if fills != want {
        return Err(format!("fill-ins {fills:?}"));
    }
    let t = clock.elapsed().as_secs_f64();
    if t >= 1.0 {
        return Err(format!("took {t:.3} s"));
    }
    Ok(format!("trace exact, {t:.4} s"))
}

fn criterion_2(runs: &[OracleRun]) -> Outcome {
    if runs.len() < 20 {
        return Err(format!("only {} instances", runs.len()));
    }
    let mut worst_rel: f64 = 0.0;
    for run in runs {
        let r = &run.report;
        let name = run.instance.name();
        if r.verdict != Verdict::GapReached {
            return Err(format!("{name}: verdict {:?}", r.verdict));
        }
        let z = r.z_star.ok_or_else(|| format!("{name}: no incumbent"))?;
        let o = run.oracle.objective;
        let rel = (z - o).abs() / o.abs().max(1e-9);
        worst_rel = worst_rel.max(rel);
        if rel > 1e-3 {
            return Err(format!("{name}: incumbent {z} vs oracle {o}"));
        }
        let mut lbs: Vec<f64> = r
            .trace
            .as_ref()
            .unwrap()
            .iter()
            .filter_map(|e| e.z_lb)
            .collect();
        lbs.extend(r.z_lb);
        if let Some(lb) = lbs.iter().copied().find(|lb| *lb > o + PRUNE_TOL) {
            return Err(format!("{name}: z_lb {lb} above oracle {o}"));
        }
    }
    Ok(format!("{} instances, worst relative incumbent error {worst_rel:.2e}", runs.len()))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for t in 0..100u64 {
        let inst = gen_bbp(rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(0.4..=1.0), 500 + t).unwrap();
        let relaxer = Relaxer::new(&inst);
        // Random sub-box of the global box.
        let b0 = inst.bounds();
        let mut lb = Vec::new();
        let mut ub = Vec::new();
        for i in 0..inst.n() {
            let (l, u) = (b0.lower(i), b0.upper(i));
            let a = rng.gen_range(l..u);
            let c = rng.gen_range(l..u);
            lb.push(a.min(c));
            ub.push(a.max(c).max(a.min(c) + 1e-3).min(u));
        }
        let b = VarBox::new(lb, ub);
        let vars = inst.quadratic_variables();
        let var = vars[rng.gen_range(0..vars.len())];
        let mut alphas: Vec<f64> = (0..8).map(|_| rng.gen_range(b.lower(var)..=b.upper(var))).collect();
        alphas.sort_by(f64::total_cmp);
        let value = |side: Side, a: f64| match relaxer.solve_child(&b, var, side, a).unwrap() {
            RelaxOutcome::Optimal { objective, .. } => Ok(objective),
            RelaxOutcome::Infeasible => Ok(f64::INFINITY),
            RelaxOutcome::Failed(s) => Err(format!("LP status {s:?}")),
        };
        let left: Vec<f64> = alphas.iter().map(|&a| value(Side::Left, a)).collect::<Result<_, _>>()?;
        let right: Vec<f64> = alphas.iter().map(|&a| value(Side::Right, a)).collect::<Result<_, _>>()?;
        for k in 1..8 {
            let dl = left[k] - left[k - 1];
            let dr = right[k - 1] - right[k];
            if dl > 1e-7 || dr > 1e-7 {
                return Err(format!("triple {t}: var {var} at {:?}: L {left:?} R {right:?}", alphas));
            }
            if dl.is_finite() {
                worst = worst.max(dl);
            }
            if dr.is_finite() {
                worst = worst.max(dr);
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} triples x 8 points, worst increase {worst:.2e}"))
}

fn criterion_4(runs: &[OracleRun]) -> Outcome {
    let mut replayed = 0;
    for run in runs {
        let x = &run.oracle.x;
        let f = run.oracle.objective;
        for e in run.report.trace.as_ref().unwrap() {
            let Some(tightened) = &e.tightened else { continue };
            // Undo the tightenings to recover the node box.
            let mut node_box = tightened.clone();
            for t in e.tightenings.iter().rev() {
                match t.side {
                    Side::Left => node_box.set_lower(t.var, t.previous),
                    Side::Right => node_box.set_upper(t.var, t.previous),
                }
            }
            if !node_box.contains(x, 1e-9) {
                continue;
            }
            for t in &e.tightenings {
                replayed += 1;
                let excluded = match t.side {
                    Side::Left => x[t.var] < t.alpha - 1e-9,
                    Side::Right => x[t.var] > t.alpha + 1e-9,
                };
                if excluded && f <= t.obj_ub + PRUNE_TOL {
                    return Err(format!(
                        "{}: node {} moved var {} to {} past oracle point {:?}",
                        run.instance.name(),
                        e.node,
                        t.var,
                        t.alpha,
                        x
                    ));
                }
            }
        }
    }
    Ok(format!("{replayed} tightenings replayed on boxes holding the oracle point"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let diagonal = rng.gen_bool(0.2);
        let li = rng.gen_range(-10.0..10.0);
        let ui = li + rng.gen_range(0.0..10.0);
        let (lj, uj) = if diagonal {
            (li, ui)
        } else {
            let l = rng.gen_range(-10.0..10.0);
            (l, l + rng.gen_range(0.0..10.0))
        };
        let xi = rng.gen_range(li..=ui);
        let xj = if diagonal { xi } else { rng.gen_range(lj..=uj) };
        let w = xi * xj;
        for row in envelope_rows(li, ui, lj, uj, diagonal) {
            let v = row.violation(xi, xj, w);
            worst = worst.max(v);
            if v > 1e-12 {
                return Err(format!("row {row:?} violated by {v} at ({xi},{xj})"));
            }
        }
    }
    let mut vertex_err: f64 = 0.0;
    for _ in 0..1_000 {
        let li = rng.gen_range(-10.0..10.0);
        let ui = li + rng.gen_range(0.01..10.0);
        let lj = rng.gen_range(-10.0..10.0);
        let uj = lj + rng.gen_range(0.01..10.0);
        let rows = envelope_rows(li, ui, lj, uj, false);
        for (xi, xj) in [(li, lj), (li, uj), (ui, lj), (ui, uj)] {
            let level = |r: &qcqp_esb::relaxation::EnvelopeRow| r.rhs - r.cx_i * xi - r.cx_j * xj;
            let lo = rows
                .iter()
                .filter(|r| r.sense == RowSense::Ge)
                .map(level)
                .fold(f64::NEG_INFINITY, f64::max);
            let hi = rows
                .iter()
                .filter(|r| r.sense == RowSense::Le)
                .map(level)
                .fold(f64::INFINITY, f64::min);
            let err = (lo - xi * xj).abs().max((hi - xi * xj).abs());
            vertex_err = vertex_err.max(err);
            if err > 1e-9 {
                return Err(format!("vertex ({xi},{xj}) leaves w in [{lo},{hi}]"));
            }
        }
    }
    Ok(format!("worst sample violation {worst:.1e}, worst vertex error {vertex_err:.1e}"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let (mut optimal, mut infeasible) = (0, 0);
    let mut worst_gap: f64 = 0.0;
    for case in 0..200 {
        let p = random_lp(&mut rng, 50, 30);
        let ours = solve_lp(&p).map_err(|e| format!("case {case}: {e}"))?;
        match textbook_simplex(&p) {
            OracleResult::Optimal { objective, .. } => {
                let opt = ours
                    .optimum
                    .as_ref()
                    .filter(|_| ours.status == LpStatus::Optimal)
                    .ok_or_else(|| format!("case {case}: status {:?}, oracle optimal", ours.status))?;
                if (opt.objective - objective).abs() > 1e-7 {
                    return Err(format!("case {case}: {} vs {}", opt.objective, objective));
                }
                let gap = opt.duality_gap(&p);
                worst_gap = worst_gap.max(gap);
                if gap > LP_OPT_TOL {
                    return Err(format!("case {case}: duality gap {gap}"));
                }
                optimal += 1;
            }
            OracleResult::Infeasible => {
                if ours.status != LpStatus::Infeasible {
                    return Err(format!("case {case}: status {:?}, oracle infeasible", ours.status));
                }
                infeasible += 1;
            }
        }
    }
    Ok(format!("{optimal} optimal, {infeasible} infeasible, worst duality gap {worst_gap:.1e}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut floored, mut open) = (0, 0);
    for k in 0..1000 {
        let eps = 10f64.powf(rng.gen_range(-9.0..-3.0));
        let obj_p = rng.gen_range(-100.0..100.0);
        // Every fourth tuple pushes a side below the floor.
        let mut delta = || {
            if rng.gen_bool(0.25) {
                rng.gen_range(-1.0..1.0) * eps
            } else {
                rng.gen_range(0.0..50.0)
            }
        };
        let (dl, dr) = (delta(), delta());
        let (obj_l, obj_r) = (obj_p + dl, obj_p + dr);
        let a = obj_l - obj_p;
        let b = obj_r - obj_p;
        let fa = if a > eps { a } else { eps };
        let fb = if b > eps { b } else { eps };
        for v in [a, b] {
            if v > eps {
                open += 1;
            } else {
                floored += 1;
            }
        }
        let want = fa * fb;
        let got = branch_score(obj_l, obj_r, obj_p, eps);
        if (got - want).abs() > 1e-12 * want.abs().max(1.0) {
            return Err(format!("tuple {k}: {got} vs {want}"));
        }
    }
    if floored == 0 || open == 0 {
        return Err("one epsilon branch was never exercised".into());
    }
    Ok(format!("1000 tuples, {floored} floored factors, {open} open factors"))
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        0.5 * (v[m - 1] + v[m]) as f64
    }
}

fn criterion_8() -> Outcome {
    let mut nodes = [Vec::new(), Vec::new(), Vec::new()];
    let rules = [Rule::Esb, Rule::Basic, Rule::Balance];
    for seed in 0..12 {
        let inst = gen_pooling_toy(PoolingKind::HaverlyLike, seed);
        for (k, &rule) in rules.iter().enumerate() {
            let r = solve(&inst, &SolverConfig::with_rule(rule));
            if r.verdict != Verdict::GapReached {
                return Err(format!("{} with {rule}: {:?}", inst.name(), r.verdict));
            }
            nodes[k].push(r.nodes);
        }
    }
    let [esb, basic, balance] = nodes;
    if let Some(m) = esb.iter().max().filter(|&&m| m > 50) {
        return Err(format!("esb needed {m} nodes"));
    }
    let (me, mb, ml) = (median(esb.clone()), median(basic.clone()), median(balance.clone()));
    let sum = |v: &[usize]| v.iter().sum::<usize>();
    let detail = format!(
        "medians esb {me} basic {mb} balance {ml}; totals {} / {} / {}",
        sum(&esb),
        sum(&basic),
        sum(&balance)
    );
    if me <= mb && me <= ml {
        Ok(format!("12 instances, {detail}"))
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let cases = [((100.0, 99.9), 0.1), ((7.0, 7.0), 0.0), ((-400.0, -400.4), 0.1)];
    for ((z, lb), want) in cases {
        let (got, abs) = remaining_gap(z, lb);
        if abs || (got - want).abs() > 1e-12 {
            return Err(format!("gap({z}, {lb}) = {got}, want {want}"));
        }
    }
    if remaining_gap(7.0, 7.0).0 != 0.0 {
        return Err("equal values must give exactly zero".into());
    }
    let times = [10.0, 1000.0];
    let ari = arithmetic_mean(&times).unwrap();
    let geo = geometric_mean(&times, 0.01).unwrap();
    if (ari - 505.0).abs() > 1e-9 || (geo - 100.0).abs() > 1e-9 {
        return Err(format!("means {ari} / {geo}"));
    }
    Ok("hand values and 2-row means match".into())
}

fn criterion_10(instances: &[QcqpInstance]) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_qcqp-esb");
    for (k, inst) in instances.iter().enumerate() {
        let path = dir.path().join(format!("i{k}.json"));
        std::fs::write(&path, inst.to_json()).map_err(|e| e.to_string())?;
        let run = || {
            Command::new(bin)
                .args(["solve", path.to_str().unwrap(), "--omit-timing", "--trace", "--seed", "3"])
                .output()
                .map_err(|e| e.to_string())
        };
        let (a, b) = (run()?, run()?);
        if !a.status.success() {
            return Err(format!("{}: exit {:?}", inst.name(), a.status.code()));
        }
        if a.stdout != b.stdout {
            return Err(format!("{}: reports differ", inst.name()));
        }
    }
    Ok(format!("{} instances, byte-identical reports", instances.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, what: &str, outcome: Outcome| {
        let line = match outcome {
            Ok(detail) => format!("PASS criterion {n:>2} ({what}): {detail}"),
            Err(detail) => {
                failed += 1;
                format!("FAIL criterion {n:>2} ({what}): {detail}")
            }
        };
        println!("{line}");
        std::io::stdout().flush().ok();
    };
    report(1, "branching trace", criterion_1());
    let clock = Instant::now();
    let runs = oracle_runs();
    let c2 = criterion_2(&runs).map(|s| format!("{s}, {:.1} s", clock.elapsed().as_secs_f64()));
    report(2, "oracle optimality", c2);
    report(3, "child bound monotonicity", criterion_3());
    report(4, "tightening soundness", criterion_4(&runs));
    report(5, "envelope validity", criterion_5());
    report(6, "LP engine", criterion_6());
    report(7, "score formula", criterion_7());
    report(8, "node counts on pooling toys", criterion_8());
    report(9, "gap metric and means", criterion_9());
    let instances: Vec<QcqpInstance> = runs.into_iter().map(|r| r.instance).collect();
    report(10, "end-to-end determinism", criterion_10(&instances));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
