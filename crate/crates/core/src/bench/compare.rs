//! Multi-rule comparison runs and their CSV tables.

use serde::Serialize;

use crate::bnb::{remaining_gap, solve, SolverConfig, Verdict};
use crate::branching::Rule;
use crate::instance::QcqpInstance;

/// Floors substituted for non-positive values in geometric means.
pub const TIME_FLOOR_S: f64 = 0.01;
pub const GAP_FLOOR_PCT: f64 = 0.001;

/// Upper ends of the solve-time buckets, seconds.
pub const TIME_BUCKETS: [(f64, f64); 4] = [(0.0, 10.0), (10.0, 100.0), (100.0, 1000.0), (1000.0, 3600.0)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub instance: String,
    pub rule: Rule,
    pub verdict: Verdict,
    /// Gap against the best incumbent any rule found on the instance.
    pub gap_pct: Option<f64>,
    pub time_s: f64,
    pub nodes: usize,
    pub lp_solves: usize,
    pub tightenings: usize,
    pub seed: u64,
    #[serde(skip)]
    pub z_star: Option<f64>,
    #[serde(skip)]
    pub z_lb: Option<f64>,
}

impl RunRecord {
    pub fn solved(&self) -> bool {
        self.verdict == Verdict::GapReached
    }
}

/// Solves every instance with every rule, then normalizes gaps per
/// instance against the best incumbent across rules.
pub fn compare(instances: &[QcqpInstance], rules: &[Rule], config: &SolverConfig) -> Vec<RunRecord> {
    let mut records = Vec::with_capacity(instances.len() * rules.len());
    for inst in instances {
        for &rule in rules {
            let cfg = SolverConfig {
                rule,
                trace: false,
                ..config.clone()
            };
            let r = solve(inst, &cfg);
            records.push(RunRecord {
                instance: r.instance,
                rule,
                verdict: r.verdict,
                gap_pct: r.gap_pct,
                time_s: r.wall_seconds.unwrap_or(0.0),
                nodes: r.nodes,
                lp_solves: r.lp_solves,
                tightenings: r.tightenings,
                seed: config.seed,
                z_star: r.z_star,
                z_lb: r.z_lb,
            });
        }
    }
    normalize_gaps(&mut records);
    records
}

/// Recomputes each gap against the best incumbent found on its instance.
pub fn normalize_gaps(records: &mut [RunRecord]) {
    let names: Vec<String> = records.iter().map(|r| r.instance.clone()).collect();
    for name in names {
        let best = records
            .iter()
            .filter(|r| r.instance == name)
            .filter_map(|r| r.z_star)
            .fold(None, |acc: Option<f64>, z| Some(acc.map_or(z, |a| a.min(z))));
        for r in records.iter_mut().filter(|r| r.instance == name) {
            r.gap_pct = match (best, r.z_lb) {
                (Some(z), Some(lb)) => Some(remaining_gap(z, lb.min(z)).0),
                _ => None,
            };
        }
    }
}

pub fn arithmetic_mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Geometric mean with values below `floor` raised to it.
pub fn geometric_mean(values: &[f64], floor: f64) -> Option<f64> {
    (!values.is_empty()).then(|| {
        let s: f64 = values.iter().map(|v| v.max(floor).ln()).sum();
        (s / values.len() as f64).exp()
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn write_rows(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// One row per run.
pub fn runs_csv(records: &[RunRecord]) -> String {
    let header = ["instance", "rule", "verdict", "gap_pct", "time_s", "nodes", "lp_solves", "tightenings", "seed"]
        .map(String::from)
        .to_vec();
    let rows = records
        .iter()
        .map(|r| {
            vec![
                r.instance.clone(),
                r.rule.to_string(),
                r.verdict.name().to_string(),
                cell(r.gap_pct),
                format!("{:.6}", r.time_s),
                r.nodes.to_string(),
                r.lp_solves.to_string(),
                r.tightenings.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    write_rows(header, rows)
}

/// Solved-instance counts and mean times per time bucket and rule.
pub fn summary_csv(records: &[RunRecord], rules: &[Rule]) -> String {
    let mut header = vec!["range".to_string()];
    for r in rules {
        header.push(format!("{r}_n_opt"));
        header.push(format!("{r}_t_ari"));
        header.push(format!("{r}_t_geo"));
    }
    let mut ranges: Vec<(String, Option<(f64, f64)>)> = TIME_BUCKETS
        .iter()
        .map(|&(lo, hi)| (format!("({lo},{hi}]"), Some((lo, hi))))
        .collect();
    ranges.push(("All".to_string(), None));
    let rows = ranges
        .into_iter()
        .map(|(label, range)| {
            let mut row = vec![label];
            for &rule in rules {
                let times: Vec<f64> = records
                    .iter()
                    .filter(|r| r.rule == rule && r.solved())
                    .map(|r| r.time_s)
                    .filter(|&t| range.map_or(true, |(lo, hi)| in_bucket(t, lo, hi)))
                    .collect();
                row.push(times.len().to_string());
                row.push(cell(arithmetic_mean(&times)));
                row.push(cell(geometric_mean(&times, TIME_FLOOR_S)));
            }
            row
        })
        .collect();
    format!(
        "# geometric means floor times at {TIME_FLOOR_S} s\n{}",
        write_rows(header, rows)
    )
}

fn in_bucket(t: f64, lo: f64, hi: f64) -> bool {
    // The first bucket also takes zero times.
    (t > lo || (lo == 0.0 && t >= 0.0)) && t <= hi
}

/// Mean remaining gaps over instances that at least one rule left unsolved.
pub fn gap_csv(records: &[RunRecord], rules: &[Rule]) -> String {
    let mut unsolved: Vec<&str> = records
        .iter()
        .filter(|r| rules.contains(&r.rule) && !r.solved())
        .map(|r| r.instance.as_str())
        .collect();
    unsolved.sort_unstable();
    unsolved.dedup();
    let mut header = vec!["n_instances".to_string()];
    let mut row = vec![unsolved.len().to_string()];
    for &rule in rules {
        header.push(format!("{rule}_gap_ari"));
        header.push(format!("{rule}_gap_geo"));
        let gaps: Vec<f64> = records
            .iter()
            .filter(|r| r.rule == rule && unsolved.contains(&r.instance.as_str()))
            .filter_map(|r| r.gap_pct)
            .collect();
        row.push(cell(arithmetic_mean(&gaps)));
        row.push(cell(geometric_mean(&gaps, GAP_FLOOR_PCT)));
    }
    format!(
        "# geometric means floor gaps at {GAP_FLOOR_PCT}%\n{}",
        write_rows(header, vec![row])
    )
}
