//! Best-bound spatial branch-and-bound over McCormick relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Serialize;

use crate::branching::{
    select, BranchAction, BranchParams, LpChildEvaluator, NodeContext, Rule, Tightening,
};
use crate::instance::{QcqpInstance, VarBox};
use crate::primal::{local_improve, root_incumbent, Incumbent, LocalSearchParams, FEAS_TOL};
use crate::relaxation::{RelaxOutcome, Relaxer, Side};

/// Absolute gap used when the incumbent value is zero.
pub const ZERO_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub rule: Rule,
    pub branch: BranchParams,
    /// Relative gap at which the search stops (0.001 is 0.1%).
    pub gap_tol: f64,
    pub node_cap: usize,
    pub time_limit: Duration,
    /// Run the local search every this many processed nodes.
    pub ub_frequency: usize,
    pub feas_tol: f64,
    pub seed: u64,
    pub root_budget: Duration,
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rule: Rule::Esb,
            branch: BranchParams::default(),
            gap_tol: 1e-3,
            node_cap: 100_000,
            time_limit: Duration::from_secs(3600),
            ub_frequency: 10,
            feas_tol: FEAS_TOL,
            seed: 0,
            root_budget: Duration::from_secs(5),
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_rule(rule: Rule) -> Self {
        SolverConfig {
            rule,
            ..Default::default()
        }
    }

    fn local_params(&self) -> LocalSearchParams {
        LocalSearchParams {
            feas_tol: self.feas_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    GapReached,
    NodeLimit,
    TimeLimit,
    Infeasible,
    /// The pool emptied but nodes lost to LP failures keep the gap open.
    Unresolved,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::GapReached => "gap_reached",
            Verdict::NodeLimit => "node_limit",
            Verdict::TimeLimit => "time_limit",
            Verdict::Infeasible => "infeasible",
            Verdict::Unresolved => "unresolved",
        }
    }
}

/// `100 |z* - z_lb| / |z*|`; absolute `|z* - z_lb|` when `z* = 0`, with the
/// second component set.
pub fn remaining_gap(z_star: f64, z_lb: f64) -> (f64, bool) {
    if z_star == 0.0 {
        ((z_star - z_lb).abs(), true)
    } else {
        (100.0 * (z_star - z_lb).abs() / z_star.abs(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeEvent {
    Infeasible,
    Fathomed,
    Requeued,
    Discarded,
    Pruned,
    /// Every product variable is fixed; the relaxation is exact.
    Exact,
    Branched { var: usize, alpha: f64, score: f64, fallback: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub popped_bound: f64,
    pub relaxation: Option<f64>,
    pub event: NodeEvent,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tightened: Option<VarBox>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tightenings: Vec<Tightening>,
    pub z_star: Option<f64>,
    /// Global lower bound after the node was handled.
    pub z_lb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub instance: String,
    pub rule: Rule,
    pub verdict: Verdict,
    pub z_star: Option<f64>,
    pub z_lb: Option<f64>,
    pub gap_pct: Option<f64>,
    /// `gap_pct` is an absolute difference because `z* = 0`.
    pub gap_absolute: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
    pub nodes: usize,
    /// All LP solves, node relaxations and branching probes together.
    pub lp_solves: usize,
    pub probe_solves: usize,
    pub tightenings: usize,
    pub numerical_discards: usize,
    pub max_depth: usize,
    pub incumbent: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    bbox: VarBox,
    key: f64,
    retried: bool,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap order: smallest key first, then smallest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Open pool, incumbent and counters.
struct TreeState<'a> {
    instance: &'a QcqpInstance,
    config: &'a SolverConfig,
    pool: BinaryHeap<Node>,
    next_id: usize,
    pushes: usize,
    incumbent: Option<Incumbent>,
    /// Smallest bound among nodes closed without proof that they hold
    /// nothing below the incumbent.
    floor: f64,
    processed: usize,
    node_solves: usize,
    probe_solves: usize,
    tightenings: usize,
    numerical_discards: usize,
    max_depth: usize,
    trace: Vec<TraceEntry>,
}

impl<'a> TreeState<'a> {
    fn z_star(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|i| i.objective())
    }

    fn z_lb(&self) -> f64 {
        let open = self.pool.peek().map_or(f64::INFINITY, |n| n.key);
        open.min(self.floor).min(self.z_star().unwrap_or(f64::INFINITY))
    }

    /// Bound at or above which a node cannot improve the incumbent by more
    /// than the gap tolerance.
    fn fathom_level(&self) -> f64 {
        match self.z_star() {
            None => f64::INFINITY,
            Some(z) if z == 0.0 => -ZERO_GAP_TOL,
            Some(z) => z - self.config.gap_tol * z.abs(),
        }
    }

    /// Closes a node with bound `bound` if it is fathomable.
    fn fathom(&mut self, bound: f64) -> bool {
        if bound >= self.fathom_level() {
            if let Some(z) = self.z_star() {
                if bound < z {
                    self.floor = self.floor.min(bound);
                }
            }
            true
        } else {
            false
        }
    }

    fn gap_reached(&self) -> bool {
        let Some(z) = self.z_star() else { return false };
        let lb = self.z_lb();
        if z == 0.0 {
            z - lb <= ZERO_GAP_TOL
        } else {
            (z - lb) / z.abs() <= self.config.gap_tol * (1.0 + 1e-12)
        }
    }

    fn offer(&mut self, candidate: Option<Incumbent>) {
        if let Some(c) = candidate {
            if self.z_star().map_or(true, |z| c.objective() < z) {
                debug!("incumbent {:.9}", c.objective());
                self.incumbent = Some(c);
            }
        }
    }

    fn push(&mut self, parent: Option<usize>, depth: usize, bbox: VarBox, key: f64) {
        let id = self.next_id;
        self.next_id += 1;
        self.pushes += 1;
        self.max_depth = self.max_depth.max(depth);
        self.pool.push(Node {
            id,
            parent,
            depth,
            bbox,
            key,
            retried: false,
        });
    }

    /// Nodes processed always equals pushes minus open nodes.
    fn consistent(&self) -> bool {
        self.processed == self.pushes - self.pool.len()
    }
}

pub fn solve(instance: &QcqpInstance, config: &SolverConfig) -> SolveReport {
    let clock = Instant::now();
    let relaxer = Relaxer::new(instance);
    let local = config.local_params();
    let mut st = TreeState {
        instance,
        config,
        pool: BinaryHeap::new(),
        next_id: 0,
        pushes: 0,
        incumbent: None,
        floor: f64::INFINITY,
        processed: 0,
        node_solves: 0,
        probe_solves: 0,
        tightenings: 0,
        numerical_discards: 0,
        max_depth: 0,
        trace: Vec::new(),
    };

    let budget = config.root_budget.min(config.time_limit);
    st.offer(root_incumbent(instance, budget, config.seed, &local));
    st.push(None, 0, instance.bounds().clone(), f64::NEG_INFINITY);

    let verdict = loop {
        if st.gap_reached() {
            break Verdict::GapReached;
        }
        if st.pool.is_empty() {
            break match (st.z_star(), st.floor.is_finite()) {
                (None, false) => Verdict::Infeasible,
                _ => Verdict::Unresolved,
            };
        }
        if st.processed >= config.node_cap {
            break Verdict::NodeLimit;
        }
        if clock.elapsed() >= config.time_limit {
            break Verdict::TimeLimit;
        }
        let node = st.pool.pop().expect("pool is non-empty");
        st.processed += 1;
        process(&mut st, &relaxer, &local, node);
        debug_assert!(st.consistent());
    };

    let z_star = st.z_star();
    let lb = st.z_lb();
    let z_lb = lb.is_finite().then_some(lb);
    let (gap_pct, gap_absolute) = match (z_star, z_lb) {
        (Some(z), Some(l)) => {
            let (g, abs) = remaining_gap(z, l);
            (Some(g), abs)
        }
        _ => (None, false),
    };
    SolveReport {
        instance: instance.name().to_string(),
        rule: config.rule,
        verdict,
        z_star,
        z_lb,
        gap_pct,
        gap_absolute,
        wall_seconds: Some(clock.elapsed().as_secs_f64()),
        nodes: st.processed,
        lp_solves: st.node_solves + st.probe_solves,
        probe_solves: st.probe_solves,
        tightenings: st.tightenings,
        numerical_discards: st.numerical_discards,
        max_depth: st.max_depth,
        incumbent: st.incumbent.as_ref().map(|i| i.x().to_vec()),
        trace: config.trace.then_some(st.trace),
    }
}

fn process(st: &mut TreeState, relaxer: &Relaxer, local: &LocalSearchParams, node: Node) {
    let config = st.config;
    let mut entry = TraceEntry {
        node: node.id,
        parent: node.parent,
        depth: node.depth,
        popped_bound: node.key,
        relaxation: None,
        event: NodeEvent::Fathomed,
        tightened: None,
        tightenings: Vec::new(),
        z_star: None,
        z_lb: None,
    };
    let event = handle(st, relaxer, local, &node, &mut entry);
    entry.event = event;
    if config.trace {
        entry.z_star = st.z_star();
        let lb = st.z_lb();
        entry.z_lb = lb.is_finite().then_some(lb);
        st.trace.push(entry);
    }
}

fn handle(
    st: &mut TreeState,
    relaxer: &Relaxer,
    local: &LocalSearchParams,
    node: &Node,
    entry: &mut TraceEntry,
) -> NodeEvent {
    let config = st.config;
    let instance = st.instance;
    if st.fathom(node.key) {
        return NodeEvent::Fathomed;
    }
    st.node_solves += 1;
    let outcome = relaxer
        .solve(&node.bbox)
        .unwrap_or(RelaxOutcome::Failed(crate::lp::LpStatus::Numerical));
    let (objective, point) = match outcome {
        RelaxOutcome::Infeasible => return NodeEvent::Infeasible,
        RelaxOutcome::Failed(status) => {
            if !node.retried {
                let mut again = node.clone();
                again.retried = true;
                st.pushes += 1;
                st.pool.push(again);
                return NodeEvent::Requeued;
            }
            warn!("node {} discarded after LP status {:?}", node.id, status);
            st.numerical_discards += 1;
            st.floor = st.floor.min(node.key);
            return NodeEvent::Discarded;
        }
        RelaxOutcome::Optimal { objective, point } => (objective, point),
    };
    let bound = objective.max(node.key);
    entry.relaxation = Some(objective);

    let n = instance.n();
    st.offer(Incumbent::from_point(instance, point[..n].to_vec(), config.feas_tol));
    if config.ub_frequency > 0 && st.processed % config.ub_frequency == 0 {
        st.offer(local_improve(instance, &node.bbox, &point[..n], local));
    }
    if st.fathom(bound) {
        return NodeEvent::Fathomed;
    }

    let ctx = NodeContext {
        instance,
        node_box: &node.bbox,
        obj_ub: st.z_star().unwrap_or(f64::INFINITY),
        obj_p: objective,
        relax_point: &point,
    };
    let mut evaluator = LpChildEvaluator::new(relaxer);
    let decision = select(config.rule, &ctx, &mut evaluator, &config.branch);
    st.probe_solves += evaluator.solves;
    st.tightenings += decision.tightenings.len();
    entry.tightenings = decision.tightenings.clone();
    let mut bound = bound;
    if decision.tightened != node.bbox {
        entry.tightened = Some(decision.tightened.clone());
        if !decision.is_prune() {
            // The shrunken box may already be closed by its own relaxation.
            st.node_solves += 1;
            match relaxer.solve(&decision.tightened) {
                Ok(RelaxOutcome::Infeasible) => return NodeEvent::Pruned,
                Ok(RelaxOutcome::Optimal { objective, point }) => {
                    bound = bound.max(objective);
                    st.offer(Incumbent::from_point(instance, point[..n].to_vec(), config.feas_tol));
                    if st.fathom(bound) {
                        return NodeEvent::Fathomed;
                    }
                }
                _ => {}
            }
        }
    }

    match decision.action {
        BranchAction::Prune => NodeEvent::Pruned,
        BranchAction::Exhausted => {
            // Nothing left to split: the node bound is final for its box.
            if st.z_star().map_or(true, |z| bound < z) {
                st.floor = st.floor.min(bound);
            }
            NodeEvent::Exact
        }
        BranchAction::Branch { var, alpha, score } => {
            let (left_bound, right_bound) = decision
                .child_bounds
                .map_or((bound, bound), |(l, r)| (bound.max(l), bound.max(r)));
            for (side, key) in [(Side::Left, left_bound), (Side::Right, right_bound)] {
                let mut child = decision.tightened.clone();
                match side {
                    Side::Left => child.set_upper(var, alpha),
                    Side::Right => child.set_lower(var, alpha),
                }
                if !st.fathom(key) {
                    st.push(Some(node.id), node.depth + 1, child, key);
                }
            }
            NodeEvent::Branched {
                var,
                alpha,
                score,
                fallback: decision.fallback,
            }
        }
    }
}
