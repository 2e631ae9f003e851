//! Seeded instance generators.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{InstanceError, QcqpInstance, QuadConstraint, QuadForm, VarBox};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("group sizes must be at least 1 (got {n_left} and {n_right})")]
    Size { n_left: usize, n_right: usize },
    #[error("density must lie in (0, 1], got {0}")]
    Density(f64),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Random bilinear bipartite instance.
///
/// Variables `0..n_left` form the left group and the rest the right group;
/// every product couples the two groups. Each cross pair is present with
/// probability `density` (at least one pair always is). Constraint
/// right-hand sides are calibrated so that a random interior point is
/// strictly feasible.
pub fn gen_bbp(n_left: usize, n_right: usize, density: f64, seed: u64) -> Result<QcqpInstance, GenError> {
    if n_left == 0 || n_right == 0 {
        return Err(GenError::Size { n_left, n_right });
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(GenError::Density(density));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_left + n_right;
    let lb: Vec<f64> = (0..n).map(|_| round4(rng.gen_range(-2.0..0.0))).collect();
    let ub: Vec<f64> = lb.iter().map(|l| round4(l + rng.gen_range(0.5..3.0))).collect();
    let anchor: Vec<f64> = lb.iter().zip(&ub).map(|(l, u)| rng.gen_range(*l..*u)).collect();

    let random_pairs = |rng: &mut ChaCha8Rng| {
        let mut terms = Vec::new();
        for i in 0..n_left {
            for j in n_left..n {
                if rng.gen_bool(density) {
                    terms.push((i, j, round4(rng.gen_range(-1.0..1.0))));
                }
            }
        }
        if terms.is_empty() {
            let i = rng.gen_range(0..n_left);
            let j = rng.gen_range(n_left..n);
            terms.push((i, j, round4(rng.gen_range(-1.0..1.0))));
        }
        terms
    };
    let objective = QuadForm::new(
        random_pairs(&mut rng),
        (0..n).map(|_| round4(rng.gen_range(-1.0..1.0))).collect(),
        0.0,
    );
    let m = 1 + n / 2;
    let mut constraints = Vec::with_capacity(m);
    for _ in 0..m {
        let terms = random_pairs(&mut rng);
        let linear: Vec<f64> = (0..n).map(|_| round4(rng.gen_range(-1.0..1.0))).collect();
        let probe = QuadConstraint::new(terms.clone(), linear.clone(), 0.0);
        let rhs = probe.activity(&anchor) + rng.gen_range(0.1..1.0);
        constraints.push(QuadConstraint::new(terms, linear, round4_up(rhs)));
    }
    let name = format!("bbp_{n_left}_{n_right}_{density}_{seed}");
    let inst = QcqpInstance::new(name, objective, constraints, VarBox::new(lb, ub))?;
    debug_assert!(inst.evaluate(&anchor).map_or(false, |e| e.is_feasible(0.0)));
    Ok(inst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingKind {
    HaverlyLike,
    /// Pool inputs share one quality; the pool quality is fixed and every
    /// product collapses to a linear term.
    ZeroSpread,
}

/// Single-pool blending instance in quality form.
///
/// Two sources with qualities `qa`, `qb` feed the pool; a third source with
/// quality `qc` may bypass it. Variable 0 is the pool quality `q`, then one
/// pool-to-product flow `y_p` per product, then the bypass flows `z_p`.
/// The pool's unit cost is linear in `q`, which puts the product `q y_p` in
/// the objective; quality limits give `q y_p + qc z_p <= qmax_p (y_p + z_p)`.
pub fn gen_pooling_toy(kind: PoolingKind, seed: u64) -> QcqpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Product 0 takes a loose quality limit, product 1 a tight one.
    let bypass: Vec<bool> = match rng.gen_range(0..3) {
        0 => vec![true, false],
        1 => vec![false, true],
        _ => vec![true, true],
    };
    let (qa, qb) = match kind {
        PoolingKind::HaverlyLike => (round2(rng.gen_range(2.5..3.5)), round2(rng.gen_range(0.5..1.5))),
        PoolingKind::ZeroSpread => {
            let q = round2(rng.gen_range(1.0..3.0));
            (q, q)
        }
    };
    let qc = round2(rng.gen_range(1.5..2.5));
    let (ca, cb, cc) = (
        round2(rng.gen_range(5.0..7.0)),
        round2(rng.gen_range(12.0..17.0)),
        round2(rng.gen_range(9.0..11.0)),
    );
    let price = vec![round2(rng.gen_range(8.0..19.0)), round2(rng.gen_range(13.0..17.0))];
    let max_quality = vec![round2(rng.gen_range(2.0..2.8)), round2(rng.gen_range(1.2..1.8))];
    let demand = vec![
        (rng.gen_range(80.0..120.0f64)).round(),
        (rng.gen_range(150.0..250.0f64)).round(),
    ];
    let cap = rng
        .gen_bool(0.5)
        .then(|| (rng.gen_range(0.3..0.8) * demand.iter().sum::<f64>()).round());
    haverly_form(
        format!("pool_{}_{seed}", match kind {
            PoolingKind::HaverlyLike => "haverly",
            PoolingKind::ZeroSpread => "flat",
        }),
        Pool { qa, ca, qb, cb, qc, cc },
        &price,
        &max_quality,
        &demand,
        &bypass,
        cap,
    )
    .expect("generated pooling data is consistent")
}

/// Source data of a single-pool instance.
#[derive(Debug, Clone, Copy)]
pub struct Pool {
    pub qa: f64,
    pub ca: f64,
    pub qb: f64,
    pub cb: f64,
    pub qc: f64,
    pub cc: f64,
}

/// Builds the quality form from explicit data.
pub fn haverly_form(
    name: String,
    pool: Pool,
    price: &[f64],
    max_quality: &[f64],
    demand: &[f64],
    bypass: &[bool],
    capacity: Option<f64>,
) -> Result<QcqpInstance, InstanceError> {
    let products = price.len();
    let nz = bypass.iter().filter(|&&b| b).count();
    let n = 1 + products + nz;
    let y = |p: usize| 1 + p;
    let mut z_index = vec![None; products];
    let mut next = 1 + products;
    for (p, &b) in bypass.iter().enumerate() {
        if b {
            z_index[p] = Some(next);
            next += 1;
        }
    }
    // Pool unit cost a0 + a1 q, interpolating the two sources.
    let (a0, a1) = if pool.qa == pool.qb {
        (pool.ca.min(pool.cb), 0.0)
    } else {
        let a1 = (pool.ca - pool.cb) / (pool.qa - pool.qb);
        (pool.cb - a1 * pool.qb, a1)
    };
    let (qlo, qhi) = (pool.qa.min(pool.qb), pool.qa.max(pool.qb));

    let mut obj_terms = Vec::new();
    let mut linear = vec![0.0; n];
    let mut lb = vec![0.0; n];
    let mut ub = vec![0.0; n];
    lb[0] = qlo;
    ub[0] = qhi;
    let mut constraints = Vec::new();
    for p in 0..products {
        obj_terms.push((0, y(p), a1));
        linear[y(p)] = a0 - price[p];
        ub[y(p)] = demand[p];
        let mut qual = vec![0.0; n];
        qual[y(p)] = -max_quality[p];
        let mut dem = vec![0.0; n];
        dem[y(p)] = 1.0;
        if let Some(z) = z_index[p] {
            linear[z] = pool.cc - price[p];
            ub[z] = demand[p];
            qual[z] = pool.qc - max_quality[p];
            dem[z] = 1.0;
        }
        constraints.push(QuadConstraint::new([(0, y(p), 1.0)], qual, 0.0));
        constraints.push(QuadConstraint::new([], dem, demand[p]));
    }
    if let Some(c) = capacity {
        let mut row = vec![0.0; n];
        for p in 0..products {
            row[y(p)] = 1.0;
        }
        constraints.push(QuadConstraint::new([], row, c));
    }
    QcqpInstance::new(
        name,
        QuadForm::new(obj_terms, linear, 0.0),
        constraints,
        VarBox::new(lb, ub),
    )
}

/// The classic first Haverly instance; its optimum is -400.
pub fn haverly1() -> QcqpInstance {
    haverly_form(
        "haverly1".to_string(),
        Pool {
            qa: 3.0,
            ca: 6.0,
            qb: 1.0,
            cb: 16.0,
            qc: 2.0,
            cc: 10.0,
        },
        &[9.0, 15.0],
        &[2.5, 1.5],
        &[100.0, 200.0],
        &[true, true],
        None,
    )
    .expect("fixed data is consistent")
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn round4_up(v: f64) -> f64 {
    (v * 1e4).ceil() / 1e4
}
