//! Brute-force reference metrics written straight from their definitions,
//! without sharing code with the library.

pub const GRID: usize = 20;

pub struct OracleMetrics {
    pub nn: f64,
    pub ft: f64,
    pub st: f64,
    pub e: f64,
    pub dcg: f64,
    pub ap: f64,
    pub pr: [f64; GRID],
}

fn hits_in(rel: &[bool], k: usize) -> usize {
    let mut n = 0;
    for (i, &r) in rel.iter().enumerate() {
        if i < k && r {
            n += 1;
        }
    }
    n
}

fn precision_at(rel: &[bool], k: usize) -> f64 {
    hits_in(rel, k) as f64 / k as f64
}

fn dcg_recurrence(rel: &[bool]) -> f64 {
    let mut dcg = 0.0;
    for i in 1..=rel.len() {
        let gain = if rel[i - 1] { 1.0 } else { 0.0 };
        dcg = if i == 1 {
            gain
        } else {
            dcg + gain / (i as f64).ln() * 2f64.ln()
        };
    }
    dcg
}

/// Precision at `level` from the hit staircase: the envelope value at each
/// hit is the highest precision at any hit with recall at least as large;
/// values in between are linear, below the first hit constant.
fn interpolated(points: &[(f64, f64)], level: f64) -> f64 {
    let envelope: Vec<(f64, f64)> = points
        .iter()
        .map(|&(r, _)| {
            let best = points
                .iter()
                .filter(|&&(r2, _)| r2 >= r)
                .map(|&(_, p)| p)
                .fold(f64::NEG_INFINITY, f64::max);
            (r, best)
        })
        .collect();
    if envelope.is_empty() {
        return 0.0;
    }
    if level <= envelope[0].0 + 1e-12 {
        return envelope[0].1;
    }
    for i in 1..envelope.len() {
        let (r0, p0) = envelope[i - 1];
        let (r1, p1) = envelope[i];
        if level > r0 && level <= r1 + 1e-12 {
            let t = (level - r0) / (r1 - r0);
            return (1.0 - t) * p0 + t * p1;
        }
    }
    0.0
}

pub fn oracle(rel: &[bool], r_total: usize) -> OracleMetrics {
    let r = r_total as f64;
    let relevant_ranks: Vec<usize> = (1..=rel.len()).filter(|&k| rel[k - 1]).collect();
    let ap = relevant_ranks
        .iter()
        .map(|&k| precision_at(rel, k))
        .sum::<f64>()
        / r;
    let ft = hits_in(rel, r_total) as f64 / r;
    let st = (hits_in(rel, 2 * r_total) as f64 / r).min(1.0);
    let h32 = hits_in(rel, 32) as f64;
    let p32 = h32 / rel.len().min(32) as f64;
    let r32 = h32 / r;
    let e = if h32 == 0.0 {
        0.0
    } else {
        2.0 * p32 * r32 / (p32 + r32)
    };
    let ideal = vec![true; r_total];
    let dcg = dcg_recurrence(rel) / dcg_recurrence(&ideal);
    let points: Vec<(f64, f64)> = relevant_ranks
        .iter()
        .enumerate()
        .map(|(j, &k)| ((j + 1) as f64 / r, precision_at(rel, k)))
        .collect();
    let pr = std::array::from_fn(|i| interpolated(&points, (i + 1) as f64 * 0.05));
    OracleMetrics {
        nn: if rel.first().copied().unwrap_or(false) {
            1.0
        } else {
            0.0
        },
        ft,
        st,
        e,
        dcg,
        ap,
        pr,
    }
}

/// Means over the queries with at least one relevant item.
pub fn oracle_mean(lists: &[(Vec<bool>, usize)]) -> Option<OracleMetrics> {
    let per: Vec<OracleMetrics> = lists
        .iter()
        .filter(|(rel, r)| *r > 0 && !rel.is_empty())
        .map(|(rel, r)| oracle(rel, *r))
        .collect();
    if per.is_empty() {
        return None;
    }
    let n = per.len() as f64;
    let avg = |f: &dyn Fn(&OracleMetrics) -> f64| per.iter().map(f).sum::<f64>() / n;
    Some(OracleMetrics {
        nn: avg(&|m| m.nn),
        ft: avg(&|m| m.ft),
        st: avg(&|m| m.st),
        e: avg(&|m| m.e),
        dcg: avg(&|m| m.dcg),
        ap: avg(&|m| m.ap),
        pr: std::array::from_fn(|i| avg(&|m| m.pr[i])),
    })
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbsr::eval::{evaluate_all, JudgedList, MetricsReport};

fn diff_report(report: &MetricsReport, o: &OracleMetrics) -> f64 {
    let mut d = [
        (report.nn - o.nn).abs(),
        (report.ft - o.ft).abs(),
        (report.st - o.st).abs(),
        (report.e - o.e).abs(),
        (report.dcg - o.dcg).abs(),
        (report.map - o.ap).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    for (a, b) in report.pr.iter().zip(&o.pr) {
        d = d.max((a - b).abs());
    }
    d
}

/// One random instance: 1 to 5 complete rankings of galleries of 1 to 20
/// items, some possibly without relevant items.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Vec<(Vec<bool>, usize)> {
    let queries = rng.random_range(1..=5);
    (0..queries)
        .map(|_| {
            let n = rng.random_range(1..=20);
            let p = rng.random_range(0.05..0.8);
            let rel: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
            let r = rel.iter().filter(|&&x| x).count();
            (rel, r)
        })
        .collect()
}

/// Largest absolute disagreement between the library and the oracle over
/// `instances` random instances, counting only instances with at least
/// one evaluable query.
pub fn agreement(seed: u64, instances: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut compared = 0;
    while compared < instances {
        let inst = random_instance(&mut rng);
        let lists: Vec<JudgedList> = inst
            .iter()
            .enumerate()
            .map(|(i, (rel, r))| JudgedList::new(format!("q{i}"), rel.clone(), *r))
            .collect();
        match (evaluate_all(&lists), oracle_mean(&inst)) {
            (Ok(report), Some(o)) => {
                worst = worst.max(diff_report(&report, &o));
                compared += 1;
            }
            (Err(_), None) => {}
            _ => return (f64::INFINITY, compared),
        }
    }
    (worst, compared)
}
