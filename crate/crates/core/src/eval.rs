//! Retrieval quality metrics over class-judged ranked lists.
//!
//! `rel_k` is 1 when the item at rank `k` (1-based) shares the query's
//! class and `R` is the number of relevant items in the gallery.
//!
//! | metric | definition |
//! |---|---|
//! | NN | `rel_1` |
//! | FT | relevant in top `R`, over `R` |
//! | ST | relevant in top `2R`, over `R` |
//! | E | harmonic mean of precision and recall over the top 32 |
//! | DCG | `rel_1 + Σ_{k≥2} rel_k / log2 k`, over the ideal value |
//! | AP | mean of precision@k over the relevant ranks |
//!
//! Queries with `R = 0` or an empty list are excluded and counted.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::retrieval::{rank_models, rank_within_domain, FeatureIndex, IndexEntry, RankedList};

pub const E_MEASURE_DEPTH: usize = 32;
pub const PR_POINTS: usize = 20;

/// Recall levels of the averaged precision-recall curve: 0.05, 0.10, …, 1.00.
pub fn recall_grid() -> [f64; PR_POINTS] {
    std::array::from_fn(|i| (i + 1) as f64 / PR_POINTS as f64)
}

/// Relevance judgments of one ranked list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgedList {
    pub query_id: String,
    pub rel: Vec<bool>,
    /// Relevant items in the whole gallery.
    pub relevant_total: usize,
}

impl JudgedList {
    pub fn new(query_id: impl Into<String>, rel: Vec<bool>, relevant_total: usize) -> Self {
        JudgedList {
            query_id: query_id.into(),
            rel,
            relevant_total,
        }
    }

    /// Judges a complete ranking of the gallery: `R` is the number of
    /// relevant entries in it.
    pub fn complete(query_id: impl Into<String>, rel: Vec<bool>) -> Self {
        let r = rel.iter().filter(|&&x| x).count();
        JudgedList::new(query_id, rel, r)
    }

    pub fn is_evaluable(&self) -> bool {
        self.relevant_total > 0 && !self.rel.is_empty()
    }

    fn relevant_in_top(&self, k: usize) -> usize {
        self.rel.iter().take(k).filter(|&&x| x).count()
    }
}

pub fn average_precision(list: &JudgedList) -> f64 {
    let mut found = 0;
    let mut sum = 0.0;
    for (k, &r) in list.rel.iter().enumerate() {
        if r {
            found += 1;
            sum += found as f64 / (k + 1) as f64;
        }
    }
    sum / list.relevant_total as f64
}

pub fn nearest_neighbor(list: &JudgedList) -> f64 {
    if list.rel.first() == Some(&true) {
        1.0
    } else {
        0.0
    }
}

/// First and second tier. Windows past the end of the list are truncated.
pub fn tiers(list: &JudgedList) -> (f64, f64) {
    let r = list.relevant_total;
    let ft = list.relevant_in_top(r) as f64 / r as f64;
    let st = list.relevant_in_top(2 * r) as f64 / r as f64;
    (ft, st.min(1.0))
}

pub fn e_measure(list: &JudgedList) -> f64 {
    let hits = list.relevant_in_top(E_MEASURE_DEPTH) as f64;
    let p = hits / E_MEASURE_DEPTH.min(list.rel.len()) as f64;
    let r = hits / list.relevant_total as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn dcg(rel: impl Iterator<Item = bool>) -> f64 {
    rel.enumerate()
        .filter(|&(_, r)| r)
        .map(|(k, _)| {
            if k == 0 {
                1.0
            } else {
                1.0 / ((k + 1) as f64).log2()
            }
        })
        .sum()
}

/// DCG normalized by the list with all `R` relevant items first.
pub fn ndcg(list: &JudgedList) -> f64 {
    dcg(list.rel.iter().copied()) / dcg(std::iter::repeat_n(true, list.relevant_total))
}

/// Precision on [`recall_grid`]. The `(recall, precision)` point of each
/// relevant hit is first replaced by the best precision at equal or higher
/// recall, then the points are joined linearly. Recall below the first
/// point takes the first precision; recall beyond the last point reached
/// scores 0.
pub fn pr_curve(list: &JudgedList) -> [f64; PR_POINTS] {
    let r = list.relevant_total as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut found = 0;
    for (k, &rel) in list.rel.iter().enumerate() {
        if rel {
            found += 1;
            points.push((found as f64 / r, found as f64 / (k + 1) as f64));
        }
    }
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    recall_grid().map(|level| {
        let Some(&(r0, p0)) = points.first() else {
            return 0.0;
        };
        if level <= r0 + 1e-12 {
            return p0;
        }
        for w in points.windows(2) {
            let ((ra, pa), (rb, pb)) = (w[0], w[1]);
            if level <= rb + 1e-12 {
                return pa + (pb - pa) * (level - ra) / (rb - ra);
            }
        }
        0.0
    })
}

/// Which gallery a query is ranked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Sketch queries against 3-D models.
    Cross,
    /// Sketch queries against the other sketches.
    Sketch,
    /// View queries against the other views.
    View,
}

impl EvalMode {
    pub fn query_domain(self) -> Domain {
        match self {
            EvalMode::Cross | EvalMode::Sketch => Domain::Sketch,
            EvalMode::View => Domain::View,
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross" => Ok(EvalMode::Cross),
            "sketch" => Ok(EvalMode::Sketch),
            "view" => Ok(EvalMode::View),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?} (cross|sketch|view)"
            ))),
        }
    }
}

/// Ranks `query` in `mode` and judges every hit by class.
pub fn judge(index: &FeatureIndex, query: &IndexEntry, mode: EvalMode) -> JudgedList {
    let ranked = rank(index, query, mode);
    let class_of: HashMap<&str, &str> = match mode {
        EvalMode::Cross => index
            .entries()
            .iter()
            .filter_map(|e| Some((e.model_id.as_deref()?, e.class_label.as_str())))
            .collect(),
        _ => index
            .entries()
            .iter()
            .map(|e| (e.id.as_str(), e.class_label.as_str()))
            .collect(),
    };
    let rel = ranked
        .hits
        .iter()
        .map(|h| class_of.get(h.target_id.as_str()) == Some(&query.class_label.as_str()))
        .collect();
    JudgedList::complete(&query.id, rel)
}

pub fn rank(index: &FeatureIndex, query: &IndexEntry, mode: EvalMode) -> RankedList {
    match mode {
        EvalMode::Cross => rank_models(&query.id, &query.feature, index),
        EvalMode::Sketch => rank_within_domain(&query.id, &query.feature, index, Domain::Sketch),
        EvalMode::View => rank_within_domain(&query.id, &query.feature, index, Domain::View),
    }
}

/// Judges every query whose id is in `query_ids` and whose domain suits
/// `mode`. Unknown ids are an error.
pub fn judge_queries<'a>(
    index: &FeatureIndex,
    query_ids: impl IntoIterator<Item = &'a str>,
    mode: EvalMode,
) -> Result<Vec<JudgedList>> {
    let by_id: HashMap<&str, &IndexEntry> =
        index.entries().iter().map(|e| (e.id.as_str(), e)).collect();
    let mut lists = Vec::new();
    for id in query_ids {
        let q = by_id
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("query {id:?} is not in the index")))?;
        if q.domain == mode.query_domain() {
            lists.push(judge(index, q, mode));
        }
    }
    Ok(lists)
}

/// Mean metrics over the evaluable queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "NN")]
    pub nn: f64,
    #[serde(rename = "FT")]
    pub ft: f64,
    #[serde(rename = "ST")]
    pub st: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "DCG")]
    pub dcg: f64,
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "PR")]
    pub pr: Vec<f64>,
    pub evaluated: usize,
    pub excluded: usize,
}

pub fn evaluate_all(lists: &[JudgedList]) -> Result<MetricsReport> {
    let usable: Vec<&JudgedList> = lists.iter().filter(|l| l.is_evaluable()).collect();
    if usable.is_empty() {
        return Err(Error::Empty(format!(
            "none of {} queries has a relevant item",
            lists.len()
        )));
    }
    let n = usable.len() as f64;
    let mean = |f: &dyn Fn(&JudgedList) -> f64| usable.iter().map(|l| f(l)).sum::<f64>() / n;
    let mut pr = vec![0.0; PR_POINTS];
    for l in &usable {
        for (acc, v) in pr.iter_mut().zip(pr_curve(l)) {
            *acc += v;
        }
    }
    pr.iter_mut().for_each(|v| *v /= n);
    Ok(MetricsReport {
        nn: mean(&nearest_neighbor),
        ft: mean(&|l| tiers(l).0),
        st: mean(&|l| tiers(l).1),
        e: mean(&e_measure),
        dcg: mean(&ndcg),
        map: mean(&average_precision),
        pr,
        evaluated: usable.len(),
        excluded: lists.len() - usable.len(),
    })
}

impl MetricsReport {
    /// Aligned text table: one row of scalar metrics, then the PR curve.
    pub fn to_table(&self, label: &str) -> String {
        let mut s = String::new();
        let w = label.len().max(6);
        let _ = writeln!(
            s,
            "{:<w$}  {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "", "NN", "FT", "ST", "E", "DCG", "mAP"
        );
        let _ = writeln!(
            s,
            "{:<w$}  {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
            label, self.nn, self.ft, self.st, self.e, self.dcg, self.map
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>6}  {:>9}", "recall", "precision");
        for (r, p) in recall_grid().iter().zip(&self.pr) {
            let _ = writeln!(s, "{:>6.2}  {:>9.3}", r, p);
        }
        let _ = writeln!(
            s,
            "\n{} queries evaluated, {} excluded",
            self.evaluated, self.excluded
        );
        s
    }
}
