//! Pairwise precision, recall and F1 against gold clusters, plus the
//! reduction-rate and portfolio summaries.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Partition;
use crate::ingest::{AssigneeRecord, GoldLabel};

/// Pair counts; true negatives are implicit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseConfusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl PairwiseConfusion {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub n_records: usize,
    pub n_pred_clusters: usize,
    pub n_gold_clusters: usize,
    pub reduction_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcubed: Option<Metrics>,
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Predicted and gold labels for every gold record. Gold records the
/// prediction does not mention become predicted singletons.
fn aligned_labels(pred: &Partition, gold: &[GoldLabel]) -> Result<(Vec<usize>, Vec<usize>)> {
    if gold.len() < 2 {
        return Err(Error::Undefined(format!(
            "pairwise metrics need at least 2 records, got {}",
            gold.len()
        )));
    }
    let base = pred.num_communities();
    let mut entity_ids: HashMap<&str, usize> = HashMap::new();
    let mut p = Vec::with_capacity(gold.len());
    let mut g = Vec::with_capacity(gold.len());
    for (i, label) in gold.iter().enumerate() {
        p.push(pred.community_of(&label.record_id).unwrap_or(base + i));
        let next = entity_ids.len();
        g.push(*entity_ids.entry(label.entity_id.as_str()).or_insert(next));
    }
    Ok((p, g))
}

/// Pair counts over all unordered pairs of gold records, via the
/// contingency table of predicted vs gold labels.
pub fn pairwise_confusion(pred: &Partition, gold: &[GoldLabel]) -> Result<PairwiseConfusion> {
    let (p, g) = aligned_labels(pred, gold)?;
    Ok(confusion_from_labels(&p, &g))
}

pub(crate) fn confusion_from_labels(p: &[usize], g: &[usize]) -> PairwiseConfusion {
    let mut cell: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&a, &b) in p.iter().zip(g) {
        *cell.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let tp: u64 = cell.values().map(|&n| pairs(n)).sum();
    let pred_pos: u64 = rows.values().map(|&n| pairs(n)).sum();
    let gold_pos: u64 = cols.values().map(|&n| pairs(n)).sum();
    PairwiseConfusion::new(tp, pred_pos - tp, gold_pos - tp)
}

/// Precision and recall are 1 when there is nothing to get wrong: no
/// predicted (resp. gold) pairs and no missed ones.
pub fn compute_metrics(c: &PairwiseConfusion) -> Metrics {
    let ratio = |num: u64, den: u64, other: u64| {
        if den == 0 {
            if other == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp, c.fn_);
    let recall = ratio(c.tp, c.tp + c.fn_, c.fp);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Metrics { precision, recall, f1 }
}

/// Per-record B-cubed precision and recall, averaged.
pub fn bcubed(pred: &Partition, gold: &[GoldLabel]) -> Result<Metrics> {
    let (p, g) = aligned_labels(pred, gold)?;
    let mut cell: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in p.iter().zip(&g) {
        *cell.entry((a, b)).or_default() += 1.0;
        *rows.entry(a).or_default() += 1.0;
        *cols.entry(b).or_default() += 1.0;
    }
    let n = p.len() as f64;
    let (mut precision, mut recall) = (0.0, 0.0);
    for (&a, &b) in p.iter().zip(&g) {
        let both = cell[&(a, b)];
        precision += both / rows[&a];
        recall += both / cols[&b];
    }
    let (precision, recall) = (precision / n, recall / n);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Metrics { precision, recall, f1 })
}

/// Share of names removed by harmonization: `(before - after) / before`.
pub fn reduction_rate(n_before: usize, n_after: usize) -> Result<f64> {
    if n_before == 0 {
        return Err(Error::InvalidInput("no input names".into()));
    }
    if n_after > n_before {
        return Err(Error::InvalidInput(format!(
            "more names after harmonization ({n_after}) than before ({n_before})"
        )));
    }
    Ok((n_before - n_after) as f64 / n_before as f64)
}

/// Full report for `pred` against `gold`, restricted to the gold records.
pub fn evaluate(pred: &Partition, gold: &[GoldLabel]) -> Result<EvalReport> {
    let (p, g) = aligned_labels(pred, gold)?;
    let c = confusion_from_labels(&p, &g);
    let m = compute_metrics(&c);
    let n_pred = p.iter().collect::<std::collections::HashSet<_>>().len();
    let n_gold = g.iter().collect::<std::collections::HashSet<_>>().len();
    Ok(EvalReport {
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        n_records: p.len(),
        n_pred_clusters: n_pred,
        n_gold_clusters: n_gold,
        reduction_rate: reduction_rate(p.len(), n_pred)?,
        bcubed: Some(bcubed(pred, gold)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioRow {
    pub record_id: String,
    pub raw_name: Option<String>,
    pub community: Option<usize>,
    pub canonical_name: Option<String>,
    pub variants: usize,
    pub portfolio: u64,
    pub missing: bool,
}

/// Community size and summed patent count for each focus record.
pub fn portfolio_report(pred: &Partition, records: &[AssigneeRecord], focus_ids: &[String]) -> Vec<PortfolioRow> {
    let by_id: HashMap<&str, &AssigneeRecord> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let mut size: BTreeMap<usize, usize> = BTreeMap::new();
    let mut volume: BTreeMap<usize, u64> = BTreeMap::new();
    for (id, &c) in pred.assignment() {
        *size.entry(c).or_default() += 1;
        *volume.entry(c).or_default() += by_id.get(id.as_str()).map_or(0, |r| r.patent_count);
    }
    focus_ids
        .iter()
        .map(|id| {
            let raw_name = by_id.get(id.as_str()).map(|r| r.raw_name.clone());
            match pred.community_of(id) {
                Some(c) => PortfolioRow {
                    record_id: id.clone(),
                    raw_name,
                    community: Some(c),
                    canonical_name: pred.canonical_name(c).map(str::to_string),
                    variants: size[&c],
                    portfolio: volume[&c],
                    missing: false,
                },
                None => PortfolioRow {
                    record_id: id.clone(),
                    raw_name,
                    community: None,
                    canonical_name: None,
                    variants: 0,
                    portfolio: 0,
                    missing: true,
                },
            }
        })
        .collect()
}
