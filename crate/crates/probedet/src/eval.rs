//! Scoring: confusion matrices, threshold metrics, ROC/AUC, the rule-based
//! (misuse) baseline, and anomaly-vs-misuse comparison reports.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::flow::FlowFeatureVector;
use crate::temporal::TemporalFeatureRow;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label and prediction lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ROC needs both classes present")]
    OneClassOnly,
    #[error("bad rule {id}: {reason}")]
    BadRule { id: String, reason: String },
    #[error("reports cover different row sets")]
    RowSetMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    /// (fpr, tpr, threshold); present only when scores were supplied.
    pub roc: Option<Vec<(f64, f64, f64)>>,
    pub auc: Option<f64>,
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mut m = ConfusionMatrix { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t != 0, p != 0) {
            (true, true) => m.tp += 1,
            (false, true) => m.fp += 1,
            (true, false) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

pub fn metrics(m: &ConfusionMatrix) -> Metrics {
    let (tp, fp, fnn, tn) = (m.tp as f64, m.fp as f64, m.fn_ as f64, m.tn as f64);
    // no positive predictions: vacuously perfect when nothing was missed
    let precision = if m.tp + m.fp == 0 {
        if m.fn_ == 0 { 1.0 } else { 0.0 }
    } else {
        tp / (tp + fp)
    };
    let recall = if m.tp + m.fn_ == 0 { 1.0 } else { tp / (tp + fnn) };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let accuracy = (tp + tn) / m.total() as f64;
    let far = if m.fp + m.tn == 0 { 0.0 } else { fp / (fp + tn) };
    Metrics { precision, recall, f1, accuracy, far }
}

/// ROC swept over distinct scores descending; AUC by the trapezoid rule.
#[allow(clippy::type_complexity)]
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<(Vec<(f64, f64, f64)>, f64), EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), scores.len()));
    }
    let n_pos = y_true.iter().filter(|&&t| t != 0).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = vec![(0.0, 0.0, f64::INFINITY)];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut last_fpr, mut last_tpr) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        // consume the whole tie group before emitting a point
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / n_pos as f64;
        let fpr = fp as f64 / n_neg as f64;
        auc += (fpr - last_fpr) * (tpr + last_tpr) / 2.0;
        curve.push((fpr, tpr, s));
        last_fpr = fpr;
        last_tpr = tpr;
    }
    Ok((curve, auc))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOp {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "==")]
    Eq,
    In,
}

/// Threshold predicate over one named field of the joined
/// flow + temporal view of a row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MisuseRule {
    pub id: String,
    pub field: String,
    pub op: RuleOp,
    pub value: Value,
}

fn rule_field(rule: &MisuseRule, flow: &FlowFeatureVector, temporal: Option<&TemporalFeatureRow>) -> Result<Option<f64>, EvalError> {
    let bad = |reason: &str| EvalError::BadRule { id: rule.id.clone(), reason: reason.to_string() };
    if let Some(idx) = crate::temporal::SIGNAL_NAMES.iter().position(|&n| n == rule.field) {
        return Ok(temporal.map(|t| t.counts[idx] as f64));
    }
    match rule.field.as_str() {
        "Dport" => Ok(Some(flow.dport)),
        "Dur" => Ok(Some(flow.dur)),
        "state" => {
            // state comparisons are by CON/REQ/... name mapped to its ordinal
            let names = ["CON", "REQ", "RST", "FIN", "INT"];
            Ok(names.iter().position(|&n| n == flow.state.name()).map(|i| i as f64))
        }
        "FIN_pkts_a2b" => Ok(match flow.fin_pkts_a2b {
            crate::flow::FeatCell::Val(v) => Some(v),
            crate::flow::FeatCell::Missing(_) => None,
        }),
        _ => Err(bad("unknown field")),
    }
}

fn rule_matches(rule: &MisuseRule, lhs: f64) -> Result<bool, EvalError> {
    let bad = |reason: &str| EvalError::BadRule { id: rule.id.clone(), reason: reason.to_string() };
    match rule.op {
        RuleOp::Ge | RuleOp::Gt | RuleOp::Eq => {
            let rhs = rule.value.as_f64().ok_or_else(|| bad("value must be numeric"))?;
            Ok(match rule.op {
                RuleOp::Ge => lhs >= rhs,
                RuleOp::Gt => lhs > rhs,
                _ => lhs == rhs,
            })
        }
        RuleOp::In => {
            let set = rule.value.as_array().ok_or_else(|| bad("value must be an array"))?;
            for v in set {
                let rhs = v.as_f64().ok_or_else(|| bad("array entries must be numeric"))?;
                if lhs == rhs {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MisuseReport {
    pub verdicts: Vec<u8>,
    /// Hits per rule id, in ruleset order.
    pub rule_hits: Vec<(String, u64)>,
}

/// OR over all rules; rows are matched flow/temporal pairs in flow order.
pub fn misuse_detect(
    flows: &[FlowFeatureVector],
    temporal: &[TemporalFeatureRow],
    rules: &[MisuseRule],
) -> Result<MisuseReport, EvalError> {
    use std::collections::HashMap;
    let by_key: HashMap<_, _> = temporal.iter().map(|t| ((t.key, t.start_us), t)).collect();
    let mut hits = vec![0u64; rules.len()];
    let mut verdicts = Vec::with_capacity(flows.len());
    for f in flows {
        let t = by_key.get(&(f.key, f.start_us)).copied();
        let mut verdict = 0u8;
        for (ri, rule) in rules.iter().enumerate() {
            if let Some(lhs) = rule_field(rule, f, t)? {
                if rule_matches(rule, lhs)? {
                    hits[ri] += 1;
                    verdict = 1;
                }
            }
        }
        verdicts.push(verdict);
    }
    Ok(MisuseReport {
        verdicts,
        rule_hits: rules.iter().map(|r| r.id.clone()).zip(hits).collect(),
    })
}

/// Conservative nmap-style defaults: high per-source SYN/connect/echo rates
/// in the counting window, plus the telltale dead-flag masks.
pub fn default_misuse_rules() -> Vec<MisuseRule> {
    serde_json::from_value(serde_json::json!([
        {"id": "syn-rate", "field": "syn_count", "op": ">=", "value": 20},
        {"id": "fin-probe", "field": "fin_count", "op": ">=", "value": 8},
        {"id": "icmp-sweep", "field": "icmp_count", "op": ">=", "value": 16},
        {"id": "connect-rate", "field": "finack_count", "op": ">=", "value": 40}
    ]))
    .expect("static ruleset parses")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub anomaly: Metrics,
    pub misuse: Metrics,
    pub recall_delta: f64,
    pub f1_delta: f64,
    /// Row indices where the two verdicts differ.
    pub disagreements: Vec<usize>,
}

pub fn compare(
    y_true: &[u8],
    anomaly_pred: &[u8],
    misuse_pred: &[u8],
) -> Result<ComparisonReport, EvalError> {
    if anomaly_pred.len() != misuse_pred.len() {
        return Err(EvalError::RowSetMismatch);
    }
    let a = metrics(&confusion(y_true, anomaly_pred)?);
    let m = metrics(&confusion(y_true, misuse_pred)?);
    let disagreements = anomaly_pred
        .iter()
        .zip(misuse_pred)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect();
    Ok(ComparisonReport {
        anomaly: a,
        misuse: m,
        recall_delta: a.recall - m.recall,
        f1_delta: a.f1 - m.f1,
        disagreements,
    })
}

pub fn report(y_true: &[u8], y_pred: &[u8], scores: Option<&[f64]>) -> Result<EvalReport, EvalError> {
    let matrix = confusion(y_true, y_pred)?;
    let (roc, auc) = match scores {
        Some(s) => {
            let (c, a) = roc_auc(y_true, s)?;
            (Some(c), Some(a))
        }
        None => (None, None),
    };
    Ok(EvalReport { matrix, metrics: metrics(&matrix), roc, auc })
}
