//! Confusion matrices, precision/recall/accuracy per site and pooled
//! overall (micro-average), ROC curves with trapezoidal AUC, and report
//! rendering.
//!
//! Positive class is always "yield". Zero-denominator metrics are defined
//! as 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{align_table, markup_table};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions ({0}) and truths ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("ROC needs at least one positive and one negative truth")]
    SingleClassTruths,
    #[error("scores and truths differ in length: {0} vs {1}")]
    ScoreLengthMismatch(usize, usize),
}

/// Binary confusion counts; positive class = yield.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        ConfusionMatrix {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            true_positives: self.true_positives + other.true_positives,
            false_positives: self.false_positives + other.false_positives,
            false_negatives: self.false_negatives + other.false_negatives,
            true_negatives: self.true_negatives + other.true_negatives,
        }
    }
}

/// Tallies predictions against truths.
pub fn confusion(predictions: &[bool], truths: &[bool]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), truths.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (true, true) => cm.true_positives += 1,
            (true, false) => cm.false_positives += 1,
            (false, true) => cm.false_negatives += 1,
            (false, false) => cm.true_negatives += 1,
        }
    }
    Ok(cm)
}

/// Accuracy, recall, and precision of one confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
}

/// accuracy = (TP+TN)/total, recall = TP/(TP+FN), precision = TP/(TP+FP);
/// recall and precision fall back to 0 on a zero denominator.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let tp = cm.true_positives as f64;
    let accuracy = (tp + cm.true_negatives as f64) / total as f64;
    let pos_truth = cm.true_positives + cm.false_negatives;
    let recall = if pos_truth == 0 {
        0.0
    } else {
        tp / pos_truth as f64
    };
    let pos_pred = cm.true_positives + cm.false_positives;
    let precision = if pos_pred == 0 {
        0.0
    } else {
        tp / pos_pred as f64
    };
    Ok(Metrics {
        accuracy,
        recall,
        precision,
    })
}

/// Metrics for one site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteMetrics {
    pub site_id: u32,
    pub n: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

/// Per-site rows plus the pooled overall row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_site: Vec<SiteMetrics>,
    /// Pooled metrics over the summed confusion matrix; None when there
    /// are no sites.
    pub overall: Option<SiteOverall>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteOverall {
    pub n: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

/// Pools per-site confusion matrices into a report. The overall row is the
/// micro-average: metrics of the elementwise-summed matrix, never the mean
/// of per-site metrics.
pub fn aggregate(per_site: &BTreeMap<u32, ConfusionMatrix>) -> Result<MetricsReport, EvalError> {
    let mut rows = Vec::with_capacity(per_site.len());
    let mut pooled = ConfusionMatrix::default();
    for (&site_id, cm) in per_site {
        rows.push(SiteMetrics {
            site_id,
            n: cm.total(),
            metrics: metrics(cm)?,
            confusion: *cm,
        });
        pooled = pooled.add(cm);
    }
    let overall = if rows.is_empty() {
        None
    } else {
        Some(SiteOverall {
            n: pooled.total(),
            metrics: metrics(&pooled)?,
            confusion: pooled,
        })
    };
    Ok(MetricsReport {
        per_site: rows,
        overall,
    })
}

/// One operating point of the ROC curve: classify positive iff
/// score >= threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocPoint {
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Two-column delimited export (false positive rate, true positive
    /// rate), one point per line.
    pub fn render_points(&self) -> String {
        let mut out = String::from("false_positive_rate,true_positive_rate\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.6},{:.6}\n",
                p.false_positive_rate, p.true_positive_rate
            ));
        }
        out
    }
}

/// ROC points at every distinct score (descending) plus the (0,0)
/// sentinel, with trapezoidal AUC. Tied scores collapse into a single
/// threshold step.
pub fn roc_points(scores: &[f64], truths: &[bool]) -> Result<RocCurve, EvalError> {
    if scores.len() != truths.len() {
        return Err(EvalError::ScoreLengthMismatch(scores.len(), truths.len()));
    }
    let n_pos = truths.iter().filter(|&&t| t).count();
    let n_neg = truths.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassTruths);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("scores not NaN"));

    let mut points = vec![RocPoint {
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // consume the whole tie group at this score
        while i < order.len() && scores[order[i]] == threshold {
            if truths[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            false_positive_rate: fp as f64 / n_neg as f64,
            true_positive_rate: tp as f64 / n_pos as f64,
            threshold,
        });
    }

    let mut auc = 0.0;
    for w in points.windows(2) {
        let dx = w[1].false_positive_rate - w[0].false_positive_rate;
        auc += dx * (w[1].true_positive_rate + w[0].true_positive_rate) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

/// Output formats for the metrics report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    AlignedText,
    Delimited,
    MarkupTable,
}

/// Renders the report with 4-decimal metrics. Deterministic for equal
/// inputs.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    let headers = ["Site", "Accuracy", "Recall", "Precision", "n"];
    let mut rows: Vec<Vec<String>> = report
        .per_site
        .iter()
        .map(|s| {
            vec![
                format!("Site {}", s.site_id),
                format!("{:.4}", s.metrics.accuracy),
                format!("{:.4}", s.metrics.recall),
                format!("{:.4}", s.metrics.precision),
                s.n.to_string(),
            ]
        })
        .collect();
    if let Some(overall) = &report.overall {
        rows.push(vec![
            "Overall".to_string(),
            format!("{:.4}", overall.metrics.accuracy),
            format!("{:.4}", overall.metrics.recall),
            format!("{:.4}", overall.metrics.precision),
            overall.n.to_string(),
        ]);
    }
    match format {
        ReportFormat::AlignedText => align_table(&headers, &rows),
        ReportFormat::MarkupTable => markup_table(&headers, &rows),
        ReportFormat::Delimited => {
            let mut out = String::from("site,accuracy,recall,precision,n\n");
            for row in rows {
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
    }
}
