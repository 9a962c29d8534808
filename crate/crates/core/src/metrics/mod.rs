//! Classification and caption metrics and the combined report.

mod caption;
mod classification;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use caption::{bleu, cider, lcs_len, modified_precisions, rouge_l, BLEU_SMOOTHING, CIDER_SCALE, ROUGE_BETA};
pub use classification::{auc, classification_metrics, ClassificationMetrics};

use crate::heads::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionMetrics {
    /// Mean sentence-level BLEU-1 through BLEU-4.
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub cider: f64,
}

/// Scores candidate captions against one reference each.
pub fn caption_metrics(candidates: &[String], references: &[String]) -> CaptionMetrics {
    assert_eq!(candidates.len(), references.len(), "one reference per candidate");
    let cands: Vec<Vec<String>> = candidates.iter().map(|c| tokenize(c)).collect();
    let refs: Vec<Vec<Vec<String>>> = references.iter().map(|r| vec![tokenize(r)]).collect();
    let n = cands.len().max(1) as f64;
    let mut bleu_sum = [0.0; 4];
    let mut rouge_sum = 0.0;
    for (c, r) in cands.iter().zip(&refs) {
        for (k, b) in bleu_sum.iter_mut().enumerate() {
            *b += bleu(c, r, k + 1);
        }
        rouge_sum += rouge_l(c, &r[0]);
    }
    CaptionMetrics {
        bleu: bleu_sum.map(|b| b / n),
        rouge_l: rouge_sum / n,
        cider: cider(&cands, &refs).0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub bags: usize,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub caption: Option<CaptionMetrics>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Two aligned columns: metric name and value.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("task".into(), self.task.clone()),
            ("bags".into(), self.bags.to_string()),
        ];
        if let Some(c) = &self.classification {
            for (k, v) in [("precision", c.precision), ("recall", c.recall), ("f1", c.f1), ("auc", c.auc)] {
                rows.push((k.into(), format!("{v:.4}")));
            }
            if !c.undefined.is_empty() {
                rows.push(("undefined".into(), c.undefined.join(",")));
            }
        }
        if let Some(c) = &self.caption {
            for (k, v) in c.bleu.iter().enumerate() {
                rows.push((format!("bleu@{}", k + 1), format!("{v:.4}")));
            }
            rows.push(("rouge_l".into(), format!("{:.4}", c.rouge_l)));
            rows.push(("cider".into(), format!("{:.4}", c.cider)));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}
