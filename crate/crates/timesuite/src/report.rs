//! Structured reports (JSON) and their plain-text tables.

use anyhow::Result;
use serde::Serialize;

use crate::config::RunConfig;

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallEntry {
    pub threshold: f64,
    pub r1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub command: &'static str,
    pub r1_03: Option<f64>,
    pub r1_05: Option<f64>,
    pub r1_07: Option<f64>,
    pub recall: Vec<RecallEntry>,
    pub mean_iou: Option<f64>,
    pub map: Option<f64>,
    pub hit1: Option<f64>,
    pub n_items: usize,
    pub n_unparsed: usize,
    pub n_swapped: usize,
    /// Ground-truth items with no prediction line.
    pub n_missing: usize,
    /// Highlight items without any positive clip.
    pub n_skipped: usize,
    pub config: RunConfig,
}

impl EvalReport {
    pub fn empty(command: &'static str, config: RunConfig) -> Self {
        Self {
            command,
            r1_03: None,
            r1_05: None,
            r1_07: None,
            recall: Vec::new(),
            mean_iou: None,
            map: None,
            hit1: None,
            n_items: 0,
            n_unparsed: 0,
            n_swapped: 0,
            n_missing: 0,
            n_skipped: 0,
            config,
        }
    }

    pub fn table(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        for r in &self.recall {
            rows.push((format!("R@1 (IoU={})", r.threshold), pct(r.r1)));
        }
        if let Some(v) = self.mean_iou {
            rows.push(("mIoU".into(), pct(v)));
        }
        if let Some(v) = self.map {
            rows.push(("mAP".into(), pct(v)));
        }
        if let Some(v) = self.hit1 {
            rows.push(("HIT@1".into(), pct(v)));
        }
        rows.push(("items".into(), self.n_items.to_string()));
        if self.command == "eval-grounding" {
            rows.push(("unparsed".into(), self.n_unparsed.to_string()));
            rows.push(("swapped".into(), self.n_swapped.to_string()));
            rows.push(("missing".into(), self.n_missing.to_string()));
        } else {
            rows.push(("skipped (no positives)".into(), self.n_skipped.to_string()));
        }
        render_table(&rows)
    }
}

/// Two-column table with the label column padded.
pub fn render_table(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    out
}
