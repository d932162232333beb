use anyhow::Result;
use rayon::prelude::*;
use timesuite_core::grounding::{evaluate_highlights, score_item, summarize_scores, ItemScore};

use crate::config::RunConfig;
use crate::formats::{load_grounding, load_highlights};
use crate::report::{EvalReport, RecallEntry};

fn recall_field(recall: &[RecallEntry], th: f64) -> Option<f64> {
    recall.iter().find(|r| (r.threshold - th).abs() < 1e-12).map(|r| r.r1)
}

/// Scores grounding predictions against ground truth. Items are scored in
/// parallel on the current rayon pool.
pub fn eval_grounding(pred: &str, pred_origin: &str, gt: &str, gt_origin: &str, config: &RunConfig) -> Result<EvalReport> {
    let input = load_grounding(pred, pred_origin, gt, gt_origin)?;
    let scores: Vec<ItemScore> = input.items.par_iter().map(score_item).collect();
    let s = summarize_scores(&scores, &config.eval.thresholds)?;
    let recall: Vec<RecallEntry> = s.recall.iter().map(|&(threshold, r1)| RecallEntry { threshold, r1 }).collect();
    let mut report = EvalReport::empty("eval-grounding", config.clone());
    report.r1_03 = recall_field(&recall, 0.3);
    report.r1_05 = recall_field(&recall, 0.5);
    report.r1_07 = recall_field(&recall, 0.7);
    report.recall = recall;
    report.mean_iou = Some(s.mean_iou);
    report.n_items = s.n_items;
    report.n_unparsed = s.n_unparsed;
    report.n_swapped = s.n_swapped;
    report.n_missing = input.missing.len();
    Ok(report)
}

pub fn eval_highlight(text: &str, origin: &str, config: &RunConfig) -> Result<EvalReport> {
    let items = load_highlights(text, origin)?;
    let s = evaluate_highlights(&items, config.eval.positive_level)?;
    let mut report = EvalReport::empty("eval-highlight", config.clone());
    report.map = Some(s.map);
    report.hit1 = Some(s.hit1);
    report.n_items = s.n_items;
    report.n_skipped = s.n_skipped;
    Ok(report)
}
