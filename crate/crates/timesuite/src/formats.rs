//! Line-delimited JSON record formats.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use timesuite_core::grounding::{GroundingItem, HighlightItem, Prediction, TimeSpan};
use timesuite_core::tgc::{InstructionRecord, SourceRecord};

/// Error for one line of an input file.
#[derive(Debug, thiserror::Error)]
#[error("{path}:{line}: {message}")]
pub struct LineError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

/// Parses every non-blank line of `text` as a `T`. `origin` names the
/// source in error messages.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| LineError {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn line_err(origin: &str, line: usize, message: impl Into<String>) -> anyhow::Error {
    LineError {
        path: origin.to_string(),
        line,
        message: message.into(),
    }
    .into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(default)]
    pub video_id: String,
    #[serde(default)]
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub id: String,
    #[serde(default)]
    pub video_id: String,
    #[serde(default)]
    pub query: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighlightRecord {
    pub id: String,
    pub clip_duration_s: f64,
    pub pred_scores: Vec<f64>,
    pub gt_saliency: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceLine {
    pub video_id: String,
    pub start: f64,
    pub end: f64,
    pub caption: String,
    pub video_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TgcLine {
    pub video_id: String,
    pub start: f64,
    pub end: f64,
    pub query: String,
    pub answer: String,
}

impl From<&InstructionRecord> for TgcLine {
    fn from(r: &InstructionRecord) -> Self {
        Self {
            video_id: r.video_id.clone(),
            start: r.start,
            end: r.end,
            query: r.query.clone(),
            answer: r.answer.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub video_id: String,
    pub total_frames: usize,
    pub duration_s: f64,
}

/// Grounding items joined on `id`, in ground-truth order.
#[derive(Debug, Clone)]
pub struct GroundingInput {
    pub items: Vec<GroundingItem>,
    /// Ground-truth ids without a prediction; they score as unparsed.
    pub missing: Vec<String>,
}

pub fn load_grounding(pred_text: &str, pred_origin: &str, gt_text: &str, gt_origin: &str) -> Result<GroundingInput> {
    let preds: Vec<(usize, PredictionRecord)> = parse_jsonl(pred_text, pred_origin)?;
    let gts: Vec<(usize, GroundTruthRecord)> = parse_jsonl(gt_text, gt_origin)?;
    if gts.is_empty() {
        bail!("{gt_origin}: no ground-truth records");
    }
    let mut by_id: BTreeMap<String, (usize, Prediction)> = BTreeMap::new();
    for (line, p) in preds {
        let prediction = match (&p.response_text, p.pred_start, p.pred_end) {
            (Some(text), None, None) => Prediction::Text(text.clone()),
            (None, Some(s), Some(e)) => {
                let span = TimeSpan::new(s, e).map_err(|err| line_err(pred_origin, line, err.to_string()))?;
                Prediction::Span(span)
            }
            _ => {
                return Err(line_err(
                    pred_origin,
                    line,
                    "need either response_text or both pred_start and pred_end",
                ))
            }
        };
        if by_id.insert(p.id.clone(), (line, prediction)).is_some() {
            return Err(line_err(pred_origin, line, format!("duplicate id {:?}", p.id)));
        }
    }
    let mut items = Vec::with_capacity(gts.len());
    let mut missing = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, g) in gts {
        if !seen.insert(g.id.clone()) {
            return Err(line_err(gt_origin, line, format!("duplicate id {:?}", g.id)));
        }
        let gt = TimeSpan::new(g.start, g.end).map_err(|e| line_err(gt_origin, line, e.to_string()))?;
        let prediction = match by_id.remove(&g.id) {
            Some((_, p)) => p,
            None => {
                missing.push(g.id.clone());
                Prediction::Text(String::new())
            }
        };
        items.push(GroundingItem {
            id: g.id,
            video_id: g.video_id,
            query: g.query,
            gt,
            prediction,
        });
    }
    if let Some((id, (line, _))) = by_id.into_iter().next() {
        return Err(line_err(pred_origin, line, format!("prediction {id:?} has no ground truth")));
    }
    Ok(GroundingInput { items, missing })
}

pub fn load_highlights(text: &str, origin: &str) -> Result<Vec<HighlightItem>> {
    let recs: Vec<(usize, HighlightRecord)> = parse_jsonl(text, origin)?;
    if recs.is_empty() {
        bail!("{origin}: no highlight records");
    }
    recs.into_iter()
        .map(|(line, r)| {
            let item = HighlightItem {
                id: r.id,
                clip_duration_s: r.clip_duration_s,
                pred_scores: r.pred_scores,
                gt_saliency: r.gt_saliency,
            };
            item.validate().map_err(|e| line_err(origin, line, e.to_string()))?;
            Ok(item)
        })
        .collect()
}

pub fn load_sources(text: &str, origin: &str) -> Result<Vec<SourceRecord>> {
    parse_jsonl::<SourceLine>(text, origin)?
        .into_iter()
        .map(|(line, r)| {
            SourceRecord::new(r.video_id, r.start, r.end, r.caption, r.video_duration_s)
                .map_err(|e| line_err(origin, line, e.to_string()))
        })
        .collect()
}

pub fn load_manifest(text: &str, origin: &str) -> Result<Vec<ManifestRecord>> {
    parse_jsonl::<ManifestRecord>(text, origin)?
        .into_iter()
        .map(|(line, r)| {
            if r.total_frames == 0 || !(r.duration_s > 0.0) || !r.duration_s.is_finite() {
                return Err(line_err(origin, line, "total_frames and duration_s must be positive"));
            }
            Ok(r)
        })
        .collect()
}
