//! Temporal grounding and highlight-detection evaluation.

mod highlight;
mod parse;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use highlight::{
    average_precision, evaluate_highlights, highlight_map, hit_at_1, is_saliency_level,
    saliency_discretize, HighlightItem, HighlightSummary, DEFAULT_POSITIVE_LEVEL, SALIENCY_LEVELS,
};
pub use parse::{parse_timespan, ParsedSpan, TimespanForm};

/// IoU thresholds reported for R@1.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// No recognised timespan in a model response.
    NoTimespanFound,
    InvalidSpan { start: f64, end: f64 },
    EmptyInput,
    /// A highlight item without any clip at or above the positive level.
    NotEvaluable,
    NoneEvaluable,
    InvalidItem(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::NoTimespanFound => f.write_str("no timespan found in response"),
            EvalError::InvalidSpan { start, end } => {
                write!(f, "invalid timespan ({start}, {end}): need 0 <= start <= end, finite")
            }
            EvalError::EmptyInput => f.write_str("no items to evaluate"),
            EvalError::NotEvaluable => f.write_str("item has no positive clips"),
            EvalError::NoneEvaluable => f.write_str("no item has positive clips"),
            EvalError::InvalidItem(msg) => write!(f, "invalid item: {msg}"),
        }
    }
}

impl core::error::Error for EvalError {}

/// A closed interval `[start_s, end_s]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpan {
    start_s: f64,
    end_s: f64,
}

impl TimeSpan {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self, EvalError> {
        if !start_s.is_finite() || !end_s.is_finite() || start_s < 0.0 || start_s > end_s {
            return Err(EvalError::InvalidSpan {
                start: start_s,
                end: end_s,
            });
        }
        Ok(Self { start_s, end_s })
    }

    #[inline]
    pub fn start(&self) -> f64 {
        self.start_s
    }

    #[inline]
    pub fn end(&self) -> f64 {
        self.end_s
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn is_point(&self) -> bool {
        self.start_s == self.end_s
    }
}

/// Temporal intersection over union.
///
/// Two identical zero-length spans score 1; any other pair with an empty
/// union scores 0.
pub fn iou(a: &TimeSpan, b: &TimeSpan) -> f64 {
    let inter = (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0);
    let union = a.len() + b.len() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Raw model response, parsed with [`parse_timespan`] at scoring time.
    Text(String),
    Span(TimeSpan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingItem {
    pub id: String,
    pub video_id: String,
    pub query: String,
    pub gt: TimeSpan,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemScore {
    pub iou: f64,
    pub parsed: bool,
    /// The response listed the end before the start.
    pub swapped: bool,
}

/// IoU of one item; an unparseable response scores 0.
pub fn score_item(item: &GroundingItem) -> ItemScore {
    let (pred, swapped) = match &item.prediction {
        Prediction::Span(s) => (Some(*s), false),
        Prediction::Text(t) => match parse_timespan(t) {
            Ok(p) => (Some(p.span), p.swapped),
            Err(_) => (None, false),
        },
    };
    match pred {
        Some(p) => ItemScore {
            iou: iou(&p, &item.gt),
            parsed: true,
            swapped,
        },
        None => ItemScore {
            iou: 0.0,
            parsed: false,
            swapped: false,
        },
    }
}

/// Fraction of items whose prediction reaches each IoU threshold.
pub fn recall_at_1(items: &[GroundingItem], thresholds: &[f64]) -> Result<Vec<f64>, EvalError> {
    let scores: Vec<ItemScore> = items.iter().map(score_item).collect();
    recall_from_scores(&scores, thresholds)
}

pub fn recall_from_scores(scores: &[ItemScore], thresholds: &[f64]) -> Result<Vec<f64>, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = scores.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&th| scores.iter().filter(|s| s.parsed && s.iou >= th).count() as f64 / n)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingSummary {
    /// `(threshold, R@1)` pairs in the order requested.
    pub recall: Vec<(f64, f64)>,
    pub mean_iou: f64,
    pub n_items: usize,
    pub n_unparsed: usize,
    pub n_swapped: usize,
}

impl GroundingSummary {
    pub fn recall_at(&self, threshold: f64) -> Option<f64> {
        self.recall
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-12)
            .map(|&(_, r)| r)
    }
}

pub fn evaluate_grounding(items: &[GroundingItem], thresholds: &[f64]) -> Result<GroundingSummary, EvalError> {
    let scores: Vec<ItemScore> = items.iter().map(score_item).collect();
    summarize_scores(&scores, thresholds)
}

/// Aggregates per-item scores; independent of item order.
pub fn summarize_scores(scores: &[ItemScore], thresholds: &[f64]) -> Result<GroundingSummary, EvalError> {
    let recall = recall_from_scores(scores, thresholds)?;
    let mut ious: Vec<f64> = scores.iter().map(|s| s.iou).collect();
    ious.sort_by(f64::total_cmp);
    Ok(GroundingSummary {
        recall: thresholds.iter().copied().zip(recall).collect(),
        mean_iou: ious.iter().sum::<f64>() / ious.len() as f64,
        n_items: scores.len(),
        n_unparsed: scores.iter().filter(|s| !s.parsed).count(),
        n_swapped: scores.iter().filter(|s| s.swapped).count(),
    })
}
