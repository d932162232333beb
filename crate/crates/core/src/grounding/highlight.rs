use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::EvalError;

/// The nine discrete saliency levels, 1.0 to 5.0 in steps of 0.5.
pub const SALIENCY_LEVELS: [f64; 9] = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];

/// Clips at or above this level count as highlights ("Very Good").
pub const DEFAULT_POSITIVE_LEVEL: f64 = 4.0;

pub fn is_saliency_level(v: f64) -> bool {
    SALIENCY_LEVELS.contains(&v)
}

/// Maps a similarity in `[0, 1]` onto the saliency grid:
/// `1 + 0.5 * round_half_even(8 * clamp(sim, 0, 1))`. NaN maps to 1.0.
pub fn saliency_discretize(similarity: f64) -> f64 {
    let s = if similarity > 0.0 { similarity.min(1.0) } else { 0.0 };
    1.0 + 0.5 * libm::rint(8.0 * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighlightItem {
    pub id: String,
    pub clip_duration_s: f64,
    pub pred_scores: Vec<f64>,
    pub gt_saliency: Vec<f64>,
}

impl HighlightItem {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::InvalidItem(msg));
        if self.pred_scores.is_empty() {
            return bad(format!("{}: no clips", self.id));
        }
        if self.pred_scores.len() != self.gt_saliency.len() {
            return bad(format!(
                "{}: {} scores but {} saliency levels",
                self.id,
                self.pred_scores.len(),
                self.gt_saliency.len()
            ));
        }
        if !(self.clip_duration_s > 0.0) || !self.clip_duration_s.is_finite() {
            return bad(format!("{}: clip_duration_s must be positive", self.id));
        }
        if let Some(s) = self.pred_scores.iter().find(|s| !s.is_finite()) {
            return bad(format!("{}: non-finite score {s}", self.id));
        }
        if let Some(l) = self.gt_saliency.iter().find(|l| !is_saliency_level(**l)) {
            return bad(format!("{}: saliency {l} is not on the 1.0..5.0 grid", self.id));
        }
        Ok(())
    }

    /// Clip indices by descending score, ties broken by ascending index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.pred_scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.pred_scores[b]
                .total_cmp(&self.pred_scores[a])
                .then(a.cmp(&b))
        });
        order
    }
}

/// Average of precision@rank over the ranks of positive clips.
pub fn average_precision(item: &HighlightItem, positive_level: f64) -> Result<f64, EvalError> {
    item.validate()?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, idx) in item.ranking().into_iter().enumerate() {
        if item.gt_saliency[idx] >= positive_level {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(EvalError::NotEvaluable);
    }
    Ok(sum / hits as f64)
}

fn top_is_positive(item: &HighlightItem, positive_level: f64) -> Result<bool, EvalError> {
    item.validate()?;
    if !item.gt_saliency.iter().any(|&l| l >= positive_level) {
        return Err(EvalError::NotEvaluable);
    }
    Ok(item.gt_saliency[item.ranking()[0]] >= positive_level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighlightSummary {
    pub map: f64,
    pub hit1: f64,
    pub n_items: usize,
    pub n_evaluated: usize,
    /// Items skipped because they have no positive clip.
    pub n_skipped: usize,
}

/// Scores every item; items without positives are skipped and counted.
/// Invalid items are an error. The result does not depend on item order.
pub fn evaluate_highlights(items: &[HighlightItem], positive_level: f64) -> Result<HighlightSummary, EvalError> {
    let mut aps = Vec::with_capacity(items.len());
    let mut hits = 0usize;
    let mut skipped = 0usize;
    for item in items {
        match average_precision(item, positive_level) {
            Ok(ap) => {
                aps.push(ap);
                if top_is_positive(item, positive_level)? {
                    hits += 1;
                }
            }
            Err(EvalError::NotEvaluable) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if aps.is_empty() {
        return Err(EvalError::NoneEvaluable);
    }
    aps.sort_by(f64::total_cmp);
    let n = aps.len() as f64;
    Ok(HighlightSummary {
        map: aps.iter().sum::<f64>() / n,
        hit1: hits as f64 / n,
        n_items: items.len(),
        n_evaluated: aps.len(),
        n_skipped: skipped,
    })
}

/// Mean AP over evaluable items.
pub fn highlight_map(items: &[HighlightItem], positive_level: f64) -> Result<f64, EvalError> {
    evaluate_highlights(items, positive_level).map(|s| s.map)
}

/// Fraction of evaluable items whose top-ranked clip is a highlight.
pub fn hit_at_1(items: &[HighlightItem], positive_level: f64) -> Result<f64, EvalError> {
    evaluate_highlights(items, positive_level).map(|s| s.hit1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn hl(scores: &[f64], gt: &[f64]) -> HighlightItem {
        HighlightItem {
            id: "x".into(),
            clip_duration_s: 2.0,
            pred_scores: scores.to_vec(),
            gt_saliency: gt.to_vec(),
        }
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&hl(&[0.9, 0.1], &[4.0, 1.0]), 4.0), Ok(1.0));
        assert_eq!(average_precision(&hl(&[0.1, 0.9], &[4.0, 1.0]), 4.0), Ok(0.5));
        assert_eq!(average_precision(&hl(&[0.3, 0.9, 0.5], &[4.5, 5.0, 4.0]), 4.0), Ok(1.0));
        assert_eq!(
            average_precision(&hl(&[0.3, 0.9], &[1.0, 3.5]), 4.0),
            Err(EvalError::NotEvaluable)
        );
    }

    #[test]
    fn map_and_hit() {
        let items = vec![hl(&[0.9, 0.1], &[4.0, 1.0]), hl(&[0.1, 0.9], &[4.0, 1.0])];
        assert_eq!(highlight_map(&items, 4.0), Ok(0.75));
        assert_eq!(hit_at_1(&items, 4.0), Ok(0.5));
        assert_eq!(highlight_map(&items[..1], 4.0), Ok(1.0));
        assert_eq!(highlight_map(&[hl(&[1.0], &[2.0])], 4.0), Err(EvalError::NoneEvaluable));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let item = hl(&[0.5, 0.5], &[1.0, 4.0]);
        assert_eq!(item.ranking(), vec![0, 1]);
        assert_eq!(hit_at_1(&[item], 4.0), Ok(0.0));
    }

    #[test]
    fn validation() {
        assert!(hl(&[0.1], &[1.0, 2.0]).validate().is_err());
        assert!(hl(&[0.1], &[1.2]).validate().is_err());
        assert!(hl(&[], &[]).validate().is_err());
    }

    #[test]
    fn saliency_grid() {
        assert_eq!(saliency_discretize(1.0), 5.0);
        assert_eq!(saliency_discretize(7.0), 5.0);
        assert_eq!(saliency_discretize(0.0), 1.0);
        assert_eq!(saliency_discretize(-0.3), 1.0);
        assert_eq!(saliency_discretize(f64::NAN), 1.0);
        assert_eq!(saliency_discretize(0.5), 3.0);
        // 8 * 0.0625 = 0.5 rounds to even (0).
        assert_eq!(saliency_discretize(0.0625), 1.0);
        assert_eq!(saliency_discretize(0.1875), 2.0);
    }
}
