//! Temporal grounded caption (TGC) data construction.
//!
//! Four stages turn timestamped detailed captions into instruction records
//! whose query is a short scene title and whose answer carries both the
//! timespan and the detailed caption:
//!
//! 1. duration filtering ([`filter_by_duration`]),
//! 2. scene-title summarisation ([`summarize_title`]),
//! 3. within-video similarity filtering ([`cross_segment_similarity`],
//!    [`dedup_segments`]),
//! 4. seeded sampling for manual review ([`sample_for_review`]).
//!
//! [`run_pipeline`] chains them and [`emit_tgc`] renders the records.

mod pipeline;
pub mod text;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::grounding::TimeSpan;

pub use pipeline::{
    run_pipeline, BuiltRecord, DurationStage, PipelineOutput, PipelineReport, Rejection,
    SimilarityStage, TitleStage,
};
pub use text::{cosine, BagOfWordsEmbedder, FallbackSummarizer};

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineError {
    InvalidRecord(String),
    InvalidConfig(String),
    QuarantineOverflow {
        quarantined: usize,
        total: usize,
        max_fraction: f64,
    },
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::InvalidRecord(msg) => write!(f, "invalid source record: {msg}"),
            PipelineError::InvalidConfig(msg) => write!(f, "invalid pipeline config: {msg}"),
            PipelineError::QuarantineOverflow {
                quarantined,
                total,
                max_fraction,
            } => write!(
                f,
                "{quarantined} of {total} records quarantined at title stage, above the allowed fraction {max_fraction}"
            ),
        }
    }
}

impl core::error::Error for PipelineError {}

/// Failure reported by a [`Summarizer`]; the record is quarantined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummarizeError(pub String);

impl fmt::Display for SummarizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Produces a brief scene title from a detailed caption. Must be
/// deterministic.
pub trait Summarizer {
    fn summarize(&self, caption: &str, max_tokens: usize) -> Result<String, SummarizeError>;
}

/// Maps text to a unit-norm vector (or the zero vector for empty content).
/// Must be deterministic.
pub trait Embedder {
    fn embed(&self, text: &str) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRecord {
    pub video_id: String,
    pub span: TimeSpan,
    pub detailed_caption: String,
    pub video_duration_s: f64,
}

impl SourceRecord {
    pub fn new(
        video_id: impl Into<String>,
        start: f64,
        end: f64,
        detailed_caption: impl Into<String>,
        video_duration_s: f64,
    ) -> Result<Self, PipelineError> {
        let video_id = video_id.into();
        let detailed_caption = detailed_caption.into();
        let span = TimeSpan::new(start, end)
            .map_err(|e| PipelineError::InvalidRecord(format!("{video_id}: {e}")))?;
        if !(video_duration_s.is_finite() && end <= video_duration_s) {
            return Err(PipelineError::InvalidRecord(format!(
                "{video_id}: span ({start}, {end}) exceeds video duration {video_duration_s}"
            )));
        }
        if detailed_caption.trim().is_empty() {
            return Err(PipelineError::InvalidRecord(format!("{video_id}: empty caption")));
        }
        Ok(Self {
            video_id,
            span,
            detailed_caption,
            video_duration_s,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TgcRecord {
    pub video_id: String,
    pub span: TimeSpan,
    pub scene_title: String,
    pub detailed_caption: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub min_span_s: f64,
    pub max_span_s: f64,
    pub title_max_tokens: usize,
    /// Records at or above this similarity to an earlier kept record of the
    /// same video are dropped.
    pub sim_threshold: f64,
    pub review_sample_n: usize,
    pub seed: u64,
    /// Largest tolerated fraction of stage-2 inputs that fail summarisation.
    pub max_quarantine_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            min_span_s: 5.0,
            max_span_s: 120.0,
            title_max_tokens: 8,
            sim_threshold: 0.85,
            review_sample_n: 20,
            seed: 0,
            max_quarantine_fraction: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.min_span_s > 0.0 && self.min_span_s < self.max_span_s && self.max_span_s.is_finite()) {
            return bad(format!(
                "need 0 < min_span_s < max_span_s (got {} and {})",
                self.min_span_s, self.max_span_s
            ));
        }
        if !(self.sim_threshold > 0.0 && self.sim_threshold <= 1.0) {
            return bad(format!("sim_threshold must be in (0, 1], got {}", self.sim_threshold));
        }
        if self.title_max_tokens == 0 {
            return bad("title_max_tokens must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_quarantine_fraction) {
            return bad("max_quarantine_fraction must be in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationVerdict {
    Kept,
    TooShort { len_s: f64 },
    TooLong { len_s: f64 },
}

/// Duration rule: keep iff `min_span_s <= len <= max_span_s`.
pub fn duration_verdict(span: &TimeSpan, config: &PipelineConfig) -> DurationVerdict {
    let len_s = span.len();
    if len_s < config.min_span_s {
        DurationVerdict::TooShort { len_s }
    } else if len_s > config.max_span_s {
        DurationVerdict::TooLong { len_s }
    } else {
        DurationVerdict::Kept
    }
}

/// Stage 1. Returns the kept records and `(input index, verdict)` for each
/// rejected one, both in input order.
pub fn filter_by_duration(
    records: &[SourceRecord],
    config: &PipelineConfig,
) -> (Vec<SourceRecord>, Vec<(usize, DurationVerdict)>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match duration_verdict(&r.span, config) {
            DurationVerdict::Kept => kept.push(r.clone()),
            v => rejected.push((i, v)),
        }
    }
    (kept, rejected)
}

/// Stage 2 for one record. Titles over budget count as summariser failures.
pub fn summarize_title<S: Summarizer + ?Sized>(
    record: &SourceRecord,
    summarizer: &S,
    config: &PipelineConfig,
) -> Result<String, SummarizeError> {
    let title = summarizer.summarize(&record.detailed_caption, config.title_max_tokens)?;
    let n = text::token_count(&title);
    if n == 0 {
        return Err(SummarizeError("empty title".into()));
    }
    if n > config.title_max_tokens {
        return Err(SummarizeError(format!(
            "title has {n} tokens, budget is {}",
            config.title_max_tokens
        )));
    }
    Ok(title)
}

/// Dense symmetric `n x n` similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Text that represents a segment for similarity: title then caption.
pub fn similarity_text(record: &TgcRecord) -> String {
    format!("{} {}", record.scene_title, record.detailed_caption)
}

/// Stage 3a: cosine similarity of title-and-caption embeddings between all
/// segments of one video. The diagonal is 1.
pub fn cross_segment_similarity<E: Embedder + ?Sized>(records: &[TgcRecord], embedder: &E) -> SimilarityMatrix {
    let n = records.len();
    let embeddings: Vec<Vec<f64>> = records
        .iter()
        .map(|r| embedder.embed(&similarity_text(r)))
        .collect();
    let mut data = alloc::vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
        for j in i + 1..n {
            let s = cosine(&embeddings[i], &embeddings[j]);
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    SimilarityMatrix { n, data }
}

/// Indices of `records` in temporal order (start, then end, then position).
pub fn temporal_order(records: &[TgcRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a].span, &records[b].span);
        ra.start()
            .total_cmp(&rb.start())
            .then(ra.end().total_cmp(&rb.end()))
            .then(a.cmp(&b))
    });
    order
}

/// Stage 3b: greedy earliest-first sweep. A record is kept iff its
/// similarity to every previously kept record is below `sim_threshold`.
/// Returns kept indices in temporal order.
pub fn dedup_segments(
    records: &[TgcRecord],
    sim: &SimilarityMatrix,
    sim_threshold: f64,
) -> Result<Vec<usize>, PipelineError> {
    if sim.len() != records.len() {
        return Err(PipelineError::InvalidConfig(format!(
            "similarity matrix is {0}x{0} for {1} records",
            sim.len(),
            records.len()
        )));
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in temporal_order(records) {
        if kept.iter().all(|&k| sim.get(i, k) < sim_threshold) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// One sampled record with the decisions that let it through.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewEntry {
    pub source_index: usize,
    pub record: TgcRecord,
    pub span_len_s: f64,
    pub max_similarity_to_kept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewReport {
    pub seed: u64,
    pub population: usize,
    pub entries: Vec<ReviewEntry>,
}

impl ReviewReport {
    /// Plain-text rendering for a human reviewer.
    pub fn render(&self) -> String {
        let mut out = format!(
            "review sample: {} of {} records (seed {})\n",
            self.entries.len(),
            self.population,
            self.seed
        );
        for (n, e) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "\n[{}] source index {} video {} span {:.1}-{:.1}s (len {:.1}s)\n    title:   {}\n    caption: {}\n    max similarity to kept segments: {:.3}\n",
                n + 1,
                e.source_index,
                e.record.video_id,
                e.record.span.start(),
                e.record.span.end(),
                e.span_len_s,
                e.record.scene_title,
                e.record.detailed_caption,
                e.max_similarity_to_kept,
            ));
        }
        out
    }
}

/// Stage 4: seeded uniform sample without replacement of `review_sample_n`
/// records (all of them when the corpus is smaller), in corpus order.
pub fn sample_for_review(records: &[BuiltRecord], config: &PipelineConfig) -> ReviewReport {
    let n = config.review_sample_n.min(records.len());
    let mut rng = crate::rng::seeded(config.seed);
    let mut picked = rand::seq::index::sample(&mut rng, records.len(), n).into_vec();
    picked.sort_unstable();
    ReviewReport {
        seed: config.seed,
        population: records.len(),
        entries: picked
            .into_iter()
            .map(|i| {
                let b = &records[i];
                ReviewEntry {
                    source_index: b.source_index,
                    record: b.record.clone(),
                    span_len_s: b.record.span.len(),
                    max_similarity_to_kept: b.max_similarity_to_kept,
                }
            })
            .collect(),
    }
}

/// Instruction-tuning record in the TGC task format.
#[derive(Debug, Clone, PartialEq)]
pub struct InstructionRecord {
    pub video_id: String,
    /// Start and end as rendered in the answer (one decimal place).
    pub start: f64,
    pub end: f64,
    pub query: String,
    pub answer: String,
}

pub fn render_seconds(t: f64) -> String {
    format!("{t:.1}")
}

pub fn tgc_query(scene_title: &str) -> String {
    format!("When does the scene '{scene_title}' occur in the video? Describe it in detail.")
}

pub fn tgc_answer(span: &TimeSpan, caption: &str) -> String {
    format!(
        "From {} to {} seconds, {}",
        render_seconds(span.start()),
        render_seconds(span.end()),
        caption
    )
}

pub fn emit_tgc(records: &[TgcRecord]) -> Vec<InstructionRecord> {
    records
        .iter()
        .map(|r| {
            let start = render_seconds(r.span.start());
            let end = render_seconds(r.span.end());
            InstructionRecord {
                video_id: r.video_id.clone(),
                start: start.parse().unwrap_or(r.span.start()),
                end: end.parse().unwrap_or(r.span.end()),
                query: tgc_query(&r.scene_title),
                answer: tgc_answer(&r.span, &r.detailed_caption),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::parse_timespan;
    use alloc::vec;

    fn src(start: f64, end: f64) -> SourceRecord {
        SourceRecord::new("v", start, end, "caption text here", 1000.0).unwrap()
    }

    fn tgc(start: f64, end: f64, title: &str, caption: &str) -> TgcRecord {
        TgcRecord {
            video_id: "v".into(),
            span: TimeSpan::new(start, end).unwrap(),
            scene_title: title.into(),
            detailed_caption: caption.into(),
        }
    }

    #[test]
    fn source_record_validation() {
        assert!(SourceRecord::new("v", 0.0, 20.0, "x", 10.0).is_err());
        assert!(SourceRecord::new("v", 5.0, 2.0, "x", 10.0).is_err());
        assert!(SourceRecord::new("v", 0.0, 2.0, " ", 10.0).is_err());
    }

    #[test]
    fn duration_boundaries() {
        let cfg = PipelineConfig::default();
        let (kept, rejected) = filter_by_duration(&[src(0.0, 3.0), src(0.0, 5.0), src(0.0, 120.0), src(0.0, 121.0)], &cfg);
        assert_eq!(kept.len(), 2);
        assert_eq!(rejected[0], (0, DurationVerdict::TooShort { len_s: 3.0 }));
        assert_eq!(rejected[1], (3, DurationVerdict::TooLong { len_s: 121.0 }));
    }

    #[test]
    fn identical_segments_keep_the_earlier() {
        let recs = vec![tgc(30.0, 40.0, "red car", "a red car"), tgc(10.0, 20.0, "red car", "a red car")];
        let sim = cross_segment_similarity(&recs, &BagOfWordsEmbedder::default());
        assert_eq!(sim.get(0, 1), 1.0);
        assert_eq!(dedup_segments(&recs, &sim, 0.85).unwrap(), vec![1]);
        assert_eq!(dedup_segments(&recs, &sim, 1.0).unwrap(), vec![1]);
    }

    #[test]
    fn threshold_one_keeps_distinct_records() {
        let recs = vec![
            tgc(0.0, 10.0, "red car", "a red car parks"),
            tgc(10.0, 20.0, "red car", "a red car drives"),
        ];
        let sim = cross_segment_similarity(&recs, &BagOfWordsEmbedder::default());
        assert!(sim.get(0, 1) > 0.5 && sim.get(0, 1) < 1.0);
        assert_eq!(dedup_segments(&recs, &sim, 1.0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn emitted_answer_format() {
        let out = emit_tgc(&[tgc(12.0, 18.5, "lighting a cigarette", "A man lights a cigarette.")]);
        assert_eq!(
            out[0].query,
            "When does the scene 'lighting a cigarette' occur in the video? Describe it in detail."
        );
        assert!(out[0].answer.starts_with("From 12.0 to 18.5 seconds,"));
        let p = parse_timespan(&out[0].answer).unwrap();
        assert_eq!((p.span.start(), p.span.end()), (out[0].start, out[0].end));
        assert!(emit_tgc(&[]).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            min_span_s: 10.0,
            max_span_s: 5.0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            sim_threshold: 0.0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
