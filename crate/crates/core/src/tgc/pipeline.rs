use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{
    cross_segment_similarity, dedup_segments, emit_tgc, filter_by_duration, sample_for_review,
    summarize_title, DurationVerdict, Embedder, InstructionRecord, PipelineConfig, PipelineError,
    ReviewReport, SourceRecord, Summarizer, TgcRecord,
};

/// A record that survived every stage, with the index of its source.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltRecord {
    pub source_index: usize,
    pub record: TgcRecord,
    /// Largest similarity to another kept segment of the same video.
    pub max_similarity_to_kept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub source_index: usize,
    pub video_id: String,
    pub stage: &'static str,
    pub reason: String,
    /// For similarity rejections, the kept source it duplicated.
    pub similar_to: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DurationStage {
    pub input: usize,
    pub kept: usize,
    pub too_short: usize,
    pub too_long: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TitleStage {
    pub input: usize,
    pub kept: usize,
    pub quarantined: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimilarityStage {
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
    pub videos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub duration: DurationStage,
    pub title: TitleStage,
    pub similarity: SimilarityStage,
    pub rejections: Vec<Rejection>,
    pub review: ReviewReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Kept records grouped by video id, in temporal order within a video.
    pub records: Vec<BuiltRecord>,
    pub instructions: Vec<InstructionRecord>,
    pub report: PipelineReport,
}

/// Runs all four stages over `sources`.
///
/// Fails if more than `max_quarantine_fraction` of the title-stage inputs
/// are quarantined.
pub fn run_pipeline<S, E>(
    sources: &[SourceRecord],
    summarizer: &S,
    embedder: &E,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError>
where
    S: Summarizer + ?Sized,
    E: Embedder + ?Sized,
{
    config.validate()?;
    let mut rejections = Vec::new();

    let (_, rejected) = filter_by_duration(sources, config);
    let mut duration = DurationStage {
        input: sources.len(),
        ..Default::default()
    };
    let mut passed = alloc::vec![true; sources.len()];
    for (i, verdict) in rejected {
        passed[i] = false;
        let reason = match verdict {
            DurationVerdict::TooShort { len_s } => {
                duration.too_short += 1;
                format!("too short: {len_s:.3}s < {}s", config.min_span_s)
            }
            DurationVerdict::TooLong { len_s } => {
                duration.too_long += 1;
                format!("too long: {len_s:.3}s > {}s", config.max_span_s)
            }
            DurationVerdict::Kept => unreachable!("kept records are not rejected"),
        };
        rejections.push(Rejection {
            source_index: i,
            video_id: sources[i].video_id.clone(),
            stage: "duration",
            reason,
            similar_to: None,
        });
    }
    duration.kept = duration.input - duration.too_short - duration.too_long;

    let mut title = TitleStage {
        input: duration.kept,
        ..Default::default()
    };
    let mut titled: Vec<(usize, TgcRecord)> = Vec::with_capacity(duration.kept);
    for (i, src) in sources.iter().enumerate().filter(|(i, _)| passed[*i]) {
        match summarize_title(src, summarizer, config) {
            Ok(t) => titled.push((
                i,
                TgcRecord {
                    video_id: src.video_id.clone(),
                    span: src.span,
                    scene_title: t,
                    detailed_caption: src.detailed_caption.clone(),
                },
            )),
            Err(e) => {
                title.quarantined += 1;
                rejections.push(Rejection {
                    source_index: i,
                    video_id: src.video_id.clone(),
                    stage: "title",
                    reason: format!("quarantined: {e}"),
                    similar_to: None,
                });
            }
        }
    }
    title.kept = titled.len();
    if title.input > 0 && title.quarantined as f64 > config.max_quarantine_fraction * title.input as f64 {
        return Err(PipelineError::QuarantineOverflow {
            quarantined: title.quarantined,
            total: title.input,
            max_fraction: config.max_quarantine_fraction,
        });
    }

    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, (_, r)) in titled.iter().enumerate() {
        by_video.entry(r.video_id.as_str()).or_default().push(k);
    }
    let mut similarity = SimilarityStage {
        input: titled.len(),
        videos: by_video.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(titled.len());
    for members in by_video.values() {
        let group: Vec<TgcRecord> = members.iter().map(|&k| titled[k].1.clone()).collect();
        let sim = cross_segment_similarity(&group, embedder);
        let kept = dedup_segments(&group, &sim, config.sim_threshold)?;
        let mut is_kept = alloc::vec![false; group.len()];
        kept.iter().for_each(|&g| is_kept[g] = true);
        for g in 0..group.len() {
            if is_kept[g] {
                continue;
            }
            // The first kept record (temporal order) it was too similar to.
            let blocker = kept
                .iter()
                .copied()
                .find(|&k| sim.get(g, k) >= config.sim_threshold)
                .unwrap_or(g);
            let source_index = titled[members[g]].0;
            rejections.push(Rejection {
                source_index,
                video_id: group[g].video_id.clone(),
                stage: "similarity",
                reason: format!("similarity {:.3} >= {}", sim.get(g, blocker), config.sim_threshold),
                similar_to: Some(titled[members[blocker]].0),
            });
            similarity.dropped += 1;
        }
        for &g in &kept {
            let max_sim = kept
                .iter()
                .filter(|&&o| o != g)
                .map(|&o| sim.get(g, o))
                .fold(0.0, f64::max);
            records.push(BuiltRecord {
                source_index: titled[members[g]].0,
                record: group[g].clone(),
                max_similarity_to_kept: max_sim,
            });
        }
    }
    similarity.kept = records.len();
    rejections.sort_by_key(|r| r.source_index);

    let review = sample_for_review(&records, config);
    let plain: Vec<TgcRecord> = records.iter().map(|b| b.record.clone()).collect();
    Ok(PipelineOutput {
        instructions: emit_tgc(&plain),
        records,
        report: PipelineReport {
            duration,
            title,
            similarity,
            rejections,
            review,
        },
    })
}
