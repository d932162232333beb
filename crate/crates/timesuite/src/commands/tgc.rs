use anyhow::Result;
use serde::Serialize;
use timesuite_core::tgc::{
    run_pipeline, BagOfWordsEmbedder, DurationStage, FallbackSummarizer, PipelineOutput, SimilarityStage, TitleStage,
};

use crate::config::RunConfig;
use crate::formats::{load_sources, to_jsonl, TgcLine};
use crate::report::{render_table, to_json};

#[derive(Debug, Serialize)]
struct StageCounts {
    input: usize,
    kept: usize,
    rejected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    too_short: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    too_long: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    videos: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Stages {
    duration: StageCounts,
    title: StageCounts,
    similarity: StageCounts,
}

#[derive(Debug, Serialize)]
struct RejectionLine<'a> {
    source_line: usize,
    video_id: &'a str,
    stage: &'a str,
    reason: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    similar_to_line: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ReviewLine<'a> {
    source_line: usize,
    video_id: &'a str,
    start: f64,
    end: f64,
    scene_title: &'a str,
    detailed_caption: &'a str,
    max_similarity_to_kept: f64,
}

#[derive(Debug, Serialize)]
struct TgcReport<'a> {
    command: &'static str,
    n_input: usize,
    n_output: usize,
    stages: Stages,
    rejections: Vec<RejectionLine<'a>>,
    review_seed: u64,
    review: Vec<ReviewLine<'a>>,
    config: &'a RunConfig,
}

pub struct TgcArtifacts {
    /// Line-delimited `{video_id, start, end, query, answer}`.
    pub corpus: String,
    /// JSON stage report.
    pub report: String,
    /// Stage counts for the terminal.
    pub summary: String,
    /// Review sample rendered for a human reader.
    pub review: String,
    pub output: PipelineOutput,
}

fn counts(input: usize, kept: usize) -> StageCounts {
    StageCounts {
        input,
        kept,
        rejected: input - kept,
        too_short: None,
        too_long: None,
        videos: None,
    }
}

/// Runs the four-stage pipeline over line-delimited source records.
/// Source lines are numbered from 1 in the report.
pub fn build_corpus(text: &str, origin: &str, config: &RunConfig) -> Result<TgcArtifacts> {
    let sources = load_sources(text, origin)?;
    // Blank lines are skipped by the reader, so keep the mapping explicit.
    let line_of: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1)
        .collect();
    let output = run_pipeline(
        &sources,
        &FallbackSummarizer,
        &BagOfWordsEmbedder::default(),
        &config.pipeline_config(),
    )?;
    let lines: Vec<TgcLine> = output.instructions.iter().map(TgcLine::from).collect();
    let corpus = to_jsonl(&lines)?;

    let r = &output.report;
    let (d, t, s): (&DurationStage, &TitleStage, &SimilarityStage) = (&r.duration, &r.title, &r.similarity);
    let report = TgcReport {
        command: "tgc build",
        n_input: sources.len(),
        n_output: output.records.len(),
        stages: Stages {
            duration: StageCounts {
                too_short: Some(d.too_short),
                too_long: Some(d.too_long),
                ..counts(d.input, d.kept)
            },
            title: counts(t.input, t.kept),
            similarity: StageCounts {
                videos: Some(s.videos),
                ..counts(s.input, s.kept)
            },
        },
        rejections: r
            .rejections
            .iter()
            .map(|x| RejectionLine {
                source_line: line_of[x.source_index],
                video_id: &x.video_id,
                stage: x.stage,
                reason: &x.reason,
                similar_to_line: x.similar_to.map(|i| line_of[i]),
            })
            .collect(),
        review_seed: r.review.seed,
        review: r
            .review
            .entries
            .iter()
            .map(|e| ReviewLine {
                source_line: line_of[e.source_index],
                video_id: &e.record.video_id,
                start: e.record.span.start(),
                end: e.record.span.end(),
                scene_title: &e.record.scene_title,
                detailed_caption: &e.record.detailed_caption,
                max_similarity_to_kept: e.max_similarity_to_kept,
            })
            .collect(),
        config,
    };
    let report_json = to_json(&report)?;
    let summary = render_table(&[
        ("input records".into(), sources.len().to_string()),
        (
            "1 duration".into(),
            format!("kept {} (too short {}, too long {})", d.kept, d.too_short, d.too_long),
        ),
        ("2 scene title".into(), format!("kept {} (quarantined {})", t.kept, t.quarantined)),
        ("3 similarity".into(), format!("kept {} (dropped {}, {} videos)", s.kept, s.dropped, s.videos)),
        (
            "4 review sample".into(),
            format!("{} of {} (seed {})", r.review.entries.len(), r.review.population, r.review.seed),
        ),
        ("output records".into(), output.records.len().to_string()),
    ]);
    Ok(TgcArtifacts {
        corpus,
        report: report_json,
        summary,
        review: r.review.render(),
        output,
    })
}
