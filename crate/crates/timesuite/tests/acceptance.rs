//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p timesuite --test acceptance`.

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use timesuite::checks::measure::{
    anchor_config, anchor_property, compressor_vs_pooling, metric_oracles, parser_corpus, primitive_gradient_errors,
    saliency_sweep, tape_gradient_errors, tape_init_identity, Compressor,
};
use timesuite::checks::{known_value_fixtures, PARSER_CORPUS};
use timesuite::commands::demo::demo_forward;
use timesuite::config::RunConfig;
use timesuite::formats::{parse_jsonl, SourceLine, TgcLine};
use timesuite_core::grounding::{parse_timespan, SALIENCY_LEVELS};

const SEED: u64 = 0;

const SHUFFLE_CASES: usize = 100;
const SHUFFLE_TOL: f64 = 1e-12;
const SHUFFLE_BUDGET: Duration = Duration::from_secs(10);

const INIT_CONFIGS: usize = 50;
const INIT_BUDGET: Duration = Duration::from_secs(10);

const PRIMITIVE_H: f64 = 1e-6;
const PRIMITIVE_TOL: f64 = 1e-6;
const TAPE_H: f64 = 1e-5;
const TAPE_TOL: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

const ANCHOR_SEEDS: u64 = 10;
const ANCHOR_LEN: usize = 128;
const ANCHOR_TOL: f64 = 1e-10;
const ANCHOR_MIN_GAP: f64 = 1e-8;

const METRIC_INSTANCES: usize = 200;
const METRIC_TOL: f64 = 1e-9;
const POSITIVE_LEVEL: f64 = 4.0;

const IOU_TOL: f64 = 1e-12;

const MIN_POSITIVES: usize = 50;
const MIN_NEGATIVES: usize = 10;
const GRAMMAR_FORMS: usize = 5;

const SALIENCY_STEPS: usize = 10_000;

const TGC_FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/tgc_sources.jsonl");

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn criterion(id: u32, name: &'static str, f: impl FnOnce() -> Result<(bool, String), String>) -> Line {
    let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Line { id, name, pass, detail }
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timesuite"))
        .args(args)
        .env_remove("TIMESUITE_CONFIG")
        .output()
        .expect("spawn timesuite")
}

fn c1() -> Result<(bool, String), String> {
    let (diff, t) = timed(|| compressor_vs_pooling(SEED, SHUFFLE_CASES, Compressor::EfficientInit));
    let diff = diff.map_err(|e| e.to_string())?;
    Ok((
        diff <= SHUFFLE_TOL && t < SHUFFLE_BUDGET,
        format!("{SHUFFLE_CASES} cases, max |diff| {diff:.3e} (tol {SHUFFLE_TOL:e}), {:.2}s", t.as_secs_f64()),
    ))
}

fn c2() -> Result<(bool, String), String> {
    let (r, t) = timed(|| tape_init_identity(SEED, INIT_CONFIGS));
    let (nonzero, changed) = r.map_err(|e| e.to_string())?;
    Ok((
        nonzero == 0 && changed == 0 && t < INIT_BUDGET,
        format!(
            "{INIT_CONFIGS} configs: {nonzero} nonzero outputs, {changed} fused outputs differing from V_l, {:.2}s",
            t.as_secs_f64()
        ),
    ))
}

fn c3() -> Result<(bool, String), String> {
    let mut got = Vec::new();
    for (frames, want) in [(128usize, 384usize), (192, 576)] {
        let mut cfg = RunConfig::default();
        cfg.video.frames = frames;
        let run = demo_forward(&cfg, &[], "acceptance", None).map_err(|e| e.to_string())?;
        got.push((frames, run.summary.tokens_to_llm, want));
    }
    let pass = got.iter().all(|&(_, g, w)| g == w);
    let detail = got
        .iter()
        .map(|(f, g, w)| format!("{f} frames -> {g} tokens (expected {w})"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((pass, detail))
}

fn c4() -> Result<(bool, String), String> {
    let (r, t) = timed(|| -> anyhow::Result<_> {
        Ok((primitive_gradient_errors(SEED, PRIMITIVE_H)?, tape_gradient_errors(SEED, TAPE_H)?))
    });
    let (prims, (ex, ep)) = r.map_err(|e| e.to_string())?;
    let (worst_name, worst) = prims
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .ok_or("no primitives checked")?;
    Ok((
        worst < PRIMITIVE_TOL && ex < TAPE_TOL && ep < TAPE_TOL && t < GRAD_BUDGET,
        format!(
            "{} primitives worst {worst:.2e} ({worst_name}, tol {PRIMITIVE_TOL:e}); TAPE input {ex:.2e}, params {ep:.2e} (tol {TAPE_TOL:e}); {:.2}s",
            prims.len(),
            t.as_secs_f64()
        ),
    ))
}

fn c5() -> Result<(bool, String), String> {
    let cfg = anchor_config();
    let (mut worst_ref, mut worst_cf, mut worst_spread, mut min_gap) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for s in 0..ANCHOR_SEEDS {
        let m = anchor_property(cfg, ANCHOR_LEN, SEED + s).map_err(|e| e.to_string())?;
        worst_ref = worst_ref.max(m.reference_diff);
        worst_cf = worst_cf.max(m.counterfactual_diff);
        worst_spread = worst_spread.max(m.interior_spread);
        min_gap = min_gap.min(m.boundary_gap);
    }
    Ok((
        worst_ref <= ANCHOR_TOL && worst_cf <= ANCHOR_TOL && worst_spread <= ANCHOR_TOL && min_gap > ANCHOR_MIN_GAP,
        format!(
            "{ANCHOR_SEEDS} seeds: interior spread {worst_spread:.1e}, reference {worst_ref:.1e}, circular {worst_cf:.1e} (tol {ANCHOR_TOL:e}), boundary gap {min_gap:.2e}"
        ),
    ))
}

fn c6() -> Result<(bool, String), String> {
    let d = metric_oracles(SEED, METRIC_INSTANCES, POSITIVE_LEVEL).map_err(|e| e.to_string())?;
    let worst = [d.iou, d.recall, d.ap, d.map, d.hit1].into_iter().fold(0.0, f64::max);
    Ok((
        worst <= METRIC_TOL && d.disagreements == 0 && d.monotone_violations == 0,
        format!(
            "{METRIC_INSTANCES} instances: iou {:.1e}, recall {:.1e}, ap {:.1e}, map {:.1e}, hit1 {:.1e} (tol {METRIC_TOL:e}); {} disagreements, {} AP changes under monotone transforms",
            d.iou, d.recall, d.ap, d.map, d.hit1, d.disagreements, d.monotone_violations
        ),
    ))
}

fn c7() -> Result<(bool, String), String> {
    let (third, r, map) = known_value_fixtures().map_err(|e| e.to_string())?;
    Ok((
        (third - 1.0 / 3.0).abs() <= IOU_TOL && r == 2.0 / 3.0 && map == 0.75,
        format!("iou {third:.15}, R@1 {r}, mAP {map}"),
    ))
}

fn c8() -> Result<(bool, String), String> {
    let res = parser_corpus(PARSER_CORPUS);
    Ok((
        res.failures.is_empty()
            && res.positives >= MIN_POSITIVES
            && res.negatives >= MIN_NEGATIVES
            && res.forms_seen == GRAMMAR_FORMS,
        format!(
            "{} positives, {} negatives, {} of {GRAMMAR_FORMS} forms, {} failures{}",
            res.positives,
            res.negatives,
            res.forms_seen,
            res.failures.len(),
            res.failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    ))
}

fn c9() -> Result<(bool, String), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let corpus = dir.path().join(format!("tgc{run}.jsonl"));
        let report = dir.path().join(format!("report{run}.json"));
        let out = cli(&[
            "--seed",
            &SEED.to_string(),
            "--out",
            path_str(&corpus),
            "--report",
            path_str(&report),
            "tgc",
            "build",
            "--input",
            TGC_FIXTURE,
        ]);
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
        outputs.push((read(&corpus)?, read(&report)?));
    }
    let identical = outputs[0] == outputs[1];
    let text = String::from_utf8(outputs[0].0.clone()).map_err(|e| e.to_string())?;
    let lines: Vec<(usize, TgcLine)> = parse_jsonl(&text, "corpus").map_err(|e| e.to_string())?;
    let fixture = std::fs::read_to_string(TGC_FIXTURE).map_err(|e| e.to_string())?;
    let sources: Vec<(usize, SourceLine)> = parse_jsonl(&fixture, TGC_FIXTURE).map_err(|e| e.to_string())?;
    let mut failures = 0;
    for (_, l) in &lines {
        let parsed = parse_timespan(&l.answer).map(|p| (p.span.start(), p.span.end()));
        let original = sources
            .iter()
            .any(|(_, s)| s.video_id == l.video_id && s.start == l.start && s.end == l.end);
        if parsed != Ok((l.start, l.end)) || !original {
            failures += 1;
        }
    }
    Ok((
        identical && failures == 0 && !lines.is_empty(),
        format!(
            "{} records, reruns byte-identical: {identical}, round-trip failures: {failures}",
            lines.len()
        ),
    ))
}

fn c10() -> Result<(bool, String), String> {
    let (levels, endpoints) = saliency_sweep(SALIENCY_STEPS);
    Ok((
        levels == SALIENCY_LEVELS && endpoints,
        format!("{} distinct levels over {SALIENCY_STEPS} steps, endpoints exact: {endpoints}", levels.len()),
    ))
}

fn c11() -> Result<(bool, String), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut pass = true;
    for (ablation, must_see) in [
        ("pooling", &["PASS pooling-baseline"][..]),
        ("no-tape", &["SKIP tape-init-identity", "SKIP gradients-tape", "SKIP tape-anchor"][..]),
    ] {
        let report = dir.path().join(format!("{ablation}.json"));
        let out = cli(&["--report", path_str(&report), "--ablate", ablation, "check"]);
        let stdout = String::from_utf8_lossy(&out.stdout);
        let seen = must_see.iter().all(|m| stdout.lines().any(|l| l.starts_with(m)));
        let json: serde_json::Value = std::fs::read_to_string(&report)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        let recorded = json["ablations"] == serde_json::json!([ablation]);
        let ok = out.status.success() && seen && recorded;
        pass &= ok;
        notes.push(format!(
            "--ablate {ablation}: exit {:?}, expected lines {}, report records ablation {recorded}",
            out.status.code(),
            if seen { "present" } else { "missing" }
        ));
    }
    Ok((pass, notes.join("; ")))
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn main() {
    let lines = [
        criterion(1, "token-shuffle-init-equivalence", c1),
        criterion(2, "tape-init-identity", c2),
        criterion(3, "tape-shape-contract", c3),
        criterion(4, "gradient-correctness", c4),
        criterion(5, "anchor-property", c5),
        criterion(6, "metric-oracle-equivalence", c6),
        criterion(7, "known-value-metrics", c7),
        criterion(8, "parser-corpus", c8),
        criterion(9, "tgc-determinism-round-trip", c9),
        criterion(10, "saliency-discretization", c10),
        criterion(11, "ablation-parity-harness", c11),
    ];
    let mut failed = 0;
    for l in &lines {
        let tag = if l.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2} {}: {}", l.id, l.name, l.detail);
        failed += usize::from(!l.pass);
    }
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
