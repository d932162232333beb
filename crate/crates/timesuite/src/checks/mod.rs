//! Invariant checks run by `timesuite check`.

pub mod measure;
pub mod reference;

use std::time::{Duration, Instant};

use anyhow::Result;
use serde::Serialize;
use timesuite_core::grounding::{
    evaluate_highlights, iou, recall_at_1, GroundingItem, HighlightItem, Prediction, TimeSpan,
};
use timesuite_core::rng::{derive_seed, seeded, uniform_tensor, uniform_vec};
use timesuite_core::tape::{tape_forward, tape_init};
use timesuite_core::token_shuffle::{compress, efficient_init, mean_pool_compress, ShuffleParams};
use timesuite_core::video::{encode_video, MockEncoder};

use crate::commands::tgc::build_corpus;
use crate::config::RunConfig;
use measure::Compressor;

pub const PARSER_CORPUS: &str = include_str!("../../fixtures/parser_corpus.tsv");
pub const TGC_FIXTURE: &str = include_str!("../../fixtures/tgc_sources.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Drop the TAPE adapter.
    NoTape,
    /// Replace token shuffle with mean pooling.
    Pooling,
    /// Token shuffle without the efficient initialisation.
    NoInit,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoTape => "no-tape",
            Ablation::Pooling => "pooling",
            Ablation::NoInit => "no-init",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    /// Wall time; left out of serialised reports so they stay reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

pub struct CheckContext {
    pub config: RunConfig,
    pub ablations: Vec<Ablation>,
}

impl CheckContext {
    fn ablated(&self, a: Ablation) -> bool {
        self.ablations.contains(&a)
    }

    fn compressor(&self) -> Compressor {
        if self.ablated(Ablation::Pooling) {
            Compressor::Pooling
        } else if self.ablated(Ablation::NoInit) {
            Compressor::RandomInit
        } else {
            Compressor::EfficientInit
        }
    }

    fn seed(&self) -> u64 {
        self.config.seed
    }
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

struct Check {
    name: &'static str,
    uses_tape: bool,
    run: fn(&CheckContext) -> Result<Verdict>,
}

fn compressor_name(ctx: &CheckContext) -> &'static str {
    match ctx.compressor() {
        Compressor::EfficientInit => "shuffle-init-equivalence",
        Compressor::Pooling => "pooling-baseline",
        Compressor::RandomInit => "shuffle-no-init-baseline",
    }
}

fn check_compressor(ctx: &CheckContext) -> Result<Verdict> {
    let which = ctx.compressor();
    let diff = measure::compressor_vs_pooling(ctx.seed(), 100, which)?;
    match which {
        Compressor::RandomInit => verdict(
            diff > 1e-6,
            format!("random projection deviates from pooling by {diff:.3e} (expected > 1e-6)"),
        ),
        _ => verdict(diff <= 1e-12, format!("max |diff| vs pool-then-project {diff:.3e} over 100 cases (tol 1e-12)")),
    }
}

fn check_tape_init(ctx: &CheckContext) -> Result<Verdict> {
    let (nonzero, changed) = measure::tape_init_identity(ctx.seed(), 50)?;
    verdict(
        nonzero == 0 && changed == 0,
        format!("50 configs: {nonzero} with nonzero V_t, {changed} where fuse changed V_l"),
    )
}

fn check_shapes(ctx: &CheckContext) -> Result<Verdict> {
    let cfg = &ctx.config;
    let plan = cfg.sampling_plan();
    let sc = cfg.shuffle_config();
    let enc = MockEncoder {
        seed: ctx.seed(),
        n: plan.n,
        c_q: sc.c_q,
    };
    let v_q = encode_video(&plan, &enc)?;
    let mut rng = seeded(derive_seed(ctx.seed(), [0xb0]));
    let w0 = uniform_tensor(&mut rng, sc.c_l, sc.c_q, 1.0 / (sc.c_q as f64).sqrt());
    let b0 = uniform_vec(&mut rng, sc.c_l, 0.1);
    let v_l = match ctx.compressor() {
        Compressor::EfficientInit => compress(&v_q, &efficient_init(&w0, &b0, sc.m)?)?,
        Compressor::Pooling => mean_pool_compress(&v_q, sc.m, &w0, &b0)?,
        Compressor::RandomInit => compress(&v_q, &ShuffleParams::random(sc, ctx.seed())?)?,
    };
    let expected = cfg.sequence_len() / sc.m;
    let mut ok = v_q.shape() == (cfg.sequence_len(), sc.c_q) && v_l.shape() == (expected, sc.c_l);
    let mut detail = format!(
        "{} frames -> V_q {}x{} -> V_l {}x{} (expected {expected} tokens)",
        plan.frames(),
        v_q.rows(),
        v_q.cols(),
        v_l.rows(),
        v_l.cols()
    );
    if !ctx.ablated(Ablation::NoTape) {
        let v_t = tape_forward(&v_q, &tape_init(cfg.tape_config(), ctx.seed())?)?;
        ok &= v_t.shape() == v_l.shape() && v_t.max_abs() == 0.0;
        detail.push_str(&format!(", V_t {}x{} max|V_t| {}", v_t.rows(), v_t.cols(), v_t.max_abs()));
    }
    verdict(ok, detail)
}

fn check_primitive_grads(ctx: &CheckContext) -> Result<Verdict> {
    let errs = measure::primitive_gradient_errors(ctx.seed(), 1e-6)?;
    let (name, worst) = errs
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    verdict(
        worst < 1e-6,
        format!("{} primitives, worst rel err {worst:.2e} ({name}) (tol 1e-6, h 1e-6)", errs.len()),
    )
}

fn check_tape_grads(ctx: &CheckContext) -> Result<Verdict> {
    let (ex, ep) = measure::tape_gradient_errors(ctx.seed(), 1e-5)?;
    verdict(
        ex.max(ep) < 1e-5,
        format!("rel err input {ex:.2e}, params {ep:.2e} (tol 1e-5, h 1e-5)"),
    )
}

fn check_anchor(ctx: &CheckContext) -> Result<Verdict> {
    let cfg = measure::anchor_config();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut min_gap = f64::INFINITY;
    let mut margins = (0, 0);
    for s in 0..10 {
        let m = measure::anchor_property(cfg, 128, derive_seed(ctx.seed(), [0xa0, s]))?;
        worst = (
            worst.0.max(m.reference_diff),
            worst.1.max(m.counterfactual_diff),
            worst.2.max(m.interior_spread),
        );
        min_gap = min_gap.min(m.boundary_gap);
        margins = m.margins;
    }
    verdict(
        worst.0 <= 1e-10 && worst.1 <= 1e-10 && worst.2 <= 1e-10 && min_gap > 1e-8,
        format!(
            "10 seeds, margins {margins:?}: reference {:.1e}, circular {:.1e}, interior spread {:.1e} (tol 1e-10), min boundary gap {min_gap:.2e}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn check_metric_oracles(ctx: &CheckContext) -> Result<Verdict> {
    let d = measure::metric_oracles(ctx.seed(), 200, ctx.config.eval.positive_level)?;
    let worst = d.iou.max(d.recall).max(d.ap).max(d.map).max(d.hit1);
    verdict(
        worst <= 1e-9 && d.disagreements == 0 && d.monotone_violations == 0,
        format!(
            "200 instances: worst |diff| {worst:.1e} (tol 1e-9), {} disagreements, {} monotone violations",
            d.disagreements, d.monotone_violations
        ),
    )
}

pub fn known_value_fixtures() -> Result<(f64, f64, f64)> {
    let third = iou(&TimeSpan::new(0.0, 10.0)?, &TimeSpan::new(5.0, 15.0)?);
    let gt = TimeSpan::new(0.0, 10.0)?;
    let item = |p: Prediction| GroundingItem {
        id: String::new(),
        video_id: String::new(),
        query: String::new(),
        gt,
        prediction: p,
    };
    let items = [
        item(Prediction::Span(TimeSpan::new(0.0, 6.0)?)),
        item(Prediction::Span(TimeSpan::new(0.0, 4.0)?)),
        item(Prediction::Text("From 2 to 10 seconds.".into())),
    ];
    let r = recall_at_1(&items, &[0.5])?[0];
    let hl = |s: [f64; 2]| HighlightItem {
        id: String::new(),
        clip_duration_s: 2.0,
        pred_scores: s.to_vec(),
        gt_saliency: vec![4.0, 1.0],
    };
    let map = evaluate_highlights(&[hl([0.9, 0.1]), hl([0.1, 0.9])], 4.0)?.map;
    Ok((third, r, map))
}

fn check_known_values(_: &CheckContext) -> Result<Verdict> {
    let (third, r, map) = known_value_fixtures()?;
    verdict(
        (third - 1.0 / 3.0).abs() <= 1e-12 && r == 2.0 / 3.0 && map == 0.75,
        format!("iou {third:.12}, R@1 {r}, mAP {map}"),
    )
}

fn check_parser(_: &CheckContext) -> Result<Verdict> {
    let r = measure::parser_corpus(PARSER_CORPUS);
    let mut detail = format!(
        "{} positives, {} negatives, {} forms, {} failures",
        r.positives,
        r.negatives,
        r.forms_seen,
        r.failures.len()
    );
    if let Some(f) = r.failures.first() {
        detail.push_str(&format!("; first: {f}"));
    }
    verdict(r.failures.is_empty() && r.positives >= 50 && r.negatives >= 10 && r.forms_seen == 5, detail)
}

fn check_tgc(ctx: &CheckContext) -> Result<Verdict> {
    let a = build_corpus(TGC_FIXTURE, "fixture", &ctx.config)?;
    let b = build_corpus(TGC_FIXTURE, "fixture", &ctx.config)?;
    let same = a.corpus == b.corpus && a.report == b.report;
    let bad_round_trips = a
        .output
        .instructions
        .iter()
        .filter(|r| {
            timesuite_core::grounding::parse_timespan(&r.answer)
                .map(|p| (p.span.start(), p.span.end()) != (r.start, r.end))
                .unwrap_or(true)
        })
        .count();
    verdict(
        same && bad_round_trips == 0,
        format!(
            "{} records emitted, reruns identical: {same}, round-trip failures: {bad_round_trips}",
            a.output.instructions.len()
        ),
    )
}

fn check_saliency(_: &CheckContext) -> Result<Verdict> {
    let (levels, endpoints) = measure::saliency_sweep(1000);
    verdict(
        levels.len() == 9 && endpoints,
        format!("{} distinct levels over the sweep, endpoints exact: {endpoints}", levels.len()),
    )
}

fn all_checks(ctx: &CheckContext) -> Vec<Check> {
    vec![
        Check { name: compressor_name(ctx), uses_tape: false, run: check_compressor },
        Check { name: "tape-init-identity", uses_tape: true, run: check_tape_init },
        Check { name: "shape-contract", uses_tape: false, run: check_shapes },
        Check { name: "gradients-primitives", uses_tape: false, run: check_primitive_grads },
        Check { name: "gradients-tape", uses_tape: true, run: check_tape_grads },
        Check { name: "tape-anchor", uses_tape: true, run: check_anchor },
        Check { name: "metric-oracles", uses_tape: false, run: check_metric_oracles },
        Check { name: "metric-known-values", uses_tape: false, run: check_known_values },
        Check { name: "parser-corpus", uses_tape: false, run: check_parser },
        Check { name: "tgc-determinism", uses_tape: false, run: check_tgc },
        Check { name: "saliency-grid", uses_tape: false, run: check_saliency },
    ]
}

fn run_one(check: &Check, ctx: &CheckContext) -> CheckOutcome {
    let start = Instant::now();
    if check.uses_tape && ctx.ablated(Ablation::NoTape) {
        return CheckOutcome {
            name: check.name,
            status: Status::Skip,
            detail: "TAPE ablated (no-tape)".into(),
            elapsed: start.elapsed(),
        };
    }
    let (status, detail) = match (check.run)(ctx) {
        Ok(v) if v.passed => (Status::Pass, v.detail),
        Ok(v) => (Status::Fail, v.detail),
        Err(e) => (Status::Fail, format!("error: {e:#}")),
    };
    CheckOutcome {
        name: check.name,
        status,
        detail,
        elapsed: start.elapsed(),
    }
}

/// Runs every check, in parallel when a pool is given. Results keep the
/// fixed check order.
pub fn run_checks(ctx: &CheckContext, pool: Option<&rayon::ThreadPool>) -> Vec<CheckOutcome> {
    use rayon::prelude::*;
    let checks = all_checks(ctx);
    match pool {
        Some(p) => p.install(|| checks.par_iter().map(|c| run_one(c, ctx)).collect()),
        None => checks.iter().map(|c| run_one(c, ctx)).collect(),
    }
}
