//! Measurements behind each invariant. They return raw numbers; callers
//! decide the tolerances.

use anyhow::{ensure, Result};
use rand::Rng;
use timesuite_core::gradcheck::{finite_diff_check, weighted_sum};
use timesuite_core::grounding::{
    average_precision, evaluate_grounding, evaluate_highlights, iou, parse_timespan, saliency_discretize,
    GroundingItem, HighlightItem, Prediction, TimeSpan, SALIENCY_LEVELS,
};
use timesuite_core::ops;
use timesuite_core::rng::{derive_seed, seeded, uniform_tensor, uniform_vec, SeededRng};
use timesuite_core::tape::{boundary_margins, fuse, tape_forward, tape_forward_cached, tape_init, tape_vjp, TapeConfig, TapeParams};
use timesuite_core::token_shuffle::{compress, efficient_init, mean_pool_compress, ShuffleConfig, ShuffleParams};
use timesuite_core::{Conv1dSpec, Tensor2D};

use super::reference::{self, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compressor {
    /// Token shuffle with the efficient initialisation.
    EfficientInit,
    /// Mean pooling followed by the base projector.
    Pooling,
    /// Token shuffle with a fresh random projection.
    RandomInit,
}

fn max_diff_rows(a: &Tensor2D, rows: &[Vec<f64>]) -> f64 {
    rows.iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, v)| (a.get(r, c) - v).abs()))
        .fold(0.0, f64::max)
}

/// Largest deviation between the chosen compressor and "mean-pool then base
/// projection" over `cases` random problems with `L` in 8..=1536,
/// `c_q` in 4..=64 and `m` in {1, 2, 4, 8}.
pub fn compressor_vs_pooling(seed: u64, cases: usize, which: Compressor) -> Result<f64> {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = seeded(derive_seed(seed, [0x5f, case as u64]));
        let m = [1usize, 2, 4, 8][rng.gen_range(0..4)];
        let len = m * rng.gen_range(8usize.div_ceil(m)..=1536 / m);
        let c_q = rng.gen_range(4..=64);
        let c_l = rng.gen_range(4..=64);
        let v = uniform_tensor(&mut rng, len, c_q, 1.0);
        let w0 = uniform_tensor(&mut rng, c_l, c_q, 1.0 / (c_q as f64).sqrt());
        let b0 = uniform_vec(&mut rng, c_l, 0.1);
        let got = match which {
            Compressor::EfficientInit => compress(&v, &efficient_init(&w0, &b0, m)?)?,
            Compressor::Pooling => mean_pool_compress(&v, m, &w0, &b0)?,
            Compressor::RandomInit => compress(&v, &ShuffleParams::random(ShuffleConfig { m, c_q, c_l }, rng.gen())?)?,
        };
        let want = reference::pool_then_project(&v, m, &w0, &b0);
        ensure!(got.shape() == (want.len(), c_l), "compressor output shape {:?}", got.shape());
        worst = worst.max(max_diff_rows(&got, &want));
    }
    Ok(worst)
}

pub fn random_tape_config(rng: &mut SeededRng) -> TapeConfig {
    TapeConfig {
        merge_len: 2 * rng.gen_range(1..=3),
        clip_num: 2 * rng.gen_range(1..=4),
        input_dim: rng.gen_range(1..=8),
        mid_dim: rng.gen_range(1..=8),
        output_dim: rng.gen_range(1..=8),
        sample_rate: rng.gen_range(1..=3),
    }
}

/// Freshly initialised adapters over `configs` random configurations.
/// Returns `(configs whose output is not exactly zero, configs where the
/// fused tokens are not bit-identical to the compressed tokens)`.
pub fn tape_init_identity(seed: u64, configs: usize) -> Result<(usize, usize)> {
    let mut nonzero = 0;
    let mut fuse_changed = 0;
    for case in 0..configs {
        let mut rng = seeded(derive_seed(seed, [0x1d, case as u64]));
        let cfg = random_tape_config(&mut rng);
        let len = cfg.length_quantum() * rng.gen_range(1..=4);
        let params = tape_init(cfg, rng.gen())?;
        let v_q = uniform_tensor(&mut rng, len, cfg.input_dim, 3.0);
        let v_t = tape_forward(&v_q, &params)?;
        if v_t.data().iter().any(|&x| x.to_bits() != 0) {
            nonzero += 1;
        }
        let v_l = uniform_tensor(&mut rng, v_t.rows(), cfg.output_dim, 3.0);
        let fused = fuse(&v_l, &v_t)?;
        let same = fused.tokens.data().iter().zip(v_l.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            fuse_changed += 1;
        }
    }
    Ok((nonzero, fuse_changed))
}

/// Maximum relative errors `(name, error)` of every primitive's VJP.
pub fn primitive_gradient_errors(seed: u64, h: f64) -> Result<Vec<(String, f64)>> {
    let mut rng = seeded(derive_seed(seed, [0x9a]));
    let mut t = |r: usize, c: usize| uniform_tensor(&mut rng, r, c, 1.0);
    let re = |p: &[f64], like: &Tensor2D| Tensor2D::from_vec(like.rows(), like.cols(), p.to_vec());
    let mut out = Vec::new();

    let specs = [
        ("conv1d", Conv1dSpec::new(3, 4, 3).padding(1)),
        ("conv1d depthwise strided", Conv1dSpec::new(4, 4, 5).stride(2).padding(2).groups(4)),
        ("conv1d grouped", Conv1dSpec::new(4, 6, 3).padding(1).groups(2)),
        ("conv1d pointwise", Conv1dSpec::new(3, 5, 1)),
    ];
    for (name, spec) in specs {
        let x = t(spec.in_channels, 10);
        let w = t(1, spec.weight_len()).into_vec();
        let b = t(1, spec.out_channels).into_vec();
        let y = ops::conv1d(&x, &spec, &w, &b)?;
        let cot = t(y.rows(), y.cols());
        let g = ops::conv1d_vjp(&x, &spec, &w, &cot)?;
        let ex = finite_diff_check(|p| Ok(weighted_sum(&ops::conv1d(&re(p, &x)?, &spec, &w, &b)?, &cot)), x.data(), g.input.data(), h)?;
        let ew = finite_diff_check(|p| Ok(weighted_sum(&ops::conv1d(&x, &spec, p, &b)?, &cot)), &w, &g.weight, h)?;
        let eb = finite_diff_check(|p| Ok(weighted_sum(&ops::conv1d(&x, &spec, &w, p)?, &cot)), &b, &g.bias, h)?;
        out.push((name.to_string(), ex.max(ew).max(eb)));
    }

    let x = t(3, 12);
    let cot = t(3, 3);
    let g = ops::avg_pool1d_vjp(&cot, 4)?;
    out.push((
        "avg_pool1d".into(),
        finite_diff_check(|p| Ok(weighted_sum(&ops::avg_pool1d(&re(p, &x)?, 4)?, &cot)), x.data(), g.data(), h)?,
    ));

    let x = t(3, 4);
    let cot = t(3, 12);
    let g = ops::upsample_nearest_vjp(&cot, 3)?;
    out.push((
        "upsample_nearest".into(),
        finite_diff_check(|p| Ok(weighted_sum(&ops::upsample_nearest(&re(p, &x)?, 3)?, &cot)), x.data(), g.data(), h)?,
    ));

    let x = t(5, 6);
    let gamma: Vec<f64> = t(1, 5).data().iter().map(|v| 1.0 + 0.5 * v).collect();
    let beta = t(1, 5).into_vec();
    let cot = t(5, 6);
    let eps = timesuite_core::tape::LAYER_NORM_EPS;
    let g = ops::channel_layer_norm_vjp(&x, &gamma, eps, &cot)?;
    let ln = |x: &Tensor2D, gm: &[f64], bt: &[f64]| -> timesuite_core::Result<f64> {
        Ok(weighted_sum(&ops::channel_layer_norm(x, gm, bt, eps)?, &cot))
    };
    let e = finite_diff_check(|p| ln(&re(p, &x)?, &gamma, &beta), x.data(), g.input.data(), h)?
        .max(finite_diff_check(|p| ln(&x, p, &beta), &gamma, &g.gamma, h)?)
        .max(finite_diff_check(|p| ln(&x, &gamma, p), &beta, &g.beta, h)?);
    out.push(("channel_layer_norm".into(), e));

    let x = t(4, 6).data().iter().map(|v| 3.0 * v).collect::<Vec<_>>();
    let x = Tensor2D::from_vec(4, 6, x)?;
    let cot = t(4, 6);
    let g = ops::gelu_vjp(&x, &cot)?;
    out.push((
        "gelu".into(),
        finite_diff_check(|p| Ok(weighted_sum(&ops::gelu(&re(p, &x)?), &cot)), x.data(), g.data(), h)?,
    ));

    let x = t(6, 4);
    let w = t(3, 4);
    let b = t(1, 3).into_vec();
    let cot = t(6, 3);
    let g = ops::linear_vjp(&x, &w, &cot)?;
    let e = finite_diff_check(|p| Ok(weighted_sum(&ops::linear(&re(p, &x)?, &w, &b)?, &cot)), x.data(), g.input.data(), h)?
        .max(finite_diff_check(|p| Ok(weighted_sum(&ops::linear(&x, &re(p, &w)?, &b)?, &cot)), w.data(), g.weight.data(), h)?)
        .max(finite_diff_check(|p| Ok(weighted_sum(&ops::linear(&x, &w, p)?, &cot)), &b, &g.bias, h)?);
    out.push(("linear".into(), e));
    Ok(out)
}

/// The small configuration used for the composite gradient check.
pub fn gradcheck_tape_config() -> TapeConfig {
    TapeConfig {
        merge_len: 2,
        clip_num: 2,
        input_dim: 6,
        mid_dim: 8,
        output_dim: 5,
        sample_rate: 2,
    }
}

/// `(input error, parameter error)` of the full TAPE VJP on 32 tokens.
pub fn tape_gradient_errors(seed: u64, h: f64) -> Result<(f64, f64)> {
    let cfg = gradcheck_tape_config();
    let params = TapeParams::random(cfg, seed)?;
    let mut rng = seeded(derive_seed(seed, [0x7a]));
    let x = uniform_tensor(&mut rng, 32, cfg.input_dim, 1.0);
    let (y, cache) = tape_forward_cached(&x, &params)?;
    let cot = uniform_tensor(&mut rng, y.rows(), y.cols(), 1.0);
    let g = tape_vjp(&params, &cache, &cot)?;
    let ex = finite_diff_check(
        |p| Ok(weighted_sum(&tape_forward(&Tensor2D::from_vec(x.rows(), x.cols(), p.to_vec())?, &params)?, &cot)),
        x.data(),
        g.input.data(),
        h,
    )?;
    let mut probe = params.clone();
    let ep = finite_diff_check(
        |p| {
            probe.load_flat(p)?;
            Ok(weighted_sum(&tape_forward(&x, &probe)?, &cot))
        },
        &params.flatten(),
        &g.params.flatten(),
        h,
    )?;
    Ok((ex, ep))
}

/// Configuration for the anchor check: long enough to leave interior rows.
pub fn anchor_config() -> TapeConfig {
    TapeConfig {
        merge_len: 2,
        clip_num: 4,
        input_dim: 4,
        mid_dim: 6,
        output_dim: 3,
        sample_rate: 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorMeasure {
    pub rows: usize,
    pub margins: (usize, usize),
    /// Library forward vs the zero-padded reference.
    pub reference_diff: f64,
    /// Zero-padded vs circular reference, interior rows only.
    pub counterfactual_diff: f64,
    /// Largest difference between any two interior rows.
    pub interior_spread: f64,
    /// Largest distance of a boundary row from the interior value.
    pub boundary_gap: f64,
}

fn row_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Constant input through random adapter parameters.
pub fn anchor_property(cfg: TapeConfig, len: usize, seed: u64) -> Result<AnchorMeasure> {
    let params = TapeParams::random(cfg, seed)?;
    let mut rng = seeded(derive_seed(seed, [0xa7]));
    let token = uniform_vec(&mut rng, cfg.input_dim, 1.0);
    let v_q = Tensor2D::from_rows(&vec![token; len])?;
    let out = tape_forward(&v_q, &params)?;
    let zero = reference::tape_forward(&v_q, &params, Padding::Zero);
    let circ = reference::tape_forward(&v_q, &params, Padding::Circular);
    let (l, r) = boundary_margins(&cfg, len)?;
    let n = out.rows();
    ensure!(l + r < n, "margins {l}+{r} leave no interior in {n} rows");
    let reference_diff = max_diff_rows(&out, &zero);
    let interior = l..n - r;
    let counterfactual_diff = interior.clone().map(|i| row_diff(&zero[i], &circ[i])).fold(0.0, f64::max);
    let anchor = &zero[l];
    let interior_spread = interior.clone().map(|i| row_diff(&zero[i], anchor)).fold(0.0, f64::max);
    let boundary_gap = (0..l).chain(n - r..n).map(|i| row_diff(&zero[i], anchor)).fold(0.0, f64::max);
    Ok(AnchorMeasure {
        rows: n,
        margins: (l, r),
        reference_diff,
        counterfactual_diff,
        interior_spread,
        boundary_gap,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricDiffs {
    pub iou: f64,
    pub recall: f64,
    pub ap: f64,
    pub map: f64,
    pub hit1: f64,
    /// Items whose evaluability disagrees with the oracle.
    pub disagreements: usize,
    /// AP changes under monotone score transforms.
    pub monotone_violations: usize,
}

fn grid_span(rng: &mut SeededRng) -> (f64, f64) {
    let a = rng.gen_range(0..60) as f64 * 0.5;
    let b = rng.gen_range(0..60) as f64 * 0.5;
    (a.min(b), a.max(b))
}

fn random_highlight(rng: &mut SeededRng) -> HighlightItem {
    let n = rng.gen_range(1..30);
    HighlightItem {
        id: String::new(),
        clip_duration_s: 2.0,
        pred_scores: (0..n).map(|_| rng.gen_range(0..20) as f64 / 20.0).collect(),
        gt_saliency: (0..n).map(|_| SALIENCY_LEVELS[rng.gen_range(0..9)]).collect(),
    }
}

/// Library metrics against the brute-force oracles on `instances` random
/// instances of each kind.
pub fn metric_oracles(seed: u64, instances: usize, positive_level: f64) -> Result<MetricDiffs> {
    let mut d = MetricDiffs::default();
    let mut rng = seeded(derive_seed(seed, [0x3e]));
    let thresholds = [0.1, 0.3, 0.5, 0.7, 0.9];
    for _ in 0..instances {
        let (a, b) = (grid_span(&mut rng), grid_span(&mut rng));
        let got = iou(&TimeSpan::new(a.0, a.1)?, &TimeSpan::new(b.0, b.1)?);
        d.iou = d.iou.max((got - reference::iou(a, b)).abs());

        let n = rng.gen_range(1..15);
        let mut items = Vec::with_capacity(n);
        let mut oracle = Vec::with_capacity(n);
        for _ in 0..n {
            let gt = grid_span(&mut rng);
            let pred = grid_span(&mut rng);
            let (prediction, value) = match rng.gen_range(0..3) {
                0 => (Prediction::Span(TimeSpan::new(pred.0, pred.1)?), Some(reference::iou(pred, gt))),
                1 => (
                    Prediction::Text(format!("The moment is from {} to {} seconds.", pred.1, pred.0)),
                    Some(reference::iou(pred, gt)),
                ),
                _ => (Prediction::Text("Not present in this video.".into()), None),
            };
            oracle.push(value);
            items.push(GroundingItem {
                id: String::new(),
                video_id: String::new(),
                query: String::new(),
                gt: TimeSpan::new(gt.0, gt.1)?,
                prediction,
            });
        }
        let s = evaluate_grounding(&items, &thresholds)?;
        for (th, r) in &s.recall {
            let want = oracle.iter().filter(|v| v.is_some_and(|x| x >= *th)).count() as f64 / n as f64;
            d.recall = d.recall.max((r - want).abs());
        }

        let hl: Vec<HighlightItem> = (0..rng.gen_range(1..6)).map(|_| random_highlight(&mut rng)).collect();
        let mut aps = Vec::new();
        let mut hits = 0usize;
        for item in &hl {
            match (average_precision(item, positive_level), reference::average_precision(&item.pred_scores, &item.gt_saliency, positive_level)) {
                (Ok(got), Some(want)) => {
                    d.ap = d.ap.max((got - want).abs());
                    aps.push(want);
                    if item.gt_saliency[reference::top_clip(&item.pred_scores)] >= positive_level {
                        hits += 1;
                    }
                    for f in [|x: f64| x.exp(), |x: f64| 10.0 * x + 3.0] {
                        let mut t = item.clone();
                        t.pred_scores.iter_mut().for_each(|s| *s = f(*s));
                        if average_precision(&t, positive_level).ok() != Some(got) {
                            d.monotone_violations += 1;
                        }
                    }
                }
                (Err(_), None) => {}
                _ => d.disagreements += 1,
            }
        }
        match evaluate_highlights(&hl, positive_level) {
            Ok(s) => {
                let k = aps.len() as f64;
                d.map = d.map.max((s.map - aps.iter().sum::<f64>() / k).abs());
                d.hit1 = d.hit1.max((s.hit1 - hits as f64 / k).abs());
            }
            Err(_) if aps.is_empty() => {}
            Err(_) => d.disagreements += 1,
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusResult {
    pub positives: usize,
    pub negatives: usize,
    pub forms_seen: usize,
    pub failures: Vec<String>,
}

/// Runs the tab-separated parser corpus: `start<TAB>end<TAB>text` for
/// positives and `-<TAB>-<TAB>text` for negatives. `#` starts a comment.
pub fn parser_corpus(text: &str) -> CorpusResult {
    let mut res = CorpusResult::default();
    let mut forms = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(a), Some(b), Some(input)) = (parts.next(), parts.next(), parts.next()) else {
            res.failures.push(format!("line {}: malformed fixture", i + 1));
            continue;
        };
        let got = parse_timespan(input);
        if a == "-" {
            res.negatives += 1;
            if !matches!(got, Err(timesuite_core::grounding::EvalError::NoTimespanFound)) {
                res.failures.push(format!("line {}: expected no span, got {got:?}", i + 1));
            }
            continue;
        }
        res.positives += 1;
        let want: (f64, f64) = match (a.parse(), b.parse()) {
            (Ok(x), Ok(y)) => (x, y),
            _ => {
                res.failures.push(format!("line {}: bad expected values", i + 1));
                continue;
            }
        };
        match got {
            Ok(p) if (p.span.start(), p.span.end()) == want => {
                if !forms.contains(&p.form) {
                    forms.push(p.form);
                }
            }
            other => res.failures.push(format!("line {}: expected {want:?}, got {other:?}", i + 1)),
        }
    }
    res.forms_seen = forms.len();
    res
}

/// Saliency levels produced over a uniform sweep of `[0, 1]`, plus whether
/// the out-of-range endpoints map exactly to 1.0 and 5.0.
pub fn saliency_sweep(steps: usize) -> (Vec<f64>, bool) {
    let mut seen: Vec<f64> = (0..=steps).map(|i| saliency_discretize(i as f64 / steps as f64)).collect();
    seen.sort_by(f64::total_cmp);
    seen.dedup();
    let endpoints = [-1.0, -0.0, 0.0]
        .iter()
        .all(|&s| saliency_discretize(s) == 1.0)
        && [1.0, 1.5, f64::INFINITY].iter().all(|&s| saliency_discretize(s) == 5.0);
    (seen, endpoints)
}
