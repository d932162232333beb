use anyhow::{ensure, Result};
use serde::Serialize;
use timesuite_core::rng::{derive_seed, seeded, uniform_tensor, uniform_vec};
use timesuite_core::tape::{fuse, tape_forward, tape_init, TapeParams};
use timesuite_core::token_shuffle::{compress, efficient_init, mean_pool_compress, merge_adjacent, ShuffleParams};
use timesuite_core::video::{encode_video, segment, uniform_sample, MockEncoder};

use crate::checks::Ablation;
use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub video_id: String,
    pub source_frames: usize,
    pub sampled_frames: usize,
    pub clips: usize,
    pub v_q: (usize, usize),
    pub v_l: (usize, usize),
    pub v_t: Option<(usize, usize)>,
    pub max_abs_v_t: Option<f64>,
    pub tokens_to_llm: usize,
}

pub struct DemoRun {
    pub trace: Vec<String>,
    pub summary: DemoSummary,
    pub shuffle: Option<ShuffleParams>,
    pub tape: Option<TapeParams>,
}

fn preview(idx: &[usize]) -> String {
    if idx.len() <= 8 {
        return format!("{idx:?}");
    }
    format!("[{}, {}, {}, ..., {}]", idx[0], idx[1], idx[2], idx[idx.len() - 1])
}

/// Mock end-to-end pass: sample, encode, compress, encode positions, fuse.
/// `tape` overrides the freshly initialised adapter.
pub fn demo_forward(config: &RunConfig, ablations: &[Ablation], video_id: &str, tape: Option<TapeParams>) -> Result<DemoRun> {
    config.validate()?;
    let seed = config.seed;
    let plan = config.sampling_plan();
    let sc = config.shuffle_config();
    let tc = config.tape_config();
    let mut trace = Vec::new();
    trace.push(format!(
        "config: K={} clips x T={} frames, N={} tokens/clip, C_q={}, C_l={}, m={}, seed={}",
        plan.k, plan.t, plan.n, sc.c_q, sc.c_l, sc.m, seed
    ));

    let idx = uniform_sample(&plan)?;
    trace.push(format!(
        "sampled frames: {} of {} {}",
        idx.len(),
        plan.total_frames_available,
        preview(&idx)
    ));
    let clips = segment(&idx, plan.k, plan.t)?;
    trace.push(format!("clips: {} x {} frames", clips.len(), plan.t));
    let enc = MockEncoder {
        seed: derive_seed(seed, video_id.bytes().map(u64::from)),
        n: plan.n,
        c_q: sc.c_q,
    };
    let v_q = encode_video(&plan, &enc)?;
    trace.push(format!("V_q: {} x {} (mock encoder, {} tokens per clip)", v_q.rows(), v_q.cols(), plan.n));

    // Stand-in for a pretrained C_q -> C_l projector.
    let mut rng = seeded(derive_seed(seed, [0xb0]));
    let w0 = uniform_tensor(&mut rng, sc.c_l, sc.c_q, 1.0 / (sc.c_q as f64).sqrt());
    let b0 = uniform_vec(&mut rng, sc.c_l, 0.1);
    let mut shuffle = None;
    let v_l = if ablations.contains(&Ablation::Pooling) {
        let v = mean_pool_compress(&v_q, sc.m, &w0, &b0)?;
        trace.push(format!("mean pool (m={}) + projector: V_l {} x {}", sc.m, v.rows(), v.cols()));
        v
    } else {
        let merged = merge_adjacent(&v_q, sc.m)?;
        trace.push(format!("token shuffle merge (m={}): {} x {}", sc.m, merged.rows(), merged.cols()));
        let params = if ablations.contains(&Ablation::NoInit) {
            ShuffleParams::random(sc, seed)?
        } else {
            efficient_init(&w0, &b0, sc.m)?
        };
        let v = compress(&v_q, &params)?;
        let init = if ablations.contains(&Ablation::NoInit) { "random init" } else { "efficient init" };
        trace.push(format!("token shuffle projection ({init}): V_l {} x {}", v.rows(), v.cols()));
        shuffle = Some(params);
        v
    };

    let mut tape_params = None;
    let (fused, v_t_shape, max_v_t) = if ablations.contains(&Ablation::NoTape) {
        trace.push("TAPE: ablated".into());
        (v_l.clone(), None, None)
    } else {
        let params = match tape {
            Some(p) => {
                ensure!(p.config == tc, "loaded TAPE weights have config {:?}, run config needs {:?}", p.config, tc);
                p
            }
            None => tape_init(tc, seed)?,
        };
        let s = tc.sample_rate;
        let n1 = v_q.rows() / tc.merge_len;
        trace.push(format!(
            "TAPE: linear_input {} x {} -> pool {} x {} -> down1 {} x {} -> down2 {} x {} -> fc (k={}) -> conv2 {} x {} -> conv1 {} x {}",
            v_q.rows(),
            tc.mid_dim,
            tc.mid_dim,
            n1,
            tc.mid_dim,
            n1 / s,
            tc.mid_dim,
            n1 / (s * s),
            tc.clip_num + 1,
            tc.mid_dim,
            n1 / s,
            tc.mid_dim,
            n1
        ));
        let v_t = tape_forward(&v_q, &params)?;
        let m = v_t.max_abs();
        trace.push(format!("V_t: {} x {}, max|V_t| = {m}", v_t.rows(), v_t.cols()));
        let f = fuse(&v_l, &v_t)?.tokens;
        trace.push(format!("fused V_l + V_t: {} x {}", f.rows(), f.cols()));
        let shape = v_t.shape();
        tape_params = Some(params);
        (f, Some(shape), Some(m))
    };
    trace.push(format!("C_l = {}", fused.cols()));
    trace.push(format!("tokens to language model: {} × C_l", fused.rows()));
    Ok(DemoRun {
        trace,
        summary: DemoSummary {
            video_id: video_id.to_string(),
            source_frames: plan.total_frames_available,
            sampled_frames: idx.len(),
            clips: plan.k,
            v_q: v_q.shape(),
            v_l: v_l.shape(),
            v_t: v_t_shape,
            max_abs_v_t: max_v_t,
            tokens_to_llm: fused.rows(),
        },
        shuffle,
        tape: tape_params,
    })
}
