//! Run configuration: TOML file, `TIMESUITE_*` environment overrides, then
//! command-line flags (highest precedence).

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use timesuite_core::grounding::DEFAULT_THRESHOLDS;
use timesuite_core::tape::TapeConfig;
use timesuite_core::tgc::PipelineConfig;
use timesuite_core::token_shuffle::ShuffleConfig;
use timesuite_core::video::SamplingPlan;

pub const ENV_PREFIX: &str = "TIMESUITE_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub video: VideoSection,
    pub shuffle: ShuffleSection,
    pub tape: TapeSection,
    pub eval: EvalSection,
    pub tgc: TgcSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoSection {
    /// Frames sampled per video (`K * T`).
    pub frames: usize,
    /// Frames per clip (`T`).
    pub clip_frames: usize,
    /// Visual tokens per clip (`N`).
    pub tokens_per_clip: usize,
    /// Frame count of the mock video used by `demo`.
    pub source_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShuffleSection {
    pub merge_len: usize,
    /// Visual token width `C_q`.
    pub c_q: usize,
    /// Language-model token width `C_l`.
    pub c_l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TapeSection {
    /// Defaults to the number of clips when absent.
    pub clip_num: Option<usize>,
    pub mid_dim: usize,
    pub sample_rate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub thresholds: Vec<f64>,
    pub positive_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TgcSection {
    pub min_span_s: f64,
    pub max_span_s: f64,
    pub title_max_tokens: usize,
    pub sim_threshold: f64,
    pub review_sample_n: usize,
    pub max_quarantine_fraction: f64,
}

impl Default for VideoSection {
    fn default() -> Self {
        Self {
            frames: 128,
            clip_frames: 8,
            tokens_per_clip: 96,
            source_frames: 3600,
        }
    }
}

impl Default for ShuffleSection {
    fn default() -> Self {
        let t = TapeConfig::default();
        Self {
            merge_len: t.merge_len,
            c_q: t.input_dim,
            c_l: t.output_dim,
        }
    }
}

impl Default for TapeSection {
    fn default() -> Self {
        let t = TapeConfig::default();
        Self {
            clip_num: None,
            mid_dim: t.mid_dim,
            sample_rate: t.sample_rate,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            positive_level: timesuite_core::grounding::DEFAULT_POSITIVE_LEVEL,
        }
    }
}

impl Default for TgcSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            min_span_s: p.min_span_s,
            max_span_s: p.max_span_s,
            title_max_tokens: p.title_max_tokens,
            sim_threshold: p.sim_threshold,
            review_sample_n: p.review_sample_n,
            max_quarantine_fraction: p.max_quarantine_fraction,
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; a missing path yields the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// Applies `TIMESUITE_<SECTION>_<KEY>` (or `TIMESUITE_<KEY>` for
    /// top-level keys) from `vars`. Values are parsed as TOML scalars or
    /// arrays; anything unparseable is taken as a string.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut tree = toml::Value::try_from(&*self)?;
        let root = tree.as_table_mut().ok_or_else(|| anyhow!("config is not a table"))?;
        let mut changed = false;
        for (key, value) in vars {
            let Some(name) = key.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let name = name.to_ascii_lowercase();
            let value = parse_env_value(value.as_ref());
            if root.get(&name).is_some_and(|v| !v.is_table()) {
                root.insert(name, value);
                changed = true;
                continue;
            }
            let target = root.iter_mut().find_map(|(section, body)| {
                let field = name.strip_prefix(section.as_str())?.strip_prefix('_')?;
                body.as_table_mut().map(|t| (t, field.to_string()))
            });
            match target {
                Some((table, field)) => {
                    table.insert(field, value);
                    changed = true;
                }
                // Optional keys are absent from the serialised tree.
                None if name == "tape_clip_num" => {
                    root.get_mut("tape")
                        .and_then(toml::Value::as_table_mut)
                        .map(|t| t.insert("clip_num".into(), value));
                    changed = true;
                }
                None => {}
            }
        }
        if changed {
            *self = tree
                .try_into()
                .context("applying TIMESUITE_* environment overrides")?;
        }
        Ok(())
    }

    pub fn clips(&self) -> usize {
        self.video.frames / self.video.clip_frames.max(1)
    }

    /// Tokens entering the compressor, `K * N`.
    pub fn sequence_len(&self) -> usize {
        self.clips() * self.video.tokens_per_clip
    }

    pub fn tape_config(&self) -> TapeConfig {
        TapeConfig {
            merge_len: self.shuffle.merge_len,
            clip_num: self.tape.clip_num.unwrap_or_else(|| self.clips()),
            input_dim: self.shuffle.c_q,
            mid_dim: self.tape.mid_dim,
            output_dim: self.shuffle.c_l,
            sample_rate: self.tape.sample_rate,
        }
    }

    pub fn shuffle_config(&self) -> ShuffleConfig {
        ShuffleConfig {
            m: self.shuffle.merge_len,
            c_q: self.shuffle.c_q,
            c_l: self.shuffle.c_l,
        }
    }

    pub fn sampling_plan(&self) -> SamplingPlan {
        SamplingPlan {
            total_frames_available: self.video.source_frames,
            k: self.clips(),
            t: self.video.clip_frames,
            n: self.video.tokens_per_clip,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            min_span_s: self.tgc.min_span_s,
            max_span_s: self.tgc.max_span_s,
            title_max_tokens: self.tgc.title_max_tokens,
            sim_threshold: self.tgc.sim_threshold,
            review_sample_n: self.tgc.review_sample_n,
            seed: self.seed,
            max_quarantine_fraction: self.tgc.max_quarantine_fraction,
        }
    }

    /// Checks every module's own constraints plus the ones that tie them
    /// together, before any work starts.
    pub fn validate(&self) -> Result<()> {
        let v = &self.video;
        if v.clip_frames == 0 || v.frames == 0 || v.frames % v.clip_frames != 0 {
            bail!(
                "video.frames ({}) must be a positive multiple of video.clip_frames ({})",
                v.frames,
                v.clip_frames
            );
        }
        self.sampling_plan().validate()?;
        self.shuffle_config().validate()?;
        let tape = self.tape_config();
        tape.validate()?;
        let len = self.sequence_len();
        if len % tape.length_quantum() != 0 {
            bail!(
                "sequence of {} tokens ({} clips x {} tokens) is not a multiple of merge_len * sample_rate^2 = {}",
                len,
                self.clips(),
                v.tokens_per_clip,
                tape.length_quantum()
            );
        }
        if self.eval.thresholds.is_empty() || self.eval.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            bail!("eval.thresholds must be a non-empty list of values in [0, 1]");
        }
        if !timesuite_core::grounding::is_saliency_level(self.eval.positive_level) {
            bail!("eval.positive_level {} is not a saliency level", self.eval.positive_level);
        }
        self.pipeline_config().validate()?;
        Ok(())
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    toml::from_str::<Probe>(&format!("v = {raw}"))
        .map(|p| p.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}
