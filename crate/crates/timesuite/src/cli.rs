//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 failed check.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::checks::Ablation;
use crate::commands::{check, demo, eval, tgc};
use crate::config::RunConfig;
use crate::formats::load_manifest;
use crate::io::write_atomic;
use crate::report::to_json;
use crate::weights;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CHECK_FAILED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "timesuite", version, about = "Temporal grounding evaluation, TAPE demos and TGC data construction")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH", env = "TIMESUITE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Ablation toggle; may be repeated.
    #[arg(long, global = true, value_enum)]
    pub ablate: Vec<Ablation>,
    /// Primary output file of the command.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Structured JSON report.
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// R@1 at IoU thresholds for temporal grounding predictions.
    EvalGrounding {
        #[arg(long, value_name = "PATH")]
        pred: PathBuf,
        #[arg(long, value_name = "PATH")]
        gt: PathBuf,
        /// Comma-separated IoU thresholds.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// mAP and HIT@1 for per-clip highlight scores.
    EvalHighlight {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long)]
        positive_level: Option<f64>,
    },
    /// Temporal grounded caption data.
    Tgc {
        #[command(subcommand)]
        command: TgcCommand,
    },
    /// Mock end-to-end forward pass with a shape trace.
    Demo {
        /// Frames sampled per video.
        #[arg(long)]
        frames: Option<usize>,
        /// Frame-count manifest; one trace per video.
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        load_tape: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        save_tape: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        save_shuffle: Option<PathBuf>,
    },
    /// Runs the invariant suite.
    Check,
}

#[derive(Debug, Subcommand)]
pub enum TgcCommand {
    /// Runs the four-stage pipeline over source captions.
    Build {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Rendered review sample.
        #[arg(long, value_name = "PATH")]
        review: Option<PathBuf>,
    },
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_env(std::env::vars().filter(|(k, _)| k != "TIMESUITE_CONFIG"))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::EvalGrounding { thresholds: Some(t), .. } => cfg.eval.thresholds = t.clone(),
        Command::EvalHighlight { positive_level: Some(l), .. } => cfg.eval.positive_level = *l,
        Command::Demo { frames: Some(f), .. } => cfg.video.frames = *f,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    if let Some(p) = path {
        write_atomic(p, text.as_bytes())?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let cfg = resolve_config(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    match &cli.command {
        Command::EvalGrounding { pred, gt, .. } => {
            let (p, g) = (read(pred)?, read(gt)?);
            let report = pool.install(|| {
                eval::eval_grounding(&p, &pred.display().to_string(), &g, &gt.display().to_string(), &cfg)
            })?;
            print!("{}", report.table());
            emit(cli.report.as_deref(), &to_json(&report)?)?;
        }
        Command::EvalHighlight { input, .. } => {
            let report = eval::eval_highlight(&read(input)?, &input.display().to_string(), &cfg)?;
            print!("{}", report.table());
            emit(cli.report.as_deref(), &to_json(&report)?)?;
        }
        Command::Tgc {
            command: TgcCommand::Build { input, review },
        } => {
            let Some(out) = cli.out.as_deref() else {
                bail!("tgc build needs --out");
            };
            let a = tgc::build_corpus(&read(input)?, &input.display().to_string(), &cfg)?;
            write_atomic(out, a.corpus.as_bytes())?;
            emit(cli.report.as_deref(), &a.report)?;
            emit(review.as_deref(), &a.review)?;
            print!("{}", a.summary);
        }
        Command::Demo {
            manifest,
            load_tape,
            save_tape,
            save_shuffle,
            ..
        } => {
            let tape = load_tape.as_deref().map(weights::read_tape).transpose()?;
            let videos: Vec<(String, RunConfig)> = match manifest {
                None => vec![("demo".into(), cfg.clone())],
                Some(p) => load_manifest(&read(p)?, &p.display().to_string())?
                    .into_iter()
                    .map(|r| {
                        let mut c = cfg.clone();
                        c.video.source_frames = r.total_frames;
                        (r.video_id, c)
                    })
                    .collect(),
            };
            if videos.is_empty() {
                bail!("manifest lists no videos");
            }
            let mut text = String::new();
            let mut summaries = Vec::new();
            let mut last = None;
            for (i, (id, c)) in videos.iter().enumerate() {
                let run = demo::demo_forward(c, &cli.ablate, id, tape.clone())?;
                if videos.len() > 1 {
                    text.push_str(&format!("{}== {id} ==\n", if i > 0 { "\n" } else { "" }));
                }
                run.trace.iter().for_each(|l| {
                    text.push_str(l);
                    text.push('\n');
                });
                summaries.push(run.summary.clone());
                last = Some(run);
            }
            print!("{text}");
            emit(cli.out.as_deref(), &text)?;
            emit(cli.report.as_deref(), &to_json(&serde_json::json!({
                "command": "demo",
                "ablations": &cli.ablate,
                "videos": summaries,
                "config": &cfg,
            }))?)?;
            let last = last.expect("at least one video");
            match (save_tape, &last.tape) {
                (Some(p), Some(t)) => write_atomic(p, &weights::encode_tape(t))?,
                (Some(_), None) => bail!("--save-tape given but TAPE is ablated"),
                _ => {}
            }
            match (save_shuffle, &last.shuffle) {
                (Some(p), Some(s)) => write_atomic(p, &weights::encode_shuffle(s))?,
                (Some(_), None) => bail!("--save-shuffle given but token shuffle is ablated"),
                _ => {}
            }
        }
        Command::Check => {
            let run = check::check(&cfg, &cli.ablate, Some(&pool))?;
            run.lines.iter().for_each(|l| println!("{l}"));
            emit(cli.report.as_deref(), &to_json(&run.report(&cfg, &cli.ablate))?)?;
            if run.failed() > 0 {
                return Ok(ExitCode::from(EXIT_CHECK_FAILED));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
