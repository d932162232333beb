use anyhow::Result;
use serde::Serialize;

use crate::checks::{run_checks, Ablation, CheckContext, CheckOutcome, Status};
use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct CheckReport<'a> {
    pub command: &'static str,
    pub ablations: &'a [Ablation],
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub checks: &'a [CheckOutcome],
    pub config: &'a RunConfig,
}

pub struct CheckRun {
    pub outcomes: Vec<CheckOutcome>,
    pub lines: Vec<String>,
}

impl CheckRun {
    pub fn failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.status == Status::Fail).count()
    }

    pub fn report<'a>(&'a self, config: &'a RunConfig, ablations: &'a [Ablation]) -> CheckReport<'a> {
        let count = |s| self.outcomes.iter().filter(|o| o.status == s).count();
        CheckReport {
            command: "check",
            ablations,
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            skipped: count(Status::Skip),
            checks: &self.outcomes,
            config,
        }
    }
}

pub fn check(config: &RunConfig, ablations: &[Ablation], pool: Option<&rayon::ThreadPool>) -> Result<CheckRun> {
    let ctx = CheckContext {
        config: config.clone(),
        ablations: ablations.to_vec(),
    };
    let outcomes = run_checks(&ctx, pool);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    let mut lines: Vec<String> = outcomes
        .iter()
        .map(|o| {
            format!(
                "{} {:<width$} {:>8.1} ms  {}",
                o.status.label(),
                o.name,
                o.elapsed.as_secs_f64() * 1e3,
                o.detail
            )
        })
        .collect();
    let count = |s| outcomes.iter().filter(|o| o.status == s).count();
    let abl: Vec<&str> = ablations.iter().map(|a| a.name()).collect();
    lines.push(format!(
        "{} passed, {} failed, {} skipped{}",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Skip),
        if abl.is_empty() { String::new() } else { format!(" (ablations: {})", abl.join(", ")) }
    ));
    Ok(CheckRun { outcomes, lines })
}
