use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cascade_core::engine::RoundTrace;
use cascade_core::metrics::write_report_csv;
use cascade_core::{
    aggregate_seeds, build_report, load_scenario, run_scenario, Error, FidelityReport, ProviderSpec, Scenario,
};
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub scenario: PathBuf,
    /// Seeds to run; the scenario's own seed when empty.
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub provider: ProviderSpec,
}

#[derive(Debug)]
pub struct RunSummary {
    pub reports: Vec<FidelityReport>,
    pub aggregate: FidelityReport,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// The scenario could not be loaded or failed validation.
    #[error(transparent)]
    Invalid(Error),
    /// The scenario was valid but a run or an output write failed.
    #[error(transparent)]
    Failed(Error),
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (
                a.parse().map_err(|_| format!("bad seed {a:?}"))?,
                b.parse().map_err(|_| format!("bad seed {b:?}"))?,
            );
            if a > b {
                return Err(format!("empty seed range {part}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?);
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}

fn write(path: &Path, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    files.push(path.to_path_buf());
    Ok(())
}

fn ndjson(traces: &[RoundTrace]) -> Result<Vec<u8>, Error> {
    let mut out = Vec::new();
    for t in traces {
        serde_json::to_writer(&mut out, &t.summary())?;
        out.push(b'\n');
    }
    Ok(out)
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, Error> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn csv_bytes(report: &FidelityReport) -> Result<Vec<u8>, Error> {
    let mut buf = Vec::new();
    write_report_csv(report, &mut buf)?;
    buf.flush()?;
    Ok(buf)
}

/// Runs every seed (in parallel) and writes per-seed traces and reports
/// plus the aggregate under `opts.out`.
pub fn run(opts: &RunOptions) -> Result<RunSummary, RunError> {
    let scenario: Scenario = load_scenario(&opts.scenario).map_err(RunError::Invalid)?;
    let seeds = if opts.seeds.is_empty() {
        vec![scenario.config.seed]
    } else {
        opts.seeds.clone()
    };
    let provider = opts
        .provider
        .build(scenario.config.embedding_dim, scenario.config.emotion_dim)
        .map_err(RunError::Invalid)?;
    let outputs = seeds
        .par_iter()
        .map(|&seed| {
            let out = run_scenario(&scenario, seed, provider.clone())?;
            let report = build_report(&scenario, seed, &out.initial_alignment, &out.traces)?;
            Ok((seed, out.traces, report))
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(|e| match e {
            Error::Validation(_) | Error::UnknownAgents(_) => RunError::Invalid(e),
            other => RunError::Failed(other),
        })?;

    let mut files = Vec::new();
    let mut reports = Vec::new();
    let fail = RunError::Failed;
    for (seed, traces, report) in outputs {
        let dir = opts.out.join(format!("seed-{seed}"));
        write(&dir.join("traces.ndjson"), &ndjson(&traces).map_err(fail)?, &mut files).map_err(fail)?;
        write(&dir.join("traces.json"), &pretty(&traces).map_err(fail)?, &mut files).map_err(fail)?;
        write(&dir.join("report.json"), &pretty(&report).map_err(fail)?, &mut files).map_err(fail)?;
        write(&dir.join("report.csv"), &csv_bytes(&report).map_err(fail)?, &mut files).map_err(fail)?;
        reports.push(report);
    }
    let aggregate = aggregate_seeds(&reports).map_err(fail)?;
    write(
        &opts.out.join("aggregate.json"),
        &pretty(&aggregate).map_err(fail)?,
        &mut files,
    )
    .map_err(fail)?;
    write(
        &opts.out.join("aggregate.csv"),
        &csv_bytes(&aggregate).map_err(fail)?,
        &mut files,
    )
    .map_err(fail)?;
    Ok(RunSummary {
        reports,
        aggregate,
        files,
    })
}
