//! `run`, `bench` and `metrics` subcommands.

use bope_core::bope_loop::{run, Algorithm, RunConfig};
use bope_core::config::{locate_error, parse_toml, ConfigError};
use bope_core::metrics::{compare_conditions, condition_hash, write_condition_curves};
use bope_core::record::{RunRecord, Termination};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] bope_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILED,
        }
    }
}

fn read(path: &Path) -> Result<String, CommandError> {
    std::fs::read_to_string(path).map_err(|e| {
        CommandError::Config(ConfigError {
            source: path.display().to_string(),
            line: None,
            column: None,
            field: None,
            message: e.to_string(),
        })
    })
}

/// File name for one run's record.
pub fn record_file_name(r: &RunRecord) -> String {
    format!("run-{}-seed{}.jsonl", condition_hash(&r.config), r.seeds.master)
}

pub fn write_record(dir: &Path, r: &RunRecord) -> Result<PathBuf, CommandError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(record_file_name(r));
    std::fs::write(&path, r.to_jsonl())?;
    Ok(path)
}

pub struct RunOutcome {
    pub record: RunRecord,
    pub record_path: PathBuf,
    pub curve_paths: Vec<PathBuf>,
}

pub fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> Result<RunOutcome, CommandError> {
    let text = read(config)?;
    let source = config.display().to_string();
    let mut cfg = bope_core::config::parse_run_config(&text, &source)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let record = run(&cfg).map_err(|e| CommandError::Config(locate_error(&text, &source, &e)))?;
    let record_path = write_record(out, &record)?;
    let curve_paths = write_condition_curves(out, std::slice::from_ref(&record))?;
    Ok(RunOutcome {
        record,
        record_path,
        curve_paths,
    })
}

/// Benchmark matrix: every problem x algorithm x seed cell, with `base`
/// supplying the remaining run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchMatrix {
    pub problems: Vec<String>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub base: RunConfig,
}

impl BenchMatrix {
    pub fn cells(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for p in &self.problems {
            for a in &self.algorithms {
                for s in &self.seeds {
                    let mut c = self.base.clone();
                    c.problem = p.clone();
                    c.algorithm = *a;
                    c.seed = *s;
                    out.push(c);
                }
            }
        }
        out
    }
}

pub fn parse_bench_matrix(text: &str, source: &str) -> Result<BenchMatrix, CommandError> {
    let m: BenchMatrix = parse_toml(text, source)?;
    if m.problems.is_empty() || m.algorithms.is_empty() || m.seeds.is_empty() {
        let field = ["problems", "algorithms", "seeds"]
            .into_iter()
            .zip([m.problems.is_empty(), m.algorithms.is_empty(), m.seeds.is_empty()])
            .find(|(_, empty)| *empty)
            .map(|(f, _)| f)
            .expect("one list is empty");
        return Err(CommandError::Config(ConfigError {
            source: source.to_string(),
            line: bope_core::config::locate_field(text, field),
            column: None,
            field: Some(field.into()),
            message: "benchmark matrix is empty".into(),
        }));
    }
    for cell in m.cells() {
        cell.validate()
            .and_then(|_| cell.resolve().map(|_| ()))
            .map_err(|e| {
                let mut located = locate_error(text, source, &e);
                if located.line.is_none() {
                    if let Some(f) = located.field.as_deref() {
                        located.line = bope_core::config::locate_field(text, &format!("base.{f}"));
                    }
                    if located.field.as_deref() == Some("problem") {
                        located.line = bope_core::config::locate_field(text, "problems");
                    }
                }
                located
            })?;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub problem: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub error: String,
}

pub struct BenchOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
    pub curve_paths: Vec<PathBuf>,
}

pub fn cmd_bench(config: &Path, out: &Path, parallel: Option<usize>) -> Result<BenchOutcome, CommandError> {
    let text = read(config)?;
    let matrix = parse_bench_matrix(&text, &config.display().to_string())?;
    let cells = matrix.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.unwrap_or(0))
        .build()
        .map_err(|e| CommandError::Usage(e.to_string()))?;
    let results: Vec<Result<RunRecord, String>> =
        pool.install(|| cells.par_iter().map(|c| run(c).map_err(|e| e.to_string())).collect());

    let runs_dir = out.join("runs");
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        let failure = match &res {
            Err(e) => Some(e.clone()),
            Ok(r) => match &r.termination {
                Termination::Failed { message, .. } => Some(message.clone()),
                _ => None,
            },
        };
        if let Ok(r) = &res {
            write_record(&runs_dir, r)?;
        }
        if let Some(error) = failure {
            failures.push(CellFailure {
                problem: cell.problem.clone(),
                algorithm: cell.algorithm,
                seed: cell.seed,
                error,
            });
        }
        if let Ok(r) = res {
            records.push(r);
        }
    }
    let curves_dir = out.join("curves");
    std::fs::create_dir_all(&curves_dir)?;
    let curve_paths = write_condition_curves(&curves_dir, &records)?;
    std::fs::write(out.join("failures.json"), serde_json::to_vec_pretty(&failures).map_err(bope_core::Error::from)?)?;
    Ok(BenchOutcome {
        records,
        failures,
        curve_paths,
    })
}

/// Reads every `*.jsonl` record below `dir`, sorted by path.
pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>, CommandError> {
    let mut paths = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "jsonl") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let f = std::fs::File::open(p)?;
            RunRecord::read_jsonl(std::io::BufReader::new(f)).map_err(|e| {
                CommandError::Usage(format!("{}: {e}", p.display()))
            })
        })
        .collect()
}

pub struct MetricsOutcome {
    pub curve_paths: Vec<PathBuf>,
    pub comparison_paths: Vec<PathBuf>,
}

/// Curves per condition, plus a paired comparison between the conditions
/// of every problem that has more than one.
pub fn cmd_metrics(runs: &Path, out: &Path) -> Result<MetricsOutcome, CommandError> {
    let records = read_records(runs)?;
    if records.is_empty() {
        return Err(CommandError::Usage(format!("no run records under {}", runs.display())));
    }
    std::fs::create_dir_all(out)?;
    let simulated: Vec<RunRecord> = records.into_iter().filter(|r| r.is_simulated()).collect();
    let curve_paths = write_condition_curves(out, &simulated)?;

    let mut by_problem: BTreeMap<String, BTreeMap<String, Vec<RunRecord>>> = BTreeMap::new();
    for r in simulated {
        let name = format!("{:?}-{}", r.config.algorithm, condition_hash(&r.config)).to_lowercase();
        by_problem
            .entry(r.problem.clone())
            .or_default()
            .entry(name)
            .or_default()
            .push(r);
    }
    let mut comparison_paths = Vec::new();
    for (problem, conds) in by_problem {
        if conds.len() < 2 {
            continue;
        }
        let conds: Vec<(String, Vec<RunRecord>)> = conds.into_iter().collect();
        match compare_conditions(&conds) {
            Ok(table) => {
                let path = out.join(format!("comparison-{}.json", problem.to_lowercase()));
                std::fs::write(&path, serde_json::to_vec_pretty(&table).map_err(bope_core::Error::from)?)?;
                comparison_paths.push(path);
            }
            Err(e) => log::warn!("skipping comparison for {problem}: {e}"),
        }
    }
    Ok(MetricsOutcome {
        curve_paths,
        comparison_paths,
    })
}
