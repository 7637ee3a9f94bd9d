//! Run traces and their JSON-lines serialisation.

use crate::bope_loop::RunConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Version of the JSONL / CSV output schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Wall-clock seconds spent per stage. Not part of the reproducibility
/// contract.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub gp_fit: f64,
    pub utility_fit: f64,
    pub experimentation: f64,
    pub preference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskedPair {
    /// Indices into the run's observation list.
    pub i: usize,
    pub j: usize,
    /// +1: first preferred, -1: second preferred, 0: tie.
    pub label: i8,
    /// `None` when the true utility is unknown (human sessions).
    pub was_error: Option<bool>,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Design chosen in this iteration (none for iteration 0).
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub acquisition_value: Option<f64>,
    pub pair: Option<AskedPair>,
    /// Simple regret after this iteration, floored once the run stops early.
    pub regret: Option<f64>,
    pub best_utility: Option<f64>,
    pub cumulative_errors: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Budget,
    /// Regret fell below the floor at `iteration`.
    EarlyStop { iteration: usize },
    /// A surrogate or evaluation failure aborted the run.
    Failed { iteration: usize, message: String },
    /// Still running (live sessions).
    InProgress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub init_design: u64,
    pub init_pairs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: RunConfig,
    pub problem: String,
    pub utility: String,
    pub utility_params_hash: String,
    pub train_config_hash: String,
    pub seeds: Seeds,
    pub reference_optimum: Option<f64>,
    pub initial_x: Vec<Vec<f64>>,
    pub initial_y: Vec<Vec<f64>>,
    pub initial_pairs: Vec<AskedPair>,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header {
        schema_version: u32,
        config: RunConfig,
        problem: String,
        utility: String,
        utility_params_hash: String,
        train_config_hash: String,
        seeds: Seeds,
        reference_optimum: Option<f64>,
        initial_x: Vec<Vec<f64>>,
        initial_y: Vec<Vec<f64>>,
        initial_pairs: Vec<AskedPair>,
    },
    Iteration(IterationRecord),
    Summary {
        termination: Termination,
        cumulative_errors: usize,
        final_regret: Option<f64>,
    },
}

impl RunRecord {
    /// The same record with every timing zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> RunRecord {
        let mut r = self.clone();
        for it in &mut r.iterations {
            it.timings = Timings::default();
        }
        r
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.iterations.last().and_then(|i| i.regret)
    }

    pub fn cumulative_errors(&self) -> usize {
        self.iterations.last().map_or(0, |i| i.cumulative_errors)
    }

    /// True when every asked pair has a known ground truth.
    pub fn is_simulated(&self) -> bool {
        self.initial_pairs
            .iter()
            .chain(self.iterations.iter().filter_map(|i| i.pair.as_ref()))
            .all(|p| p.was_error.is_some())
            && self.iterations.iter().all(|i| i.regret.is_some())
    }

    /// Header line, one line per iteration, then a summary line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Line::Header {
            schema_version: self.schema_version,
            config: self.config.clone(),
            problem: self.problem.clone(),
            utility: self.utility.clone(),
            utility_params_hash: self.utility_params_hash.clone(),
            train_config_hash: self.train_config_hash.clone(),
            seeds: self.seeds.clone(),
            reference_optimum: self.reference_optimum,
            initial_x: self.initial_x.clone(),
            initial_y: self.initial_y.clone(),
            initial_pairs: self.initial_pairs.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for it in &self.iterations {
            serde_json::to_writer(&mut w, &Line::Iteration(it.clone()))?;
            writeln!(w)?;
        }
        let summary = Line::Summary {
            termination: self.termination.clone(),
            cumulative_errors: self.cumulative_errors(),
            final_regret: self.final_regret(),
        };
        serde_json::to_writer(&mut w, &summary)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<RunRecord> {
        let mut record: Option<RunRecord> = None;
        let mut done = false;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::Input(format!("line {}: {e}", n + 1)))?;
            match (parsed, record.as_mut()) {
                (
                    Line::Header {
                        schema_version,
                        config,
                        problem,
                        utility,
                        utility_params_hash,
                        train_config_hash,
                        seeds,
                        reference_optimum,
                        initial_x,
                        initial_y,
                        initial_pairs,
                    },
                    None,
                ) => {
                    if schema_version != SCHEMA_VERSION {
                        return Err(Error::Input(format!(
                            "unsupported record schema version {schema_version} (expected {SCHEMA_VERSION})"
                        )));
                    }
                    record = Some(RunRecord {
                        schema_version,
                        config,
                        problem,
                        utility,
                        utility_params_hash,
                        train_config_hash,
                        seeds,
                        reference_optimum,
                        initial_x,
                        initial_y,
                        initial_pairs,
                        iterations: Vec::new(),
                        termination: Termination::InProgress,
                    });
                }
                (Line::Iteration(it), Some(rec)) if !done => rec.iterations.push(it),
                (Line::Summary { termination, .. }, Some(rec)) if !done => {
                    rec.termination = termination;
                    done = true;
                }
                _ => return Err(Error::Input(format!("line {}: unexpected record line", n + 1))),
            }
        }
        record.ok_or_else(|| Error::Input("empty run record".into()))
    }

    pub fn from_jsonl(text: &str) -> Result<RunRecord> {
        Self::read_jsonl(text.as_bytes())
    }
}
