use bope_core::metrics::read_curve_csv;
use bope_core::record::{RunRecord, Termination};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FAST: &str = r#"
[acquisition]
raw_samples = 32
restarts = 2
n_mc = 8
max_iter = 10

[gp]
restarts = 2
"#;

fn bope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bope")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

fn load(p: &Path) -> RunRecord {
    RunRecord::from_jsonl(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_config(extra: &str) -> String {
    format!("problem = \"DTLZ2\"\nalgorithm = \"known_utility\"\nbudget = 3\n{extra}\n{FAST}")
}

#[test]
fn run_writes_record_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &run_config("seed = 4"));
    let out = dir.path().join("out");
    let o = bope(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = files(&out, "jsonl");
    assert_eq!(records.len(), 1);
    let r = load(&records[0]);
    assert_eq!(r.seeds.master, 4);
    assert_eq!(r.initial_x.len(), 16);
    assert!(matches!(r.termination, Termination::Budget | Termination::EarlyStop { .. }));
    let curves = files(&out, "csv");
    assert_eq!(curves.len(), 1);
    let rows = read_curve_csv(&curves[0]).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.last().unwrap().regret_median, r.final_regret().unwrap());
}

#[test]
fn seed_flag_overrides_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &run_config("algorithm = \"random\"").replace("algorithm = \"known_utility\"\n", ""));
    let mut recs = Vec::new();
    for (k, seed) in ["7", "7", "8"].iter().enumerate() {
        let out = dir.path().join(format!("o{k}"));
        let o = bope(&["run", "--config", s(&cfg), "--seed", seed, "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        recs.push(load(&files(&out, "jsonl")[0]).without_timings());
    }
    assert_eq!(recs[0], recs[1]);
    assert_eq!(recs[0].seeds.master, 7);
    assert_ne!(recs[0].initial_x, recs[2].initial_x);
}

#[test]
fn config_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "budget = 3\nproblem = \"NOPE\"\n");
    let o = bope(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:2"), "{err}");
    assert!(err.contains("problem"), "{err}");

    let cfg = write(dir.path(), "typo.toml", "budget = 3\n\n[train]\nepoch = 5\n");
    let o = bope(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo.toml:4"));

    let o = bope(&["run", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = bope(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

fn bench_config(seeds: &str) -> String {
    format!(
        "problems = [\"DTLZ2\", \"ZDT1\"]\nalgorithms = [\"random\", \"known_utility\"]\nseeds = {seeds}\n\n[base]\nbudget = 3\n{}",
        FAST.replace("[acquisition]", "[base.acquisition]").replace("[gp]", "[base.gp]")
    )
}

/// Median and standard error of the regret per iteration, and mean
/// cumulative errors, recomputed directly from the records.
fn brute_force(records: &[RunRecord]) -> Vec<(f64, f64, f64)> {
    let len = records.iter().map(|r| r.iterations.len().max(r.config.budget + 1)).max().unwrap();
    let padded: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let mut v: Vec<f64> = r.iterations.iter().map(|i| i.regret.unwrap()).collect();
            let last = *v.last().unwrap();
            let pad = match r.termination {
                Termination::EarlyStop { .. } => last.min(r.config.regret_floor),
                _ => last,
            };
            while v.len() < len {
                v.push(pad);
            }
            v
        })
        .collect();
    let errs: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let mut v: Vec<f64> = r.iterations.iter().map(|i| i.cumulative_errors as f64).collect();
            let last = *v.last().unwrap();
            while v.len() < len {
                v.push(last);
            }
            v
        })
        .collect();
    let n = records.len() as f64;
    (0..len)
        .map(|t| {
            let mut col: Vec<f64> = padded.iter().map(|v| v[t]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = col.len();
            let median = if m % 2 == 1 { col[m / 2] } else { 0.5 * (col[m / 2 - 1] + col[m / 2]) };
            let mean = col.iter().sum::<f64>() / n;
            let se = if m > 1 {
                (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            let e = errs.iter().map(|v| v[t]).sum::<f64>() / n;
            (median, se, e)
        })
        .collect()
}

#[test]
fn bench_matrix_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bench.toml", &bench_config("[0, 1, 2]"));
    let out = dir.path().join("b1");
    let o = bope(&["bench", "--config", s(&cfg), "--out", s(&out), "--parallel", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = files(&out.join("runs"), "jsonl");
    assert_eq!(runs.len(), 12);
    let curves = files(&out.join("curves"), "csv");
    assert_eq!(curves.len(), 4);
    let failures: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    assert!(failures.is_empty());

    // every curve equals a recomputation from its records
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for p in &runs {
        let r = load(p);
        groups.entry(bope_core::metrics::curve_file_name(&r.config)).or_default().push(r);
    }
    assert_eq!(groups.len(), 4);
    for (name, recs) in &groups {
        assert_eq!(recs.len(), 3);
        let rows = read_curve_csv(&out.join("curves").join(name)).unwrap();
        let expect = brute_force(recs);
        assert_eq!(rows.len(), expect.len());
        for (k, (row, (m, se, e))) in rows.iter().zip(&expect).enumerate() {
            assert_eq!(row.iteration, k);
            assert!((row.regret_median - m).abs() <= 1e-12 * m.abs().max(1.0));
            assert!((row.regret_se - se).abs() <= 1e-12 * se.abs().max(1.0));
            assert!((row.errors - e).abs() <= 1e-12);
        }
    }

    // a rerun reproduces the aggregates exactly
    let out2 = dir.path().join("b2");
    let o = bope(&["bench", "--config", s(&cfg), "--out", s(&out2), "--parallel", "1"]);
    assert!(o.status.success());
    for c in &curves {
        let name = c.file_name().unwrap();
        assert_eq!(std::fs::read(c).unwrap(), std::fs::read(out2.join("curves").join(name)).unwrap());
    }

    let m = dir.path().join("m");
    let o = bope(&["metrics", "--runs", s(&out.join("runs")), "--out", s(&m)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&m, "csv").len(), 4);
    for problem in ["dtlz2", "zdt1"] {
        let table: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(m.join(format!("comparison-{problem}.json"))).unwrap())
                .unwrap();
        assert_eq!(table["conditions"].as_array().unwrap().len(), 2);
        let pair = &table["pairs"][0];
        let total = pair["a_wins"].as_u64().unwrap() + pair["b_wins"].as_u64().unwrap() + pair["ties"].as_u64().unwrap();
        assert_eq!(total, 3);
    }
    for c in &curves {
        let name = c.file_name().unwrap();
        assert_eq!(std::fs::read(c).unwrap(), std::fs::read(m.join(name)).unwrap());
    }
}

#[test]
fn empty_bench_matrix_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bench.toml", &bench_config("[]"));
    let o = bope(&["bench", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bench.toml:3"), "{err}");
    assert!(err.contains("seeds"), "{err}");
}

#[test]
fn metrics_without_records_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bope(&["metrics", "--runs", s(dir.path()), "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
}
