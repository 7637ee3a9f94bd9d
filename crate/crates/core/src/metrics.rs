//! Post-processing of run records: regret curves, error counts, paired
//! comparisons and CSV output.

use crate::bope_loop::RunConfig;
use crate::record::{RunRecord, Termination, SCHEMA_VERSION};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation / sqrt(n)).
    pub se: f64,
    pub median: f64,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Sums run over the sorted values so the result does not depend on record
/// order.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Regret per iteration, padded to `len`: early-stopped runs at the floor,
/// anything else by carrying the last value forward.
fn padded_regrets(r: &RunRecord, len: usize) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = r
        .iterations
        .iter()
        .map(|i| i.regret)
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Input("record without regret (human session)".into()))?;
    let pad = match r.termination {
        Termination::EarlyStop { .. } => r.config.regret_floor.min(*v.last().unwrap_or(&f64::INFINITY)),
        _ => *v.last().ok_or_else(|| Error::Input("record has no iterations".into()))?,
    };
    v.resize(len.max(v.len()), pad);
    Ok(v)
}

fn curve_len(records: &[RunRecord]) -> usize {
    records
        .iter()
        .map(|r| r.iterations.len().max(r.config.budget + 1))
        .max()
        .unwrap_or(0)
}

/// Mean, standard error and median of the regret at every iteration.
pub fn aggregate_curves(records: &[RunRecord]) -> Result<Vec<CurvePoint>> {
    if records.is_empty() {
        return Err(Error::Input("no records to aggregate".into()));
    }
    let len = curve_len(records);
    let rows: Vec<Vec<f64>> = records.iter().map(|r| padded_regrets(r, len)).collect::<Result<_>>()?;
    Ok((0..len)
        .map(|t| {
            let col: Vec<f64> = rows.iter().map(|r| r[t]).collect();
            let (mean, se) = mean_se(&col);
            CurvePoint {
                iteration: t,
                mean,
                se,
                median: median(&col),
            }
        })
        .collect())
}

/// Mean cumulative number of preference errors per iteration.
pub fn error_curve(records: &[RunRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::Input("no records to aggregate".into()));
    }
    if let Some(r) = records.iter().find(|r| !r.is_simulated()) {
        return Err(Error::Input(format!(
            "record for seed {} has no ground truth (human session)",
            r.seeds.master
        )));
    }
    let len = curve_len(records);
    let mut out = vec![0.0; len];
    for r in records {
        let mut last = 0;
        for (t, o) in out.iter_mut().enumerate() {
            if let Some(it) = r.iterations.get(t) {
                last = it.cumulative_errors;
            }
            *o += last as f64;
        }
    }
    let n = records.len() as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// Two-sided exact sign test p-value for `wins` vs `losses` (ties dropped).
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    // P(X <= k), X ~ Binomial(n, 1/2), via log-space terms
    let mut log_c = 0.0f64;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            log_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (log_c - n as f64 * std::f64::consts::LN_2).exp();
    }
    (2.0 * tail).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub median_final_regret: f64,
    /// 1 is best; equal medians share a rank.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: String,
    pub b: String,
    /// Seeds where `a` has the lower final regret.
    pub a_wins: usize,
    pub b_wins: usize,
    pub ties: usize,
    /// Median over seeds of `regret_b - regret_a`.
    pub median_difference: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub conditions: Vec<ConditionSummary>,
    pub pairs: Vec<PairedComparison>,
}

fn final_regrets(records: &[RunRecord]) -> Result<BTreeMap<u64, f64>> {
    let len = curve_len(records);
    let mut out = BTreeMap::new();
    for r in records {
        let v = padded_regrets(r, len)?;
        if out.insert(r.seeds.master, *v.last().expect("non-empty")).is_some() {
            return Err(Error::Input(format!("seed {} appears twice in one condition", r.seeds.master)));
        }
    }
    Ok(out)
}

/// Median final regret per condition and seed-paired sign tests between
/// every two conditions.
pub fn compare_conditions(conditions: &[(String, Vec<RunRecord>)]) -> Result<ComparisonTable> {
    if conditions.len() < 2 {
        return Err(Error::Input("need at least two conditions".into()));
    }
    let finals: Vec<BTreeMap<u64, f64>> = conditions
        .iter()
        .map(|(_, r)| final_regrets(r))
        .collect::<Result<_>>()?;
    for (k, f) in finals.iter().enumerate().skip(1) {
        if !f.keys().eq(finals[0].keys()) {
            return Err(Error::Input(format!(
                "condition '{}' has a different seed set than '{}'",
                conditions[k].0, conditions[0].0
            )));
        }
    }
    if finals[0].is_empty() {
        return Err(Error::Input("conditions have no records".into()));
    }
    let medians: Vec<f64> = finals.iter().map(|f| median(&f.values().copied().collect::<Vec<_>>())).collect();
    let summaries = conditions
        .iter()
        .zip(&medians)
        .map(|((name, _), m)| ConditionSummary {
            condition: name.clone(),
            median_final_regret: *m,
            rank: 1 + medians.iter().filter(|o| *o < m).count(),
        })
        .collect();
    let mut pairs = Vec::new();
    for a in 0..conditions.len() {
        for b in a + 1..conditions.len() {
            let diffs: Vec<f64> = finals[a].iter().map(|(s, ra)| finals[b][s] - ra).collect();
            let a_wins = diffs.iter().filter(|d| **d > 0.0).count();
            let b_wins = diffs.iter().filter(|d| **d < 0.0).count();
            pairs.push(PairedComparison {
                a: conditions[a].0.clone(),
                b: conditions[b].0.clone(),
                a_wins,
                b_wins,
                ties: diffs.len() - a_wins - b_wins,
                median_difference: median(&diffs),
                p_value: sign_test(a_wins, b_wins),
            });
        }
    }
    Ok(ComparisonTable {
        conditions: summaries,
        pairs,
    })
}

/// Kendall's tau-b rank correlation.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (mut conc, mut disc, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = (a[i] - a[j]).partial_cmp(&0.0).expect("finite") as i64;
            let db = (b[i] - b[j]).partial_cmp(&0.0).expect("finite") as i64;
            match (da, db) {
                (0, 0) => {}
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let n1 = (conc + disc + ties_a) as f64;
    let n2 = (conc + disc + ties_b) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (conc - disc) as f64 / (n1 * n2).sqrt()
}

/// Identifies a condition: the config with the seed cleared.
pub fn condition_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.seed = 0;
    let json = serde_json::to_string(&c).expect("config serializes");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub regret_median: f64,
    pub regret_se: f64,
    pub errors: f64,
}

/// Curve rows for one condition. Errors are mean cumulative preference
/// errors.
pub fn curve_rows(records: &[RunRecord]) -> Result<Vec<CurveRow>> {
    let curve = aggregate_curves(records)?;
    let errors = error_curve(records)?;
    Ok(curve
        .iter()
        .zip(errors)
        .map(|(c, e)| CurveRow {
            iteration: c.iteration,
            regret_median: c.median,
            regret_se: c.se,
            errors: e,
        })
        .collect())
}

pub fn curve_file_name(cfg: &RunConfig) -> String {
    format!("curve-v{SCHEMA_VERSION}-{}.csv", condition_hash(cfg))
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Input(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Input(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Input(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Input(e.to_string())))
        .collect()
}

/// Groups records by condition and writes one curve CSV per group into
/// `dir`. Returns the written paths.
pub fn write_condition_curves(dir: &Path, records: &[RunRecord]) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(curve_file_name(&r.config)).or_default().push(r.clone());
    }
    let mut paths = Vec::new();
    for (name, recs) in groups {
        let path = dir.join(name);
        write_curve_csv(&path, &curve_rows(&recs)?)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test(0, 0), 1.0);
        assert_eq!(sign_test(3, 3), 1.0);
        // 10 of 10: 2 / 1024
        assert!((sign_test(10, 0) - 2.0 / 1024.0).abs() < 1e-15);
        // 8 vs 2: 2 * (1 + 10 + 45) / 1024
        assert!((sign_test(8, 2) - 112.0 / 1024.0).abs() < 1e-14);
    }

    #[test]
    fn kendall_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a), 1.0);
        assert_eq!(kendall_tau(&a, &[4.0, 3.0, 2.0, 1.0]), -1.0);
        // one discordant pair of six
        assert!((kendall_tau(&a, &[1.0, 3.0, 2.0, 4.0]) - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
