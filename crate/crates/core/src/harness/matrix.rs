use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, HarnessError, Mitigations, RunConfig, RunReport};

const CONSTRAINTS: [&str; 6] = ["SC-1", "SC-2", "SC-3", "SC-4", "SC-5", "SC-6"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationSet {
    pub name: String,
    pub mitigations: Mitigations,
}

impl MitigationSet {
    pub fn new(name: &str, mitigations: Mitigations) -> Self {
        Self {
            name: name.to_owned(),
            mitigations,
        }
    }
}

/// Reads sets from TOML of the form `name = ["flag", ...]`, sorted by name.
pub fn parse_mitigation_sets(text: &str) -> Result<Vec<MitigationSet>, HarnessError> {
    let table: BTreeMap<String, Vec<String>> = toml::from_str(text).map_err(|e| HarnessError::Config {
        path: "mitigation sets".into(),
        message: e.to_string(),
    })?;
    table
        .into_iter()
        .map(|(name, flags)| {
            Ok(MitigationSet {
                mitigations: Mitigations::from_names(flags.iter().map(String::as_str))?,
                name,
            })
        })
        .collect()
}

/// `n..m` (both ends included) or a single seed.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Usage(format!("seed range `{s}` is not `n..m`"));
    let num = |v: &str| v.trim().parse::<u64>().map_err(|_| bad());
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![num(s)?]),
    }
}

/// One aggregate row. Means skip runs where the quantity is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub scenario: String,
    pub mitigation_set: String,
    pub runs: usize,
    /// Fraction of runs with at least one violation of each constraint.
    pub violation_rate: BTreeMap<String, f64>,
    pub touchdowns: usize,
    pub mean_landing_error: Option<f64>,
    pub mean_touchdown_time: Option<f64>,
    pub mean_pad_estimate_error: Option<f64>,
    pub post_touchdown_thrust_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<MatrixRow>,
}

impl MatrixTable {
    pub fn any_violation(&self) -> bool {
        self.rows.iter().any(|r| r.violation_rate.values().any(|v| *v > 0.0))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates reports; reduction runs in seed order so the result does not
/// depend on the order reports are given in.
pub fn summarize(scenario: &str, set: &str, reports: &[RunReport]) -> MatrixRow {
    let mut sorted: Vec<&RunReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    let n = sorted.len();
    let violation_rate = CONSTRAINTS
        .iter()
        .map(|c| {
            let hit = sorted.iter().filter(|r| r.has_violation(c)).count();
            (c.to_string(), if n == 0 { 0.0 } else { hit as f64 / n as f64 })
        })
        .collect();
    MatrixRow {
        scenario: scenario.to_owned(),
        mitigation_set: set.to_owned(),
        runs: n,
        violation_rate,
        touchdowns: sorted.iter().filter(|r| r.touchdown_time.is_some()).count(),
        mean_landing_error: mean(sorted.iter().filter_map(|r| r.landing_error)),
        mean_touchdown_time: mean(sorted.iter().filter_map(|r| r.touchdown_time)),
        mean_pad_estimate_error: mean(sorted.iter().filter_map(|r| r.metrics.pad_estimate_error)),
        post_touchdown_thrust_runs: sorted.iter().filter(|r| r.metrics.post_touchdown_thrust_ticks > 0).count(),
    }
}

/// Runs `base` with the given scenario (or none) and flags over every seed, in
/// parallel. Reports come back sorted by seed.
pub fn run_batch(
    base: &RunConfig,
    scenario: Option<&str>,
    mitigations: Mitigations,
    seeds: &[u64],
) -> Result<Vec<RunReport>, HarnessError> {
    let mut cfg = base.clone().with_mitigations(mitigations);
    cfg.run.scenario = scenario.map(str::to_owned);
    let mut reports = seeds
        .par_iter()
        .map(|s| run(&cfg.clone().with_seed(*s)))
        .collect::<Result<Vec<_>, _>>()?;
    reports.sort_by_key(|r| r.seed);
    Ok(reports)
}

/// Every scenario × mitigation set × seed, aggregated per (scenario, set).
pub fn run_matrix(
    base: &RunConfig,
    scenarios: &[String],
    sets: &[MitigationSet],
    seeds: &[u64],
) -> Result<MatrixTable, HarnessError> {
    if scenarios.is_empty() || sets.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Usage("matrix needs at least one scenario, mitigation set and seed".into()));
    }
    let mut cells: Vec<(&String, &MitigationSet, u64)> = Vec::new();
    for s in scenarios {
        for m in sets {
            for seed in seeds {
                cells.push((s, m, *seed));
            }
        }
    }
    let results = cells
        .par_iter()
        .map(|(s, m, seed)| {
            let mut cfg = base.clone().with_seed(*seed).with_mitigations(m.mitigations);
            cfg.run.scenario = Some((*s).clone());
            run(&cfg).map_err(|e| HarnessError::Row {
                scenario: (*s).clone(),
                set: m.name.clone(),
                seed: *seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut grouped: BTreeMap<(String, String), Vec<RunReport>> = BTreeMap::new();
    for ((s, m, _), r) in cells.iter().zip(results) {
        grouped.entry(((*s).clone(), m.name.clone())).or_default().push(r);
    }
    let mut sorted_seeds = seeds.to_vec();
    sorted_seeds.sort_unstable();
    Ok(MatrixTable {
        seeds: sorted_seeds,
        rows: grouped.iter().map(|((s, m), r)| summarize(s, m, r)).collect(),
    })
}
