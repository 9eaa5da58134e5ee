use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_scenario, improvement, run_scheme, GeneratorParams, HarnessError, Scheme};
use crate::model::Scenario;
use crate::optimizer::GaConfig;
use crate::routing::build_routing;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// Absolute bandwidth of every link, Mb/s.
    Bandwidth,
    /// Multiplier on every arrival rate.
    ArrivalRate,
    /// Absolute CPU capacity of every compute node.
    CpuCapacity,
    /// Target average link forwarding load; regenerates the topology.
    AvgLfl,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Bandwidth => "bandwidth",
            Axis::ArrivalRate => "arrival-rate",
            Axis::CpuCapacity => "cpu-capacity",
            Axis::AvgLfl => "avg-lfl",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Axis::Bandwidth, Axis::ArrivalRate, Axis::CpuCapacity, Axis::AvgLfl]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown axis `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    /// Path of the per-run CSV; summary and improvement tables are written
    /// next to it.
    pub output: PathBuf,
    #[serde(default)]
    pub ga: GaConfig,
    /// Record real wall time instead of 0 in `wall_ms`.
    #[serde(default)]
    pub wall_clock: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::InvalidSweep(m.into()));
        if self.values.is_empty() || self.schemes.is_empty() || self.seeds.is_empty() {
            return fail("values, schemes and seeds must be non-empty");
        }
        if self.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return fail("axis values must be positive");
        }
        self.ga.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellResult {
    Done { t: f64, iterations: usize, congested: bool },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub wall_ms: u128,
    pub result: CellResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axis: Axis,
    /// Ordered by value, then seed, then scheme as listed in the spec.
    pub rows: Vec<SweepRow>,
}

fn cell_scenario(spec: &SweepSpec, params: &GeneratorParams, value: f64, seed: u64) -> Result<Scenario, HarnessError> {
    let mut params = params.clone().with_seed(seed);
    if spec.axis == Axis::AvgLfl {
        params.target_lfl = value;
    }
    let s = generate_scenario(&params)?;
    Ok(match spec.axis {
        Axis::Bandwidth => s.with_link_bandwidth(value)?,
        Axis::ArrivalRate => s.with_scaled_arrivals(value)?,
        Axis::CpuCapacity => s.with_compute_cpu(value)?,
        Axis::AvgLfl => s,
    })
}

/// Runs every scheme on every (value, seed) cell. Cells run concurrently;
/// a failing cell is recorded rather than aborting the sweep.
pub fn run_sweep(spec: &SweepSpec, params: &GeneratorParams) -> Result<SweepTable, HarnessError> {
    spec.validate()?;
    params.validate()?;
    let cells: Vec<(f64, u64)> = spec.values.iter().flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s))).collect();
    let rows = cells
        .par_iter()
        .flat_map_iter(|&(value, seed)| {
            let prepared = cell_scenario(spec, params, value, seed)
                .and_then(|s| Ok((build_routing(s.topology())?, s)));
            spec.schemes
                .iter()
                .map(|&scheme| {
                    let start = Instant::now();
                    let result = match &prepared {
                        Err(e) => CellResult::Failed(e.to_string()),
                        Ok((routing, s)) => match run_scheme(s, routing, scheme, &spec.ga, seed) {
                            Ok(o) => CellResult::Done {
                                t: o.report.total,
                                iterations: o.iterations,
                                congested: o.report.congested,
                            },
                            Err(e) => CellResult::Failed(e.to_string()),
                        },
                    };
                    let wall_ms = if spec.wall_clock { start.elapsed().as_millis() } else { 0 };
                    SweepRow { value, seed, scheme, wall_ms, result }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(SweepTable { axis: spec.axis, rows })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SweepTable {
    pub const HEADER: &'static str = "axis,value,seed,scheme,T_seconds,iterations,wall_ms,congested";

    /// One line per run. Failed runs leave `T_seconds` and `iterations`
    /// empty and carry `failed` in the last column.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let (t, it, congested) = match &r.result {
                CellResult::Done { t, iterations, congested } => (t.to_string(), iterations.to_string(), congested.to_string()),
                CellResult::Failed(_) => (String::new(), String::new(), "failed".to_string()),
            };
            writeln!(out, "{},{},{},{},{t},{it},{},{congested}", self.axis.name(), r.value, r.seed, r.scheme, r.wall_ms)
                .expect("writing to a string");
        }
        out
    }

    /// Mean final delay per (value, scheme) over successful runs.
    pub fn means(&self) -> BTreeMap<(u64, Scheme), (f64, f64, usize)> {
        let mut groups: BTreeMap<(u64, Scheme), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            if let CellResult::Done { t, .. } = r.result {
                groups.entry((r.value.to_bits(), r.scheme)).or_default().push(t);
            }
        }
        groups
            .into_iter()
            .map(|(k, ts)| {
                let (m, s) = mean_std(&ts);
                (k, (m, s, ts.len()))
            })
            .collect()
    }

    fn values(&self) -> Vec<f64> {
        let mut seen: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.value) {
                seen.push(r.value);
            }
        }
        seen
    }

    fn schemes(&self) -> Vec<Scheme> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.scheme) {
                seen.push(r.scheme);
            }
        }
        seen
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("axis,value,scheme,runs,failed,mean_T,std_T,mean_iterations,congested_runs\n");
        for value in self.values() {
            for scheme in self.schemes() {
                let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.value == value && r.scheme == scheme).collect();
                let done: Vec<(f64, usize, bool)> = rows
                    .iter()
                    .filter_map(|r| match r.result {
                        CellResult::Done { t, iterations, congested } => Some((t, iterations, congested)),
                        CellResult::Failed(_) => None,
                    })
                    .collect();
                let failed = rows.len() - done.len();
                let (mean, std, iters) = if done.is_empty() {
                    (String::new(), String::new(), String::new())
                } else {
                    let ts: Vec<f64> = done.iter().map(|d| d.0).collect();
                    let its: Vec<f64> = done.iter().map(|d| d.1 as f64).collect();
                    let (m, s) = mean_std(&ts);
                    (m.to_string(), s.to_string(), mean_std(&its).0.to_string())
                };
                let congested = done.iter().filter(|d| d.2).count();
                writeln!(
                    out,
                    "{},{value},{scheme},{},{failed},{mean},{std},{iters},{congested}",
                    self.axis.name(),
                    rows.len()
                )
                .expect("writing to a string");
            }
        }
        out
    }

    /// Improvement of each scheme over each other scheme, from mean delays.
    pub fn improvement_csv(&self) -> String {
        let means = self.means();
        let mut out = String::from("axis,value,scheme_a,scheme_b,improvement_pct\n");
        for value in self.values() {
            for a in self.schemes() {
                for b in self.schemes() {
                    if a == b {
                        continue;
                    }
                    let get = |s: Scheme| means.get(&(value.to_bits(), s)).map(|m| m.0);
                    let pct = match (get(a), get(b)) {
                        (Some(ta), Some(tb)) if tb > 0.0 => improvement(ta, tb).to_string(),
                        _ => String::new(),
                    };
                    writeln!(out, "{},{value},{a},{b},{pct}", self.axis.name()).expect("writing to a string");
                }
            }
        }
        out
    }

    /// Writes the run table to `path` and the summary and improvement tables
    /// beside it (`<stem>.summary.csv`, `<stem>.improvement.csv`).
    pub fn write(&self, path: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
        let sibling = |suffix: &str| path.with_file_name(format!("{stem}.{suffix}.csv"));
        let files = [
            (path.to_path_buf(), self.runs_csv()),
            (sibling("summary"), self.summary_csv()),
            (sibling("improvement"), self.improvement_csv()),
        ];
        let mut written = Vec::new();
        for (p, text) in files {
            std::fs::write(&p, text)?;
            written.push(p);
        }
        Ok(written)
    }
}
