//! Experiment sweeps: instance generation over a parameter grid, policy runs,
//! normalization against baselines, and box-plot summaries.

pub mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{simulate, SimError};
use crate::io::ProfileLibrary;
use crate::metrics::{aggregate, normalize, MetricReport, MetricsError};
use crate::model::{Instance, MINUTE};
use crate::par::{self, Execution};
use crate::policy::{default_policies, PolicySpec, Variant};
use crate::seed;
use crate::trace::MINUTES_PER_DAY;
use crate::workload::{generate_instance, GenerationConfig, WorkloadError, DEFAULT_EPSILON};

pub use synthetic::{synthetic_profiles, SyntheticConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("profile library has no usable day")]
    NoProfiles,
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("{policy} on instance {seed}: {err}")]
    Simulation { policy: String, seed: u64, err: SimError },
    #[error("{policy} on instance {seed}: {err}")]
    Metrics {
        policy: String,
        seed: u64,
        err: MetricsError,
    },
    #[error("{path}: {err}")]
    Io {
        path: std::path::PathBuf,
        err: std::io::Error,
    },
    #[error("{path}: {err}")]
    Csv { path: std::path::PathBuf, err: csv::Error },
}

fn default_instances() -> usize {
    20
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub processors: Vec<usize>,
    pub loads: Vec<f64>,
    pub durations_min: Vec<u64>,
    #[serde(default = "default_instances")]
    pub instances_per_config: usize,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.processors.is_empty() || self.loads.is_empty() || self.durations_min.is_empty() {
            return bad("processors, loads and durations_min must be non-empty");
        }
        if self.policies.is_empty() {
            return bad("no policies");
        }
        if self.instances_per_config == 0 {
            return bad("instances_per_config must be at least 1");
        }
        if self
            .durations_min
            .iter()
            .any(|&t| t == 0 || t as usize > MINUTES_PER_DAY)
        {
            return bad("durations_min must lie in 1..=1440");
        }
        if self.processors.contains(&0) {
            return bad("processor counts must be positive");
        }
        if let Some(p) = self.policies.iter().find(|p| p.validate().is_err()) {
            return Err(HarnessError::Config(format!("invalid policy {p}")));
        }
        Ok(())
    }

    /// Requested policies followed by any missing baselines.
    pub fn policies_with_baselines(&self) -> Vec<PolicySpec> {
        let mut out = self.policies.clone();
        for p in &self.policies {
            let b = p.baseline();
            if !out.contains(&b) {
                out.push(b);
            }
        }
        out
    }
}

/// One point of the parameter grid and an instance index within it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceKey {
    pub processors: usize,
    pub load: f64,
    pub minutes: u64,
    pub index: usize,
}

impl InstanceKey {
    pub fn seed(&self, master: u64) -> u64 {
        seed::derive(
            master,
            &[
                self.processors as u64,
                self.load.to_bits(),
                self.minutes,
                self.index as u64,
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub m: usize,
    pub load: f64,
    #[serde(rename = "T_min")]
    pub t_min: u64,
    pub index: usize,
    pub seed: u64,
    pub day: u32,
    pub window_start_min: u64,
    pub functions: usize,
    pub invocations: usize,
    pub achieved_load: f64,
    pub below_target: bool,
}

/// Raw metric row; flow-typed fields in µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub policy: String,
    pub variant: String,
    pub m: usize,
    pub load: f64,
    #[serde(rename = "T_min")]
    pub t_min: u64,
    pub seed: u64,
    #[serde(rename = "AF_us")]
    pub af: f64,
    #[serde(rename = "AS")]
    pub as_: f64,
    #[serde(rename = "F99_us")]
    pub f99: f64,
    #[serde(rename = "S99")]
    pub s99: f64,
    #[serde(rename = "FF_us")]
    pub ff: f64,
    #[serde(rename = "FS")]
    pub fs: f64,
}

/// Metric row divided by the baseline run on the same instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRow {
    pub policy: String,
    pub variant: String,
    pub m: usize,
    pub load: f64,
    #[serde(rename = "T_min")]
    pub t_min: u64,
    pub seed: u64,
    pub baseline: String,
    #[serde(rename = "AF")]
    pub af: f64,
    #[serde(rename = "AS")]
    pub as_: f64,
    #[serde(rename = "F99")]
    pub f99: f64,
    #[serde(rename = "S99")]
    pub s99: f64,
    #[serde(rename = "FF")]
    pub ff: f64,
    #[serde(rename = "FS")]
    pub fs: f64,
}

impl NormalizedRow {
    pub fn values(&self) -> [f64; 6] {
        [self.af, self.as_, self.f99, self.s99, self.ff, self.fs]
    }
}

pub fn variant_name(spec: &PolicySpec) -> &'static str {
    match spec.family {
        crate::policy::Family::Fifo
        | crate::policy::Family::RoundRobin
        | crate::policy::Family::Spt
        | crate::policy::Family::Srpt => "-",
        _ if spec.variant == Variant::ReLim => "re-lim",
        _ => spec.variant.name(),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResults {
    pub instances: Vec<InstanceRow>,
    pub raw: Vec<RawRow>,
    pub normalized: Vec<NormalizedRow>,
}

/// A generated instance with its manifest row.
pub struct PreparedInstance {
    pub key: InstanceKey,
    pub row: InstanceRow,
    pub instance: Instance,
}

/// Picks a day and a window of `minutes` inside it, then fills the window.
pub fn prepare_instance(
    key: InstanceKey,
    master_seed: u64,
    epsilon: f64,
    library: &ProfileLibrary,
) -> Result<PreparedInstance, HarnessError> {
    let days: Vec<_> = library
        .days
        .iter()
        .filter(|d| !d.functions.is_empty() && d.functions.iter().all(|f| f.rates.len() as u64 >= key.minutes))
        .collect();
    if days.is_empty() {
        return Err(HarnessError::NoProfiles);
    }
    let inst_seed = key.seed(master_seed);
    let mut rng = seed::rng(seed::derive(inst_seed, &[0xDA7]));
    let day = days[rng.random_range(0..days.len())];
    let day_minutes = day.functions.iter().map(|f| f.rates.len() as u64).min().unwrap();
    let start = rng.random_range(0..=day_minutes - key.minutes);
    let cfg = GenerationConfig {
        window_start: start * MINUTE,
        window_end: (start + key.minutes) * MINUTE,
        processors: key.processors,
        load: key.load,
        epsilon,
        seed: inst_seed,
    };
    let generated = generate_instance(&day.functions, &cfg)?;
    let instance = generated.instance;
    Ok(PreparedInstance {
        key,
        row: InstanceRow {
            m: key.processors,
            load: key.load,
            t_min: key.minutes,
            index: key.index,
            seed: inst_seed,
            day: day.day,
            window_start_min: start,
            functions: instance.profiles.len(),
            invocations: instance.invocations.len(),
            achieved_load: instance.load(),
            below_target: generated.below_target,
        },
        instance,
    })
}

pub fn grid(cfg: &ExperimentConfig) -> Vec<InstanceKey> {
    let mut keys = Vec::new();
    for &processors in &cfg.processors {
        for &load in &cfg.loads {
            for &minutes in &cfg.durations_min {
                for index in 0..cfg.instances_per_config {
                    keys.push(InstanceKey {
                        processors,
                        load,
                        minutes,
                        index,
                    });
                }
            }
        }
    }
    keys
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    library: &ProfileLibrary,
    exec: Execution,
) -> Result<ExperimentResults, HarnessError> {
    cfg.validate()?;
    let keys = grid(cfg);
    let prepared = par::map(exec, &keys, |&k| prepare_instance(k, cfg.seed, cfg.epsilon, library))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let policies = cfg.policies_with_baselines();
    let reports = evaluate(&prepared, &policies, exec)?;

    let mut results = ExperimentResults {
        instances: prepared.iter().map(|p| p.row.clone()).collect(),
        ..Default::default()
    };
    for (p, per_policy) in prepared.iter().zip(&reports) {
        let by_spec: BTreeMap<String, &MetricReport> =
            policies.iter().map(|s| s.to_string()).zip(per_policy.iter()).collect();
        for (spec, report) in policies.iter().zip(per_policy) {
            let row = &p.row;
            results.raw.push(RawRow {
                policy: spec.to_string(),
                variant: variant_name(spec).to_string(),
                m: row.m,
                load: row.load,
                t_min: row.t_min,
                seed: row.seed,
                af: report.af,
                as_: report.as_,
                f99: report.f99,
                s99: report.s99,
                ff: report.ff,
                fs: report.fs,
            });
            let baseline = spec.baseline().to_string();
            let n = normalize(report, by_spec[&baseline]).map_err(|e| HarnessError::Metrics {
                policy: spec.to_string(),
                seed: row.seed,
                err: e,
            })?;
            results.normalized.push(NormalizedRow {
                policy: spec.to_string(),
                variant: variant_name(spec).to_string(),
                m: row.m,
                load: row.load,
                t_min: row.t_min,
                seed: row.seed,
                baseline,
                af: n.af,
                as_: n.as_,
                f99: n.f99,
                s99: n.s99,
                ff: n.ff,
                fs: n.fs,
            });
        }
    }
    Ok(results)
}

/// Runs every policy on every instance; `out[i][j]` is policy `j` on
/// instance `i`.
pub fn evaluate(
    prepared: &[PreparedInstance],
    policies: &[PolicySpec],
    exec: Execution,
) -> Result<Vec<Vec<MetricReport>>, HarnessError> {
    let jobs: Vec<(usize, usize)> = (0..prepared.len())
        .flat_map(|i| (0..policies.len()).map(move |j| (i, j)))
        .collect();
    let flat = par::map(exec, &jobs, |&(i, j)| {
        let p = &prepared[i];
        let spec = &policies[j];
        let records = simulate(&p.instance, spec).map_err(|e| HarnessError::Simulation {
            policy: spec.to_string(),
            seed: p.row.seed,
            err: e,
        })?;
        aggregate(&records).map_err(|e| HarnessError::Metrics {
            policy: spec.to_string(),
            seed: p.row.seed,
            err: e,
        })
    });
    let mut out: Vec<Vec<MetricReport>> = (0..prepared.len())
        .map(|_| Vec::with_capacity(policies.len()))
        .collect();
    for ((i, _), r) in jobs.into_iter().zip(flat) {
        out[i].push(r?);
    }
    Ok(out)
}

pub const RAW_FILE: &str = "raw.csv";
pub const NORMALIZED_FILE: &str = "normalized.csv";
pub const INSTANCES_FILE: &str = "instances.csv";

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let csv_err = |e| HarnessError::Csv {
        path: path.to_path_buf(),
        err: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        err: e,
    })
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let csv_err = |e| HarnessError::Csv {
        path: path.to_path_buf(),
        err: e,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.to_path_buf(),
        err: e,
    })
}

pub fn write_results(dir: &Path, results: &ExperimentResults) -> Result<(), HarnessError> {
    create_dir(dir)?;
    write_csv(&dir.join(INSTANCES_FILE), &results.instances)?;
    write_csv(&dir.join(RAW_FILE), &results.raw)?;
    write_csv(&dir.join(NORMALIZED_FILE), &results.normalized)
}

pub fn read_normalized(path: &Path) -> Result<Vec<NormalizedRow>, HarnessError> {
    read_csv(path)
}

/// Linear-interpolation quantile of an ascending slice, `q` in `[0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub variant: String,
    pub m: usize,
    pub load: f64,
    #[serde(rename = "T_min")]
    pub t_min: u64,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Policy, processors, load bits and window length.
type GroupKey = (String, usize, u64, u64);

/// Box statistics of each normalized metric per (configuration, policy),
/// keyed by metric name. Rows keep first-appearance order.
pub fn summarize(rows: &[NormalizedRow]) -> BTreeMap<&'static str, Vec<SummaryRow>> {
    let mut groups: Vec<(GroupKey, Vec<&NormalizedRow>)> = Vec::new();
    for r in rows {
        let key = (r.policy.clone(), r.m, r.load.to_bits(), r.t_min);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut out = BTreeMap::new();
    for (i, name) in MetricReport::FIELDS.iter().enumerate() {
        let summaries = groups
            .iter()
            .map(|(_, members)| {
                let mut v: Vec<f64> = members.iter().map(|r| r.values()[i]).collect();
                v.sort_by(f64::total_cmp);
                let first = members[0];
                SummaryRow {
                    policy: first.policy.clone(),
                    variant: first.variant.clone(),
                    m: first.m,
                    load: first.load,
                    t_min: first.t_min,
                    count: v.len(),
                    min: v[0],
                    q1: quantile(&v, 0.25),
                    median: quantile(&v, 0.5),
                    q3: quantile(&v, 0.75),
                    max: v[v.len() - 1],
                }
            })
            .collect();
        out.insert(*name, summaries);
    }
    out
}

/// Writes `summary_<METRIC>.csv` for every metric; returns the file names.
pub fn write_report(dir: &Path, rows: &[NormalizedRow]) -> Result<Vec<String>, HarnessError> {
    create_dir(dir)?;
    let mut names = Vec::new();
    for name in MetricReport::FIELDS {
        let file = format!("summary_{name}.csv");
        write_csv(&dir.join(&file), &summarize(rows)[name])?;
        names.push(file);
    }
    Ok(names)
}
