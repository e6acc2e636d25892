use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use faas_sched::harness::{
    self, prepare_instance, run_experiment, synthetic_profiles, ExperimentConfig, InstanceKey, RawRow, SyntheticConfig,
};
use faas_sched::io::{self as fio, ProfileLibrary};
use faas_sched::metrics::aggregate;
use faas_sched::model::MINUTE;
use faas_sched::par::Execution;
use faas_sched::policy::PolicySpec;
use faas_sched::trace::{self, ColumnMapping, RawInvocationRow, Trigger};
use faas_sched::workload::{generate_instance, GenerationConfig, DEFAULT_EPSILON};

/// Single-node FaaS scheduling simulator.
#[derive(Parser)]
#[command(name = "faas-sched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample minute-to-minute rate changes from a trace and write their CDF.
    AnalyzeTrace(AnalyzeArgs),
    /// Filter a trace and write per-day function profiles as JSON.
    Preprocess(PreprocessArgs),
    /// Generate one instance (CSV plus `.meta` sidecar) from profiles.
    Generate(GenerateArgs),
    /// Run one policy on an instance and print its metrics row.
    Simulate(SimulateArgs),
    /// Run a full parameter sweep and write raw and normalized metric tables.
    Experiment(ExperimentArgs),
    /// Summarize a normalized table into per-metric box statistics.
    Report(ReportArgs),
}

#[derive(Args)]
struct TraceArgs {
    /// Directory with the published per-day trace CSV files.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// JSON file overriding trace column names.
    #[arg(long)]
    mapping: Option<PathBuf>,
}

impl TraceArgs {
    fn load(&self) -> Result<Option<trace::TraceData>> {
        let Some(dir) = &self.trace_dir else {
            return Ok(None);
        };
        let map = match &self.mapping {
            Some(p) => ColumnMapping::from_file(p)?,
            None => ColumnMapping::default(),
        };
        let data = trace::load_trace_dir(dir, &map)?;
        for (path, e) in data.errors.iter().take(20) {
            eprintln!("warning: {}:{}: {}", path.display(), e.line, e.reason);
        }
        if data.errors.len() > 20 {
            eprintln!("warning: {} more malformed rows skipped", data.errors.len() - 20);
        }
        Ok(Some(data))
    }
}

#[derive(Args)]
struct ProfileSource {
    /// Profiles JSON written by `preprocess`.
    #[arg(long, conflicts_with_all = ["trace_dir", "synthetic"])]
    profiles: Option<PathBuf>,
    #[command(flatten)]
    trace: TraceArgs,
    /// Use the built-in synthetic profile library (the default when no other
    /// source is given).
    #[arg(long, conflicts_with = "trace_dir")]
    synthetic: bool,
    /// Functions per day in the synthetic library.
    #[arg(long, default_value_t = SyntheticConfig::default().functions)]
    synthetic_functions: usize,
}

impl ProfileSource {
    fn load(&self, seed: u64) -> Result<ProfileLibrary> {
        if let Some(p) = &self.profiles {
            return Ok(fio::read_profiles(p)?);
        }
        if let Some(data) = self.trace.load()? {
            let filtered = trace::preprocess(&data.invocations, &data.durations);
            print_stats(&filtered.stats);
            return Ok(ProfileLibrary {
                days: trace::to_profiles(&filtered),
            });
        }
        Ok(synthetic_profiles(&SyntheticConfig {
            functions: self.synthetic_functions,
            seed,
            ..Default::default()
        }))
    }
}

fn print_stats(s: &trace::PreprocessStats) {
    eprintln!(
        "rows: {} in, {} dropped (duplicate records), {} dropped (not HTTP), {} dropped (missing durations), {} kept",
        s.input_rows, s.dropped_duplicate, s.dropped_non_http, s.dropped_missing_durations, s.kept
    );
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    trace: TraceArgs,
    /// Analyze the synthetic library's rates instead of a trace.
    #[arg(long, conflicts_with = "trace_dir")]
    synthetic: bool,
    /// Only consider rows that survive preprocessing.
    #[arg(long)]
    filtered: bool,
    /// Number of (minute, function) pairs to sample.
    #[arg(long, default_value_t = 10_000)]
    sample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `delta_samples.csv` and `delta_cdf.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    trace: TraceArgs,
    /// Output profiles JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: ProfileSource,
    #[arg(long, short = 'm')]
    processors: usize,
    /// Target load as a fraction of total capacity.
    #[arg(long)]
    load: f64,
    /// Window length in minutes.
    #[arg(long)]
    minutes: u64,
    /// Trace day to draw from; random when omitted.
    #[arg(long, requires = "start_min")]
    day: Option<u32>,
    /// First minute of the window within the day; random when omitted.
    #[arg(long, requires = "day")]
    start_min: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance CSV path; the sidecar goes next to it as `<out>.meta`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Policy, e.g. `fifo`, `rr:10ms`, `sept:re`, `serpt:re-lim:1000`, `fcp:for:pmtn`.
    #[arg(long)]
    policy: PolicySpec,
    /// Also write per-invocation completion records here.
    #[arg(long)]
    completions: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    source: ProfileSource,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// `normalized.csv`, or an experiment output directory containing it.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::AnalyzeTrace(a) => analyze(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Generate(a) => generate(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    if a.sample == 0 {
        bail!("--sample must be at least 1");
    }
    let rows: Vec<RawInvocationRow> = match a.trace.load()? {
        Some(data) if a.filtered => trace::preprocess(&data.invocations, &data.durations).invocations,
        Some(data) => data.invocations,
        None if a.synthetic => synthetic_profiles(&SyntheticConfig {
            seed: a.seed,
            ..Default::default()
        })
        .days
        .into_iter()
        .flat_map(|d| {
            d.functions.into_iter().map(move |f| RawInvocationRow {
                key: f.name,
                trigger: Trigger::Http,
                day: d.day,
                counts: f.rates,
            })
        })
        .collect(),
        None => bail!("one of --trace-dir or --synthetic is required"),
    };
    let sampling = trace::sample_delta_pairs(&rows, a.sample, a.seed);
    if sampling.samples.is_empty() {
        bail!("no (minute, function) pair with a non-zero count");
    }
    if sampling.exhausted {
        eprintln!(
            "warning: only {} eligible pairs; returning all of them",
            sampling.samples.len()
        );
    }
    create_dir(&a.out)?;
    let path = a.out.join("delta_samples.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| path.display().to_string())?;
    w.write_record(["day", "minute", "function", "lambda_prev", "lambda_cur", "delta"])?;
    for s in &sampling.samples {
        w.write_record([
            s.day.to_string(),
            s.minute.to_string(),
            s.key.clone(),
            s.lambda_prev.to_string(),
            s.lambda_cur.to_string(),
            s.delta_f64().to_string(),
        ])?;
    }
    w.flush()?;
    let path = a.out.join("delta_cdf.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| path.display().to_string())?;
    w.write_record(["delta", "cdf"])?;
    for (d, f) in trace::delta_cdf(&sampling.samples) {
        w.write_record([(*d.numer() as f64 / *d.denom() as f64).to_string(), f.to_string()])?;
    }
    w.flush()?;
    eprintln!("{} samples written to {}", sampling.samples.len(), a.out.display());
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let Some(data) = a.trace.load()? else {
        bail!("--trace-dir is required");
    };
    let filtered = trace::preprocess(&data.invocations, &data.durations);
    print_stats(&filtered.stats);
    let lib = ProfileLibrary {
        days: trace::to_profiles(&filtered),
    };
    fio::write_profiles(&a.out, &lib)?;
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let lib = a.source.load(a.seed)?;
    let mut notes = BTreeMap::new();
    let (instance, below_target) = match (a.day, a.start_min) {
        (Some(day), Some(start)) => {
            let profiles = &lib
                .days
                .iter()
                .find(|d| d.day == day)
                .with_context(|| format!("day {day} not in profile library"))?
                .functions;
            let cfg = GenerationConfig {
                window_start: start * MINUTE,
                window_end: (start + a.minutes) * MINUTE,
                processors: a.processors,
                load: a.load,
                epsilon: a.epsilon,
                seed: a.seed,
            };
            let g = generate_instance(profiles, &cfg)?;
            notes.insert("day".into(), day.to_string());
            notes.insert("window_start_min".into(), start.to_string());
            (g.instance, g.below_target)
        }
        _ => {
            let key = InstanceKey {
                processors: a.processors,
                load: a.load,
                minutes: a.minutes,
                index: 0,
            };
            let p = prepare_instance(key, a.seed, a.epsilon, &lib)?;
            notes.insert("day".into(), p.row.day.to_string());
            notes.insert("window_start_min".into(), p.row.window_start_min.to_string());
            notes.insert("instance_seed".into(), p.row.seed.to_string());
            (p.instance, p.row.below_target)
        }
    };
    notes.insert("target_load".into(), a.load.to_string());
    notes.insert("achieved_load".into(), instance.load().to_string());
    notes.insert("below_target".into(), below_target.to_string());
    notes.insert("seed".into(), a.seed.to_string());
    fio::write_instance(&a.out, &instance, &notes)?;
    if below_target {
        eprintln!(
            "warning: profiles exhausted below the target load ({:.4})",
            instance.load()
        );
    }
    eprintln!(
        "{} invocations of {} functions, load {:.4}",
        instance.invocations.len(),
        instance.profiles.len(),
        instance.load()
    );
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let file = fio::read_instance(&a.instance)?;
    let inst = &file.instance;
    let records = faas_sched::simulate(inst, &a.policy)?;
    if let Some(path) = &a.completions {
        let f = fs::File::create(path).with_context(|| path.display().to_string())?;
        fio::write_completions(io::BufWriter::new(f), &records)?;
    }
    let m = aggregate(&records)?;
    let load = file
        .notes
        .get("target_load")
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| inst.load());
    let seed = file.notes.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
    let row = RawRow {
        policy: a.policy.to_string(),
        variant: harness::variant_name(&a.policy).to_string(),
        m: inst.processors,
        load,
        t_min: inst.horizon / MINUTE,
        seed,
        af: m.af,
        as_: m.as_,
        f99: m.f99,
        s99: m.s99,
        ff: m.ff,
        fs: m.fs,
    };
    let stdout = io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let lib = a.source.load(cfg.seed)?;
    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let results = run_experiment(&cfg, &lib, exec)?;
    harness::write_results(&a.out, &results)?;
    let below = results.instances.iter().filter(|r| r.below_target).count();
    if below > 0 {
        eprintln!("warning: {below} instance(s) below the target load");
    }
    writeln!(
        io::stderr(),
        "{} instances, {} runs written to {}",
        results.instances.len(),
        results.raw.len(),
        a.out.display()
    )?;
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let input = if a.input.is_dir() {
        a.input.join(harness::NORMALIZED_FILE)
    } else {
        a.input.clone()
    };
    let rows = harness::read_normalized(&input)?;
    if rows.is_empty() {
        bail!("{}: no rows", input.display());
    }
    let files = harness::write_report(&a.out, &rows)?;
    eprintln!("wrote {} to {}", files.join(", "), a.out.display());
    Ok(())
}
