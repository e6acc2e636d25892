//! Reading and filtering the public Azure Functions invocation trace, and the
//! minute-to-minute rate variability analysis.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DayProfiles, DurationPercentiles, FunctionId, FunctionProfile, Micros};
use crate::seed;

pub const MINUTES_PER_DAY: usize = 1440;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("missing header column {0:?}")]
    MissingColumn(String),
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {err}")]
    Mapping { path: PathBuf, err: serde_json::Error },
    #[error("no trace files found in {0}")]
    EmptyDirectory(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    Http,
    Timer,
    Queue,
    Other,
}

impl Trigger {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "http" => Trigger::Http,
            "timer" => Trigger::Timer,
            "queue" => Trigger::Queue,
            _ => Trigger::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawInvocationRow {
    pub key: String,
    pub trigger: Trigger,
    pub day: u32,
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDurationRow {
    pub key: String,
    pub day: u32,
    pub percentiles: DurationPercentiles,
}

/// A malformed input record, skipped during parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub errors: Vec<RowError>,
}

/// Column names of the two trace files. Every field may be omitted in a
/// mapping file, falling back to the published dataset's names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub key: String,
    pub trigger: String,
    /// Minute `k` (1-based) lives in column `format!("{minute_prefix}{k}")`.
    pub minute_prefix: String,
    /// Columns holding the 0/1/25/50/75/99/100th duration percentiles, in ms.
    pub percentiles: [String; 7],
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            key: "HashFunction".into(),
            trigger: "Trigger".into(),
            minute_prefix: String::new(),
            percentiles: ["0", "1", "25", "50", "75", "99", "100"].map(|l| format!("percentile_Average_{l}")),
        }
    }
}

impl ColumnMapping {
    pub fn from_file(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io {
            path: path.to_path_buf(),
            err: e,
        })?;
        serde_json::from_str(&text).map_err(|e| TraceError::Mapping {
            path: path.to_path_buf(),
            err: e,
        })
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, TraceError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| TraceError::MissingColumn(name.to_string()))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn parse_invocation_trace<R: Read>(
    source: R,
    day: u32,
    map: &ColumnMapping,
) -> Result<Parsed<RawInvocationRow>, TraceError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let key_col = column(&headers, &map.key)?;
    let trigger_col = column(&headers, &map.trigger)?;
    let minute_cols = (1..=MINUTES_PER_DAY)
        .map(|k| column(&headers, &format!("{}{k}", map.minute_prefix)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Parsed {
        rows: Vec::new(),
        errors: Vec::new(),
    };
    for rec in reader.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let present = minute_cols.iter().filter(|&&c| c < rec.len()).count();
        if present != MINUTES_PER_DAY {
            out.errors.push(RowError {
                line,
                reason: format!("expected {MINUTES_PER_DAY} minute columns, found {present}"),
            });
            continue;
        }
        let (Some(key), Some(trigger)) = (rec.get(key_col), rec.get(trigger_col)) else {
            out.errors.push(RowError {
                line,
                reason: "missing key or trigger field".into(),
            });
            continue;
        };
        let mut counts = Vec::with_capacity(MINUTES_PER_DAY);
        let mut bad = None;
        for (k, &c) in minute_cols.iter().enumerate() {
            let field = rec[c].trim();
            match field.parse::<u32>() {
                Ok(v) => counts.push(v),
                Err(_) => {
                    bad = Some(format!("minute {}: invalid count {field:?}", k + 1));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            out.errors.push(RowError { line, reason });
            continue;
        }
        out.rows.push(RawInvocationRow {
            key: key.trim().to_string(),
            trigger: Trigger::parse(trigger),
            day,
            counts,
        });
    }
    Ok(out)
}

/// Milliseconds (possibly fractional) to whole microseconds, half-up.
pub fn ms_to_micros(field: &str) -> Option<Micros> {
    let v: f64 = field.trim().parse().ok()?;
    if !(v.is_finite() && v >= 0.0) {
        return None;
    }
    Some(crate::workload::cdf::round_half_up(v * 1_000.0))
}

pub fn parse_duration_trace<R: Read>(
    source: R,
    day: u32,
    map: &ColumnMapping,
) -> Result<Parsed<RawDurationRow>, TraceError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let key_col = column(&headers, &map.key)?;
    let pct_cols = map
        .percentiles
        .iter()
        .map(|name| column(&headers, name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Parsed {
        rows: Vec::new(),
        errors: Vec::new(),
    };
    for rec in reader.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let Some(key) = rec.get(key_col) else {
            out.errors.push(RowError {
                line,
                reason: "missing key field".into(),
            });
            continue;
        };
        let values: Option<Vec<Micros>> = pct_cols.iter().map(|&c| rec.get(c).and_then(ms_to_micros)).collect();
        let Some(values) = values else {
            out.errors.push(RowError {
                line,
                reason: "missing or invalid percentile value".into(),
            });
            continue;
        };
        out.rows.push(RawDurationRow {
            key: key.trim().to_string(),
            day,
            percentiles: DurationPercentiles::from_array(values.try_into().unwrap()),
        });
    }
    Ok(out)
}

/// Row counts removed at each filtering stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PreprocessStats {
    pub input_rows: usize,
    pub dropped_duplicate: usize,
    pub dropped_non_http: usize,
    pub dropped_missing_durations: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filtered {
    pub invocations: Vec<RawInvocationRow>,
    pub durations: Vec<RawDurationRow>,
    pub stats: PreprocessStats,
}

/// Applies the three filters in order:
/// (a) functions with more than one invocation record on any day are removed
///     entirely;
/// (b) only HTTP-triggered records are kept;
/// (c) a record needs exactly one duration row for the same function and
///     day, with ordered percentiles and a positive maximum.
///
/// Output rows are sorted by (day, key).
pub fn preprocess(invocations: &[RawInvocationRow], durations: &[RawDurationRow]) -> Filtered {
    let mut stats = PreprocessStats {
        input_rows: invocations.len(),
        ..Default::default()
    };

    let mut per_day: HashMap<(&str, u32), usize> = HashMap::new();
    for r in invocations {
        *per_day.entry((r.key.as_str(), r.day)).or_default() += 1;
    }
    let duplicated: std::collections::HashSet<&str> =
        per_day.iter().filter(|(_, &c)| c > 1).map(|((k, _), _)| *k).collect();

    let mut dur_index: HashMap<(&str, u32), Vec<&RawDurationRow>> = HashMap::new();
    for d in durations {
        dur_index.entry((d.key.as_str(), d.day)).or_default().push(d);
    }

    let mut kept_inv = Vec::new();
    let mut kept_dur = Vec::new();
    for r in invocations {
        if duplicated.contains(r.key.as_str()) {
            stats.dropped_duplicate += 1;
            continue;
        }
        if r.trigger != Trigger::Http {
            stats.dropped_non_http += 1;
            continue;
        }
        match dur_index.get(&(r.key.as_str(), r.day)).map(Vec::as_slice) {
            Some([d]) if d.percentiles.is_valid() => {
                kept_inv.push(r.clone());
                kept_dur.push((*d).clone());
            }
            _ => stats.dropped_missing_durations += 1,
        }
    }
    stats.kept = kept_inv.len();
    kept_inv.sort_by(|a, b| (a.day, &a.key).cmp(&(b.day, &b.key)));
    kept_dur.sort_by(|a, b| (a.day, &a.key).cmp(&(b.day, &b.key)));
    Filtered {
        invocations: kept_inv,
        durations: kept_dur,
        stats,
    }
}

/// Per-day profile sets built from filtered rows; function ids follow key
/// order within each day.
pub fn to_profiles(f: &Filtered) -> Vec<DayProfiles> {
    let durations: HashMap<(&str, u32), &RawDurationRow> =
        f.durations.iter().map(|d| ((d.key.as_str(), d.day), d)).collect();
    let mut days: BTreeMap<u32, Vec<&RawInvocationRow>> = BTreeMap::new();
    for r in &f.invocations {
        days.entry(r.day).or_default().push(r);
    }
    days.into_iter()
        .map(|(day, mut rows)| {
            rows.sort_by(|a, b| a.key.cmp(&b.key));
            let functions = rows
                .into_iter()
                .enumerate()
                .map(|(i, r)| FunctionProfile {
                    id: FunctionId(i as u32),
                    name: r.key.clone(),
                    rates: r.counts.clone(),
                    durations: durations[&(r.key.as_str(), day)].percentiles,
                })
                .collect();
            DayProfiles { day, functions }
        })
        .collect()
}

/// `|cur - prev| / (cur + prev)`, or 0 when both are zero or `prev` is
/// unknown.
pub fn relative_difference(prev: Option<u32>, cur: u32) -> Ratio<u64> {
    match prev {
        Some(p) if p as u64 + cur as u64 > 0 => {
            Ratio::new((p as i64 - cur as i64).unsigned_abs(), p as u64 + cur as u64)
        }
        _ => Ratio::from_integer(0),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeltaSample {
    pub day: u32,
    /// 1-based minute of the day; the pair is (minute - 1, minute).
    pub minute: u32,
    pub key: String,
    pub lambda_prev: u32,
    pub lambda_cur: u32,
    #[serde(skip)]
    pub delta: Ratio<u64>,
}

impl DeltaSample {
    pub fn delta_f64(&self) -> f64 {
        *self.delta.numer() as f64 / *self.delta.denom() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaSampling {
    pub samples: Vec<DeltaSample>,
    /// Set when fewer eligible pairs existed than were requested.
    pub exhausted: bool,
}

fn eligible_minutes(row: &RawInvocationRow) -> impl Iterator<Item = usize> + '_ {
    (1..row.counts.len()).filter(|&k| row.counts[k - 1] as u64 + row.counts[k] as u64 > 0)
}

/// Uniform sample without replacement of `n` (minute, function) pairs with
/// a non-zero combined count in two consecutive minutes of the same day.
/// Samples come back in input row order, then minute order.
pub fn sample_delta_pairs(rows: &[RawInvocationRow], n: usize, seed: u64) -> DeltaSampling {
    let per_row: Vec<usize> = rows.iter().map(|r| eligible_minutes(r).count()).collect();
    let total: usize = per_row.iter().sum();
    let exhausted = n > total;

    let mut picked: Vec<usize> = if exhausted {
        (0..total).collect()
    } else {
        index::sample(&mut seed::rng(seed), total, n).into_vec()
    };
    picked.sort_unstable();

    let mut samples = Vec::with_capacity(picked.len());
    let mut next = picked.into_iter().peekable();
    let mut offset = 0usize;
    for (row, &count) in rows.iter().zip(&per_row) {
        if next.peek().is_none() {
            break;
        }
        if next.peek().is_some_and(|&i| i >= offset + count) {
            offset += count;
            continue;
        }
        for (local, k) in eligible_minutes(row).enumerate() {
            if next.peek() != Some(&(offset + local)) {
                continue;
            }
            next.next();
            let (prev, cur) = (row.counts[k - 1], row.counts[k]);
            samples.push(DeltaSample {
                day: row.day,
                minute: k as u32 + 1,
                key: row.key.clone(),
                lambda_prev: prev,
                lambda_cur: cur,
                delta: relative_difference(Some(prev), cur),
            });
        }
        offset += count;
    }
    DeltaSampling { samples, exhausted }
}

/// Empirical CDF of the sampled deltas: `(value, fraction of samples <= value)`
/// at each distinct value.
pub fn delta_cdf(samples: &[DeltaSample]) -> Vec<(Ratio<u64>, f64)> {
    let mut values: Vec<Ratio<u64>> = samples.iter().map(|s| s.delta).collect();
    values.sort_unstable();
    let n = values.len() as f64;
    let mut out: Vec<(Ratio<u64>, f64)> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    out
}

pub fn invocation_file(dir: &Path, day: u32) -> PathBuf {
    dir.join(format!("invocations_per_function_md.anon.d{day:02}.csv"))
}

pub fn duration_file(dir: &Path, day: u32) -> PathBuf {
    dir.join(format!("function_durations_percentiles.anon.d{day:02}.csv"))
}

/// Everything parsed from a trace directory.
#[derive(Debug, Clone, Default)]
pub struct TraceData {
    pub invocations: Vec<RawInvocationRow>,
    pub durations: Vec<RawDurationRow>,
    /// `(file, error)` for every skipped record.
    pub errors: Vec<(PathBuf, RowError)>,
}

fn open(path: &Path) -> Result<std::fs::File, TraceError> {
    std::fs::File::open(path).map_err(|e| TraceError::Io {
        path: path.to_path_buf(),
        err: e,
    })
}

/// Loads days 1 to 14 from the published file layout, skipping days whose
/// files are absent. Invocation files without a duration file are still
/// read (their functions will fail the duration filter).
pub fn load_trace_dir(dir: &Path, map: &ColumnMapping) -> Result<TraceData, TraceError> {
    let mut data = TraceData::default();
    let mut found = false;
    for day in 1..=14 {
        let inv_path = invocation_file(dir, day);
        if inv_path.exists() {
            found = true;
            let parsed = parse_invocation_trace(open(&inv_path)?, day, map)?;
            data.invocations.extend(parsed.rows);
            data.errors
                .extend(parsed.errors.into_iter().map(|e| (inv_path.clone(), e)));
        }
        let dur_path = duration_file(dir, day);
        if dur_path.exists() {
            let parsed = parse_duration_trace(open(&dur_path)?, day, map)?;
            data.durations.extend(parsed.rows);
            data.errors
                .extend(parsed.errors.into_iter().map(|e| (dur_path.clone(), e)));
        }
    }
    if !found {
        return Err(TraceError::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(data)
}
