//! Flow and stretch aggregates over completed runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CompletionRecord, FunctionId, Micros};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no completion records")]
    Empty,
    #[error("processing time of invocation {0} is zero")]
    ZeroProcessing(u64),
    #[error("invocation {0} completes before its release")]
    CompletedBeforeRelease(u64),
    #[error("degenerate baseline: {0} is not strictly positive")]
    DegenerateBaseline(&'static str),
}

/// The six summary metrics of one run. Flow-typed values are in µs; after
/// [`normalize`] every field is a ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub af: f64,
    pub as_: f64,
    pub f99: f64,
    pub s99: f64,
    pub ff: f64,
    pub fs: f64,
    pub invocations: usize,
    pub functions: usize,
}

impl MetricReport {
    pub const FIELDS: [&'static str; 6] = ["AF", "AS", "F99", "S99", "FF", "FS"];

    pub fn values(&self) -> [f64; 6] {
        [self.af, self.as_, self.f99, self.s99, self.ff, self.fs]
    }
}

pub fn flow_and_stretch(rec: &CompletionRecord) -> (Micros, f64) {
    assert!(rec.processing > 0, "processing time must be positive");
    (rec.flow(), rec.stretch())
}

/// Value at 1-based rank `ceil(q * n)` of an ascending slice, with `q` given
/// in hundredths.
pub fn nearest_rank<T: Copy>(sorted: &[T], hundredths: u64) -> T {
    assert!(!sorted.is_empty());
    let n = sorted.len() as u64;
    let rank = (hundredths * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

#[derive(Default)]
struct PerFunction {
    count: u64,
    flow: u128,
    work: u128,
}

pub fn aggregate(records: &[CompletionRecord]) -> Result<MetricReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut flows = Vec::with_capacity(records.len());
    let mut stretches = Vec::with_capacity(records.len());
    let mut per_fn: BTreeMap<FunctionId, PerFunction> = BTreeMap::new();
    for r in records {
        if r.processing == 0 {
            return Err(MetricsError::ZeroProcessing(r.seq));
        }
        if r.completion < r.release {
            return Err(MetricsError::CompletedBeforeRelease(r.seq));
        }
        let (f, s) = flow_and_stretch(r);
        flows.push(f);
        stretches.push(s);
        let e = per_fn.entry(r.func).or_default();
        e.count += 1;
        e.flow += f as u128;
        e.work += r.processing as u128;
    }
    flows.sort_unstable();
    // Summing in sorted order keeps the result independent of input order.
    stretches.sort_unstable_by(f64::total_cmp);

    let n = records.len() as f64;
    let total_flow: u128 = flows.iter().map(|&f| f as u128).sum();
    let functions = per_fn.len();
    let ff = per_fn.values().map(|e| e.flow as f64 / e.count as f64).sum::<f64>() / functions as f64;
    let fs = per_fn.values().map(|e| e.flow as f64 / e.work as f64).sum::<f64>() / functions as f64;

    Ok(MetricReport {
        af: total_flow as f64 / n,
        as_: stretches.iter().sum::<f64>() / n,
        f99: nearest_rank(&flows, 99) as f64,
        s99: nearest_rank(&stretches, 99),
        ff,
        fs,
        invocations: records.len(),
        functions,
    })
}

/// Element-wise ratio against a baseline run on the same instance.
pub fn normalize(report: &MetricReport, baseline: &MetricReport) -> Result<MetricReport, MetricsError> {
    for (name, v) in MetricReport::FIELDS.iter().zip(baseline.values()) {
        if v.is_nan() || v <= 0.0 {
            return Err(MetricsError::DegenerateBaseline(name));
        }
    }
    Ok(MetricReport {
        af: report.af / baseline.af,
        as_: report.as_ / baseline.as_,
        f99: report.f99 / baseline.f99,
        s99: report.s99 / baseline.s99,
        ff: report.ff / baseline.ff,
        fs: report.fs / baseline.fs,
        invocations: report.invocations,
        functions: report.functions,
    })
}
