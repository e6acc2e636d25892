//! Domain types shared by every other module.
//!
//! All times are integer microseconds. Trace values given in milliseconds are
//! scaled by 1000 on ingestion; sampled continuous values are rounded half-up
//! to the nearest microsecond.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// A point in time or a span of time, in microseconds.
pub type Micros = u64;

/// Exact non-negative rational used for priorities and distribution moments.
pub type Rational = Ratio<u128>;

pub const MICROS_PER_MS: Micros = 1_000;
pub const MINUTE: Micros = 60_000_000;

/// Index of the one-minute interval containing `t` (0-based).
pub fn minute_of(t: Micros) -> usize {
    (t / MINUTE) as usize
}

/// Dense function index, `0..n` within one instance or profile set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionId(pub u32);

impl FunctionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Percentile levels (in hundredths) at which trace durations are reported.
pub const PERCENTILE_LEVELS: [u32; 7] = [0, 1, 25, 50, 75, 99, 100];

/// The seven reported duration percentiles of a function, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationPercentiles {
    pub p0: Micros,
    pub p1: Micros,
    pub p25: Micros,
    pub p50: Micros,
    pub p75: Micros,
    pub p99: Micros,
    pub p100: Micros,
}

impl DurationPercentiles {
    pub fn from_array(v: [Micros; 7]) -> Self {
        Self {
            p0: v[0],
            p1: v[1],
            p25: v[2],
            p50: v[3],
            p75: v[4],
            p99: v[5],
            p100: v[6],
        }
    }

    pub fn as_array(&self) -> [Micros; 7] {
        [self.p0, self.p1, self.p25, self.p50, self.p75, self.p99, self.p100]
    }

    /// Every percentile equal to `c`.
    pub fn point_mass(c: Micros) -> Self {
        Self::from_array([c; 7])
    }

    pub fn is_monotone(&self) -> bool {
        self.as_array().windows(2).all(|w| w[0] <= w[1])
    }

    pub fn is_valid(&self) -> bool {
        self.is_monotone() && self.p100 > 0
    }
}

/// A function's identity, per-minute invocation counts and duration distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionProfile {
    pub id: FunctionId,
    /// Stable key used to derive the function's random substream.
    pub name: String,
    /// Invocation count in each one-minute interval.
    pub rates: Vec<u32>,
    pub durations: DurationPercentiles,
}

/// Profiles of every function observed on one day, rates covering the
/// whole day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayProfiles {
    pub day: u32,
    pub functions: Vec<FunctionProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub seq: u64,
    pub func: FunctionId,
    pub release: Micros,
    /// True processing time; hidden from non-clairvoyant policies.
    pub processing: Micros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub horizon: Micros,
    pub processors: usize,
    pub profiles: Vec<FunctionProfile>,
    pub invocations: Vec<Invocation>,
}

impl Instance {
    pub fn minutes(&self) -> usize {
        (self.horizon / MINUTE) as usize
    }

    /// Sum of all true processing times.
    pub fn total_work(&self) -> u128 {
        self.invocations.iter().map(|i| i.processing as u128).sum()
    }

    /// Achieved load: total work over `m * T`.
    pub fn load(&self) -> f64 {
        if self.horizon == 0 || self.processors == 0 {
            return 0.0;
        }
        self.total_work() as f64 / (self.processors as f64 * self.horizon as f64)
    }
}

/// Outcome of one completed invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub seq: u64,
    pub func: FunctionId,
    pub release: Micros,
    pub completion: Micros,
    pub processing: Micros,
}

impl CompletionRecord {
    pub fn flow(&self) -> Micros {
        self.completion - self.release
    }

    pub fn stretch(&self) -> f64 {
        self.flow() as f64 / self.processing as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationTarget {
    Instance,
    Profile(usize),
    Invocation(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub target: ViolationTarget,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            ViolationTarget::Instance => write!(f, "instance: {}", self.reason),
            ViolationTarget::Profile(i) => write!(f, "profile {i}: {}", self.reason),
            ViolationTarget::Invocation(i) => write!(f, "invocation {i}: {}", self.reason),
        }
    }
}

/// Checks every structural invariant of an instance. An empty result means
/// the instance is well formed.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |target, reason: &str| {
        out.push(Violation {
            target,
            reason: reason.to_string(),
        })
    };

    if inst.processors == 0 {
        push(ViolationTarget::Instance, "processor count must be at least 1");
    }
    if inst.horizon == 0 || !inst.horizon.is_multiple_of(MINUTE) {
        push(
            ViolationTarget::Instance,
            "horizon is not a positive multiple of one minute",
        );
    }
    let minutes = inst.minutes();
    for (i, p) in inst.profiles.iter().enumerate() {
        if p.id.index() != i {
            push(ViolationTarget::Profile(i), "function id does not match its position");
        }
        if !p.durations.is_monotone() {
            push(ViolationTarget::Profile(i), "percentiles not monotone");
        }
        if p.durations.p100 == 0 {
            push(ViolationTarget::Profile(i), "p100 must be positive");
        }
        if p.rates.len() != minutes {
            push(ViolationTarget::Profile(i), "rates length differs from minute count");
        }
    }

    let mut prev: Option<(Micros, u64)> = None;
    let mut seen = std::collections::HashSet::with_capacity(inst.invocations.len());
    for (i, inv) in inst.invocations.iter().enumerate() {
        if inv.func.index() >= inst.profiles.len() {
            push(ViolationTarget::Invocation(i), "unknown function");
        }
        if inv.release >= inst.horizon {
            push(ViolationTarget::Invocation(i), "release out of [0,T)");
        }
        if inv.processing == 0 {
            push(ViolationTarget::Invocation(i), "processing time must be positive");
        }
        if !seen.insert(inv.seq) {
            push(ViolationTarget::Invocation(i), "duplicate seq");
        }
        let key = (inv.release, inv.seq);
        if let Some(p) = prev {
            if key <= p {
                push(ViolationTarget::Invocation(i), "not sorted by (release, seq)");
            }
        }
        prev = Some(key);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_function_instance() -> Instance {
        let pct = DurationPercentiles::from_array([1, 2, 3, 4, 5, 6, 7]);
        Instance {
            horizon: MINUTE,
            processors: 2,
            profiles: vec![
                FunctionProfile {
                    id: FunctionId(0),
                    name: "a".into(),
                    rates: vec![1],
                    durations: pct,
                },
                FunctionProfile {
                    id: FunctionId(1),
                    name: "b".into(),
                    rates: vec![1],
                    durations: pct,
                },
            ],
            invocations: vec![
                Invocation {
                    seq: 0,
                    func: FunctionId(0),
                    release: 0,
                    processing: 5,
                },
                Invocation {
                    seq: 1,
                    func: FunctionId(1),
                    release: 10,
                    processing: 3,
                },
            ],
        }
    }

    #[test]
    fn well_formed_instance_has_no_violations() {
        assert!(validate_instance(&two_function_instance()).is_empty());
    }

    #[test]
    fn release_at_horizon_is_rejected() {
        let mut inst = two_function_instance();
        inst.invocations[1].release = inst.horizon;
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].target, ViolationTarget::Invocation(1));
        assert_eq!(v[0].reason, "release out of [0,T)");
    }

    #[test]
    fn non_monotone_percentiles_are_rejected() {
        let mut inst = two_function_instance();
        inst.profiles[0].durations.p25 = 100;
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].reason, "percentiles not monotone");
    }

    #[test]
    fn unsorted_and_zero_processing() {
        let mut inst = two_function_instance();
        inst.invocations[1].release = 0;
        inst.invocations[1].seq = 0;
        inst.invocations[0].processing = 0;
        let reasons: Vec<_> = validate_instance(&inst).into_iter().map(|v| v.reason).collect();
        assert!(reasons.contains(&"processing time must be positive".to_string()));
        assert!(reasons.contains(&"duplicate seq".to_string()));
        assert!(reasons.contains(&"not sorted by (release, seq)".to_string()));
    }

    #[test]
    fn minute_indexing_is_half_open() {
        assert_eq!(minute_of(0), 0);
        assert_eq!(minute_of(MINUTE - 1), 0);
        assert_eq!(minute_of(MINUTE), 1);
    }
}
