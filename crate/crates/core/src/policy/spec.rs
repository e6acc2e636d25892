use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{Micros, MICROS_PER_MS};

pub const DEFAULT_HISTORY_CAP: usize = 1_000;
pub const DEFAULT_QUANTUM: Micros = 10 * MICROS_PER_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Fifo,
    RoundRobin,
    Sept,
    Serpt,
    /// Fair Choice by invocation count (FC#).
    FcCount,
    /// Fair Choice by processing demand (FCP).
    FcWork,
    Spt,
    Srpt,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Fifo => "fifo",
            Family::RoundRobin => "rr",
            Family::Sept => "sept",
            Family::Serpt => "serpt",
            Family::FcCount => "fc#",
            Family::FcWork => "fcp",
            Family::Spt => "spt",
            Family::Srpt => "srpt",
        }
    }

    /// Uses true processing times.
    pub fn is_clairvoyant(self) -> bool {
        matches!(self, Family::Spt | Family::Srpt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Reactionary: estimates from all past invocations.
    Re,
    /// Reactionary with a bounded per-function history.
    ReLim,
    /// Foresight: true distribution parameters known a priori.
    For,
    /// No estimation involved.
    Exact,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Re => "re",
            Variant::ReLim => "re-lim",
            Variant::For => "for",
            Variant::Exact => "exact",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("empty policy spec")]
    Empty,
    #[error("unknown policy family `{0}`")]
    UnknownFamily(String),
    #[error("unrecognized token `{token}` in policy spec `{spec}`")]
    BadToken { spec: String, token: String },
    #[error("variant `{variant}` is not available for `{family}`")]
    BadVariant {
        family: &'static str,
        variant: &'static str,
    },
    #[error("`{0}` has a fixed preemption mode")]
    FixedMode(&'static str),
    #[error("round-robin quantum must be positive")]
    ZeroQuantum,
    #[error("history cap must be positive")]
    ZeroCap,
}

/// A scheduling policy and its configuration.
///
/// Compact string form: `family[:variant][:cap][:quantum][:pmtn|np]`, for
/// example `fifo`, `rr:10ms`, `sept:re`, `serpt:re-lim:1000`, `fcp:for`,
/// `fc#:re:pmtn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicySpec {
    pub family: Family,
    pub variant: Variant,
    /// Round-robin service slice; zero for other families.
    pub quantum: Micros,
    /// Per-function history bound for RE-LIM; zero otherwise.
    pub history_cap: usize,
    pub preemptive: bool,
}

impl PolicySpec {
    fn exact(family: Family, preemptive: bool) -> Self {
        Self {
            family,
            variant: Variant::Exact,
            quantum: 0,
            history_cap: 0,
            preemptive,
        }
    }

    pub fn fifo() -> Self {
        Self::exact(Family::Fifo, false)
    }

    pub fn rr(quantum: Micros) -> Self {
        Self {
            quantum,
            ..Self::exact(Family::RoundRobin, true)
        }
    }

    pub fn spt() -> Self {
        Self::exact(Family::Spt, false)
    }

    pub fn srpt() -> Self {
        Self::exact(Family::Srpt, true)
    }

    pub fn sept(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::exact(Family::Sept, false)
        }
    }

    pub fn serpt(variant: Variant) -> Self {
        Self {
            variant,
            history_cap: if variant == Variant::ReLim {
                DEFAULT_HISTORY_CAP
            } else {
                0
            },
            ..Self::exact(Family::Serpt, true)
        }
    }

    pub fn serpt_limited(cap: usize) -> Self {
        Self {
            history_cap: cap,
            ..Self::serpt(Variant::ReLim)
        }
    }

    pub fn fc_count(variant: Variant, preemptive: bool) -> Self {
        Self {
            variant,
            ..Self::exact(Family::FcCount, preemptive)
        }
    }

    pub fn fc_work(variant: Variant, preemptive: bool) -> Self {
        Self {
            variant,
            ..Self::exact(Family::FcWork, preemptive)
        }
    }

    /// The normalization baseline: RR-10 for preemptive policies, FIFO otherwise.
    pub fn baseline(&self) -> PolicySpec {
        if self.preemptive {
            PolicySpec::rr(DEFAULT_QUANTUM)
        } else {
            PolicySpec::fifo()
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let allowed: &[Variant] = match self.family {
            Family::Fifo | Family::RoundRobin | Family::Spt | Family::Srpt => &[Variant::Exact],
            Family::Sept | Family::FcCount | Family::FcWork => &[Variant::Re, Variant::For],
            Family::Serpt => &[Variant::Re, Variant::ReLim, Variant::For],
        };
        if !allowed.contains(&self.variant) {
            return Err(SpecError::BadVariant {
                family: self.family.name(),
                variant: self.variant.name(),
            });
        }
        let fixed = match self.family {
            Family::Fifo | Family::Sept | Family::Spt => Some(false),
            Family::RoundRobin | Family::Serpt | Family::Srpt => Some(true),
            Family::FcCount | Family::FcWork => None,
        };
        if fixed.is_some_and(|f| f != self.preemptive) {
            return Err(SpecError::FixedMode(self.family.name()));
        }
        if self.family == Family::RoundRobin && self.quantum == 0 {
            return Err(SpecError::ZeroQuantum);
        }
        if self.variant == Variant::ReLim && self.history_cap == 0 {
            return Err(SpecError::ZeroCap);
        }
        Ok(())
    }

    /// Paper-style display label such as `SERPT-RE-LIM` or `RR-10`.
    pub fn label(&self) -> String {
        let fam = self.family.name().to_uppercase();
        match self.family {
            Family::RoundRobin => format!("RR-{}", format_quantum(self.quantum).trim_end_matches("ms")),
            Family::Fifo | Family::Spt | Family::Srpt => fam,
            _ => {
                let mut s = format!("{fam}-{}", self.variant.name().to_uppercase());
                if matches!(self.family, Family::FcCount | Family::FcWork) && self.preemptive {
                    s.push_str("-PMTN");
                }
                s
            }
        }
    }
}

fn format_quantum(q: Micros) -> String {
    if q.is_multiple_of(MICROS_PER_MS) {
        format!("{}ms", q / MICROS_PER_MS)
    } else {
        format!("{q}us")
    }
}

fn parse_duration(tok: &str) -> Option<Micros> {
    let (digits, scale) = if let Some(d) = tok.strip_suffix("ms") {
        (d, MICROS_PER_MS)
    } else if let Some(d) = tok.strip_suffix("us") {
        (d, 1)
    } else {
        (tok.strip_suffix('s')?, 1_000 * MICROS_PER_MS)
    };
    digits.parse::<Micros>().ok().map(|v| v * scale)
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.name())?;
        match self.family {
            Family::RoundRobin => write!(f, ":{}", format_quantum(self.quantum)),
            Family::Fifo | Family::Spt | Family::Srpt => Ok(()),
            _ => {
                write!(f, ":{}", self.variant.name())?;
                if self.variant == Variant::ReLim {
                    write!(f, ":{}", self.history_cap)?;
                }
                if matches!(self.family, Family::FcCount | Family::FcWork) && self.preemptive {
                    f.write_str(":pmtn")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for PolicySpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let mut toks = lower.split(':').filter(|t| !t.is_empty());
        let fam = toks.next().ok_or(SpecError::Empty)?;
        let mut spec = match fam {
            "fifo" => PolicySpec::fifo(),
            "rr" | "round-robin" => PolicySpec::rr(DEFAULT_QUANTUM),
            "spt" => PolicySpec::spt(),
            "srpt" => PolicySpec::srpt(),
            "sept" => PolicySpec::sept(Variant::Re),
            "serpt" => PolicySpec::serpt(Variant::Re),
            "fc#" | "fcc" | "fc-count" => PolicySpec::fc_count(Variant::Re, false),
            "fcp" | "fc-work" => PolicySpec::fc_work(Variant::Re, false),
            other => return Err(SpecError::UnknownFamily(other.to_string())),
        };
        for tok in toks {
            let bad = || SpecError::BadToken {
                spec: s.to_string(),
                token: tok.to_string(),
            };
            match tok {
                "re" => spec.variant = Variant::Re,
                "re-lim" | "relim" => {
                    spec.variant = Variant::ReLim;
                    if spec.history_cap == 0 {
                        spec.history_cap = DEFAULT_HISTORY_CAP;
                    }
                }
                "for" => spec.variant = Variant::For,
                "exact" => spec.variant = Variant::Exact,
                "pmtn" | "preemptive" => spec.preemptive = true,
                "np" | "nonpreemptive" => spec.preemptive = false,
                _ if tok.bytes().all(|b| b.is_ascii_digit()) => {
                    if spec.variant != Variant::ReLim {
                        return Err(bad());
                    }
                    spec.history_cap = tok.parse().map_err(|_| bad())?;
                }
                _ => {
                    if spec.family != Family::RoundRobin {
                        return Err(bad());
                    }
                    spec.quantum = parse_duration(tok).ok_or_else(bad)?;
                }
            }
        }
        if spec.variant != Variant::ReLim {
            spec.history_cap = 0;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicySpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The policy set evaluated in the base experiment grid.
pub fn default_policies() -> Vec<PolicySpec> {
    [
        "fifo",
        "sept:re",
        "sept:for",
        "spt",
        "fc#:re",
        "fcp:re",
        "fcp:for",
        "rr:10ms",
        "rr:100ms",
        "rr:1000ms",
        "serpt:re",
        "serpt:re-lim:1000",
        "serpt:for",
        "srpt",
        "fc#:re:pmtn",
        "fcp:re:pmtn",
        "fcp:for:pmtn",
    ]
    .iter()
    .map(|s| s.parse().expect("built-in spec"))
    .collect()
}
