//! Instance synthesis from function profiles.

pub mod arrivals;
pub mod cdf;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::model::{FunctionId, FunctionProfile, Instance, Invocation, Micros, MINUTE};
use crate::seed;

pub use arrivals::generate_arrivals;
pub use cdf::PiecewiseCdf;

pub const DEFAULT_EPSILON: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("window [{start}, {end}) is not a positive whole number of minutes")]
    BadWindow { start: Micros, end: Micros },
    #[error("processor count must be at least 1")]
    NoProcessors,
    #[error("target load {0} outside (0, 1.5]")]
    BadLoad(f64),
    #[error("slack {0} must be non-negative")]
    BadEpsilon(f64),
    #[error("no function profiles supplied")]
    NoProfiles,
    #[error("profile {0} has non-monotone or zero percentiles")]
    BadProfile(String),
}

/// Parameters of one Fill run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationConfig {
    pub window_start: Micros,
    pub window_end: Micros,
    pub processors: usize,
    /// Target load as a fraction of `m * (T2 - T1)`.
    pub load: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let (start, end) = (self.window_start, self.window_end);
        if end <= start || start % MINUTE != 0 || end % MINUTE != 0 {
            return Err(WorkloadError::BadWindow { start, end });
        }
        if self.processors == 0 {
            return Err(WorkloadError::NoProcessors);
        }
        if !(self.load > 0.0 && self.load <= 1.5) {
            return Err(WorkloadError::BadLoad(self.load));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(WorkloadError::BadEpsilon(self.epsilon));
        }
        Ok(())
    }

    pub fn span(&self) -> Micros {
        self.window_end - self.window_start
    }

    /// `chi * m * (T2 - T1)`.
    pub fn target_load(&self) -> f64 {
        self.load * self.processors as f64 * self.span() as f64
    }

    /// `(1 + eps) * chi * m * (T2 - T1)`.
    pub fn load_cap(&self) -> f64 {
        (1.0 + self.epsilon) * self.target_load()
    }

    fn minutes(&self) -> std::ops::Range<usize> {
        (self.window_start / MINUTE) as usize..(self.window_end / MINUTE) as usize
    }
}

/// Result of Fill.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub instance: Instance,
    /// Sum of processing times of the included invocations.
    pub total_load: u128,
    /// Set when the candidate functions ran out before the target was met.
    pub below_target: bool,
    /// Indices into the input profile slice, in instance id order.
    pub included: Vec<usize>,
    pub tried: usize,
}

/// One function's invocations over the window: `(absolute release, processing)`.
pub fn synthesize_function(profile: &FunctionProfile, cfg: &GenerationConfig) -> Vec<(Micros, Micros)> {
    let mut rng = seed::substream(cfg.seed, &profile.name);
    let cdf = PiecewiseCdf::new(&profile.durations);
    let mut out = Vec::new();
    for k in cfg.minutes() {
        let rate = profile.rates.get(k).copied().unwrap_or(0);
        let start = k as Micros * MINUTE;
        for t in generate_arrivals(rate, start, start + MINUTE, &mut rng) {
            out.push((t, cdf.sample(&mut rng)));
        }
    }
    out
}

/// Load-targeted instance generation.
///
/// Functions with at least one call in the window are tried in uniformly
/// random order, each at most once. A function's invocations are always
/// synthesized first; they are kept only if the running load stays within
/// `(1 + eps) * chi * m * (T2 - T1)`. The loop stops once the load reaches
/// `chi * m * (T2 - T1)` or every candidate has been tried.
pub fn generate_instance(
    profiles: &[FunctionProfile],
    cfg: &GenerationConfig,
) -> Result<GeneratedInstance, WorkloadError> {
    cfg.validate()?;
    if profiles.is_empty() {
        return Err(WorkloadError::NoProfiles);
    }
    if let Some(bad) = profiles.iter().find(|p| !p.durations.is_valid()) {
        return Err(WorkloadError::BadProfile(bad.name.clone()));
    }

    let window = cfg.minutes();
    let mut candidates: Vec<usize> = profiles
        .iter()
        .enumerate()
        .filter(|(_, p)| window.clone().any(|k| p.rates.get(k).copied().unwrap_or(0) > 0))
        .map(|(i, _)| i)
        .collect();
    candidates.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[0xF111])));

    let target = cfg.target_load();
    let cap = cfg.load_cap();
    let mut load: u128 = 0;
    let mut tried = 0;
    let mut chosen: Vec<(usize, Vec<(Micros, Micros)>)> = Vec::new();
    for &j in &candidates {
        tried += 1;
        let seq = synthesize_function(&profiles[j], cfg);
        let lj: u128 = seq.iter().map(|&(_, p)| p as u128).sum();
        if ((load + lj) as f64) <= cap {
            load += lj;
            chosen.push((j, seq));
        }
        if (load as f64) >= target {
            break;
        }
    }
    let below_target = (load as f64) < target;

    chosen.sort_by_key(|(j, _)| *j);
    let minutes = window.len();
    let mut inst_profiles = Vec::with_capacity(chosen.len());
    let mut rows: Vec<(Micros, u32, usize, Micros)> = Vec::new();
    for (new_id, (j, seq)) in chosen.iter().enumerate() {
        let src = &profiles[*j];
        let rates = window
            .clone()
            .map(|k| src.rates.get(k).copied().unwrap_or(0))
            .collect::<Vec<_>>();
        debug_assert_eq!(rates.len(), minutes);
        inst_profiles.push(FunctionProfile {
            id: FunctionId(new_id as u32),
            name: src.name.clone(),
            rates,
            durations: src.durations,
        });
        for (k, &(t, p)) in seq.iter().enumerate() {
            rows.push((t - cfg.window_start, new_id as u32, k, p));
        }
    }
    rows.sort_unstable();
    let invocations = rows
        .into_iter()
        .enumerate()
        .map(|(seq, (release, func, _, processing))| Invocation {
            seq: seq as u64,
            func: FunctionId(func),
            release,
            processing,
        })
        .collect();

    Ok(GeneratedInstance {
        instance: Instance {
            horizon: cfg.span(),
            processors: cfg.processors,
            profiles: inst_profiles,
            invocations,
        },
        total_load: load,
        below_target,
        included: chosen.iter().map(|(j, _)| *j).collect(),
        tried,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_instance, DurationPercentiles};

    fn profile(name: &str, rate: u32, dur: Micros, minutes: usize) -> FunctionProfile {
        FunctionProfile {
            id: FunctionId(0),
            name: name.into(),
            rates: vec![rate; minutes],
            durations: DurationPercentiles::point_mass(dur),
        }
    }

    fn cfg(load: f64, seed: u64) -> GenerationConfig {
        GenerationConfig {
            window_start: 0,
            window_end: MINUTE,
            processors: 1,
            load,
            epsilon: DEFAULT_EPSILON,
            seed,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(0.9, 1);
        assert!(c.validate().is_ok());
        c.load = 0.0;
        assert_eq!(c.validate(), Err(WorkloadError::BadLoad(0.0)));
        c.load = 1.6;
        assert!(c.validate().is_err());
        c.load = 0.5;
        c.window_end = MINUTE + 1;
        assert!(matches!(c.validate(), Err(WorkloadError::BadWindow { .. })));
    }

    #[test]
    fn exact_fit_is_included_without_flag() {
        // Search for a seed where chi * m * W reproduces L exactly in f64.
        let p = profile("exact", 100, 1_000, 1);
        let (c, l) = (0..100)
            .find_map(|s| {
                let base = cfg(1.0, s);
                let l: u128 = synthesize_function(&p, &base).iter().map(|x| x.1 as u128).sum();
                let c = GenerationConfig {
                    load: l as f64 / MINUTE as f64,
                    ..base
                };
                (c.target_load() == l as f64).then_some((c, l))
            })
            .expect("some seed gives an exact f64 target");
        let g = generate_instance(&[p], &c).unwrap();
        assert_eq!(g.total_load, l);
        assert!(!g.below_target);
        assert_eq!(g.included, vec![0]);
    }

    #[test]
    fn oversized_function_is_skipped_and_flagged() {
        let p = profile("big", 100, 1_000_000, 1);
        let g = generate_instance(&[p], &cfg(0.5, 7)).unwrap();
        assert!(g.below_target);
        assert!(g.instance.invocations.is_empty());
        assert_eq!(g.total_load, 0);
        assert_eq!(g.tried, 1);
    }

    #[test]
    fn second_of_two_sixty_percent_functions_is_rejected() {
        let a = profile("a", 1_000, 1_000, 1);
        let b = profile("b", 1_000, 1_000, 1);
        let base = cfg(1.0, 11);
        let la: u128 = synthesize_function(&a, &base).iter().map(|x| x.1 as u128).sum();
        let lb: u128 = synthesize_function(&b, &base).iter().map(|x| x.1 as u128).sum();
        let target = la.max(lb) as f64 / 0.6;
        assert!((la + lb) as f64 > 1.02 * target, "loads too uneven for this seed");
        let c = GenerationConfig {
            load: target / MINUTE as f64,
            ..base
        };
        let g = generate_instance(&[a, b], &c).unwrap();
        assert_eq!(g.included.len(), 1);
        assert!(g.below_target);
        assert_eq!(g.tried, 2);
    }

    #[test]
    fn functions_without_calls_in_window_are_not_candidates() {
        let mut quiet = profile("quiet", 0, 1_000, 3);
        quiet.rates[2] = 50;
        let c = GenerationConfig {
            window_start: 0,
            window_end: 2 * MINUTE,
            ..cfg(0.9, 1)
        };
        let g = generate_instance(&[quiet], &c).unwrap();
        assert_eq!(g.tried, 0);
        assert!(g.below_target);
    }

    #[test]
    fn instance_is_rebased_sorted_and_valid() {
        let profiles: Vec<_> = (0..20)
            .map(|i| profile(&format!("f{i}"), 10 + i, 20_000 + 1_000 * i as u64, 10))
            .collect();
        let c = GenerationConfig {
            window_start: 3 * MINUTE,
            window_end: 6 * MINUTE,
            processors: 2,
            load: 0.5,
            epsilon: 0.02,
            seed: 99,
        };
        let g = generate_instance(&profiles, &c).unwrap();
        assert!(validate_instance(&g.instance).is_empty());
        assert_eq!(g.instance.horizon, 3 * MINUTE);
        assert!(g.instance.profiles.iter().all(|p| p.rates.len() == 3));
        assert!((g.total_load as f64) <= c.load_cap());
        assert!(g.below_target || (g.total_load as f64) >= c.target_load());
        assert_eq!(g, generate_instance(&profiles, &c).unwrap());
    }

    #[test]
    fn function_stream_ignores_profile_order() {
        let profiles: Vec<_> = (0..5).map(|i| profile(&format!("f{i}"), 30, 5_000, 1)).collect();
        let c = cfg(0.9, 5);
        let a = synthesize_function(&profiles[3], &c);
        let mut rev = profiles.clone();
        rev.reverse();
        assert_eq!(a, synthesize_function(&rev[1], &c));
    }
}
