//! Trace-free profile library with heavy-tailed durations and bursty,
//! often idle per-minute rates.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::io::ProfileLibrary;
use crate::model::{DayProfiles, DurationPercentiles, FunctionId, FunctionProfile, Micros};
use crate::seed;
use crate::trace::MINUTES_PER_DAY;
use crate::workload::cdf::round_half_up;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub functions: usize,
    pub days: u32,
    pub seed: u64,
    /// Range of a function's typical duration, log-uniform, in µs.
    pub center_min_us: f64,
    pub center_max_us: f64,
    /// Percentile knots are spread over `center * exp([-spread, spread])`.
    pub spread: f64,
    /// Range of the mean invocations per active minute for a function whose
    /// typical duration is `reference_us`, log-uniform.
    pub rate_min: f64,
    pub rate_max: f64,
    pub reference_us: f64,
    /// Shorter functions are invoked more often: the mean rate scales with
    /// `(reference / center) ^ rate_exponent`.
    pub rate_exponent: f64,
    pub max_rate: f64,
    /// Upper bound of the per-function probability that a minute is idle.
    pub max_idle: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            functions: 1_500,
            days: 2,
            seed: 0,
            center_min_us: 1_000.0,
            center_max_us: 10_000_000.0,
            spread: 1.5,
            rate_min: 0.5,
            rate_max: 40.0,
            reference_us: 100_000.0,
            rate_exponent: 0.5,
            max_rate: 300.0,
            max_idle: 0.6,
        }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn function(cfg: &SyntheticConfig, day: u32, index: usize) -> FunctionProfile {
    let name = format!("syn-{day:02}-{index:05}");
    let mut rng = seed::substream(cfg.seed, &name);

    let center = log_uniform(&mut rng, cfg.center_min_us, cfg.center_max_us);
    let mut offsets: [f64; 7] = std::array::from_fn(|_| rng.random_range(-cfg.spread..=cfg.spread));
    offsets.sort_by(f64::total_cmp);
    let knots: [Micros; 7] = offsets.map(|o| round_half_up(center * o.exp()).max(1));

    let base = log_uniform(&mut rng, cfg.rate_min, cfg.rate_max);
    let mean = (base * (cfg.reference_us / center).powf(cfg.rate_exponent)).min(cfg.max_rate);
    let idle = rng.random_range(0.0..cfg.max_idle);
    let geom = Geometric::new(1.0 / (1.0 + mean)).expect("positive mean rate");
    let rates = (0..MINUTES_PER_DAY)
        .map(|_| {
            if rng.random::<f64>() < idle {
                0
            } else {
                geom.sample(&mut rng).min(u32::MAX as u64) as u32
            }
        })
        .collect();

    FunctionProfile {
        id: FunctionId(index as u32),
        name,
        rates,
        durations: DurationPercentiles::from_array(knots),
    }
}

pub fn synthetic_profiles(cfg: &SyntheticConfig) -> ProfileLibrary {
    ProfileLibrary {
        days: (1..=cfg.days)
            .map(|day| DayProfiles {
                day,
                functions: (0..cfg.functions).map(|i| function(cfg, day, i)).collect(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_valid_and_deterministic() {
        let cfg = SyntheticConfig {
            functions: 50,
            seed: 9,
            ..Default::default()
        };
        let lib = synthetic_profiles(&cfg);
        assert_eq!(lib, synthetic_profiles(&cfg));
        assert_eq!(lib.days.len(), 2);
        for day in &lib.days {
            for (i, f) in day.functions.iter().enumerate() {
                assert_eq!(f.id.index(), i);
                assert!(f.durations.is_valid());
                assert_eq!(f.rates.len(), MINUTES_PER_DAY);
            }
        }
        assert_ne!(lib.days[0].functions[0], lib.days[1].functions[0]);
    }

    #[test]
    fn short_functions_are_called_more() {
        let lib = synthetic_profiles(&SyntheticConfig {
            functions: 400,
            days: 1,
            ..Default::default()
        });
        let mut fs: Vec<_> = lib.days[0].functions.iter().collect();
        fs.sort_by_key(|f| f.durations.p50);
        let calls = |s: &[&FunctionProfile]| {
            s.iter()
                .map(|f| f.rates.iter().map(|&r| r as u64).sum::<u64>())
                .sum::<u64>()
        };
        assert!(calls(&fs[..100]) > calls(&fs[300..]));
    }
}
