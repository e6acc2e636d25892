use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::model::{Micros, MINUTE};
use crate::workload::cdf::round_half_up;

/// Poisson arrivals with `rate` calls per minute inside `[start, end)`.
///
/// Gaps are exponential with mean `60e6 / rate` µs. The process restarts at
/// `start`; nothing carries over from a previous window.
pub fn generate_arrivals<R: Rng + ?Sized>(rate: u32, start: Micros, end: Micros, rng: &mut R) -> Vec<Micros> {
    if rate == 0 || end <= start {
        return Vec::new();
    }
    let gap = Exp::new(rate as f64 / MINUTE as f64).expect("positive rate");
    let mut out = Vec::with_capacity(rate as usize + 8);
    let mut t = start as f64;
    loop {
        t += gap.sample(rng);
        let at = round_half_up(t);
        if at >= end {
            break;
        }
        out.push(at);
    }
    out
}
