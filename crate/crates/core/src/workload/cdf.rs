//! Piecewise-linear duration CDF interpolated through the seven trace
//! percentiles.
//!
//! Knot probabilities are held in hundredths so that moments can be computed
//! as exact rationals. Zero-width segments are point masses.

use num_rational::Ratio;
use rand::distr::Open01;
use rand::Rng;

use crate::model::{DurationPercentiles, Micros, Rational, PERCENTILE_LEVELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PiecewiseCdf {
    xs: [Micros; 7],
}

impl PiecewiseCdf {
    /// Panics if the percentiles are not non-decreasing.
    pub fn new(p: &DurationPercentiles) -> Self {
        assert!(p.is_monotone(), "percentiles must be non-decreasing");
        Self { xs: p.as_array() }
    }

    pub fn knots(&self) -> impl Iterator<Item = (Micros, f64)> + '_ {
        self.xs
            .iter()
            .zip(PERCENTILE_LEVELS)
            .map(|(&x, q)| (x, q as f64 / 100.0))
    }

    pub fn min(&self) -> Micros {
        self.xs[0]
    }

    pub fn max(&self) -> Micros {
        self.xs[6]
    }

    /// Segments as `(x_lo, x_hi, mass in hundredths)`, skipping massless ones.
    fn segments(&self) -> impl Iterator<Item = (Micros, Micros, u32)> + '_ {
        (0..6).filter_map(move |i| {
            let dq = PERCENTILE_LEVELS[i + 1] - PERCENTILE_LEVELS[i];
            (dq > 0).then_some((self.xs[i], self.xs[i + 1], dq))
        })
    }

    /// Right-continuous CDF value at `x`.
    pub fn cdf_at(&self, x: Micros) -> f64 {
        if x >= self.xs[6] {
            return 1.0;
        }
        if x < self.xs[0] {
            return 0.0;
        }
        // Highest knot not above x; at a point mass this picks the upper q.
        let i = self.xs.iter().rposition(|&k| k <= x).unwrap();
        if self.xs[i] == x {
            return PERCENTILE_LEVELS[i] as f64 / 100.0;
        }
        let (lo, hi) = (self.xs[i], self.xs[i + 1]);
        let (qlo, qhi) = (PERCENTILE_LEVELS[i] as u128, PERCENTILE_LEVELS[i + 1] as u128);
        let width = (hi - lo) as u128;
        let num = qlo * width + (qhi - qlo) * (x - lo) as u128;
        num as f64 / (100 * width) as f64
    }

    /// Generalized inverse `inf { x : F(x) >= u }` for `u` in `(0, 1]`.
    pub fn inverse(&self, u: f64) -> f64 {
        let level = u * 100.0;
        for i in 0..6 {
            let (qlo, qhi) = (PERCENTILE_LEVELS[i] as f64, PERCENTILE_LEVELS[i + 1] as f64);
            if level <= qhi {
                let (lo, hi) = (self.xs[i] as f64, self.xs[i + 1] as f64);
                if hi == lo || level <= qlo {
                    return lo;
                }
                return lo + (level - qlo) / (qhi - qlo) * (hi - lo);
            }
        }
        self.xs[6] as f64
    }

    /// Inverse-transform sample, rounded half-up, never below 1 µs.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Micros {
        let u: f64 = rng.sample(Open01);
        round_half_up(self.inverse(u)).max(1)
    }

    /// Exact mean of the distribution.
    pub fn mean(&self) -> Rational {
        let num: u128 = self
            .segments()
            .map(|(lo, hi, dq)| dq as u128 * (lo as u128 + hi as u128))
            .sum();
        Ratio::new(num, 200)
    }

    /// Exact `E[X | X >= elapsed] - elapsed`; zero once `elapsed` reaches the
    /// upper end of the support.
    pub fn expected_remaining(&self, elapsed: Micros) -> Rational {
        if elapsed >= self.xs[6] {
            return Ratio::from_integer(0);
        }
        let p = elapsed as u128;
        // Sums scaled by 200; the (at most one) partial segment adds a
        // further denominator of its width.
        let (mut mass_full, mut moment_full) = (0u128, 0u128);
        let mut partial: Option<(u128, u128, u128)> = None;
        for (lo, hi, dq) in self.segments() {
            let (lo, hi, dq) = (lo as u128, hi as u128, dq as u128);
            if p <= lo {
                mass_full += 2 * dq;
                moment_full += dq * (lo + hi);
            } else if p < hi {
                let width = hi - lo;
                partial = Some((2 * dq * (hi - p), dq * (hi - p) * (hi + p), width));
            }
        }
        let (mass, moment) = match partial {
            Some((pm, pmom, width)) => (mass_full * width + pm, moment_full * width + pmom),
            None => (mass_full, moment_full),
        };
        debug_assert!(mass > 0);
        Ratio::new(moment - p * mass, mass)
    }
}

impl From<&DurationPercentiles> for PiecewiseCdf {
    fn from(p: &DurationPercentiles) -> Self {
        Self::new(p)
    }
}

pub(crate) fn round_half_up(x: f64) -> Micros {
    if x <= 0.0 {
        0
    } else {
        (x + 0.5).floor() as Micros
    }
}

/// Rounds a rational half-up to whole microseconds.
pub fn round_rational(r: &Rational) -> Micros {
    ((r.numer() * 2 + r.denom()) / (r.denom() * 2)) as Micros
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
