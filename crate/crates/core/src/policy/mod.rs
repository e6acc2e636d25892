//! Scheduling policies as priority functions over pending invocations.
//!
//! Each policy exposes the same protocol: `position` ranks an invocation
//! (lower runs first), `update` is told about every completion and
//! `on_release` about every arrival. Priorities are exact rationals; the
//! engine breaks ties by `(release, seq)`.

pub mod history;
pub mod spec;

use num_rational::Ratio;
use thiserror::Error;

use crate::model::{minute_of, FunctionId, FunctionProfile, Micros, Rational};
use crate::workload::PiecewiseCdf;

pub use history::{History, SortedSamples};
pub use spec::{default_policies, Family, PolicySpec, SpecError, Variant};

pub type Priority = Rational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("true processing time passed to non-clairvoyant policy {0}")]
    ClairvoyanceViolation(String),
    #[error("policy {0} requires the true processing time")]
    MissingTrueProcessing(String),
    #[error("release {release} arrived after release {last}")]
    OutOfOrderRelease { release: Micros, last: Micros },
    #[error("unknown function {0}")]
    UnknownFunction(FunctionId),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// What the engine knows about an invocation when asking for its position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionQuery {
    pub func: FunctionId,
    /// Service received so far.
    pub partial: Micros,
    pub release: Micros,
    /// Only for clairvoyant families.
    pub true_processing: Option<Micros>,
    pub now: Micros,
}

fn int(v: u128) -> Priority {
    Ratio::from_integer(v)
}

/// Average processing time per function, with global and cold-start
/// fallbacks.
#[derive(Debug, Clone)]
pub struct SeptState {
    tpt: Vec<u128>,
    noc: Vec<u64>,
    total_tpt: u128,
    total_noc: u64,
}

impl SeptState {
    pub fn new(functions: usize) -> Self {
        Self {
            tpt: vec![0; functions],
            noc: vec![0; functions],
            total_tpt: 0,
            total_noc: 0,
        }
    }

    pub fn update(&mut self, j: usize, p: Micros) {
        self.tpt[j] += p as u128;
        self.noc[j] += 1;
        self.total_tpt += p as u128;
        self.total_noc += 1;
    }

    /// `(TPT, NOC)` backing the estimate; `(0, 1)` when nothing is known.
    fn parts(&self, j: usize) -> (u128, u128) {
        if self.noc[j] > 0 {
            (self.tpt[j], self.noc[j] as u128)
        } else if self.total_noc == 0 {
            (0, 1)
        } else {
            (self.total_tpt, self.total_noc as u128)
        }
    }

    pub fn estimate(&self, j: usize) -> Priority {
        let (n, d) = self.parts(j);
        Ratio::new_raw(n, d)
    }

    pub fn totals(&self, j: usize) -> (u128, u64) {
        (self.tpt[j], self.noc[j])
    }
}

/// Per-function processing-time samples plus their union.
#[derive(Debug, Clone)]
pub struct SerptState {
    per_function: Vec<History>,
    global: SortedSamples,
}

impl SerptState {
    pub fn new(functions: usize, cap: Option<usize>) -> Self {
        let make = || match cap {
            Some(c) => History::bounded(c),
            None => History::unbounded(),
        };
        Self {
            per_function: (0..functions).map(|_| make()).collect(),
            global: SortedSamples::new(),
        }
    }

    pub fn update(&mut self, j: usize, p: Micros) {
        self.global.insert(p);
        if let Some(old) = self.per_function[j].push(p) {
            self.global.remove(old);
        }
    }

    /// Mean of `(x - elapsed)` over samples `x >= elapsed`, first from the
    /// function's own history, then from the union, else zero.
    pub fn estimate(&self, j: usize, elapsed: Micros) -> Priority {
        for pool in [self.per_function[j].samples(), &self.global] {
            let (count, sum) = pool.at_least(elapsed);
            if count > 0 {
                return Ratio::new_raw(sum - elapsed as u128 * count as u128, count as u128);
            }
        }
        int(0)
    }

    pub fn history(&self, j: usize) -> &History {
        &self.per_function[j]
    }
}

/// Per-minute bookkeeping for the Fair Choice policies.
#[derive(Debug, Clone)]
pub struct FairChoiceState {
    by_work: bool,
    /// Foresight parameters: per-function rates and exact means.
    foresight: Option<(Vec<Vec<u32>>, Vec<Rational>)>,
    ept: SeptState,
    lambda_hat: Vec<u64>,
    released: Vec<u64>,
    /// RE: true work of this minute's invocations that already completed.
    /// FOR: true work of every invocation released this minute.
    known_work: Vec<u128>,
    /// RE only: released this minute and not yet completed.
    unfinished: Vec<u64>,
}

impl FairChoiceState {
    fn new(by_work: bool, foresight: Option<(Vec<Vec<u32>>, Vec<Rational>)>, n: usize) -> Self {
        let lambda_hat = match &foresight {
            Some((rates, _)) => rates.iter().map(|r| r.first().copied().unwrap_or(0) as u64).collect(),
            None => vec![1; n],
        };
        Self {
            by_work,
            foresight,
            ept: SeptState::new(n),
            lambda_hat,
            released: vec![0; n],
            known_work: vec![0; n],
            unfinished: vec![0; n],
        }
    }

    fn roll(&mut self, from: usize, to: usize) {
        for j in 0..self.released.len() {
            self.lambda_hat[j] = match &self.foresight {
                Some((rates, _)) => rates[j].get(to).copied().unwrap_or(0) as u64,
                None if to == from + 1 => self.released[j],
                None => 0,
            };
            self.released[j] = 0;
            self.known_work[j] = 0;
            self.unfinished[j] = 0;
        }
    }

    /// Current prediction of this minute's invocation count.
    pub fn lambda_hat(&self, j: usize) -> u64 {
        self.lambda_hat[j]
    }

    pub fn released_this_minute(&self, j: usize) -> u64 {
        self.released[j]
    }

    fn priority(&self, j: usize) -> Priority {
        let lambda = self.lambda_hat[j] as u128;
        if !self.by_work {
            return int(lambda.max(self.released[j] as u128));
        }
        match &self.foresight {
            Some((_, means)) => {
                let expected = means[j] * int(lambda);
                expected.max(int(self.known_work[j]))
            }
            None => {
                let (n, d) = self.ept.parts(j);
                let expected = Ratio::new_raw(lambda * n, d);
                let observed = Ratio::new_raw(self.known_work[j] * d + self.unfinished[j] as u128 * n, d);
                expected.max(observed)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum State {
    Stateless,
    Sept(SeptState),
    SeptFor(Vec<Rational>),
    Serpt(SerptState),
    SerptFor(Vec<PiecewiseCdf>),
    FairChoice(FairChoiceState),
}

/// A policy instance bound to one simulation run.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    state: State,
    functions: usize,
    minute: usize,
    last_release: Option<Micros>,
}

impl Policy {
    /// `profiles` supply the function count and, for foresight variants,
    /// the true distribution parameters.
    pub fn new(spec: PolicySpec, profiles: &[FunctionProfile]) -> Result<Self, PolicyError> {
        spec.validate()?;
        let n = profiles.len();
        let cdfs = || profiles.iter().map(|p| PiecewiseCdf::new(&p.durations));
        let foresight = spec.variant == Variant::For;
        let state = match spec.family {
            Family::Fifo | Family::RoundRobin | Family::Spt | Family::Srpt => State::Stateless,
            Family::Sept if foresight => State::SeptFor(cdfs().map(|c| c.mean()).collect()),
            Family::Sept => State::Sept(SeptState::new(n)),
            Family::Serpt if foresight => State::SerptFor(cdfs().collect()),
            Family::Serpt => State::Serpt(SerptState::new(
                n,
                (spec.variant == Variant::ReLim).then_some(spec.history_cap),
            )),
            Family::FcCount | Family::FcWork => {
                let params = foresight.then(|| {
                    (
                        profiles.iter().map(|p| p.rates.clone()).collect(),
                        cdfs().map(|c| c.mean()).collect(),
                    )
                });
                State::FairChoice(FairChoiceState::new(spec.family == Family::FcWork, params, n))
            }
        };
        Ok(Self {
            spec,
            state,
            functions: n,
            minute: 0,
            last_release: None,
        })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    /// Whether `on_release` must be given the true processing time
    /// (FCP foresight sums the real work released in the minute).
    pub fn needs_release_processing(&self) -> bool {
        self.spec.family == Family::FcWork && self.spec.variant == Variant::For
    }

    /// Whether the priority of an invocation depends on more than its
    /// function and elapsed service.
    pub fn ranks_by_invocation(&self) -> bool {
        matches!(
            self.spec.family,
            Family::Fifo | Family::Spt | Family::Srpt | Family::RoundRobin
        )
    }

    /// Moves minute-based bookkeeping forward to the minute containing `now`.
    pub fn advance_to(&mut self, now: Micros) {
        let k = minute_of(now);
        if k > self.minute {
            if let State::FairChoice(fc) = &mut self.state {
                fc.roll(self.minute, k);
            }
            self.minute = k;
        }
    }

    fn check_func(&self, f: FunctionId) -> Result<usize, PolicyError> {
        (f.index() < self.functions)
            .then_some(f.index())
            .ok_or(PolicyError::UnknownFunction(f))
    }

    pub fn position(&self, q: &PositionQuery) -> Result<Priority, PolicyError> {
        let j = self.check_func(q.func)?;
        debug_assert!(minute_of(q.now) <= self.minute || matches!(self.state, State::Stateless));
        if self.spec.family.is_clairvoyant() {
            let p = q
                .true_processing
                .ok_or_else(|| PolicyError::MissingTrueProcessing(self.spec.to_string()))?;
            return Ok(match self.spec.family {
                Family::Spt => int(p as u128),
                _ => int(p.saturating_sub(q.partial) as u128),
            });
        }
        if q.true_processing.is_some() {
            return Err(PolicyError::ClairvoyanceViolation(self.spec.to_string()));
        }
        Ok(match &self.state {
            State::Stateless => match self.spec.family {
                Family::Fifo => int(q.release as u128),
                _ => int(0),
            },
            State::Sept(s) => s.estimate(j),
            State::SeptFor(means) => means[j],
            State::Serpt(s) => s.estimate(j, q.partial),
            State::SerptFor(cdfs) => cdfs[j].expected_remaining(q.partial),
            State::FairChoice(fc) => fc.priority(j),
        })
    }

    /// Records a completed invocation.
    pub fn update(
        &mut self,
        func: FunctionId,
        processing: Micros,
        release: Micros,
        now: Micros,
    ) -> Result<(), PolicyError> {
        let j = self.check_func(func)?;
        self.advance_to(now);
        let minute = self.minute;
        match &mut self.state {
            State::Sept(s) => s.update(j, processing),
            State::Serpt(s) => s.update(j, processing),
            State::FairChoice(fc) if fc.foresight.is_none() => {
                fc.ept.update(j, processing);
                if fc.by_work && minute_of(release) == minute && fc.unfinished[j] > 0 {
                    fc.unfinished[j] -= 1;
                    fc.known_work[j] += processing as u128;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Records an arrival. Releases must come in non-decreasing order.
    pub fn on_release(
        &mut self,
        func: FunctionId,
        release: Micros,
        true_processing: Option<Micros>,
    ) -> Result<(), PolicyError> {
        let j = self.check_func(func)?;
        if let Some(last) = self.last_release {
            if release < last {
                return Err(PolicyError::OutOfOrderRelease { release, last });
            }
        }
        self.last_release = Some(release);
        self.advance_to(release);
        let needs_p = self.needs_release_processing();
        if let State::FairChoice(fc) = &mut self.state {
            fc.released[j] += 1;
            if fc.by_work {
                if needs_p {
                    let p = true_processing.ok_or_else(|| PolicyError::MissingTrueProcessing(self.spec.to_string()))?;
                    fc.known_work[j] += p as u128;
                } else {
                    fc.unfinished[j] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn fair_choice(&self) -> Option<&FairChoiceState> {
        match &self.state {
            State::FairChoice(fc) => Some(fc),
            _ => None,
        }
    }

    pub fn sept(&self) -> Option<&SeptState> {
        match &self.state {
            State::Sept(s) => Some(s),
            _ => None,
        }
    }

    pub fn serpt(&self) -> Option<&SerptState> {
        match &self.state {
            State::Serpt(s) => Some(s),
            _ => None,
        }
    }
}
