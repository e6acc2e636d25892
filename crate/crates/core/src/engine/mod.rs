//! Deterministic discrete-event simulation of `m` processors.
//!
//! [`simulate`] runs the framework loop: at every completion or arrival the
//! finished invocations are reported to the policy, arrivals join the pool
//! and, in preemptive mode, every running invocation is returned to the pool
//! as well; free processors then take the lowest-position invocations.
//! Round-robin has its own loop in [`rr`] since tail requeueing is not an
//! argmin rule.
//!
//! Events at the same instant are handled completions first, then quantum
//! expiries, then arrivals. Preemption and migration cost nothing.

mod pool;
pub mod rr;

use thiserror::Error;

use crate::model::{validate_instance, CompletionRecord, Instance, Micros, Violation};
use crate::policy::{Family, Policy, PolicyError, PolicySpec};
use pool::Pool;

pub use rr::simulate_rr;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidInstance(Vec<Violation>),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Completion,
    QuantumExpiry,
    Arrival,
}

/// Ordered by `(time, kind, seq)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub time: Micros,
    pub kind: EventKind,
    pub seq: u64,
}

/// One contiguous stretch of service of an invocation on a processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceInterval {
    pub seq: u64,
    pub processor: usize,
    pub start: Micros,
    pub end: Micros,
}

/// Processor occupancy right after a scheduling point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStat {
    pub time: Micros,
    pub busy: usize,
    pub waiting: usize,
}

/// Optional detailed record of a run, used by conservation checks.
#[derive(Debug, Clone, Default)]
pub struct SimulationTrace {
    pub intervals: Vec<ServiceInterval>,
    pub rounds: Vec<RoundStat>,
}

/// Runs `spec` on `inst` and returns one record per invocation, in `seq` order.
pub fn simulate(inst: &Instance, spec: &PolicySpec) -> Result<Vec<CompletionRecord>, SimError> {
    run(inst, spec, None)
}

/// As [`simulate`], also capturing service intervals and scheduling rounds.
pub fn simulate_traced(
    inst: &Instance,
    spec: &PolicySpec,
) -> Result<(Vec<CompletionRecord>, SimulationTrace), SimError> {
    let mut trace = SimulationTrace::default();
    let records = run(inst, spec, Some(&mut trace))?;
    Ok((records, trace))
}

fn run(
    inst: &Instance,
    spec: &PolicySpec,
    trace: Option<&mut SimulationTrace>,
) -> Result<Vec<CompletionRecord>, SimError> {
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(SimError::InvalidInstance(violations));
    }
    spec.validate().map_err(PolicyError::from)?;
    if spec.family == Family::RoundRobin {
        return Ok(rr::run_rr(inst, spec.quantum, trace));
    }
    let policy = Policy::new(*spec, &inst.profiles)?;
    simulate_with_policy(inst, policy, trace)
}

#[derive(Clone, Copy)]
struct Slot {
    job: usize,
    since: Micros,
    service_at_since: Micros,
}

impl Slot {
    fn finish_time(&self, processing: Micros) -> Micros {
        self.since + (processing - self.service_at_since)
    }
}

/// The framework loop with a caller-supplied policy state.
pub fn simulate_with_policy(
    inst: &Instance,
    mut policy: Policy,
    mut trace: Option<&mut SimulationTrace>,
) -> Result<Vec<CompletionRecord>, SimError> {
    let invs = &inst.invocations;
    let n = invs.len();
    let m = inst.processors;
    let preemptive = policy.spec().preemptive;
    let release_p = policy.needs_release_processing();

    let mut pool = Pool::new(&policy, inst.profiles.len());
    let mut running: Vec<Option<Slot>> = vec![None; m];
    let mut service = vec![0 as Micros; n];
    let mut chosen = vec![false; n];
    let mut is_running = vec![false; n];
    let mut completion: Vec<Option<Micros>> = vec![None; n];
    let mut next_arrival = 0usize;
    let mut events: Vec<Event> = Vec::with_capacity(m + 8);

    loop {
        let arrival_at = invs.get(next_arrival).map(|i| i.release);
        let finish_at = running
            .iter()
            .flatten()
            .map(|s| s.finish_time(invs[s.job].processing))
            .min();
        let now = match (arrival_at, finish_at) {
            (None, None) => break,
            (a, f) => a.into_iter().chain(f).min().unwrap(),
        };

        events.clear();
        for slot in running.iter().flatten() {
            if slot.finish_time(invs[slot.job].processing) == now {
                events.push(Event {
                    time: now,
                    kind: EventKind::Completion,
                    seq: invs[slot.job].seq,
                });
            }
        }
        events.sort_unstable();
        for ev in &events {
            let proc = running
                .iter()
                .position(|s| s.is_some_and(|s| invs[s.job].seq == ev.seq))
                .unwrap();
            let slot = running[proc].take().unwrap();
            is_running[slot.job] = false;
            let inv = &invs[slot.job];
            service[slot.job] = inv.processing;
            completion[slot.job] = Some(now);
            if let Some(t) = trace.as_deref_mut() {
                t.intervals.push(ServiceInterval {
                    seq: inv.seq,
                    processor: proc,
                    start: slot.since,
                    end: now,
                });
            }
            policy.update(inv.func, inv.processing, inv.release, now)?;
        }

        let mut arrived = false;
        while next_arrival < n && invs[next_arrival].release == now {
            let inv = &invs[next_arrival];
            policy.on_release(inv.func, inv.release, release_p.then_some(inv.processing))?;
            pool.insert(next_arrival, inv, 0, false, &policy, now)?;
            next_arrival += 1;
            arrived = true;
        }
        policy.advance_to(now);

        let free = running.iter().filter(|s| s.is_none()).count();
        if !((free > 0 && pool.len() > 0) || (preemptive && arrived)) {
            continue;
        }

        let capacity = if preemptive {
            for slot in running.iter().flatten() {
                let job = slot.job;
                service[job] = slot.service_at_since + (now - slot.since);
                pool.insert(job, &invs[job], service[job], true, &policy, now)?;
            }
            m
        } else {
            free
        };
        let selected = pool.select(capacity, invs, &service, &policy, now)?;
        for &job in &selected {
            chosen[job] = true;
        }
        for (proc, entry) in running.iter_mut().enumerate().filter(|_| preemptive) {
            if let Some(slot) = *entry {
                if chosen[slot.job] {
                    continue;
                }
                // Preempted; back in the pool with its service intact.
                if let Some(t) = trace.as_deref_mut() {
                    t.intervals.push(ServiceInterval {
                        seq: invs[slot.job].seq,
                        processor: proc,
                        start: slot.since,
                        end: now,
                    });
                }
                is_running[slot.job] = false;
                *entry = None;
            }
        }
        let free_list: Vec<usize> = (0..m).filter(|&p| running[p].is_none()).collect();
        let mut free_procs = free_list.into_iter();
        for &job in &selected {
            chosen[job] = false;
            if is_running[job] {
                continue;
            }
            let proc = free_procs.next().expect("selection never exceeds capacity");
            is_running[job] = true;
            running[proc] = Some(Slot {
                job,
                since: now,
                service_at_since: service[job],
            });
        }
        if let Some(t) = trace.as_deref_mut() {
            t.rounds.push(RoundStat {
                time: now,
                busy: running.iter().flatten().count(),
                waiting: pool.len(),
            });
        }
    }

    Ok(invs
        .iter()
        .zip(completion)
        .map(|(inv, c)| CompletionRecord {
            seq: inv.seq,
            func: inv.func,
            release: inv.release,
            completion: c.expect("every invocation completes"),
            processing: inv.processing,
        })
        .collect())
}
