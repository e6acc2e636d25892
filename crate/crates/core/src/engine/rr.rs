//! Round-robin with a fixed quantum and a single global FIFO queue.

use std::collections::VecDeque;

use super::{Event, EventKind, RoundStat, ServiceInterval, SimError, SimulationTrace};
use crate::model::{validate_instance, CompletionRecord, Instance, Micros};

#[derive(Clone, Copy)]
struct Slice {
    job: usize,
    start: Micros,
    end: Micros,
}

/// Every unfinished invocation waits in one queue; a free processor takes
/// the head and serves it for at most `quantum`, after which it either
/// completes or goes to the tail. Arrivals join the tail and never preempt.
pub fn simulate_rr(inst: &Instance, quantum: Micros) -> Result<Vec<CompletionRecord>, SimError> {
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(SimError::InvalidInstance(violations));
    }
    assert!(quantum > 0, "quantum must be positive");
    Ok(run_rr(inst, quantum, None))
}

pub(crate) fn run_rr(
    inst: &Instance,
    quantum: Micros,
    mut trace: Option<&mut SimulationTrace>,
) -> Vec<CompletionRecord> {
    let invs = &inst.invocations;
    let n = invs.len();
    let m = inst.processors;
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut running: Vec<Option<Slice>> = vec![None; m];
    let mut service = vec![0 as Micros; n];
    let mut completion = vec![0 as Micros; n];
    let mut next_arrival = 0usize;
    let mut ending: Vec<(Event, usize)> = Vec::with_capacity(m);

    loop {
        let arrival_at = invs.get(next_arrival).map(|i| i.release);
        let slice_end = running.iter().flatten().map(|s| s.end).min();
        let now = match (arrival_at, slice_end) {
            (None, None) => break,
            (a, e) => a.into_iter().chain(e).min().unwrap(),
        };

        ending.clear();
        for (proc, slot) in running.iter().enumerate() {
            let Some(s) = slot else { continue };
            if s.end != now {
                continue;
            }
            let done = service[s.job] + (s.end - s.start) == invs[s.job].processing;
            let kind = if done {
                EventKind::Completion
            } else {
                EventKind::QuantumExpiry
            };
            ending.push((
                Event {
                    time: now,
                    kind,
                    seq: invs[s.job].seq,
                },
                proc,
            ));
        }
        ending.sort_unstable();
        for &(ev, proc) in &ending {
            let s = running[proc].take().unwrap();
            service[s.job] += s.end - s.start;
            if let Some(t) = trace.as_deref_mut() {
                t.intervals.push(ServiceInterval {
                    seq: ev.seq,
                    processor: proc,
                    start: s.start,
                    end: s.end,
                });
            }
            match ev.kind {
                EventKind::Completion => completion[s.job] = now,
                _ => queue.push_back(s.job),
            }
        }
        while next_arrival < n && invs[next_arrival].release == now {
            queue.push_back(next_arrival);
            next_arrival += 1;
        }

        for slot in running.iter_mut().filter(|s| s.is_none()) {
            let Some(job) = queue.pop_front() else { break };
            let remaining = invs[job].processing - service[job];
            *slot = Some(Slice {
                job,
                start: now,
                end: now + remaining.min(quantum),
            });
        }
        if let Some(t) = trace.as_deref_mut() {
            t.rounds.push(RoundStat {
                time: now,
                busy: running.iter().flatten().count(),
                waiting: queue.len(),
            });
        }
    }

    invs.iter()
        .zip(completion)
        .map(|(inv, c)| CompletionRecord {
            seq: inv.seq,
            func: inv.func,
            release: inv.release,
            completion: c,
            processing: inv.processing,
        })
        .collect()
}
