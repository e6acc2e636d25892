//! The acknowledged-invocation pool `A` and argmin selection.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use crate::model::{Invocation, Micros};
use crate::policy::{Policy, PolicyError, PositionQuery, Priority};

type Key = (Priority, Micros, u64);

/// Pending invocations, indexed by their position in the instance.
pub(crate) enum Pool {
    /// Priority fixed at insertion (FIFO, SPT, SRPT): one ordered set.
    Keyed(BTreeSet<(Key, usize)>),
    /// Priority is a function of `(function, elapsed)` and shifts with the
    /// estimator state, so it is recomputed at every selection. Never-run
    /// invocations of a function share one priority and wait in arrival
    /// order; invocations that already received service are ranked one by one.
    Grouped {
        fresh: Vec<VecDeque<usize>>,
        active: BTreeSet<usize>,
        started: Vec<usize>,
        len: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Candidate {
    Fresh(usize),
    Started(usize),
}

impl Pool {
    pub fn new(policy: &Policy, functions: usize) -> Self {
        if policy.ranks_by_invocation() {
            Pool::Keyed(BTreeSet::new())
        } else {
            Pool::Grouped {
                fresh: vec![VecDeque::new(); functions],
                active: BTreeSet::new(),
                started: Vec::new(),
                len: 0,
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Pool::Keyed(s) => s.len(),
            Pool::Grouped { len, .. } => *len,
        }
    }

    pub fn insert(
        &mut self,
        job: usize,
        inv: &Invocation,
        service: Micros,
        has_run: bool,
        policy: &Policy,
        now: Micros,
    ) -> Result<(), PolicyError> {
        match self {
            Pool::Keyed(set) => {
                let prio = policy.position(&query(inv, service, policy, now))?;
                set.insert(((prio, inv.release, inv.seq), job));
            }
            Pool::Grouped {
                fresh,
                active,
                started,
                len,
            } => {
                if has_run {
                    started.push(job);
                } else {
                    fresh[inv.func.index()].push_back(job);
                    active.insert(inv.func.index());
                }
                *len += 1;
            }
        }
        Ok(())
    }

    /// Removes and returns up to `k` invocations in ascending
    /// `(position, release, seq)` order.
    pub fn select(
        &mut self,
        k: usize,
        invs: &[Invocation],
        service: &[Micros],
        policy: &Policy,
        now: Micros,
    ) -> Result<Vec<usize>, PolicyError> {
        let mut out = Vec::with_capacity(k);
        match self {
            Pool::Keyed(set) => {
                while out.len() < k {
                    match set.pop_first() {
                        Some((_, job)) => out.push(job),
                        None => break,
                    }
                }
            }
            Pool::Grouped {
                fresh,
                active,
                started,
                len,
            } => {
                if k == 0 || *len == 0 {
                    return Ok(out);
                }
                let mut heap: BinaryHeap<Reverse<(Key, Candidate)>> =
                    BinaryHeap::with_capacity(active.len() + started.len());
                for &f in active.iter() {
                    let head = &invs[fresh[f][0]];
                    let prio = policy.position(&query(head, 0, policy, now))?;
                    heap.push(Reverse(((prio, head.release, head.seq), Candidate::Fresh(f))));
                }
                for (slot, &job) in started.iter().enumerate() {
                    let inv = &invs[job];
                    let prio = policy.position(&query(inv, service[job], policy, now))?;
                    heap.push(Reverse(((prio, inv.release, inv.seq), Candidate::Started(slot))));
                }
                let mut taken_started = Vec::new();
                while out.len() < k {
                    let Some(Reverse(((prio, _, _), cand))) = heap.pop() else {
                        break;
                    };
                    match cand {
                        Candidate::Fresh(f) => {
                            let queue = &mut fresh[f];
                            out.push(queue.pop_front().unwrap());
                            match queue.front() {
                                Some(&next) => {
                                    let inv = &invs[next];
                                    heap.push(Reverse(((prio, inv.release, inv.seq), Candidate::Fresh(f))));
                                }
                                None => {
                                    active.remove(&f);
                                }
                            }
                        }
                        Candidate::Started(slot) => {
                            out.push(started[slot]);
                            taken_started.push(slot);
                        }
                    }
                }
                taken_started.sort_unstable_by(|a, b| b.cmp(a));
                for slot in taken_started {
                    started.swap_remove(slot);
                }
                *len -= out.len();
            }
        }
        Ok(out)
    }
}

fn query(inv: &Invocation, service: Micros, policy: &Policy, now: Micros) -> PositionQuery {
    PositionQuery {
        func: inv.func,
        partial: service,
        release: inv.release,
        true_processing: policy.spec().family.is_clairvoyant().then_some(inv.processing),
        now,
    }
}
