//! Independent oracles and fixtures shared by the integration and
//! acceptance tests. Nothing here calls into the code under test except to
//! build inputs.
#![allow(dead_code)]

use std::collections::HashMap;

use faas_sched::engine::SimulationTrace;
use faas_sched::model::{
    CompletionRecord, DurationPercentiles, FunctionId, FunctionProfile, Instance, Invocation, Micros, MINUTE,
    PERCENTILE_LEVELS,
};
use faas_sched::policy::{Family, PolicySpec};
use faas_sched::workload::PiecewiseCdf;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MS: Micros = 1_000;

pub fn single_function(name: &str, minutes: usize) -> FunctionProfile {
    FunctionProfile {
        id: FunctionId(0),
        name: name.into(),
        rates: vec![0; minutes],
        durations: DurationPercentiles::point_mass(1),
    }
}

/// One-function instance over one minute from `(release, processing)` pairs
/// given in µs, in arrival order.
pub fn instance_from(m: usize, jobs: &[(Micros, Micros)]) -> Instance {
    let mut rows: Vec<_> = jobs.to_vec();
    rows.sort_by_key(|&(r, _)| r);
    let horizon = (rows.iter().map(|&(r, _)| r).max().unwrap_or(0) / MINUTE + 1) * MINUTE;
    Instance {
        horizon,
        processors: m,
        profiles: vec![single_function("f", (horizon / MINUTE) as usize)],
        invocations: rows
            .into_iter()
            .enumerate()
            .map(|(seq, (release, processing))| Invocation {
                seq: seq as u64,
                func: FunctionId(0),
                release,
                processing,
            })
            .collect(),
    }
}

pub fn random_percentiles(rng: &mut ChaCha8Rng, max: Micros) -> DurationPercentiles {
    let mut v: [Micros; 7] = std::array::from_fn(|_| rng.random_range(0..=max));
    // Occasionally force point masses.
    if rng.random_bool(0.3) {
        let i = rng.random_range(0..6);
        v[i + 1] = v[i];
    }
    v.sort_unstable();
    if v[6] == 0 {
        v[6] = 1;
    }
    DurationPercentiles::from_array(v)
}

/// Random multi-function instance whose processing times follow each
/// function's own percentile profile and whose rates match the realized
/// per-minute counts.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    m: usize,
    invocations: usize,
    functions: usize,
    minutes: usize,
) -> Instance {
    let horizon = minutes as Micros * MINUTE;
    let mut profiles: Vec<FunctionProfile> = (0..functions)
        .map(|j| {
            let scale = 10u64.pow(rng.random_range(3..=6));
            FunctionProfile {
                id: FunctionId(j as u32),
                name: format!("f{j}"),
                rates: vec![0; minutes],
                durations: random_percentiles(rng, scale),
            }
        })
        .collect();
    let cdfs: Vec<PiecewiseCdf> = profiles.iter().map(|p| PiecewiseCdf::new(&p.durations)).collect();
    let mut rows: Vec<(Micros, u32, Micros)> = (0..invocations)
        .map(|_| {
            let f = rng.random_range(0..functions);
            let r = rng.random_range(0..horizon);
            (r, f as u32, cdfs[f].sample(rng))
        })
        .collect();
    rows.sort_unstable();
    for &(r, f, _) in &rows {
        profiles[f as usize].rates[(r / MINUTE) as usize] += 1;
    }
    Instance {
        horizon,
        processors: m,
        profiles,
        invocations: rows
            .into_iter()
            .enumerate()
            .map(|(seq, (release, f, processing))| Invocation {
                seq: seq as u64,
                func: FunctionId(f),
                release,
                processing,
            })
            .collect(),
    }
}

/// Minimum total flow time over all single-processor preemptive schedules
/// that only take decisions at releases and completions.
pub fn brute_force_total_flow(jobs: &[(Micros, Micros)]) -> Micros {
    fn go(
        t: Micros,
        rem: &mut Vec<Micros>,
        jobs: &[(Micros, Micros)],
        memo: &mut HashMap<(Micros, Vec<Micros>), Micros>,
    ) -> Micros {
        if rem.iter().all(|&x| x == 0) {
            return 0;
        }
        if let Some(&v) = memo.get(&(t, rem.clone())) {
            return v;
        }
        let next_release = jobs.iter().map(|&(r, _)| r).filter(|&r| r > t).min();
        let avail: Vec<usize> = (0..jobs.len()).filter(|&i| jobs[i].0 <= t && rem[i] > 0).collect();
        let best = if avail.is_empty() {
            go(
                next_release.expect("pending work implies a future release"),
                rem,
                jobs,
                memo,
            )
        } else {
            let mut best = Micros::MAX;
            for &i in &avail {
                let finish = t + rem[i];
                let until = next_release.map_or(finish, |r| r.min(finish));
                let ran = until - t;
                rem[i] -= ran;
                let cost = if rem[i] == 0 { until - jobs[i].0 } else { 0 };
                let total = cost + go(until, rem, jobs, memo);
                rem[i] += ran;
                best = best.min(total);
            }
            best
        };
        memo.insert((t, rem.clone()), best);
        best
    }
    let mut rem: Vec<Micros> = jobs.iter().map(|&(_, p)| p).collect();
    go(0, &mut rem, jobs, &mut HashMap::new())
}

pub fn is_preemptive(spec: &PolicySpec) -> bool {
    spec.preemptive || matches!(spec.family, Family::RoundRobin | Family::Serpt | Family::Srpt)
}

/// Checks a traced run against the scheduling model. Returns a description
/// of the first violation found.
pub fn check_schedule(
    inst: &Instance,
    spec: &PolicySpec,
    records: &[CompletionRecord],
    trace: &SimulationTrace,
) -> Result<(), String> {
    let n = inst.invocations.len();
    let m = inst.processors;
    if records.len() != n {
        return Err(format!("{} records for {n} invocations", records.len()));
    }
    let mut per_job: Vec<Vec<(Micros, Micros)>> = vec![Vec::new(); n];
    let mut per_proc: Vec<Vec<(Micros, Micros)>> = vec![Vec::new(); m];
    for iv in &trace.intervals {
        if iv.end <= iv.start {
            return Err(format!("empty interval for seq {}", iv.seq));
        }
        if iv.processor >= m {
            return Err(format!("processor {} out of range", iv.processor));
        }
        per_job[iv.seq as usize].push((iv.start, iv.end));
        per_proc[iv.processor].push((iv.start, iv.end));
    }
    for (i, (inv, rec)) in inst.invocations.iter().zip(records).enumerate() {
        if (rec.seq, rec.func, rec.release, rec.processing) != (inv.seq, inv.func, inv.release, inv.processing) {
            return Err(format!("record {i} does not match its invocation"));
        }
        if rec.completion < rec.release + rec.processing {
            return Err(format!("seq {i} completes before r + p"));
        }
        let ivs = &mut per_job[i];
        ivs.sort_unstable();
        let served: Micros = ivs.iter().map(|(s, e)| e - s).sum();
        if served != inv.processing {
            return Err(format!("seq {i} served {served}, needs {}", inv.processing));
        }
        if ivs[0].0 < inv.release {
            return Err(format!("seq {i} served before release"));
        }
        if ivs.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(format!("seq {i} runs on two processors at once"));
        }
        if ivs.last().unwrap().1 != rec.completion {
            return Err(format!("seq {i} completion differs from last service"));
        }
        if !is_preemptive(spec) && ivs.len() != 1 {
            return Err(format!("seq {i} split into {} intervals without preemption", ivs.len()));
        }
    }
    for (p, ivs) in per_proc.iter_mut().enumerate() {
        ivs.sort_unstable();
        if ivs.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(format!("processor {p} double-booked"));
        }
    }

    // Work conservation: right after every release or completion, either
    // all processors are busy or nothing is waiting.
    let mut points: Vec<Micros> = inst.invocations.iter().map(|i| i.release).collect();
    points.extend(records.iter().map(|r| r.completion));
    points.sort_unstable();
    points.dedup();
    let mut releases: Vec<Micros> = inst.invocations.iter().map(|i| i.release).collect();
    let mut completions: Vec<Micros> = records.iter().map(|r| r.completion).collect();
    let mut starts: Vec<Micros> = trace.intervals.iter().map(|i| i.start).collect();
    let mut ends: Vec<Micros> = trace.intervals.iter().map(|i| i.end).collect();
    releases.sort_unstable();
    completions.sort_unstable();
    starts.sort_unstable();
    ends.sort_unstable();
    let upto = |v: &[Micros], t: Micros| v.partition_point(|&x| x <= t);
    for &t in &points {
        let present = upto(&releases, t) - upto(&completions, t);
        let busy = upto(&starts, t) - upto(&ends, t);
        if busy != present.min(m) {
            return Err(format!("at {t}: {present} present, {busy} busy on {m} processors"));
        }
    }
    for r in &trace.rounds {
        if r.waiting > 0 && r.busy < m {
            return Err(format!("round at {} leaves a processor idle", r.time));
        }
    }
    Ok(())
}

/// CDF of the continuous distribution at a real point, by direct linear
/// interpolation.
pub fn cdf_real(knots: &[Micros; 7], x: f64) -> f64 {
    if x < knots[0] as f64 {
        return 0.0;
    }
    if x >= knots[6] as f64 {
        return 1.0;
    }
    let mut best = 0.0;
    for i in 0..6 {
        let (lo, hi) = (knots[i] as f64, knots[i + 1] as f64);
        let (qlo, qhi) = (
            PERCENTILE_LEVELS[i] as f64 / 100.0,
            PERCENTILE_LEVELS[i + 1] as f64 / 100.0,
        );
        if x >= hi {
            best = qhi;
        } else if x >= lo && hi > lo {
            best = qlo + (qhi - qlo) * (x - lo) / (hi - lo);
            break;
        }
    }
    best
}

/// `P(X < x)`.
pub fn cdf_left(knots: &[Micros; 7], x: Micros) -> f64 {
    if x <= knots[0] {
        return 0.0;
    }
    if x > knots[6] {
        return 1.0;
    }
    for i in 0..6 {
        let (lo, hi) = (knots[i], knots[i + 1]);
        if lo < x && x <= hi {
            let (qlo, qhi) = (
                PERCENTILE_LEVELS[i] as f64 / 100.0,
                PERCENTILE_LEVELS[i + 1] as f64 / 100.0,
            );
            return qlo + (qhi - qlo) * (x - lo) as f64 / (hi - lo) as f64;
        }
    }
    unreachable!()
}

/// Tail integrals `S[x] = sum_{y >= x} P(X > y + 1/2)` for `x` in
/// `0..=max`, i.e. `integral_x^inf P(X > t) dt` by the midpoint rule at 1 µs
/// resolution.
pub fn survival_suffix(knots: &[Micros; 7]) -> Vec<f64> {
    let max = knots[6] as usize;
    let mut s = vec![0.0; max + 1];
    for x in (0..max).rev() {
        s[x] = s[x + 1] + (1.0 - cdf_real(knots, x as f64 + 0.5));
    }
    s
}

pub fn numeric_mean(knots: &[Micros; 7]) -> f64 {
    survival_suffix(knots)[0]
}

/// `E[X - p | X >= p]` by numeric integration.
pub fn numeric_expected_remaining(knots: &[Micros; 7], suffix: &[f64], p: Micros) -> f64 {
    if p >= knots[6] {
        return 0.0;
    }
    suffix[p as usize] / (1.0 - cdf_left(knots, p))
}

/// Two-sided Kolmogorov-Smirnov distance between integer samples produced
/// by half-up rounding and the continuous CDF they were drawn from.
pub fn ks_distance(knots: &[Micros; 7], samples: &mut [Micros]) -> f64 {
    samples.sort_unstable();
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let x = samples[i];
        let j = i + samples[i..].partition_point(|&y| y == x);
        // Rounded value x covers the continuous interval [x - 1/2, x + 1/2).
        let below = i as f64 / n;
        let upto = j as f64 / n;
        let lo = cdf_real(knots, x as f64 - 0.5);
        let hi = cdf_real(knots, x as f64 + 0.5);
        d = d.max((below - lo).abs()).max((upto - hi).abs());
        i = j;
    }
    d
}
