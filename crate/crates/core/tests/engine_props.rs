mod common;

use common::*;
use faas_sched::engine::{simulate, simulate_rr, simulate_traced};
use faas_sched::model::{Instance, Micros};
use faas_sched::policy::{default_policies, PolicySpec};
use faas_sched::seed;
use proptest::prelude::*;

fn jobs(max_n: usize, max_r: Micros, max_p: Micros) -> impl Strategy<Value = Vec<(Micros, Micros)>> {
    prop::collection::vec((0..=max_r, 1..=max_p), 1..=max_n)
}

fn total_flow(inst: &Instance, spec: &PolicySpec) -> Micros {
    simulate(inst, spec).unwrap().iter().map(|r| r.flow()).sum()
}

fn scaled(jobs: &[(Micros, Micros)], k: Micros) -> Vec<(Micros, Micros)> {
    jobs.iter().map(|&(r, p)| (r * k, p * k)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn srpt_total_flow_is_optimal_on_one_processor(jobs in jobs(6, 30, 25)) {
        let inst = instance_from(1, &jobs);
        let sorted: Vec<_> = inst.invocations.iter().map(|i| (i.release, i.processing)).collect();
        prop_assert_eq!(total_flow(&inst, &PolicySpec::srpt()), brute_force_total_flow(&sorted));
    }

    #[test]
    fn srpt_beats_every_policy_on_one_processor(jobs in jobs(40, 5_000, 3_000)) {
        let inst = instance_from(1, &jobs);
        let best = total_flow(&inst, &PolicySpec::srpt());
        for spec in default_policies() {
            prop_assert!(best <= total_flow(&inst, &spec), "{} beat SRPT", spec);
        }
    }

    #[test]
    fn completion_times_scale_with_time_units(
        jobs in jobs(30, 2_000, 2_000),
        m in 1usize..4,
        k in 2u64..6,
    ) {
        let a = instance_from(m, &jobs);
        let b = instance_from(m, &scaled(&jobs, k));
        let specs = ["fifo", "spt", "srpt", "sept:re", "serpt:re", "serpt:re-lim:3"];
        for spec in specs.iter().map(|s| s.parse::<PolicySpec>().unwrap()) {
            let x = simulate(&a, &spec).unwrap();
            let y = simulate(&b, &spec).unwrap();
            for (u, v) in x.iter().zip(&y) {
                prop_assert_eq!(u.completion * k, v.completion, "{}", spec);
            }
        }
        let x = simulate_rr(&a, 300).unwrap();
        let y = simulate_rr(&b, 300 * k).unwrap();
        for (u, v) in x.iter().zip(&y) {
            prop_assert_eq!(u.completion * k, v.completion);
        }
    }

    #[test]
    fn every_policy_produces_a_valid_schedule(
        case_seed in any::<u64>(),
        m in 1usize..6,
        n in 1usize..150,
        functions in 1usize..5,
    ) {
        let mut rng = seed::rng(case_seed);
        let inst = random_instance(&mut rng, m, n, functions, 2);
        for spec in default_policies() {
            let (records, trace) = simulate_traced(&inst, &spec).unwrap();
            prop_assert_eq!(check_schedule(&inst, &spec, &records, &trace), Ok(()), "{}", spec);
            prop_assert_eq!(&simulate(&inst, &spec).unwrap(), &records, "{} traced run differs", spec);
        }
    }

    #[test]
    fn extra_processors_never_hurt_fifo(jobs in jobs(40, 5_000, 3_000), m in 1usize..5) {
        let a = instance_from(m, &jobs);
        let b = instance_from(m + 1, &jobs);
        let x = simulate(&a, &PolicySpec::fifo()).unwrap();
        let y = simulate(&b, &PolicySpec::fifo()).unwrap();
        for (u, v) in x.iter().zip(&y) {
            prop_assert!(v.completion <= u.completion);
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let mut rng = seed::rng(9);
    let inst = random_instance(&mut rng, 3, 400, 4, 3);
    for spec in default_policies() {
        assert_eq!(
            simulate(&inst, &spec).unwrap(),
            simulate(&inst, &spec).unwrap(),
            "{spec}"
        );
    }
}

#[test]
fn two_jobs_on_one_processor() {
    let inst = instance_from(1, &[(0, 10 * MS), (0, 5 * MS)]);
    let flows = |spec: &str| -> Vec<Micros> {
        simulate(&inst, &spec.parse().unwrap())
            .unwrap()
            .iter()
            .map(|r| r.flow())
            .collect()
    };
    assert_eq!(flows("fifo"), vec![10 * MS, 15 * MS]);
    assert_eq!(flows("spt"), vec![15 * MS, 5 * MS]);
    assert_eq!(flows("srpt"), vec![15 * MS, 5 * MS]);
    assert_eq!(flows("rr:5ms"), vec![15 * MS, 10 * MS]);
}
