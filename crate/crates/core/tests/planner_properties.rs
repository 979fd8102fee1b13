use coreplan::planner::{self, allocate, plan_ideal, plan_real, slot_cores, PlanConfig, SamplePolicy};
use coreplan::workload::preprocess_virtual;
use coreplan::Error;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use proptest::prelude::*;

/// `ceil(z^2 p (1 - p) / e^2)` on the exact binary values of the inputs.
fn exact_sample_size(z: f64, p: f64, e: f64) -> BigInt {
    let exact = |x: f64| BigRational::from_float(x).unwrap();
    let (z, p, e) = (exact(z), exact(p), exact(e));
    (&z * &z * &p * (BigRational::one() - &p) / (&e * &e)).ceil().to_integer()
}

fn durations() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(1_000_000u64..3_000_000_000, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sample_size_is_the_exact_ceiling(z in 0.5f64..4.0, p in 0.01f64..0.99, e in 0.005f64..0.5) {
        let got = planner::sample_size(z, p, e).unwrap();
        let raw = z * z * p * (1.0 - p) / (e * e);
        // the guarded ceiling snaps values within 1e-9 of an integer
        prop_assume!((raw - raw.round()).abs() > 1e-6 * raw.max(1.0));
        prop_assert_eq!(BigInt::from(got), exact_sample_size(z, p, e).max(BigInt::from(1)));
    }

    #[test]
    fn real_plans_are_valid_and_shrink_with_d(
        sample in durations(),
        extra in 1usize..2_000,
        deadline in 1.0f64..500.0,
        c in 1usize..4,
    ) {
        let s = sample.len();
        let x = s + extra;
        let stats = preprocess_virtual(&sample, s, c, 2.0).unwrap();
        let mut last_k = 0;
        for d in [1.0, 0.95, 0.9, 0.85, 0.7, 0.5] {
            let mut config = PlanConfig::new(x, deadline);
            config.d = d;
            config.c = c;
            match plan_real(&config, &stats) {
                Ok(plan) => {
                    plan.validate().unwrap();
                    prop_assert!(plan.k >= last_k, "k fell from {} to {} at d={}", last_k, plan.k, d);
                    prop_assert!(plan.ell as f64 * stats.t_avg() <= d * deadline - stats.t_pre() + 1e-9);
                    prop_assert!((plan.ell + 1) as f64 * stats.t_avg() > d * deadline - stats.t_pre() - 1e-9);
                    last_k = plan.k;
                }
                Err(Error::Infeasible(_)) => {
                    // once infeasible, every smaller d is too
                    last_k = usize::MAX;
                }
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn resource_gate_is_the_lemma_ceiling(sample in durations(), extra in 1usize..500, deadline in 1.0f64..100.0) {
        let s = sample.len();
        let x = s + extra;
        let stats = preprocess_virtual(&sample, s, 1, 2.0).unwrap();
        let Ok(lemma) = planner::lemma1_bound(x, deadline, stats.t_max()) else {
            return Ok(());
        };
        let needed = lemma.ceil() as usize;
        for c_max in [needed.saturating_sub(1).max(1), needed] {
            let mut config = PlanConfig::new(x, deadline);
            config.c_max = Some(c_max);
            match plan_real(&config, &stats) {
                Err(Error::ResourceGate { available, required }) => {
                    prop_assert!(c_max < needed);
                    prop_assert_eq!((available, required), (c_max, needed));
                }
                _ => prop_assert!(c_max >= needed),
            }
        }
    }

    #[test]
    fn ideal_plans_finish_by_the_deadline(
        x in 2usize..5_000,
        s_frac in 0.0f64..1.0,
        t_ms in 1u64..5_000,
        slots in 1usize..60,
        slack in 0.0f64..0.999,
    ) {
        let s = 1 + ((x - 1) as f64 * s_frac) as usize % (x - 1);
        let t = t_ms as f64 / 1000.0;
        let deadline = t * (1.0 + slots as f64 + slack);
        let plan = plan_ideal(x, deadline, s, t).unwrap();
        plan.validate().unwrap();
        prop_assert_eq!(plan.ell, slots);
        prop_assert!(t + plan.ell as f64 * t <= deadline * (1.0 + 1e-12));
        prop_assert_eq!(plan.required_cores, plan.k.max(s));
    }
}

#[test]
fn hoeffding_bound_exceeds_the_mean_rate() {
    for k in [1, 10, 100, 10_000] {
        let b = planner::hoeffding_bound(1000, 100.0, 1.0, 2.0, k, 0.05).unwrap();
        assert!(b > 10.0);
    }
    let loose = planner::hoeffding_bound(1000, 100.0, 1.0, 2.0, 10, 0.05).unwrap();
    let tight = planner::hoeffding_bound(1000, 100.0, 1.0, 2.0, 1000, 0.05).unwrap();
    assert!(tight < loose);
}

#[test]
fn slot_cores_matches_integer_division() {
    for x in 2..200 {
        for s in 1..x {
            for ell in 1..=(x - s) {
                let k = slot_cores(x, s, ell).unwrap();
                let rest = x - s;
                assert!((k - 1) * ell < rest && rest <= k * ell);
            }
        }
    }
    assert!(slot_cores(5, 5, 1).is_err());
    assert!(slot_cores(5, 1, 0).is_err());
}

#[test]
fn allocate_rejects_overfull_slots() {
    let q: Vec<usize> = (0..10).collect();
    assert!(matches!(allocate(&q, 3, 3), Err(Error::Internal(_))));
    let slots = allocate(&q, 4, 3).unwrap();
    assert_eq!(slots.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
    let empty_tail = allocate(&q, 6, 2).unwrap();
    assert!(empty_tail[5].is_empty());
}

#[test]
fn fraction_policy_rounds_up() {
    let mut config = PlanConfig::new(1000, 100.0);
    config.sample_policy = SamplePolicy::Fraction { f: 0.05 };
    assert_eq!(config.sample_count().unwrap(), 50);
    assert_eq!(config.sample_count_for(210).unwrap(), 11);
    assert_eq!(config.sample_count_for(1).unwrap(), 1);
}

#[test]
fn exact_ceiling_helper_on_tabulated_inputs() {
    assert_eq!(exact_sample_size(2.576, 0.5, 0.05), BigInt::from(664));
    assert_eq!(exact_sample_size(1.96, 0.5, 0.05), BigInt::from(385));
}
