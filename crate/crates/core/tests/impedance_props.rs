mod common;

use common::TABLE_ROWS;
use imprag::exec::Execution;
use imprag::impedance::*;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.02;

fn table_params(k: f64, d: f64) -> ImpedanceParams {
    ImpedanceParams::from_gains(Vector3::repeat(k), Vector3::repeat(d)).unwrap()
}

fn random_draws(n: usize, seed: u64) -> Vec<ImpedanceParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let k = rng.random_range(1.0..10.0);
            let d = rng.random_range(0.5..5.0);
            let m = rng.random_range(0.5..2.0);
            ImpedanceParams::uniform(m, d, k).unwrap()
        })
        .collect()
}

#[test]
fn oracle_sweep_random_and_table_rows() {
    let e0 = Vector3::repeat(0.05);
    let mut params = random_draws(100, 7);
    params.extend(TABLE_ROWS.iter().map(|&(_, k, d)| table_params(k, d)));
    let worst = Execution::Parallel
        .map(&params, |p| oracle_deviation(p, &e0, &Vector3::zeros(), DT, 10.0).unwrap())
        .into_iter()
        .fold(0.0, f64::max);
    assert!(worst <= 2e-3, "worst deviation {worst}");
}

#[test]
fn oracle_sweep_is_execution_independent() {
    let e0 = Vector3::new(0.05, -0.02, 0.01);
    let params = random_draws(20, 11);
    let f = |p: &ImpedanceParams| oracle_deviation(p, &e0, &Vector3::new(0.0, 0.1, 0.0), DT, 5.0).unwrap();
    assert_eq!(Execution::Sequential.map(&params, f), Execution::Parallel.map(&params, f));
}

#[test]
fn passivity_on_table_rows() {
    for (task, k, d) in TABLE_ROWS {
        let p = table_params(k, d);
        let trace = integrate_free_response(&p, &Vector3::new(0.05, -0.03, 0.02), &Vector3::new(0.0, 0.1, -0.2), DT, 10.0)
            .unwrap();
        for w in trace.windows(2) {
            let (e0, ed0) = (w[0].1, w[0].2);
            let (e1, ed1) = (w[1].1, w[1].2);
            assert!(
                error_energy(&p, &e1, &ed1) <= error_energy(&p, &e0, &ed0) + 1e-12,
                "{task}: energy rose at t = {}",
                w[1].0
            );
        }
    }
}

#[test]
fn critically_damped_closed_form() {
    let e = free_response_axis(1.0, 2.0, 1.0, 1.0, 0.0, 1.0);
    assert!((e - 2.0 / std::f64::consts::E).abs() < 1e-12);
    assert!((free_response_axis(1.0, 2.0, 1.0, 1.0, 0.0, 1.0) - 0.7358).abs() < 1e-4);
    assert_eq!(free_response_axis(0.7, 0.3, 4.0, 0.123, 0.5, 0.0), 0.123);
}

/// Slowest decay rate of `m ë + d ė + k e = 0`.
fn slowest_rate(m: f64, d: f64, k: f64) -> f64 {
    let alpha = d / (2.0 * m);
    let disc = d * d - 4.0 * m * k;
    if disc > 0.0 {
        alpha - disc.sqrt() / (2.0 * m)
    } else {
        alpha
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decays_below_a_thousandth_after_ten_time_constants(
        m in 0.1f64..5.0, d in 0.05f64..20.0, k in 0.05f64..50.0, e0 in -1.0f64..1.0,
    ) {
        let t = 10.0 / slowest_rate(m, d, k);
        let e = free_response_axis(m, d, k, e0, 0.0, t);
        prop_assert!(e.abs() <= 1e-3 * e0.abs() + 1e-300, "e({t}) = {e}");
    }

    #[test]
    fn passivity_on_random_draws(
        m in 0.5f64..2.0, d in 0.5f64..5.0, k in 1.0f64..10.0,
        e0 in -0.1f64..0.1, ed0 in -0.5f64..0.5,
    ) {
        let p = ImpedanceParams::uniform(m, d, k).unwrap();
        let trace = integrate_free_response(&p, &Vector3::repeat(e0), &Vector3::repeat(ed0), DT, 3.0).unwrap();
        for w in trace.windows(2) {
            let before = error_energy(&p, &w[0].1, &w[0].2);
            let after = error_energy(&p, &w[1].1, &w[1].2);
            prop_assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn axes_stay_decoupled(axis in 0usize..3, e0 in -0.1f64..0.1, ed0 in -0.3f64..0.3, steps in 1usize..300) {
        let p = ImpedanceParams::new(Vector3::new(1.0, 0.7, 1.3), Vector3::new(2.0, 1.0, 3.0), Vector3::new(3.0, 5.0, 2.0)).unwrap();
        let mut e = Vector3::zeros();
        let mut ed = Vector3::zeros();
        e[axis] = e0;
        ed[axis] = ed0;
        let trace = integrate_free_response(&p, &e, &ed, DT, steps as f64 * DT).unwrap();
        for (_, e, ed) in trace {
            for j in (0..3).filter(|&j| j != axis) {
                prop_assert_eq!(e[j], 0.0);
                prop_assert_eq!(ed[j], 0.0);
            }
        }
    }

    #[test]
    fn virtual_force_is_homogeneous(
        lambda in -10.0f64..10.0,
        e in prop::array::uniform3(-1.0f64..1.0),
        ed in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let p = table_params(4.0, 1.5);
        let (e, ed) = (Vector3::from(e), Vector3::from(ed));
        let scaled = virtual_force(&p, &(e * lambda), &(ed * lambda)).force;
        let expected = virtual_force(&p, &e, &ed).force * lambda;
        prop_assert!((scaled - expected).amax() <= 1e-12 * (1.0 + expected.amax()));
    }

    #[test]
    fn integrator_matches_oracle_for_small_steps(
        m in 0.5f64..2.0, d in 0.5f64..5.0, k in 1.0f64..10.0,
    ) {
        let p = ImpedanceParams::uniform(m, d, k).unwrap();
        let dev = oracle_deviation(&p, &Vector3::repeat(0.05), &Vector3::zeros(), 0.002, 5.0).unwrap();
        prop_assert!(dev <= 3e-4, "{dev}");
    }
}
