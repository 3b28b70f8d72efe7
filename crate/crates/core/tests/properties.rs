mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use thermal_mor::airflow::{opening_flow, solve_network, FlowSchedule, NetworkConditions, Opening, OpeningEnd};
use thermal_mor::balred::{balance, error_bound, gramians, lyapunov_residual, reduce, select_order};
use thermal_mor::building::assemble_building;
use thermal_mor::experiment::single_zone;
use thermal_mor::statespace::{dc_gain, step, StateSpaceModel};
use thermal_mor::simulation::{simulate_building, FlowSource, SimulationConfig, Strategy as Run};
use thermal_mor::synthetic::{tropical_weather, two_zone};

fn system(seed: u64, n: usize, m: usize, p: usize) -> StateSpaceModel {
    common::random_stable(&mut ChaCha8Rng::seed_from_u64(seed), n, m, p)
}

fn hsv_list() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, 1..12).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gramians_solve_their_equations(seed in any::<u64>(), n in 1usize..15, m in 1usize..3, p in 1usize..3) {
        let sys = system(seed, n, m, p);
        let (wc, wo) = gramians(&sys).unwrap();
        prop_assert!(lyapunov_residual(&sys.a, &wc, &(&sys.b * sys.b.transpose())) < 1e-10);
        prop_assert!(lyapunov_residual(&sys.a.transpose(), &wo, &(sys.c.transpose() * &sys.c)) < 1e-10);
        prop_assert!((&wc - wc.transpose()).amax() <= 1e-10 * wc.amax().max(1e-300));
    }

    #[test]
    fn hsv_sorted_and_nonnegative(seed in any::<u64>(), n in 1usize..15) {
        let bal = balance(&system(seed, n, 1, 1)).unwrap();
        prop_assert!(bal.hsv.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(bal.hsv.iter().all(|&s| s >= 0.0));
        prop_assert_eq!(bal.hsv.len(), n);
    }

    #[test]
    fn reduction_keeps_dc_gain_and_reports_its_bound(seed in any::<u64>(), n in 2usize..15, eps in 0.0f64..1.0) {
        let sys = system(seed, n, 2, 2);
        let red = reduce(&sys, eps).unwrap();
        let g = dc_gain(&sys).unwrap();
        prop_assert!(common::rel_max_diff(&dc_gain(&red.model).unwrap(), &g) <= 1e-8);
        prop_assert!((red.bound - error_bound(&red.hsv, red.nr).unwrap()).abs() == 0.0);
        prop_assert!(red.nr >= 1 && red.nr <= n);
    }

    #[test]
    fn select_order_is_monotone(hsv in hsv_list(), e1 in 0.0f64..10.0, e2 in 0.0f64..10.0) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(select_order(&hsv, hi).unwrap() <= select_order(&hsv, lo).unwrap());
    }

    #[test]
    fn bound_shrinks_with_order(hsv in hsv_list()) {
        for nr in 1..hsv.len() {
            prop_assert!(error_bound(&hsv, nr + 1).unwrap() <= error_bound(&hsv, nr).unwrap());
        }
        prop_assert_eq!(error_bound(&hsv, hsv.len()).unwrap(), 0.0);
    }

    #[test]
    fn implicit_euler_keeps_fixed_points(seed in any::<u64>(), n in 1usize..10, dt in 1.0f64..7200.0) {
        let sys = system(seed, n, 2, 1);
        let u = DVector::from_vec(vec![0.7, -1.3]);
        let x = sys.steady_state(&u).unwrap();
        let (x1, _) = step(&sys, &x, &u, dt).unwrap();
        prop_assert!((x1 - &x).amax() <= 1e-9 * x.amax().max(1.0));
    }

    #[test]
    fn implicit_euler_decays_symmetric_systems(seed in any::<u64>(), n in 1usize..10, dt in 0.01f64..1e4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_stable(&mut rng, n, 1, 1).a;
        let a = -(&g * g.transpose()) - DMatrix::identity(n, n) * 1e-3;
        let sys = StateSpaceModel::with_state_output(a, DMatrix::zeros(n, 1)).unwrap();
        let mut x = DVector::from_fn(n, |i, _| (i as f64 + 1.0).sin());
        let u = DVector::zeros(1);
        for _ in 0..5 {
            let (next, _) = step(&sys, &x, &u, dt).unwrap();
            prop_assert!(next.norm() <= x.norm() * (1.0 + 1e-12));
            x = next;
        }
    }

    #[test]
    fn opening_flow_is_odd_and_monotone(dp in -50.0f64..50.0, d in 0.0f64..5.0, exponent in 0.5f64..1.0) {
        let o = Opening {
            id: "o".into(),
            from: OpeningEnd::Exterior,
            to: OpeningEnd::Zone(0),
            cd: 0.6,
            area: 0.5,
            height: 1.0,
            cp: 0.0,
            azimuth_deg: 0.0,
            exponent,
        };
        prop_assert_eq!(opening_flow(&o, -dp, 1.2), -opening_flow(&o, dp, 1.2));
        prop_assert!(opening_flow(&o, dp + d, 1.2) >= opening_flow(&o, dp, 1.2));
    }

    #[test]
    fn network_solutions_balance_mass(
        ta in 15.0f64..35.0,
        tb in 15.0f64..35.0,
        t_ext in 15.0f64..35.0,
        wind in 0.0f64..8.0,
        dir in 0.0f64..360.0,
    ) {
        let model = assemble_building(&two_zone(true)).unwrap();
        let cond = NetworkConditions {
            zone_temperatures: &[ta, tb],
            outdoor_temperature: t_ext,
            wind_speed: wind,
            wind_direction: dir,
        };
        let s = solve_network(&model.openings, 2, &cond, None).unwrap();
        let mut net = [0.0f64; 2];
        for (o, m) in model.openings.iter().zip(&s.flows) {
            if let OpeningEnd::Zone(i) = o.from { net[i] -= m; }
            if let OpeningEnd::Zone(i) = o.to { net[i] += m; }
        }
        prop_assert!(net.iter().all(|v| v.abs() <= 1e-9), "{net:?}");
    }
}

fn separate_iterations(door: f64, exterior: f64) -> Vec<usize> {
    let model = assemble_building(&two_zone(true)).unwrap();
    let weather = tropical_weather(2);
    let links: Vec<String> = model.openings.iter().map(|o| o.id.clone()).collect();
    let records: Vec<(f64, String, f64)> = links
        .iter()
        .map(|id| (weather.start(), id.clone(), if id == "door" { door } else { exterior }))
        .collect();
    let source = FlowSource::Schedule(FlowSchedule::from_records(&links, &records).unwrap());
    let cfg = SimulationConfig { iteration_eps: 1e-4, ..SimulationConfig::with_strategy(Run::Separate) };
    simulate_building(&model, &weather, &source, &cfg).unwrap().fixed_point_iterations
}

/// Envelope-air conductance far below the air capacity per step.
#[test]
fn weak_coupling_converges_fast() {
    let mut desc = single_zone(10).unwrap();
    desc.zones[0].h_int = 0.5;
    desc.zones[0].internal_capacity = 2.0e6;
    let model = assemble_building(&desc).unwrap();
    let weather = tropical_weather(2);
    let records = [(weather.start(), "vent".to_string(), 0.01)];
    let source = FlowSource::Schedule(FlowSchedule::from_records(&["vent".to_string()], &records).unwrap());
    let cfg = SimulationConfig { iteration_eps: 1e-4, ..SimulationConfig::with_strategy(Run::Separate) };
    let its = simulate_building(&model, &weather, &source, &cfg).unwrap().fixed_point_iterations;
    assert!(its.iter().all(|&k| k <= 5), "{:?}", its.iter().max());
}

/// Less air exchange weakens the damping of the air node against the envelope,
/// so the count creeps up as the flow halves; it must stay bounded.
#[test]
fn iterations_stay_bounded_as_interzone_flow_halves() {
    let totals: Vec<usize> = [0.2, 0.1, 0.05].iter().map(|&q| separate_iterations(q, 0.05).iter().sum()).collect();
    assert!(totals.iter().all(|&t| t <= 48 * 10), "{totals:?}");
}
