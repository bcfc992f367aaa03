use std::f64::consts::TAU;

use irs_mec::harness::{preset, run_experiment, write_rows, ExperimentConfig, Format, RunOptions};
use irs_mec::scenario::{Placement, Scenario};
use irs_mec::solver::{
    evaluate_solution, quantize_angle, solve_multi_device, solve_scheme, Quantization, Scheme, SolverOptions,
};
use proptest::prelude::*;

fn two_device_cfg(n: usize) -> ExperimentConfig {
    let mut cfg = preset("default-two").unwrap();
    cfg.system.irs_elements = n;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_solution_is_feasible_and_reevaluates_exactly(
        seed in any::<u64>(),
        n in 0usize..12,
        k in 1usize..4,
        scheme_idx in 0usize..3,
    ) {
        let mut cfg = preset("fig12").unwrap();
        cfg.sweep = None;
        cfg.system.devices = k;
        cfg.system.irs_elements = n;
        let spec = cfg.points().unwrap().remove(0).spec;
        let sc = Scenario::generate(&spec, seed).unwrap();
        let scheme = Scheme::ALL[scheme_idx];
        let sol = solve_scheme(scheme, &sc.channels, &sc.tasks, &sc.config, &cfg.solver_options(seed)).unwrap();
        prop_assert!(sol.check_feasible(&sc.tasks).is_ok());
        let (_, rep) = evaluate_solution(sol.theta.as_ref(), &sol.w, &sol.allocation, &sc.channels, &sc.tasks, &sc.config)
            .unwrap();
        prop_assert_eq!(rep, sol.latency.clone());
        for p in sol.objective_trace.windows(2) {
            prop_assert!(p[1] <= p[0] * (1.0 + 1e-12));
        }
        // No scheme may do worse than computing everything locally.
        let local: f64 = sc.tasks.tasks.iter().zip(&sc.config.weights)
            .map(|(t, w)| w * t.load() * t.cycles_per_bit / t.local_cps)
            .sum();
        prop_assert!(sol.objective() <= local * (1.0 + 1e-12));
    }

    #[test]
    fn quantized_angle_is_the_nearest_codeword(theta in 0.0..TAU, bits in 1u8..5) {
        let q = quantize_angle(theta, bits);
        let step = TAU / f64::from(1u32 << bits);
        let idx = q / step;
        prop_assert!((idx - idx.round()).abs() < 1e-12);
        let d = (theta - q).abs();
        let d = d.min(TAU - d);
        prop_assert!(d <= step / 2.0 + 1e-12);
    }
}

#[test]
fn identical_colocated_devices_fare_alike_on_average() {
    let mut cfg = two_device_cfg(10);
    cfg.geometry.placement = Placement::Explicit {
        offsets: vec![[280.0, 10.0]],
    };
    let spec = cfg.points().unwrap().remove(0).spec;
    let (mut a, mut b) = (0.0, 0.0);
    let runs = 100;
    for s in 0..runs {
        let seed = cfg.seed(0, s);
        let sc = Scenario::generate(&spec, seed).unwrap();
        let sol = solve_multi_device(&sc.channels, &sc.tasks, &sc.config, &cfg.solver_options(seed)).unwrap();
        a += sol.latency.total[0];
        b += sol.latency.total[1];
    }
    let (a, b) = (a / runs as f64, b / runs as f64);
    assert!((a - b).abs() <= 0.05 * (a + b) / 2.0, "{a} vs {b}");
}

#[test]
fn more_elements_never_hurt_on_average() {
    let cfg = ExperimentConfig {
        realizations: 100,
        schemes: vec![Scheme::WithIrs],
        paired_realizations: true,
        ..preset("fig7").unwrap()
    };
    let rows = run_experiment(&cfg, RunOptions::default()).unwrap();
    let means: Vec<f64> = cfg
        .sweep
        .as_ref()
        .unwrap()
        .values
        .iter()
        .map(|&v| irs_mec::harness::mean_latency(&rows, v, Scheme::WithIrs, Quantization::Continuous))
        .collect();
    assert!(means.windows(2).all(|p| p[1] <= p[0]), "{means:?}");
}

#[test]
fn thousand_rows_are_byte_stable() {
    let cfg = ExperimentConfig {
        realizations: 125,
        sweep: Some(irs_mec::harness::Sweep {
            param: irs_mec::harness::SweepParam::FeTotal,
            values: vec![1e10, 2e10, 3e10, 4e10, 5e10, 6e10, 7e10, 8e10],
        }),
        schemes: vec![Scheme::WithIrs],
        system: irs_mec::harness::SystemBlock {
            irs_elements: 8,
            ..Default::default()
        },
        ..ExperimentConfig::default()
    };
    let render = |workers| {
        let rows = run_experiment(&cfg, RunOptions { workers: Some(workers), timing: false }).unwrap();
        assert_eq!(rows.len(), 1000);
        let mut out = Vec::new();
        write_rows(&rows, &mut out, Format::Csv).unwrap();
        out
    };
    let first = render(1);
    assert_eq!(first, render(3));
    assert_eq!(first, render(1));
}

#[test]
fn multistart_never_loses() {
    let cfg = two_device_cfg(6);
    let spec = cfg.points().unwrap().remove(0).spec;
    for s in 0..5 {
        let seed = cfg.seed(0, s);
        let sc = Scenario::generate(&spec, seed).unwrap();
        let one = solve_multi_device(&sc.channels, &sc.tasks, &sc.config, &cfg.solver_options(seed)).unwrap();
        let many = solve_multi_device(
            &sc.channels,
            &sc.tasks,
            &sc.config,
            &SolverOptions {
                multistart: 4,
                ..cfg.solver_options(seed)
            },
        )
        .unwrap();
        assert!(many.objective() <= one.objective());
    }
}
