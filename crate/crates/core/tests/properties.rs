use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use tcl4::bath::{build_tables, Cutoff, Mode, SpectralDensity};
use tcl4::benchmark::{split_trace_distance, time_avg_trace_distance, Samples};
use tcl4::generators::{apply, generator_series, hermiticity_defect, trace_defect, SystemModel};
use tcl4::propagation::{initial_state, propagate, trace_distance, DensityMatrix};

/// Random pure or mixed qubit state from a Bloch vector inside the unit ball.
fn state() -> impl Strategy<Value = DensityMatrix> {
    (0.0..=1.0f64, 0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(r, th, ph)| {
        let (x, y, z) = (r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos());
        DensityMatrix(Matrix2::new(
            C64::new(0.5 * (1.0 + z), 0.0),
            C64::new(0.5 * x, -0.5 * y),
            C64::new(0.5 * x, 0.5 * y),
            C64::new(0.5 * (1.0 - z), 0.0),
        ))
    })
}

fn modes() -> Vec<Mode> {
    [0.6, 1.0, 1.5, 2.2].iter().map(|&omega| Mode { omega, g: 0.08 }).collect()
}

proptest! {
    #[test]
    fn trace_distance_is_a_bounded_metric(a in state(), b in state(), c in state()) {
        let ab = trace_distance(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&ab));
        prop_assert!((ab - trace_distance(&b, &a)).abs() < 1e-15);
        prop_assert!(ab <= trace_distance(&a, &c) + trace_distance(&c, &b) + 1e-14);
        let (p, q) = split_trace_distance(&a, &b);
        prop_assert!(p >= 0.0 && q >= 0.0 && p + q >= ab - 1e-14);
    }

    #[test]
    fn time_average_below_grid_maximum(v in prop::collection::vec(state(), 2..40), w in prop::collection::vec(state(), 40)) {
        let n = v.len();
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let a = Samples { times: times.clone(), states: v };
        let b = Samples { times, states: w[..n].to_vec() };
        let t_end = (n - 1) as f64 * 0.1;
        let avg = time_avg_trace_distance(&a, &b, t_end).unwrap();
        let max = a.states.iter().zip(&b.states).map(|(x, y)| trace_distance(x, y)).fold(0.0, f64::max);
        prop_assert!(avg >= 0.0 && avg <= max + 1e-14);
    }

    #[test]
    fn kms_detailed_balance(omega in 0.05..20.0f64, temperature in 0.1..20.0f64) {
        let sd = SpectralDensity::ohmic(Cutoff::Drude, 1.0, 10.0, temperature).unwrap();
        let ratio = sd.thermal_noise_weight(-omega).unwrap() / sd.thermal_noise_weight(omega).unwrap();
        let expected = (-omega / temperature).exp();
        prop_assert!((ratio - expected).abs() <= 1e-12 * expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generators_preserve_trace_and_hermiticity(theta in 0.0..std::f64::consts::FRAC_PI_2, temperature in 0.0..3.0f64) {
        let sd = SpectralDensity::discrete(modes(), temperature).unwrap();
        let sys = SystemModel::new(theta).unwrap();
        let gt = build_tables(&sd, 0.1, 40, &sys.bohr_frequencies(), None).unwrap();
        let series = generator_series(&sys, &gt, 4).unwrap();
        for j in (0..=40).step_by(8) {
            for l in [&series.l2[j], &series.l4[j], &series.total[j]] {
                prop_assert!(trace_defect(l) < 1e-12);
                prop_assert!(hermiticity_defect(l) < 1e-12);
            }
        }
        let tr = propagate(&series, &initial_state(theta).unwrap()).unwrap();
        for rho in &tr.states {
            prop_assert!((rho.trace() - 1.0).norm() < 1e-10);
            prop_assert!((rho.0 - rho.0.adjoint()).norm() < 1e-10);
        }
    }

    #[test]
    fn generators_are_homogeneous_in_coupling(theta in 0.0..std::f64::consts::FRAC_PI_2, s in 0.1..10.0f64) {
        let sd = SpectralDensity::discrete(modes(), 0.5).unwrap();
        let sys = SystemModel::new(theta).unwrap();
        let freqs = sys.bohr_frequencies();
        let base = generator_series(&sys, &build_tables(&sd, 0.1, 30, &freqs, None).unwrap(), 4).unwrap();
        let scaled = generator_series(&sys, &build_tables(&sd.scaled(s), 0.1, 30, &freqs, None).unwrap(), 4).unwrap();
        let j = 30;
        prop_assert!((scaled.l2[j] - base.l2[j] * C64::from(s)).norm() <= 1e-12 * s * base.l2[j].norm());
        prop_assert!((scaled.l4[j] - base.l4[j] * C64::from(s * s)).norm() <= 1e-12 * s * s * base.l4[j].norm());
        let rho = initial_state(theta).unwrap().0;
        prop_assert!(apply(&base.l2[j], &rho).trace().norm() < 1e-12);
    }
}
