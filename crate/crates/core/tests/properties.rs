//! Property tests over the model, modulator, observers and analysis.

use flycap::analysis::{build_matrices, check_condition16, pe_check};
use flycap::converter::{dynamics, system_matrices, ConverterParams, ModeVector, PlantState};
use flycap::observability::{default_z, z_observability_check};
use flycap::sosml::{observer_step, SosmlParams, SosmlState};
use flycap::switching::{trajectory_from_pwm, HybridTimeTrajectory, PwmConfig};
use nalgebra::Matrix3;
use proptest::prelude::*;

fn arb_params(cells: usize) -> impl Strategy<Value = ConverterParams> {
    (
        1.0..1000.0f64,
        0.1..1000.0f64,
        1e-4..1.0f64,
        prop::collection::vec(1e-6..1e-3f64, cells - 1),
    )
        .prop_map(|(e, r, l, c)| ConverterParams::new(e, r, l, c).unwrap())
}

fn arb_mode(cells: usize) -> impl Strategy<Value = ModeVector> {
    (0..1usize << cells).prop_map(move |i| ModeVector::from_index(i, cells).unwrap())
}

fn arb_pwm() -> impl Strategy<Value = PwmConfig> {
    (
        100.0..20_000.0f64,
        prop::collection::vec(0.0..=1.0f64, 3),
        0.0..1.0f64,
        prop::option::of(1e-7..2e-5f64),
    )
        .prop_map(|(f, d, s, u)| PwmConfig::new(f, d, s, u).unwrap())
}

/// Leading principal minors, scaled to the diagonal so the test does not
/// depend on the magnitude of the entries.
fn sylvester_positive(m: &Matrix3<f64>) -> bool {
    let d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    if d.iter().any(|&x| x.is_nan() || x <= 0.0) {
        return false;
    }
    let s = Matrix3::from_fn(|i, j| m[(i, j)] / (d[i] * d[j]).sqrt());
    let m2 = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    m2 > 0.0 && s.determinant() > 0.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn dynamics_equal_affine_form(
        params in (2usize..6).prop_flat_map(arb_params),
        seed in any::<u64>(),
        i in -50.0..50.0f64,
    ) {
        let p = params.cells();
        let mode = ModeVector::from_index(seed as usize % (1 << p), p).unwrap();
        let voltages: Vec<f64> = (0..p - 1).map(|j| ((seed >> (8 * j)) & 0xff) as f64 - 20.0).collect();
        let x = PlantState::new(i, voltages, 0.0);
        let direct = dynamics(&x, &mode, &params).unwrap();
        let affine = system_matrices(&mode, &params).unwrap().rhs(&x.to_vector());
        for k in 0..p {
            let scale = 1.0 + direct[k].abs();
            prop_assert!((direct[k] - affine[k]).abs() <= 1e-12 * scale, "row {}: {} vs {}", k, direct[k], affine[k]);
        }
    }

    #[test]
    fn certified_gains_give_positive_definite_matrices(
        l0 in 1e-3..1e3f64,
        a0 in 1e-3..1e3f64,
        kl in 1e-3..1e3f64,
        r in 1e-6..1e6f64,
    ) {
        let mut prm = SosmlParams::published();
        prm.lambda0 = l0;
        prm.alpha0 = a0;
        prm.k_lambda0 = kl;
        prm.k_alpha0 = (8.0 * kl * kl * a0 + 9.0 * l0 * l0 * kl * kl) / (4.0 * a0) * (1.0 + r);
        prop_assume!(check_condition16(&prm).pass);
        let m = build_matrices(&prm);
        prop_assert!(sylvester_positive(&m.p));
        prop_assert!(sylvester_positive(&m.omega1));
        prop_assert!(sylvester_positive(&m.omega2));
    }

    #[test]
    fn gains_scale_with_l(l in 1e-3..1e6f64, c in 1e-3..1e3f64) {
        let prm = SosmlParams::published();
        let [a, b, k1, k2] = prm.gains_at(l);
        let [a2, b2, k12, k22] = prm.gains_at(c * l);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs();
        prop_assert!(close(a2, a * c.sqrt()));
        prop_assert!(close(b2, b * c));
        prop_assert!(close(k12, k1 * c));
        prop_assert!(close(k22, k2 * c * c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pwm_is_periodic(pwm in arb_pwm(), t in 0.0..0.1f64) {
        // periodicity only holds when the update grid divides the period
        let pwm = PwmConfig::new(pwm.carrier_frequency(), pwm.duty().to_vec(), pwm.phase_shift(), None).unwrap();
        let t2 = t + 7.0 * pwm.period();
        let near_edge = (0..3).any(|j| {
            let c = pwm.carrier(t, j);
            let d = pwm.duty()[j];
            c.min(1.0 - c) < 1e-9 || (c - d).abs() < 1e-9
        });
        prop_assume!(!near_edge);
        prop_assert_eq!(pwm.mode_at(t), pwm.mode_at(t2));
    }

    #[test]
    fn trajectory_is_contiguous_and_modes_constant(pwm in arb_pwm(), t0 in 0.0..1e-3f64, span in 1e-5..1e-3f64) {
        let traj = trajectory_from_pwm(&pwm, t0, t0 + span).unwrap();
        let iv = traj.intervals();
        prop_assert_eq!(iv[0].start, t0);
        prop_assert_eq!(iv[iv.len() - 1].end, t0 + span);
        for w in iv.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].mode != w[1].mode);
        }
        for interval in iv {
            prop_assert!(interval.end > interval.start);
            let h = interval.duration();
            // stay clear of the edges, where the comparator decides by rounding
            for k in 1..=100 {
                let t = interval.start + h * (0.01 + 0.98 * k as f64 / 101.0);
                prop_assert_eq!(&pwm.mode_at(t), &interval.mode, "t = {}", t);
            }
        }
    }

    #[test]
    fn adaptive_gain_never_decreases(
        meas in prop::collection::vec(-5.0..5.0f64, 1..400),
        modes in prop::collection::vec(arb_mode(3), 1..400),
    ) {
        let params = ConverterParams::three_cell_reference();
        let prm = SosmlParams::published();
        let mut st = SosmlState::new(0.0, vec![0.0, 0.0], &prm);
        for (y, mode) in meas.iter().zip(modes.iter().cycle()) {
            let next = observer_step(&st, *y, mode, &params, &prm, 5e-6).unwrap();
            prop_assert!(next.l >= st.l);
            if next.in_dead_zone {
                prop_assert_eq!(next.l, st.l);
            }
            st = next;
        }
    }

    #[test]
    fn longer_windows_excite_at_least_as_much(
        pwm in arb_pwm(),
        w in 1e-5..2e-4f64,
        extra in 0.0..2e-4f64,
    ) {
        let traj = trajectory_from_pwm(&pwm, 0.0, 1e-3).unwrap();
        let short = pe_check(&traj, w, 1.0).unwrap();
        let long = pe_check(&traj, w + extra, 1.0).unwrap();
        prop_assert!(long.min_eigenvalue >= short.min_eigenvalue - 1e-15);
        let scaled = pe_check(&traj, w, 2000.0).unwrap();
        prop_assert!((scaled.min_eigenvalue - 2000.0 * short.min_eigenvalue).abs() <= 1e-9 * (1.0 + scaled.min_eigenvalue.abs()));
    }

    #[test]
    fn extending_a_trajectory_never_loses_observability(
        modes in prop::collection::vec(arb_mode(3), 1..12),
    ) {
        let params = ConverterParams::three_cell_reference();
        let z = default_z(&params);
        let mut prev: Option<(bool, usize)> = None;
        for n in 1..=modes.len() {
            let traj = HybridTimeTrajectory::from_modes(modes[..n].to_vec(), 1e-4).unwrap();
            let report = z_observability_check(&traj, &z, &params).unwrap();
            let now = (report.verdict.is_pass(), report.stacked_rank);
            if let Some((pass, rank)) = prev {
                prop_assert!(now.1 >= rank);
                prop_assert!(!pass || now.0);
            }
            prev = Some(now);
        }
    }
}
