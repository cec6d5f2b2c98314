mod common;

use approx::assert_relative_eq;
use magpol::dynamics::{integrate_segment, Equations};
use magpol::model::{
    eta_from_power, hz, mhz, rescale, rhs_active, rhs_passive, DriveSpec, ModeState, SystemParams, HBAR,
};
use magpol::phasemap::n0_to_drive_passive;
use magpol::steady::{active_fixed_points, passive_fixed_points};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// [DERIVED] s_in = sqrt(P / (hbar w_d)), eta = sqrt(kappa_ext) s_in.
#[test]
fn one_microwatt_drive_amplitude() {
    let p = SystemParams::phase_map_reference();
    let d = eta_from_power(1e-6, &p).unwrap();
    let w_d = 2.0 * std::f64::consts::PI * 3.0e9;
    let s_in = (1e-6 / (HBAR * w_d)).sqrt();
    assert_relative_eq!(s_in, 7.09e8, max_relative = 1e-3);
    assert_relative_eq!(d.s_in.unwrap(), s_in, max_relative = 1e-12);
    let eta_per_s = (2.0 * std::f64::consts::PI * 0.75e6).sqrt() * s_in;
    assert_relative_eq!(d.eta, eta_per_s * 1e-6, max_relative = 1e-12);
}

// [DERIVED] scaling arithmetic.
#[test]
fn kerr_scales_with_square_of_factor() {
    let p = SystemParams::phase_map_reference();
    let (_, q, _) = rescale(&ModeState::zero(), &p, &DriveSpec::none(), 1e3).unwrap();
    assert_relative_eq!(q.kerr, hz(9.8e-3), max_relative = 1e-12);
}

// [TRIVIAL] linear decoupled cavity with drive, closed form.
#[test]
fn driven_linear_cavity_matches_closed_form() {
    let p = SystemParams {
        kappa: mhz(1.5),
        kappa_ext: mhz(0.75),
        gamma: mhz(10.0),
        delta_c: mhz(3.0),
        delta_m: mhz(-2.0),
        ..SystemParams::default()
    };
    let eta = 40.0;
    let eq = Equations::Passive {
        drive: DriveSpec::from_eta(eta),
    };
    let z0 = ModeState::new(c(3.0, -1.0), c(0.5, 2.0));
    let seg = integrate_segment(&z0, &p, &eq, 1.0, 1e-3).unwrap();
    let lc = c(p.kappa / 2.0, p.delta_c);
    let lm = c(p.gamma / 2.0, p.delta_m);
    let a_ss = eta / lc;
    for (k, t) in seg.times.iter().enumerate() {
        let a = a_ss + (z0.a - a_ss) * (-lc * t).exp();
        let m = z0.m * (-lm * t).exp();
        assert!((seg.a_samples[k] - a).norm() / a.norm() < 1e-6);
        assert!((seg.m_samples[k] - m).norm() / m.norm() < 1e-6);
    }
}

// [DERIVED] n0 = G/Gamma = 1e12 gives a limit-cycle amplitude of 1e6.
#[test]
fn photon_number_sets_limit_cycle_amplitude() {
    let gamma_sat = hz(2.0e-6);
    let p = SystemParams {
        kappa: mhz(1.5),
        gamma: mhz(16.5),
        gamma_sat,
        ..SystemParams::default()
    }
    .with_effective_gain(1e12 * gamma_sat);
    let seed = ModeState::new(c(1e3, 0.0), Complex64::new(0.0, 0.0));
    let seg = integrate_segment(&seed, &p, &Equations::Active, 8.0, 1e-3).unwrap();
    assert_relative_eq!(seg.final_state.a.norm(), 1e6, max_relative = 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Invariant: rhs of the rescaled system is rhs / s.
    #[test]
    fn rescaled_rhs_is_divided_by_scale(
        s in 1e-3f64..1e3,
        are in -1e6f64..1e6, aim in -1e6f64..1e6,
        mre in -1e6f64..1e6, mim in -1e6f64..1e6,
        kerr in -1e-9f64..1e-9,
        eta in 0.0f64..1e7,
    ) {
        let mut p = SystemParams::phase_map_reference();
        p.kerr = kerr;
        p.delta_c = mhz(12.0);
        p.delta_m = mhz(-30.0);
        p.gain = mhz(10.0);
        let z = ModeState::new(c(are, aim), c(mre, mim));
        let d = DriveSpec::from_eta(eta);
        let (z2, p2, d2) = rescale(&z, &p, &d, s).unwrap();
        let r1 = rhs_passive(&z, &p, &d).unwrap();
        let r2 = rhs_passive(&z2, &p2, &d2).unwrap();
        let scale = r1.da.norm().max(r1.dm.norm()).max(1e-300);
        prop_assert!((r2.da * s - r1.da).norm() / scale < 1e-12);
        prop_assert!((r2.dm * s - r1.dm).norm() / scale < 1e-12);
        let q1 = rhs_active(&z, &p).unwrap();
        let q2 = rhs_active(&z2, &p2).unwrap();
        let scale = q1.da.norm().max(q1.dm.norm()).max(1e-300);
        prop_assert!((q2.da * s - q1.da).norm() / scale < 1e-12);
        prop_assert!((q2.dm * s - q1.dm).norm() / scale < 1e-12);
    }

    // Invariant: fixed-point counts and frequencies survive a rescale.
    #[test]
    fn fixed_points_invariant_under_rescale(
        s in 1e-2f64..1e2,
        dm in -100.0f64..100.0,
        log_n0 in 11.0f64..15.0,
        gain in 5.0f64..30.0,
    ) {
        let mut p = SystemParams::phase_map_reference();
        p.delta_c = mhz(80.0);
        p.delta_m = mhz(dm);
        let drive = n0_to_drive_passive(10f64.powf(log_n0), &p).unwrap();
        let (_, p2, d2) = rescale(&ModeState::zero(), &p, &drive, s).unwrap();
        let f1 = passive_fixed_points(&p, &drive).unwrap();
        let f2 = passive_fixed_points(&p2, &d2).unwrap();
        prop_assert_eq!(f1.len(), f2.len());
        for (x, y) in f1.iter().zip(&f2) {
            prop_assert!((x.a0 / s - y.a0).norm() <= 1e-8 * y.a0.norm().max(y.m0.norm()));
        }

        let mut q = SystemParams::active_fitted().with_effective_gain(mhz(gain));
        q.delta_m = mhz(dm);
        let q2 = magpol::model::rescale_params(&q, s);
        let g1 = active_fixed_points(&q).unwrap();
        let g2 = active_fixed_points(&q2).unwrap();
        prop_assert_eq!(g1.len(), g2.len());
        for (x, y) in g1.iter().zip(&g2) {
            prop_assert!((x.omega_off - y.omega_off).abs() <= 1e-8 * q.rate_scale());
        }
    }

    // Invariant: without drive or gain the total occupation never grows.
    #[test]
    fn undriven_occupation_decays(
        are in -10.0f64..10.0, aim in -10.0f64..10.0,
        mre in -10.0f64..10.0, mim in -10.0f64..10.0,
        kerr in -0.5f64..0.5,
        dm in -50.0f64..50.0,
    ) {
        let p = SystemParams {
            kappa: mhz(1.5),
            gamma: mhz(10.3),
            g: mhz(25.0),
            kerr,
            delta_c: mhz(5.0),
            delta_m: mhz(dm),
            ..SystemParams::default()
        };
        let eq = Equations::Passive { drive: DriveSpec::none() };
        let z0 = ModeState::new(c(are, aim), c(mre, mim));
        let seg = integrate_segment(&z0, &p, &eq, 1.0, 1e-4).unwrap();
        let total: Vec<f64> = seg
            .a_samples
            .iter()
            .zip(&seg.m_samples)
            .map(|(a, m)| a.norm_sqr() + m.norm_sqr())
            .collect();
        for w in total.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        prop_assert!(total[total.len() - 1] < total[0]);
    }
}
