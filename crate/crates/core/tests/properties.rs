mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use polmem::detection::DetectionConfig;
use polmem::fitting::closed_form_fidelity;
use polmem::memory::{
    dephase, theta_prime, ChannelSpec, MemoryConfig, PhaseMatchConfig, QuantumMemory,
};
use polmem::polarization::{
    psd_sqrt, state_fidelity, stokes_of, DensityMatrix, PolarizationKet, ProcessMatrix, C64,
};
use polmem::rng::RngStream;
use polmem::tomography::{
    process_fidelity, reconstruct_process, run_process_tomography, state_estimate, Statistics,
    PROCESS_INPUTS,
};
use proptest::prelude::*;

fn stokes_in_ball() -> impl Strategy<Value = [f64; 3]> {
    (
        0.0..=1.0f64,
        0.0..std::f64::consts::PI,
        0.0..std::f64::consts::TAU,
    )
        .prop_map(|(r, th, ph)| {
            [
                r * th.sin() * ph.cos(),
                r * th.sin() * ph.sin(),
                r * th.cos(),
            ]
        })
}

fn ket() -> impl Strategy<Value = PolarizationKet> {
    prop::array::uniform4(-1.0..1.0f64)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            PolarizationKet::normalized(Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3]))
                .unwrap()
        })
}

proptest! {
    #[test]
    fn stokes_round_trip(s in stokes_in_ball()) {
        let rho = DensityMatrix::from_stokes(s).unwrap();
        let back = stokes_of(&rho);
        for k in 0..3 {
            prop_assert!((back[k] - s[k]).abs() < 1e-12);
        }
        let est = state_estimate(back).unwrap();
        prop_assert!(est.rho.max_abs_diff(&rho) < 1e-12);
    }

    #[test]
    fn projection_yields_states(s in prop::array::uniform3(-5.0..5.0f64)) {
        let est = state_estimate(s).unwrap();
        prop_assert!(est.rho.eigenvalues()[0] >= -1e-15);
        prop_assert!((est.rho.matrix().trace().re - 1.0).abs() < 1e-12);
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert_eq!(est.physical_projection_applied, norm > 1.0);
    }

    #[test]
    fn pure_state_fidelity_is_overlap(a in ket(), b in ket()) {
        let f = state_fidelity(&a.density(), &b.density()).unwrap();
        prop_assert!((f - a.inner(&b).norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn fidelity_is_symmetric(s in stokes_in_ball(), t in stokes_in_ball()) {
        let a = DensityMatrix::from_stokes(s).unwrap();
        let b = DensityMatrix::from_stokes(t).unwrap();
        let ab = state_fidelity(&a, &b).unwrap();
        prop_assert!((ab - state_fidelity(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn psd_sqrt_squares_back(seed in any::<u64>(), dim in prop::sample::select(vec![2usize, 4])) {
        let mut rng = RngStream::new(seed).rng();
        let g = DMatrix::<C64>::from_fn(dim, dim, |_, _| {
            use rand::Rng;
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = &g * g.adjoint();
        let r = psd_sqrt(&m).unwrap();
        prop_assert!((&r * &r - &m).iter().all(|z| z.norm() < 1e-10));
        prop_assert!((&r - r.adjoint()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn dephasing_composes(s in stokes_in_ball(), g1 in 0.0..=1.0f64, g2 in 0.0..=1.0f64) {
        let rho = DensityMatrix::from_stokes(s).unwrap();
        let twice = dephase(&dephase(&rho, g1).unwrap(), g2).unwrap();
        let once = dephase(&rho, g1 * g2).unwrap();
        prop_assert!(twice.max_abs_diff(&once) < 1e-14);
        let out = stokes_of(&once);
        prop_assert!((out[2] - s[2]).abs() < 1e-14);
        prop_assert!((out[0] - g1 * g2 * s[0]).abs() < 1e-14);
        prop_assert!(once.eigenvalues()[0] >= -1e-15);
    }

    #[test]
    fn random_channels_are_reconstructed(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed).rng();
        let channel = common::random_channel(&mut rng);
        let pairs: Vec<_> = PROCESS_INPUTS
            .iter()
            .map(|&l| {
                let rho = DensityMatrix::named(l);
                let out = channel.apply(&rho);
                (rho, out)
            })
            .collect();
        let rec = reconstruct_process(&pairs).unwrap();
        prop_assert!(!rec.projection_applied);
        prop_assert!((rec.chi.matrix() - channel.chi).iter().all(|z| z.norm() < 1e-8));
        let f = process_fidelity(&rec.chi, &ProcessMatrix::identity_process()).unwrap();
        prop_assert!((f - rec.chi.entry(0, 0).re).abs() < 1e-10);
        // Trace preservation.
        let tc = rec.chi.trace_condition();
        prop_assert!((tc - polmem::polarization::pauli(0)).iter().all(|z| z.norm() < 1e-8));
    }

    #[test]
    fn pipeline_matches_closed_form(
        gamma in 0.0..=1.0f64,
        r in 0.001..0.3f64,
        n in 1e-6..2e-2f64,
        eta in 0.01..1.0f64,
        t in 0.0..10.0f64,
    ) {
        let memory_cfg = MemoryConfig {
            r0_axis: r,
            r0_ch2_theta: 1.0,
            static_gamma: [("C".to_string(), gamma)].into(),
            ..MemoryConfig::default()
        };
        let det = DetectionConfig { eta_measured: eta, background_n: n, ..DetectionConfig::default() };
        let memory = QuantumMemory::new(
            memory_cfg.clone(),
            vec![ChannelSpec::new("C", 0.0)],
            PhaseMatchConfig::default(),
        ).unwrap();
        let run = run_process_tomography(&memory, &det, &PROCESS_INPUTS, "C", t, 1000, Statistics::Expected)
            .unwrap();
        let f = closed_form_fidelity(t, r, memory_cfg.tau, memory_cfg.sigma_gamma, gamma, &det).unwrap();
        prop_assert!((run.result.process_fidelity - f).abs() < 1e-9);
    }

    #[test]
    fn phase_matching_deviation_is_small(theta in 0.0..=5.0f64) {
        let tp = theta_prime(theta, &PhaseMatchConfig::default()).unwrap();
        prop_assert!((tp - theta).abs() < 1e-4);
        prop_assert_eq!(theta_prime(theta, &PhaseMatchConfig { delta: 0.0 }).unwrap(), theta);
    }
}
