use approx::assert_relative_eq;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::chain::{
    r_from_variance_db, run_analytic, run_sampled, ChainConfig, FeedforwardMode,
    MeasurementSchedule,
};
use crate::gates::{angles_for, AnglePair};

fn r_4db() -> f64 {
    r_from_variance_db(-4.0)
}

fn ideal_cfg(n: usize) -> ChainConfig {
    ChainConfig::ideal(n, r_4db(), r_4db())
}

fn boot() -> BootstrapCfg {
    BootstrapCfg {
        n_resamples: 400,
        seed: 5,
    }
}

#[test]
fn thresholds_match_tabulated_values() {
    // rotations: 2.00 for every angle
    for phi_deg in [0.0, 22.5, -45.0, 90.0] {
        let spec = NullifierSpec::rotation((phi_deg as f64).to_radians());
        assert_relative_eq!(inseparability_threshold(&spec), 2.0, epsilon = 1e-6);
    }
    // squeezing: 2|sin(2 phi)|
    for (phi_deg, expected) in [
        (15.0, 1.0),
        (20.0, 1.2855752193730787),
        (30.0, 1.7320508075688772),
        (45.0, 2.0),
        (75.0, 1.0),
    ] {
        let spec = NullifierSpec::squeeze_rot((phi_deg as f64).to_radians());
        assert_relative_eq!(inseparability_threshold(&spec), expected, epsilon = 1e-6);
    }
    // shear: 2|cos(phi)|
    for (phi_deg, expected) in [
        (0.0, 2.0),
        (10.0, 1.969615506024416),
        (45.0, 1.4142135623730951),
        (60.0, 1.0),
    ] {
        let spec = NullifierSpec::shear((phi_deg as f64).to_radians());
        assert_relative_eq!(inseparability_threshold(&spec), expected, epsilon = 1e-6);
    }
}

#[test]
fn threshold_invariant_under_common_rotation() {
    // rotating all four quadrature directions by the same angle preserves
    // the symplectic form, hence the bound
    let base = NullifierSpec::squeeze_rot(0.42);
    let reference = inseparability_threshold(&base);
    for chi in [0.3, 1.1, 2.9] {
        let mut spec = base;
        spec.delta1.output.theta += chi;
        spec.delta1.reference.theta += chi;
        spec.delta2.output.theta += chi;
        spec.delta2.reference.theta += chi;
        assert_relative_eq!(inseparability_threshold(&spec), reference, epsilon = 1e-12);
    }
}

#[test]
fn analytic_nullifier_sums_are_gate_independent() {
    // single lossless step at -4 dB: each nullifier variance is
    // 2 exp(-2r) = 0.7962 vacuum units regardless of the operation
    let expected = 2.0 * (-2.0 * r_4db()).exp();
    let cases: Vec<(Gate, f64)> = vec![
        (Gate::Identity, 0.0),
        (Gate::Rotation, 45f64.to_radians()),
        (Gate::Rotation, -67.5f64.to_radians()),
        (Gate::SqueezeRot, 15f64.to_radians()),
        (Gate::SqueezeRot, 70f64.to_radians()),
        (Gate::Shear, 30f64.to_radians()),
        (Gate::Shear, -45f64.to_radians()),
    ];
    for (gate, phi) in cases {
        let schedule = MeasurementSchedule::with_gates(&[angles_for(gate, phi).unwrap()], 0.0, 0.0);
        let chain = run_analytic(&ideal_cfg(1), &schedule, FeedforwardMode::Postprocess).unwrap();
        let spec = NullifierSpec::for_gate(gate, phi);
        let (v1, v2) = nullifier_variance_analytic(&chain, &spec);
        assert_relative_eq!(v1, expected, epsilon = 1e-10);
        assert_relative_eq!(v2, expected, epsilon = 1e-10);
        assert_relative_eq!(v1 + v2, 1.5924286822139888, epsilon = 1e-10);
    }
}

#[test]
fn nullifier_limits() {
    // infinite-squeezing limit: variances vanish
    let cfg = ChainConfig::ideal(1, 9.0, 9.0);
    let schedule = MeasurementSchedule::identity_chain(1, 0.0, 0.0);
    let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
    let (v1, v2) = nullifier_variance_analytic(&chain, &NullifierSpec::identity());
    assert!(v1 < 1e-7 && v2 < 1e-7);

    // no squeezing: two vacua plus one unit of teleportation noise per
    // quadrature give 2 vacuum units per nullifier
    let cfg = ChainConfig::ideal(1, 0.0, 0.0);
    let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
    let (v1, v2) = nullifier_variance_analytic(&chain, &NullifierSpec::identity());
    assert_relative_eq!(v1, 2.0, epsilon = 1e-12);
    assert_relative_eq!(v2, 2.0, epsilon = 1e-12);
}

#[test]
fn sampled_nullifiers_match_analytic_and_verify() {
    let n_shots = 38_600;
    let spec = NullifierSpec::identity();
    let schedule = MeasurementSchedule::identity_chain(1, 0.0, 0.0);
    let sched1 = schedule.with_readout(spec.delta1.reference.theta, spec.delta1.output.theta);
    let sched2 = schedule.with_readout(spec.delta2.reference.theta, spec.delta2.output.theta);
    let cfg = ideal_cfg(1);
    let run1 = run_sampled(&cfg, &sched1, n_shots, 21, FeedforwardMode::Postprocess).unwrap();
    let run2 = run_sampled(&cfg, &sched2, n_shots, 22, FeedforwardMode::Postprocess).unwrap();
    let report = verify(&run1, &run2, &spec, &boot()).unwrap();
    let expected_sum = 1.5924286822139888;
    assert!(
        (report.variances.sum - expected_sum).abs() < 3.0 * report.variances.err_sum,
        "sum {} expected {expected_sum} err {}",
        report.variances.sum,
        report.variances.err_sum
    );
    assert!(report.pass, "identity at -4 dB certifies entanglement");
    assert_relative_eq!(report.threshold, 2.0, epsilon = 1e-12);

    // bases must match the nullifier combination
    let wrong = run_sampled(
        &cfg,
        &schedule.with_readout(0.3, 0.0),
        100,
        1,
        FeedforwardMode::Postprocess,
    )
    .unwrap();
    assert!(matches!(
        verify(&wrong, &run2, &spec, &boot()),
        Err(Error::BasisMismatch(_))
    ));
}

#[test]
fn verification_pattern_across_gates() {
    // at -4 dB the lossless sum is 1.592: rotations (bound 2.00) certify,
    // strong squeezing angles (bound < 1.592) are inconclusive
    let sum = 1.5924286822139888;
    for (gate, phi_deg, expect_pass) in [
        (Gate::Rotation, 0.0, true),
        (Gate::Rotation, 90.0, true),
        (Gate::SqueezeRot, 15.0, false),
        (Gate::SqueezeRot, 25.0, false),
        (Gate::SqueezeRot, 30.0, true),
        (Gate::SqueezeRot, 45.0, true),
        (Gate::SqueezeRot, 75.0, false),
        (Gate::Shear, 0.0, true),
        (Gate::Shear, 30.0, true),
        (Gate::Shear, 45.0, false),
        (Gate::Shear, 60.0, false),
    ] {
        let spec = NullifierSpec::for_gate(gate, (phi_deg as f64).to_radians());
        let threshold = inseparability_threshold(&spec);
        assert_eq!(
            sum < threshold,
            expect_pass,
            "{gate:?} {phi_deg}: sum {sum} vs threshold {threshold}"
        );
    }
}

#[test]
fn verification_monotone_in_squeezing() {
    // increasing resource squeezing never flips a certified row back to
    // inconclusive: analytic sums decrease monotonically
    let spec = NullifierSpec::squeeze_rot(30f64.to_radians());
    let threshold = inseparability_threshold(&spec);
    let schedule = MeasurementSchedule::with_gates(
        &[angles_for(Gate::SqueezeRot, 30f64.to_radians()).unwrap()],
        0.0,
        0.0,
    );
    let mut last_sum = f64::INFINITY;
    let mut certified = false;
    for step in 0..30 {
        let r = 0.05 + 0.1 * step as f64;
        let cfg = ChainConfig::ideal(1, r, r);
        let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
        let (v1, v2) = nullifier_variance_analytic(&chain, &spec);
        let sum = v1 + v2;
        assert!(sum < last_sum + 1e-12, "sum must decrease with r");
        last_sum = sum;
        if certified {
            assert!(sum < threshold, "pass must not flip back at r = {r}");
        }
        certified = sum < threshold;
    }
    assert!(certified, "strong squeezing certifies eventually");
}

fn sweep_runs(
    cfg: &ChainConfig,
    schedule: &MeasurementSchedule,
    n_shots: u64,
    seed: u64,
) -> [crate::chain::RunRecords; 4] {
    let theta = [0.0, HALF_PI];
    let mut runs = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let sched = schedule.with_readout(theta[j], theta[i]);
            runs.push(
                run_sampled(
                    cfg,
                    &sched,
                    n_shots,
                    seed + (i * 2 + j) as u64,
                    FeedforwardMode::Postprocess,
                )
                .unwrap(),
            );
        }
    }
    let mut it = runs.into_iter();
    [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ]
}

#[test]
fn estimate_identity_chain_close_to_identity() {
    let cfg = ideal_cfg(1);
    let schedule = MeasurementSchedule::identity_chain(1, 0.0, 0.0);
    let runs = sweep_runs(&cfg, &schedule, 38_600, 100);
    let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
    let est = estimate_s(
        &SweepRuns {
            run_11: &runs[0],
            run_12: &runs[1],
            run_21: &runs[2],
            run_22: &runs[3],
        },
        chain.input_ref_denominators(),
        SFrame::VsInput,
        &boot(),
    )
    .unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let ideal = if i == j { 1.0 } else { 0.0 };
            assert!(
                (est.s_hat[(i, j)] - ideal).abs() < 4.0 * est.stderr[(i, j)],
                "entry ({i},{j}): {} vs {ideal} (se {})",
                est.s_hat[(i, j)],
                est.stderr[(i, j)]
            );
            assert!(est.stderr[(i, j)] < 0.02, "expected percent-level errors");
        }
    }
    // against the mirrored reference the same data estimate diag(-1, 1)
    let est_ref = estimate_s(
        &SweepRuns {
            run_11: &runs[0],
            run_12: &runs[1],
            run_21: &runs[2],
            run_22: &runs[3],
        },
        chain.input_ref_denominators(),
        SFrame::VsReference,
        &boot(),
    )
    .unwrap();
    assert!((est_ref.s_hat[(0, 0)] + 1.0).abs() < 4.0 * est_ref.stderr[(0, 0)]);
    assert!((est_ref.s_hat[(1, 1)] - 1.0).abs() < 4.0 * est_ref.stderr[(1, 1)]);
}

#[test]
fn analytic_estimator_equals_effective_map() {
    // infinite-statistics estimate reproduces the composed step maps
    // exactly, in both frames, for random schedules
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let n = rng.gen_range(1..4usize);
        let pairs: Vec<AnglePair> = (0..n)
            .map(|_| loop {
                let a = rng.gen_range(0.0..std::f64::consts::PI);
                let b = rng.gen_range(0.0..std::f64::consts::PI);
                if let Ok(p) = AnglePair::new(a, b) {
                    if (2.0 * p.theta_minus()).sin().abs() > 0.05 {
                        break p;
                    }
                }
            })
            .collect();
        let schedule = MeasurementSchedule::with_gates(&pairs, 0.0, 0.0);
        let cfg = ChainConfig::ideal(n, r_4db(), 0.7 * r_4db());
        let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
        let est = estimate_s_analytic(&chain, SFrame::VsInput).unwrap();
        let expected = crate::chain::effective_map(&schedule);
        assert!(
            (est - expected.matrix()).abs().max() < 1e-10,
            "estimate {est} vs {}",
            expected.matrix()
        );
        let est_ref = estimate_s_analytic(&chain, SFrame::VsReference).unwrap();
        let expected_ref = crate::chain::effective_map_vs_reference(&schedule);
        assert!((est_ref - expected_ref).abs().max() < 1e-10);
    }
}

#[test]
fn rotation_sweep_traces_minus_cosine() {
    // analytic sweep: the (1,1) entry against the reference follows -cos
    for phi_deg in [0.0, 45.0, 90.0, 135.0, 180.0, 270.0, 315.0] {
        let phi = (phi_deg as f64).to_radians();
        let schedule =
            MeasurementSchedule::with_gates(&[angles_for(Gate::Rotation, phi).unwrap()], 0.0, 0.0);
        let cfg = ideal_cfg(1);
        let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
        let est = estimate_s_analytic(&chain, SFrame::VsReference).unwrap();
        assert_relative_eq!(est[(0, 0)], -phi.cos(), epsilon = 1e-10);
        assert_relative_eq!(est[(0, 1)], phi.sin(), epsilon = 1e-10);
        let theory = theory_matrix(Gate::Rotation, phi, SFrame::VsReference).unwrap();
        assert!((est - theory).abs().max() < 1e-10);
    }
}

#[test]
fn denominator_calibration_agrees_with_analytics() {
    let cfg = ideal_cfg(1);
    let schedule = MeasurementSchedule::identity_chain(1, 0.0, 0.0);
    let n_shots = 60_000;
    let run_xx = run_sampled(&cfg, &schedule, n_shots, 900, FeedforwardMode::Postprocess).unwrap();
    let run_pp = run_sampled(
        &cfg,
        &schedule.with_readout(HALF_PI, HALF_PI),
        n_shots,
        901,
        FeedforwardMode::Postprocess,
    )
    .unwrap();
    let (dx_hat, dp_hat) = calibrate_denominators(&run_xx, &run_pp).unwrap();
    let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
    let (dx, dp) = chain.input_ref_denominators();
    assert!(dx < 0.0 && dx_hat < 0.0);
    // statistical agreement at 4 standard errors of the product mean
    let m = chain.moments();
    let se = ((m[(0, 0)] * m[(2, 2)] + dx * dx) / n_shots as f64).sqrt();
    assert!((dx_hat - dx).abs() < 4.0 * se, "{dx_hat} vs {dx} (se {se})");
    assert!((dp_hat - dp).abs() < 4.0 * se, "{dp_hat} vs {dp}");
    assert_relative_eq!(dx, -1.0568896304780415, epsilon = 1e-10);
}

#[test]
fn estimator_se_scales_with_events() {
    // bootstrap standard errors follow 1/sqrt(n) within 20%
    let cfg = ideal_cfg(1);
    let schedule = MeasurementSchedule::identity_chain(1, 0.0, 0.0);
    let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
    let mut ses = Vec::new();
    for (k, &n) in [1_000u64, 10_000, 100_000].iter().enumerate() {
        let runs = sweep_runs(&cfg, &schedule, n, 300 + k as u64 * 10);
        let est = estimate_s(
            &SweepRuns {
                run_11: &runs[0],
                run_12: &runs[1],
                run_21: &runs[2],
                run_22: &runs[3],
            },
            chain.input_ref_denominators(),
            SFrame::VsInput,
            &boot(),
        )
        .unwrap();
        ses.push(est.stderr[(0, 0)]);
    }
    for w in ses.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (ratio / 10f64.sqrt() - 1.0).abs() < 0.2,
            "scaling ratio {ratio}"
        );
    }
}

#[test]
fn bootstrap_properties() {
    // constant data: zero spread
    let constant = vec![1.5; 64];
    let b = bootstrap(&constant, sample_variance, 200, 1).unwrap();
    assert_eq!(b.std_error, 0.0);
    assert_eq!(b.ci_low, b.ci_high);

    // Gaussian data, variance statistic: bootstrap SE tracks the analytic
    // sqrt(2/(n-1)) sigma^2 within 20% on average
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 2_000;
    let mut ratio_sum = 0.0;
    let trials = 40;
    for t in 0..trials {
        let data: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.sample(rand_distr::StandardNormal);
                2.0 * u
            })
            .collect();
        let b = bootstrap(&data, sample_variance, 300, 100 + t).unwrap();
        let analytic_se = sample_variance(&data) * (2.0 / (n as f64 - 1.0)).sqrt();
        ratio_sum += b.std_error / analytic_se;
    }
    let mean_ratio = ratio_sum / trials as f64;
    assert!(
        (mean_ratio - 1.0).abs() < 0.2,
        "bootstrap/analytic SE ratio {mean_ratio}"
    );

    // resample-count convergence: doubling changes the SE by < 5%
    let data: Vec<f64> = (0..5_000)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let b1 = bootstrap(&data, sample_variance, 1_000, 7).unwrap();
    let b2 = bootstrap(&data, sample_variance, 2_000, 7).unwrap();
    assert!((b1.std_error / b2.std_error - 1.0).abs() < 0.05);

    // determinism and input validation
    let c1 = bootstrap(&data, sample_variance, 100, 3).unwrap();
    let c2 = bootstrap(&data, sample_variance, 100, 3).unwrap();
    assert_eq!(c1, c2);
    assert!(matches!(
        bootstrap(&data, sample_variance, 1, 0),
        Err(Error::TooFewResamples(1))
    ));
}

#[test]
fn multistep_prediction_values() {
    let r = r_4db();
    let (vx, vp) = predict_multistep_variance(1, r, r);
    assert_relative_eq!(vx, 0.7962143411069944, epsilon = 1e-12);
    assert_relative_eq!(vp, vx, epsilon = 1e-15);

    // n = 0 is the raw pair nullifier variance
    let (v0, _) = predict_multistep_variance(0, r, r);
    assert_relative_eq!(v0, (-2.0 * r).exp(), epsilon = 1e-15);

    // n = 100: 40.2 vacuum units, 16.04 dB
    let (v100, _) = predict_multistep_variance(100, r, r);
    assert_relative_eq!(v100, 40.208824225903214, epsilon = 1e-12);
    assert_relative_eq!(
        crate::chain::db_from_variance(v100),
        16.043213737826424,
        epsilon = 1e-12
    );

    // matches the analytic chain exactly
    for n in [1usize, 5, 20] {
        let cfg = ideal_cfg(n);
        let schedule = MeasurementSchedule::identity_chain(n, 0.0, 0.0);
        let chain = run_analytic(&cfg, &schedule, FeedforwardMode::Postprocess).unwrap();
        let (v1, _) = nullifier_variance_analytic(&chain, &NullifierSpec::identity());
        let (pred, _) = predict_multistep_variance(n, r, r);
        assert_relative_eq!(v1, pred, epsilon = 1e-11);
    }
}
