use relaydof::channel::{DEFAULT_H_MAX, DEFAULT_H_MIN};
use relaydof::dof::{
    estimate_dof, grid, rate_from_parts, round_sum_rate, trial_seed, DofConfig, DofError, RateError,
};
use relaydof::linalg::{CMatrix, C64};
use relaydof::round::RoundConfig;
use relaydof::scheme::{Scheme, SchemeId};

fn sum_rate(scheme: &Scheme, seed: u64, power: f64) -> f64 {
    let ch = scheme.draw(seed, DEFAULT_H_MIN, DEFAULT_H_MAX).unwrap();
    let rc = RoundConfig::new(power, true).unwrap();
    let prep = scheme.prepare(&ch, &rc).unwrap();
    let reports = scheme.reports(&prep, &ch, &rc).unwrap();
    round_sum_rate(&reports, power, scheme.slot_count()).unwrap().sum_rate
}

fn all_schemes() -> Vec<Scheme> {
    SchemeId::ALL
        .into_iter()
        .map(|id| Scheme::build(id, None, None, None).unwrap())
        .collect()
}

#[test]
fn two_by_two_rate_matches_determinant_formula() {
    // log2 det(I + P Hᴴ C⁻¹ H) written out for 2x2 with diagonal C
    let h = CMatrix::from_rows(&[
        vec![C64::new(1.0, 0.5), C64::new(-0.2, 0.0)],
        vec![C64::new(0.3, -0.1), C64::new(0.8, 0.4)],
    ])
    .unwrap();
    let (c0, c1) = (2.0, 0.5);
    let cov = CMatrix::from_rows(&[
        vec![C64::new(c0, 0.0), C64::new(0.0, 0.0)],
        vec![C64::new(0.0, 0.0), C64::new(c1, 0.0)],
    ])
    .unwrap();
    let p = 3.0;
    let m = |i: usize, j: usize| {
        let v = h[(0, i)].conj() * h[(0, j)] / c0 + h[(1, i)].conj() * h[(1, j)] / c1;
        v * p + if i == j { 1.0 } else { 0.0 }
    };
    let det = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)).re;
    let want = det.log2() / 4.0;
    let got = rate_from_parts(&h, &cov, p, 4).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");

    let unit = rate_from_parts(&CMatrix::identity(2), &CMatrix::identity(2), 1.0, 2).unwrap();
    assert!((unit - 1.0).abs() < 1e-14);
}

#[test]
fn rates_grow_with_power_and_vanish_at_zero() {
    for scheme in all_schemes() {
        for seed in 0..5 {
            let mut last = 0.0;
            for db in (0..=90).step_by(10) {
                let r = sum_rate(&scheme, seed, 10f64.powf(db as f64 / 10.0));
                assert!(r >= 0.0);
                assert!(r >= last - 1e-9, "{} seed {seed} at {db} dB: {r} < {last}", scheme.id());
                last = r;
            }
            assert!(sum_rate(&scheme, seed, 1e-12) < 1e-6);
        }
    }
}

#[test]
fn noiseless_rates_are_refused() {
    for scheme in all_schemes() {
        let ch = scheme.draw(1, DEFAULT_H_MIN, DEFAULT_H_MAX).unwrap();
        let rc = RoundConfig::new(100.0, false).unwrap();
        let prep = scheme.prepare(&ch, &rc).unwrap();
        let reports = scheme.reports(&prep, &ch, &rc).unwrap();
        let err = round_sum_rate(&reports, 100.0, scheme.slot_count()).unwrap_err();
        assert!(matches!(err, RateError::NoiseOff { .. }), "{err}");
    }
}

#[test]
fn doubling_power_adds_the_slope() {
    let scheme = Scheme::build(SchemeId::Y, Some(4), Some(3), None).unwrap();
    let p = 1e8;
    let trials = 100;
    let gain: f64 = (0..trials)
        .map(|s| sum_rate(&scheme, s, 2.0 * p) - sum_rate(&scheme, s, p))
        .sum::<f64>()
        / trials as f64;
    assert!((gain - 2.0).abs() < 0.07, "{gain}");
}

#[test]
fn bad_inputs_are_rejected() {
    let scheme = Scheme::build(SchemeId::Ic, None, None, None).unwrap();
    let mut cfg = DofConfig::new(scheme);
    cfg.snr_grid_db = vec![10.0, 20.0];
    assert!(matches!(estimate_dof(&cfg), Err(DofError::BadGrid)));
    cfg.snr_grid_db = vec![10.0, 30.0, 20.0];
    assert!(matches!(estimate_dof(&cfg), Err(DofError::BadGrid)));
    cfg.snr_grid_db = grid(10.0, 30.0, 10.0);
    cfg.trials = 0;
    assert!(matches!(estimate_dof(&cfg), Err(DofError::NoTrials)));
}

#[test]
fn estimate_is_independent_of_thread_count() {
    let scheme = Scheme::build(SchemeId::X, None, None, None).unwrap();
    let mut cfg = DofConfig::new(scheme);
    cfg.trials = 40;
    cfg.seed = 17;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_dof(&cfg).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.to_json(), four.to_json());
    assert_eq!(one.to_csv(), four.to_csv());
    assert_eq!(one.to_csv().lines().count(), cfg.snr_grid_db.len() + 1);
    assert_eq!(one.fit_points, 5);
    assert_ne!(trial_seed(17, 0, 0), trial_seed(17, 1, 0));
}
