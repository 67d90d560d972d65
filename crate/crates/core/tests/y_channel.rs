use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relaydof::channel::{
    complex_gaussian, draw_realization, ChannelSet, FormSpace, MessageSet, SampleSpace, Signal, SymbolMatrix,
    DEFAULT_H_MAX, DEFAULT_H_MIN,
};
use relaydof::linalg::{self, dot, CMatrix, Tolerance, C64};
use relaydof::round::{analyze, relay_zf_decode, zf_decode, RoundConfig};
use relaydof::scheme::{verify_realization, Scheme, SchemeId};
use relaydof::scheme_y::{build_relay_precoders, YScheme};

fn draw(scheme: &YScheme, seed: u64) -> ChannelSet {
    draw_realization(&scheme.topology(), scheme.slot_count(), seed, DEFAULT_H_MIN, DEFAULT_H_MAX).unwrap()
}

fn unit_cfg() -> RoundConfig {
    RoundConfig::new(1.0, false).unwrap()
}

fn aligned(a: &CMatrix, b: &CMatrix) -> f64 {
    dot(a.adjoint().as_slice(), b.as_slice()).norm() / (a.frobenius_norm() * b.frobenius_norm())
}

#[test]
fn three_user_round_matches_hand_derivation() {
    let scheme = YScheme::new(3, 2).unwrap();
    let msgs = scheme.messages();
    for seed in 0..50 {
        let ch = draw(&scheme, seed);
        let prep = scheme.prepare(&ch, &unit_cfg()).unwrap();
        let d = &ch.slots[3].downlink;

        // v_{a,b} ⟂ d_c for the third user c, computed by hand as [d_c1, -d_c0]
        for (a, b, c) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)] {
            let hand = CMatrix::column(&[d[(c, 1)], -d[(c, 0)]]);
            let v = prep.precoders.get(3, a, b);
            assert!((aligned(v, &hand) - 1.0).abs() < 1e-12);
            assert_eq!(v, prep.precoders.get(3, b, a));
            assert!(dot(d.row_entries(c), v.as_slice()).norm() < 1e-9 * d.row_matrix(c).frobenius_norm());
        }

        // six unit-norm beams carrying exact estimates: gain = sqrt(P / 6)
        assert!((prep.gains[0] - (1.0f64 / 6.0).sqrt()).abs() < 1e-12);

        let mut forms = FormSpace::new(false);
        let round = scheme.observe(&prep, &ch, &unit_cfg(), &mut forms).unwrap();
        for obs in &round.observations {
            let j = obs.user;
            let others: Vec<usize> = (0..3).filter(|&l| l != j).collect();
            let g = prep.gains[0];
            for (c, &l) in others.iter().enumerate() {
                assert_eq!(obs.h_eff[(0, c)], ch.slots[j].h(j, l));
                let beam = dot(d.row_entries(j), prep.precoders.get(3, j, l).as_slice()) * g;
                assert!((obs.h_eff[(1, c)] - beam).norm() < 1e-14);
            }
            let report = analyze(obs, msgs.len());
            assert!(report.model_mismatch < 1e-12);
            assert!(report.residual_interference < 1e-16);
        }
    }
}

#[test]
fn four_and_five_users_recover_every_symbol() {
    for (k, n) in [(3, 2), (4, 3), (5, 4), (4, 4), (3, 3)] {
        let scheme = Scheme::build(SchemeId::Y, Some(k), Some(n), None).unwrap();
        let mut recovered = 0;
        for seed in 0..100 {
            let ch = scheme.draw(seed, DEFAULT_H_MIN, DEFAULT_H_MAX).unwrap();
            let rec = verify_realization(&scheme, &ch, seed + 1000, false).unwrap();
            assert_eq!(rec.first_failure(), None, "K={k} N={n} seed {seed}");
            recovered += scheme.messages().len();
        }
        assert_eq!(recovered, 100 * k * (k - 1));
    }
    assert_eq!(Scheme::build(SchemeId::Y, Some(5), Some(4), None).unwrap().slot_count(), 8);
}

#[test]
fn too_few_antennas_is_rejected() {
    for k in 3..7 {
        assert!(YScheme::new(k, k - 2).is_err());
        assert!(Scheme::build(SchemeId::Y, Some(k), Some(k - 2), None).is_err());
    }
}

#[test]
fn decoding_survives_zero_side_information() {
    let scheme = YScheme::new(4, 3).unwrap();
    let msgs = scheme.messages();
    for seed in 0..20 {
        let ch = draw(&scheme, seed);
        let prep = scheme.prepare(&ch, &unit_cfg()).unwrap();
        for j in 0..4 {
            let base = SymbolMatrix::draw(&msgs, seed);
            let values: Vec<C64> = base
                .values()
                .iter()
                .enumerate()
                .map(|(id, &s)| if msgs.pair(id).1 == j { C64::new(0.0, 0.0) } else { s })
                .collect();
            let symbols = SymbolMatrix::from_values(&msgs, values.clone());
            let mut space = SampleSpace::new(symbols, 0, false);
            let round = scheme.observe(&prep, &ch, &unit_cfg(), &mut space).unwrap();
            let obs = &round.observations[j];
            let est = zf_decode(obs, Tolerance::default()).unwrap();
            for (e, &id) in est.iter().zip(&obs.unknowns) {
                assert!((e - values[id]).norm() < 1e-8);
            }
        }
    }
}

#[test]
fn precoders_do_not_depend_on_direct_channels() {
    let scheme = YScheme::new(4, 3).unwrap();
    let msgs = scheme.messages();
    for seed in 0..50 {
        let ch = draw(&scheme, seed);
        let prep = scheme.prepare(&ch, &unit_cfg()).unwrap();
        let fresh = draw(&scheme, seed + 10_000);
        let mut redrawn = ch.clone();
        for k in 0..4 {
            redrawn.slots[k].user_to_user = fresh.slots[k].user_to_user.clone();
        }
        assert_eq!(scheme.prepare(&redrawn, &unit_cfg()).unwrap().precoders, prep.precoders);

        let symbols = SymbolMatrix::draw(&msgs, seed);
        let mut space = SampleSpace::new(symbols.clone(), 0, false);
        let round = scheme.observe(&prep, &redrawn, &unit_cfg(), &mut space).unwrap();
        for obs in &round.observations {
            let est = zf_decode(obs, Tolerance::default()).unwrap();
            for (e, &id) in est.iter().zip(&obs.unknowns) {
                assert!((e - symbols.values()[id]).norm() < 1e-8);
            }
        }
    }
}

#[test]
fn relay_beams_null_every_outside_user() {
    for k in 3..=6 {
        let scheme = YScheme::new(k, k - 1).unwrap();
        for seed in 0..50 {
            let ch = draw(&scheme, seed);
            for n in scheme.relay_slots() {
                let set = build_relay_precoders(&ch, n).unwrap();
                assert_eq!(set.len(), k * (k - 1));
                for ((_, a, b), v) in set.iter() {
                    assert!((v.frobenius_norm() - 1.0).abs() < 1e-12);
                    for j in (0..k).filter(|&j| j != a && j != b) {
                        let row = ch.slots[n].downlink.row_entries(j);
                        let norm = ch.slots[n].down_row(j).frobenius_norm();
                        assert!(dot(row, v.as_slice()).norm() <= 1e-9 * norm);
                    }
                }
            }
        }
    }
}

#[test]
fn interference_isolation_in_relay_slots() {
    for k in [3, 4, 5] {
        let scheme = YScheme::new(k, k - 1).unwrap();
        let msgs = scheme.messages();
        for seed in 0..100 {
            let ch = draw(&scheme, seed);
            let prep = scheme.prepare(&ch, &unit_cfg()).unwrap();
            let forms = scheme.relay_slot_forms(&prep, &ch, &unit_cfg()).unwrap();
            for slot_forms in &forms {
                for (j, f) in slot_forms.iter().enumerate() {
                    let (mut wanted, mut foreign) = (0.0, 0.0);
                    for ((d, s), id) in msgs.pairs() {
                        let p = f.symbol_coef(id).norm_sqr();
                        if d == j || s == j {
                            wanted += p;
                        } else {
                            foreign += p;
                        }
                    }
                    assert!(foreign <= 1e-16 * wanted, "K={k} seed {seed} user {j}: {foreign:e}");
                }
            }
        }
    }
}

#[test]
fn effective_channel_rank_is_full() {
    let scheme = YScheme::new(4, 3).unwrap();
    let mut full = 0;
    for seed in 0..1000 {
        let ch = draw(&scheme, seed);
        let Ok(prep) = scheme.prepare(&ch, &unit_cfg()) else {
            continue;
        };
        let mut forms = FormSpace::new(false);
        let round = scheme.observe(&prep, &ch, &unit_cfg(), &mut forms).unwrap();
        if round
            .observations
            .iter()
            .all(|o| linalg::rank(&o.h_eff, Tolerance::default()) == 3)
        {
            full += 1;
        }
    }
    assert!(full >= 999, "{full}/1000");
}

#[test]
fn relay_zero_forcing_is_exact_without_noise() {
    let scheme = YScheme::new(3, 2).unwrap();
    let msgs = MessageSet::all_pairs(3);
    for seed in 0..50 {
        let ch = draw(&scheme, seed);
        let s = SymbolMatrix::draw(&msgs, seed);
        // slot 0: users 1 and 2 send s_{0,1}, s_{0,2}
        let sent = [s.get(0, 1).unwrap(), s.get(0, 2).unwrap()];
        let h = ch.slots[0].up_cols(&[1, 2]);
        let y: Vec<C64> = (0..2).map(|n| h[(n, 0)] * sent[0] + h[(n, 1)] * sent[1]).collect();
        let est = relay_zf_decode(0, &y, &h).unwrap();
        let plain = linalg::solve(&h, &CMatrix::column(&y)).unwrap();
        for i in 0..2 {
            assert!((est[i] - sent[i]).norm() < 1e-9);
            assert!((est[i] - plain[(i, 0)]).norm() < 1e-12);
        }
    }
}

#[test]
fn relay_zero_forcing_mse_at_high_power() {
    let power: f64 = 1e6;
    let scheme = YScheme::new(3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut err, mut count) = (0.0, 0);
    for seed in 0..1000 {
        let ch = draw(&scheme, seed);
        let h = ch.slots[0].up_cols(&[1, 2]).scale_real(power.sqrt());
        let s = [complex_gaussian(&mut rng), complex_gaussian(&mut rng)];
        let y: Vec<C64> = (0..2)
            .map(|n| h[(n, 0)] * s[0] + h[(n, 1)] * s[1] + complex_gaussian(&mut rng))
            .collect();
        let est = relay_zf_decode(0, &y, &h).unwrap();
        for i in 0..2 {
            err += est[i].minus(&s[i]).norm_sqr();
            count += 1;
        }
    }
    let mse = err / count as f64;
    assert!(mse < 1e-4, "mse {mse:e}");
}
