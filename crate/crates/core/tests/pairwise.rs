use relaydof::channel::{
    draw_realization, ChannelSet, FormSpace, LinearForm, SampleSpace, SymbolMatrix, DEFAULT_H_MAX, DEFAULT_H_MIN,
};
use relaydof::linalg::{dot, left_inverse, CMatrix, Tolerance, C64};
use relaydof::round::{analyze, zf_decode, RoundConfig};
use relaydof::scheme::{verify_realization, Scheme, SchemeId};
use relaydof::scheme_pairwise::{
    ic_af_transmit, ic_alignment_precoders, ic_build_precoders, x_build_precoders, PairwiseScheme, PairwiseVariant,
};

const X_DEST_SLOT: [usize; 4] = [2, 3, 0, 1];

fn draw(scheme: &PairwiseScheme, seed: u64) -> ChannelSet {
    draw_realization(&scheme.topology(), scheme.slot_count(), seed, DEFAULT_H_MIN, DEFAULT_H_MAX).unwrap()
}

fn cfg(power: f64) -> RoundConfig {
    RoundConfig::new(power, false).unwrap()
}

fn row_gain(ch: &ChannelSet, slot: usize, user: usize, v: &CMatrix) -> C64 {
    dot(ch.slots[slot].downlink.row_entries(user), v.as_slice())
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn axis_aligned_row_gives_axis_beam() {
    let scheme = PairwiseScheme::new(PairwiseVariant::IcNullSpace);
    let mut ch = draw(&scheme, 3);
    ch.slots[2].downlink[(0, 0)] = c(1.0, 0.0);
    ch.slots[2].downlink[(0, 1)] = c(0.0, 0.0);
    let set = ic_build_precoders(&ch, 2).unwrap();
    // the beam for user 1's symbol is nulled at user 0
    let v = set.get(2, 3, 1);
    assert!(v[(0, 0)].norm() < 1e-15);
    assert!((v[(1, 0)].norm() - 1.0).abs() < 1e-15);
}

#[test]
fn null_space_beams_are_orthogonal() {
    let scheme = PairwiseScheme::new(PairwiseVariant::IcNullSpace);
    for seed in 0..200 {
        let ch = draw(&scheme, seed);
        let set = ic_build_precoders(&ch, 2).unwrap();
        assert_eq!(set.len(), 4);
        for s in 0..4 {
            let v = set.get(2, s ^ 2, s);
            let norm = ch.slots[2].down_row(s ^ 1).frobenius_norm();
            assert!(row_gain(&ch, 2, s ^ 1, v).norm() < 1e-9 * norm);
        }
    }
}

#[test]
fn every_variant_decodes_in_a_thousand_trials() {
    for id in [SchemeId::Ic, SchemeId::IcAlign, SchemeId::IcAf, SchemeId::X] {
        let scheme = Scheme::build(id, None, None, None).unwrap();
        let mut ok = 0;
        for seed in 0..1000 {
            let ch = scheme.draw(seed, DEFAULT_H_MIN, DEFAULT_H_MAX).unwrap();
            if let Ok(rec) = verify_realization(&scheme, &ch, seed, false) {
                if rec.recovery_error < 1e-6 && rec.first_failure().is_none() {
                    ok += 1;
                }
            }
        }
        assert!(ok >= 999, "{id}: {ok}/1000");
    }
}

#[test]
fn silent_self_symbol_reduces_to_plain_zero_forcing() {
    let scheme = PairwiseScheme::new(PairwiseVariant::IcNullSpace);
    let msgs = scheme.messages();
    for seed in 0..50 {
        let ch = draw(&scheme, seed);
        let prep = scheme.prepare(&ch, &cfg(1.0)).unwrap();
        let j = (seed % 4) as usize;
        let mut values = SymbolMatrix::draw(&msgs, seed).values().to_vec();
        values[msgs.id(j ^ 2, j)] = c(0.0, 0.0);
        let mut space = SampleSpace::new(SymbolMatrix::from_values(&msgs, values.clone()), 0, false);
        let round = scheme.observe(&prep, &ch, &cfg(1.0), &mut space).unwrap();
        let obs = &round.observations[j];
        let plain = left_inverse(&obs.h_eff).unwrap();
        let est = zf_decode(obs, Tolerance::default()).unwrap();
        let want = values[obs.wanted[0]];
        assert!((est[0] - want).norm() < 1e-8);
        let direct: C64 = (0..2).map(|i| plain[(0, i)] * obs.cleaned[i]).sum();
        assert!((direct - want).norm() < 1e-8);
    }
}

#[test]
fn alignment_beams_reproduce_direct_coefficients() {
    let scheme = PairwiseScheme::new(PairwiseVariant::IcAlignment);
    let msgs = scheme.messages();
    for seed in 0..200 {
        let ch = draw(&scheme, seed);
        let set = ic_alignment_precoders(&ch, 2).unwrap();
        for s in 0..4 {
            let t = s % 2;
            let v = set.get(2, s ^ 2, s);
            for listener in [1 - t, 3 - t] {
                let target = ch.slots[t].h(listener, s);
                assert!((row_gain(&ch, 2, listener, v) - target).norm() <= 1e-10 * target.norm().max(1.0));
            }
        }

        // after the recorded slot and the own symbol are removed only s_{j,p} is left
        let prep = scheme.prepare(&ch, &cfg(1.0)).unwrap();
        let mut forms = FormSpace::new(false);
        let round = scheme.observe(&prep, &ch, &cfg(1.0), &mut forms).unwrap();
        for obs in &round.observations {
            let f: &LinearForm = &obs.cleaned[0];
            let want = msgs.id(obs.user, obs.user ^ 2);
            let kept = f.symbol_coef(want).norm();
            assert!(kept > 0.0);
            for id in (0..msgs.len()).filter(|&id| id != want) {
                assert!(f.symbol_coef(id).norm() <= 1e-9 * kept);
            }
        }
    }
}

#[test]
fn alignment_with_real_channels_is_real() {
    let scheme = PairwiseScheme::new(PairwiseVariant::IcAlignment);
    for seed in 0..20 {
        let mut ch = draw(&scheme, seed);
        for s in &mut ch.slots {
            for m in [&mut s.user_to_user, &mut s.uplink, &mut s.downlink] {
                *m = CMatrix::from_fn(m.rows(), m.cols(), |i, j| c(m[(i, j)].re, 0.0));
            }
        }
        let set = ic_alignment_precoders(&ch, 2).unwrap();
        for (_, v) in set.iter() {
            assert!(v.as_slice().iter().all(|z| z.im.abs() < 1e-15 * z.norm().max(1.0)));
        }
    }
}

#[test]
fn amplify_and_forward_matches_decode_and_forward() {
    let df = Scheme::build(SchemeId::Ic, None, None, None).unwrap();
    let af = Scheme::build(SchemeId::IcAf, None, None, None).unwrap();
    for power in [1.0, 1e3] {
        for seed in 0..200 {
            let ch = df.draw(seed, DEFAULT_H_MIN, DEFAULT_H_MAX).unwrap();
            let symbols = SymbolMatrix::draw(&df.messages(), seed);
            let cfg = cfg(power);
            let mut rounds = Vec::new();
            for s in [&df, &af] {
                let prep = s.prepare(&ch, &cfg).unwrap();
                let mut space = SampleSpace::new(symbols.clone(), 0, false);
                rounds.push(s.observe(&prep, &ch, &cfg, &mut space).unwrap());
            }
            let diff: f64 = rounds[0].relay_tx[0]
                .iter()
                .zip(&rounds[1].relay_tx[0])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-9 * power.sqrt(), "P={power} seed {seed}: {diff:e}");
            for (a, b) in rounds[0].observations.iter().zip(&rounds[1].observations) {
                assert!(a.h_eff.distance(&b.h_eff) < 1e-9 * a.h_eff.frobenius_norm());
            }
        }
    }
}

#[test]
fn zero_observation_gives_zero_transmit() {
    let scheme = PairwiseScheme::new(PairwiseVariant::IcAf);
    let ch = draw(&scheme, 1);
    let set = ic_build_precoders(&ch, 2).unwrap();
    let u0 = left_inverse(&ch.slots[0].up_cols(&[0, 1])).unwrap();
    let u1 = left_inverse(&ch.slots[1].up_cols(&[2, 3])).unwrap();
    let zero = [c(0.0, 0.0); 2];
    let x: Vec<C64> = ic_af_transmit([&zero, &zero], [&u0, &u1], &set, 2, 3.0);
    assert!(x.iter().all(|z| z.norm() == 0.0));
}

#[test]
fn x_beams_meet_all_sixteen_conditions() {
    let scheme = PairwiseScheme::new(PairwiseVariant::XChannel);
    for seed in 0..200 {
        let ch = draw(&scheme, seed);
        let set = x_build_precoders(&ch, 4).unwrap();
        assert_eq!(set.len(), 8);
        for ((_, i, j), v) in set.iter() {
            let target = ch.slots[X_DEST_SLOT[i]].h(i ^ 1, j);
            let scale = target.norm().max(1.0);
            assert!(row_gain(&ch, 4, j ^ 1, v).norm() <= 1e-9 * scale);
            assert!((row_gain(&ch, 4, i ^ 1, v) - target).norm() <= 1e-9 * scale);
        }
    }
}

#[test]
fn x_identity_rows_give_stacked_target() {
    let scheme = PairwiseScheme::new(PairwiseVariant::XChannel);
    let mut ch = draw(&scheme, 8);
    let d = &mut ch.slots[4].downlink;
    d[(1, 0)] = c(1.0, 0.0);
    d[(1, 1)] = c(0.0, 0.0);
    d[(3, 0)] = c(0.0, 0.0);
    d[(3, 1)] = c(1.0, 0.0);
    let set = x_build_precoders(&ch, 4).unwrap();
    // v_{2,0}: nulled at user 1, reproduces h_{3,0} (slot 0) at user 3
    let v = set.get(4, 2, 0);
    let target = ch.slots[X_DEST_SLOT[2]].h(3, 0);
    assert!(v[(0, 0)].norm() < 1e-15);
    assert!((v[(1, 0)] - target).norm() < 1e-15);
}

#[test]
fn x_interference_shape_matches_recorded_equation() {
    let scheme = PairwiseScheme::new(PairwiseVariant::XChannel);
    let msgs = scheme.messages();
    let power = 1.0;
    for seed in 0..1000 {
        let ch = draw(&scheme, seed);
        let prep = scheme.prepare(&ch, &cfg(power)).unwrap();
        let mut forms = FormSpace::new(false);
        let round = scheme.observe(&prep, &ch, &cfg(power), &mut forms).unwrap();
        for j in 0..4 {
            let mate = j ^ 1;
            let recorded_slot = X_DEST_SLOT[mate];
            for s in if j < 2 { [2, 3] } else { [0, 1] } {
                // relay-slot coefficient of s_{mate,s} at user j equals the
                // coefficient user j recorded for it in slot `recorded_slot`
                let relay = row_gain(&ch, 4, j, prep.precoders.get(4, mate, s)) * prep.gain;
                let recorded = ch.slots[recorded_slot].h(j, s) * prep.gain;
                assert!((relay - recorded).norm() <= 1e-9 * recorded.norm().max(1e-300));
                let left = round.observations[j].cleaned[1].symbol_coef(msgs.id(mate, s)).norm();
                assert!(left <= 1e-9 * recorded.norm());
            }
        }
    }
}

#[test]
fn x_recorded_noise_adds_to_relay_noise() {
    let scheme = PairwiseScheme::new(PairwiseVariant::XChannel);
    let msgs = scheme.messages();
    let power: f64 = 100.0;
    let cfg = RoundConfig::new(power, true).unwrap().with_genie(true);
    let ch = draw(&scheme, 21);
    let prep = scheme.prepare(&ch, &cfg).unwrap();
    let expected = 1.0 + (prep.gain / power.sqrt()).powi(2);
    let runs = 20_000;
    let mut acc = [0.0; 4];
    for run in 0..runs {
        let symbols = SymbolMatrix::draw(&msgs, run);
        let mut space = SampleSpace::new(symbols.clone(), run + 1, true);
        let round = scheme.observe(&prep, &ch, &cfg, &mut space).unwrap();
        for obs in &round.observations {
            let clean: C64 = obs
                .unknowns
                .iter()
                .enumerate()
                .map(|(c, &id)| obs.h_eff[(1, c)] * symbols.values()[id])
                .sum();
            acc[obs.user] += (obs.cleaned[1] - clean).norm_sqr();
        }
    }
    for (j, a) in acc.iter().enumerate() {
        let var = a / runs as f64;
        assert!((var / expected - 1.0).abs() < 0.05, "user {j}: {var} vs {expected}");
    }

    // the symbolic covariance agrees exactly
    let mut forms = FormSpace::new(true);
    let round = scheme.observe(&prep, &ch, &cfg, &mut forms).unwrap();
    for obs in &round.observations {
        let cov = analyze(obs, msgs.len()).noise_cov().unwrap();
        assert!((cov[(1, 1)].re - expected).abs() < 1e-12);
    }
}

#[test]
fn masked_messages_carry_no_energy() {
    for variant in [PairwiseVariant::IcNullSpace, PairwiseVariant::XChannel] {
        let scheme = PairwiseScheme::new(variant);
        let msgs = scheme.messages();
        let masked: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && !msgs.contains(i, j))
            .collect();
        assert_eq!(masked.len(), if variant == PairwiseVariant::XChannel { 4 } else { 8 });
        let ch = draw(&scheme, 2);
        let prep = scheme.prepare(&ch, &cfg(1.0)).unwrap();
        let mut forms = FormSpace::new(false);
        let round = scheme.observe(&prep, &ch, &cfg(1.0), &mut forms).unwrap();
        for f in round.relay_tx[0].iter().chain(round.observations.iter().flat_map(|o| &o.cleaned)) {
            assert!(f.symbols.len() <= msgs.len());
        }
        assert_eq!(prep.precoders.len(), msgs.len());
    }
}
