//! Four-user schemes with a two-antenna relay: the two-pair two-way
//! interference channel (null-space beams, space-time alignment, and an
//! amplify-and-forward relay) and the two-pair two-way X channel.
//!
//! Users are 0-based. In the interference channel users `j` and `j ^ 2` form
//! a pair. In the X channel users `{0, 1}` and `{2, 3}` form the two groups
//! and every user exchanges a symbol with both members of the other group.

use std::collections::BTreeMap;

use crate::channel::{ChannelSet, FormSpace, MessageSet, Node, Signal, SignalSpace, SlotPlan, SlotSpec, Topology};
use crate::linalg::{left_inverse, null_space, solve, CMatrix, Tolerance, C64};
use crate::round::{
    beamform, calibrate_by_simulation, df_estimates, known_combination, row_gain, run_relay_slot, run_user_slot,
    PrecoderSet, Round, RoundConfig, SchemeError, UserObservation,
};

pub const USERS: usize = 4;
pub const ANTENNAS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairwiseVariant {
    /// Relay beams nulled at the user that never heard the symbol.
    IcNullSpace,
    /// Relay reproduces, at each listener, the interference it recorded.
    IcAlignment,
    /// Null-space beams driven by zero-forced raw relay observations.
    IcAf,
    XChannel,
}

impl PairwiseVariant {
    pub fn is_ic(self) -> bool {
        !matches!(self, PairwiseVariant::XChannel)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairwiseScheme {
    variant: PairwiseVariant,
}

#[derive(Clone, Debug)]
pub struct PairwisePrepared {
    pub precoders: PrecoderSet,
    /// Gain of the single relay slot.
    pub gain: f64,
}

fn partner(j: usize) -> usize {
    j ^ 2
}

/// Slot in which user `j` is the destination of the X channel.
fn x_dest_slot(j: usize) -> usize {
    [2, 3, 0, 1][j]
}

fn x_slot_dest(t: usize) -> usize {
    [2, 3, 0, 1][t]
}

fn x_other_group(j: usize) -> [usize; 2] {
    if j < 2 {
        [2, 3]
    } else {
        [0, 1]
    }
}

/// IC relay beams: `v_{d,s}` is nulled at the user that transmitted together
/// with `s`, which never hears `s` directly.
pub fn ic_build_precoders(channels: &ChannelSet, relay_slot: usize) -> Result<PrecoderSet, SchemeError> {
    let ch = channels.slot(relay_slot)?;
    let mut set = PrecoderSet::default();
    for s in 0..USERS {
        let v = null_space(&ch.down_row(s ^ 1), Tolerance::default())?.col_matrix(0);
        set.insert(relay_slot, partner(s), s, v);
    }
    Ok(set)
}

/// Space-time alignment beams: a symbol sent in slot `t` reaches each of the
/// two slot-`t` listeners with the same coefficient it had on the direct link.
pub fn ic_alignment_precoders(channels: &ChannelSet, relay_slot: usize) -> Result<PrecoderSet, SchemeError> {
    let ch = channels.slot(relay_slot)?;
    let mut set = PrecoderSet::default();
    for s in 0..USERS {
        let t = s % 2;
        let listeners = [1 - t, 3 - t];
        let rows = ch.downlink.select_rows(&listeners);
        let target = CMatrix::column(&[
            channels.slots[t].h(listeners[0], s),
            channels.slots[t].h(listeners[1], s),
        ]);
        set.insert(relay_slot, partner(s), s, solve(&rows, &target)?);
    }
    Ok(set)
}

/// X-channel beams: `v_{i,j}` is nulled at `j`'s group mate and, at `i`'s
/// group mate, reproduces the coefficient `h_{i^1, j}` observed in the slot
/// where `i` was the destination.
pub fn x_build_precoders(channels: &ChannelSet, relay_slot: usize) -> Result<PrecoderSet, SchemeError> {
    let ch = channels.slot(relay_slot)?;
    let mut set = PrecoderSet::default();
    for j in 0..USERS {
        for i in x_other_group(j) {
            let rows = ch.downlink.select_rows(&[j ^ 1, i ^ 1]);
            let target = channels.slots[x_dest_slot(i)].h(i ^ 1, j);
            let rhs = CMatrix::column(&[C64::new(0.0, 0.0), target]);
            set.insert(relay_slot, i, j, solve(&rows, &rhs)?);
        }
    }
    Ok(set)
}

/// Relay transmit for the DF variants: `gain · Σ v_{d,s} ŝ_{d,s}`.
pub fn ic_df_transmit<S: Signal>(
    estimates: &BTreeMap<(usize, usize), S>,
    precoders: &PrecoderSet,
    relay_slot: usize,
    gain: f64,
) -> Vec<S> {
    let terms: Vec<(&CMatrix, &S)> = estimates
        .iter()
        .map(|(&(d, s), est)| (precoders.get(relay_slot, d, s), est))
        .collect();
    beamform(ANTENNAS, gain, &terms)
}

/// Amplify-and-forward relay transmit
/// `gain · ([v_{2,0} v_{3,1}] U₀ y_R[0] + [v_{0,2} v_{1,3}] U₁ y_R[1])`
/// where `U_t` are zero-forcing matrices of the raw uplink.
pub fn ic_af_transmit<S: Signal>(
    y_r: [&[S]; 2],
    u: [&CMatrix; 2],
    precoders: &PrecoderSet,
    relay_slot: usize,
    gain: f64,
) -> Vec<S> {
    let mut x = vec![S::zero(); ANTENNAS];
    for t in 0..2 {
        let zf = crate::channel::apply(u[t], y_r[t]);
        let senders = [2 * t, 2 * t + 1];
        for (col, &s) in zf.iter().zip(&senders) {
            let v = precoders.get(relay_slot, partner(s), s);
            for (a, xa) in x.iter_mut().enumerate() {
                xa.add_scaled(col, v[(a, 0)] * gain);
            }
        }
    }
    x
}

impl PairwiseScheme {
    pub fn new(variant: PairwiseVariant) -> Self {
        PairwiseScheme { variant }
    }

    pub fn variant(&self) -> PairwiseVariant {
        self.variant
    }

    pub fn topology(&self) -> Topology {
        Topology::co_located(USERS, ANTENNAS).expect("fixed topology")
    }

    pub fn messages(&self) -> MessageSet {
        if self.variant.is_ic() {
            MessageSet::new(USERS, (0..USERS).map(|s| (partner(s), s)))
        } else {
            MessageSet::new(USERS, (0..USERS).flat_map(|j| x_other_group(j).map(|i| (i, j))))
        }
    }

    pub fn slot_count(&self) -> usize {
        if self.variant.is_ic() {
            3
        } else {
            5
        }
    }

    pub fn relay_slot(&self) -> usize {
        self.slot_count() - 1
    }

    /// `(user, symbol id)` of every transmitter in a user slot.
    pub fn senders(&self, slot: usize) -> Vec<(usize, usize)> {
        let msgs = self.messages();
        let users: [usize; 2] = match self.variant {
            PairwiseVariant::IcNullSpace | PairwiseVariant::IcAf => [2 * slot, 2 * slot + 1],
            PairwiseVariant::IcAlignment => [slot, slot + 2],
            PairwiseVariant::XChannel => x_other_group(x_slot_dest(slot)),
        };
        users
            .iter()
            .map(|&u| {
                let dest = if self.variant.is_ic() { partner(u) } else { x_slot_dest(slot) };
                (u, msgs.id(dest, u))
            })
            .collect()
    }

    pub fn plan(&self) -> SlotPlan {
        let mut slots: Vec<SlotSpec> = (0..self.relay_slot())
            .map(|t| {
                let src: Vec<usize> = self.senders(t).iter().map(|&(u, _)| u).collect();
                SlotSpec::new(
                    src.iter().map(|&u| Node::User(u)),
                    (0..USERS)
                        .filter(|u| !src.contains(u))
                        .map(Node::User)
                        .chain([Node::Relay]),
                )
            })
            .collect();
        slots.push(SlotSpec::relay_broadcast(USERS));
        SlotPlan { slots }
    }

    /// The user slot in which user `j` listens to its partner (IC variants).
    fn ic_listen_slot(&self, j: usize) -> usize {
        (0..self.relay_slot())
            .find(|&t| self.senders(t).iter().any(|&(u, _)| u == partner(j)))
            .expect("partner transmits in some slot")
    }

    pub fn build_precoders(&self, channels: &ChannelSet) -> Result<PrecoderSet, SchemeError> {
        let n = self.relay_slot();
        match self.variant {
            PairwiseVariant::IcNullSpace | PairwiseVariant::IcAf => ic_build_precoders(channels, n),
            PairwiseVariant::IcAlignment => ic_alignment_precoders(channels, n),
            PairwiseVariant::XChannel => x_build_precoders(channels, n),
        }
    }

    pub fn prepare(&self, channels: &ChannelSet, cfg: &RoundConfig) -> Result<PairwisePrepared, SchemeError> {
        self.check_channels(channels)?;
        let mut prep = PairwisePrepared {
            precoders: self.build_precoders(channels)?,
            gain: 1.0,
        };
        let gains = calibrate_by_simulation(cfg.noise_on, cfg.power, false, |space: &mut FormSpace| {
            Ok(self.observe(&prep, channels, cfg, space)?.relay_tx)
        })?;
        prep.gain = gains[0];
        Ok(prep)
    }

    fn check_channels(&self, channels: &ChannelSet) -> Result<(), SchemeError> {
        if channels.topology != self.topology() || channels.slot_count() < self.slot_count() {
            return Err(SchemeError::InvalidConfig(
                "channel realization does not match the four-user topology".into(),
            ));
        }
        Ok(())
    }

    pub fn observe<Sp: SignalSpace>(
        &self,
        prep: &PairwisePrepared,
        channels: &ChannelSet,
        cfg: &RoundConfig,
        space: &mut Sp,
    ) -> Result<Round<Sp::Sig>, SchemeError> {
        self.check_channels(channels)?;
        let msgs = self.messages();
        let plan = self.plan();
        let sqrt_p = cfg.sqrt_p();
        let n = self.relay_slot();

        // heard[t][u]: what user u received in user slot t, if it listened
        let mut heard: Vec<BTreeMap<usize, Sp::Sig>> = Vec::new();
        let mut relay_heard: Vec<Vec<Sp::Sig>> = Vec::new();
        let mut estimates: BTreeMap<(usize, usize), Sp::Sig> = BTreeMap::new();
        for t in 0..n {
            let senders = self.senders(t);
            let rx = run_user_slot(t, &plan, &senders, channels, sqrt_p, space)?;
            let y_r = rx[&Node::Relay].clone();
            if self.variant != PairwiseVariant::IcAf {
                for (id, est) in df_estimates(t, &y_r, &senders, &channels.slots[t].uplink, cfg, space)? {
                    estimates.insert(msgs.pair(id), est);
                }
            }
            relay_heard.push(y_r);
            heard.push(
                rx.into_iter()
                    .filter_map(|(node, y)| match node {
                        Node::User(u) => Some((u, y[0].clone())),
                        Node::Relay => None,
                    })
                    .collect(),
            );
        }

        let gain = prep.gain;
        let x = if self.variant == PairwiseVariant::IcAf {
            let u0 = left_inverse(&channels.slots[0].up_cols(&[0, 1]))?;
            let u1 = left_inverse(&channels.slots[1].up_cols(&[2, 3]))?;
            ic_af_transmit([&relay_heard[0], &relay_heard[1]], [&u0, &u1], &prep.precoders, n, gain)
        } else {
            ic_df_transmit(&estimates, &prep.precoders, n, gain)
        };
        let rx = run_relay_slot(n, &plan, x.clone(), channels, space)?;
        // AF gains absorb the missing √P of the unscaled zero-forcing
        let eff_gain = if self.variant == PairwiseVariant::IcAf {
            gain * sqrt_p
        } else {
            gain
        };

        let mut observations = Vec::with_capacity(USERS);
        for j in 0..USERS {
            let down = channels.slots[n].downlink.row_entries(j);
            let relay_y = rx[&Node::User(j)][0].clone();
            let beam = |d: usize, s: usize| row_gain(down, prep.precoders.get(n, d, s)) * eff_gain;
            let obs = match self.variant {
                PairwiseVariant::IcNullSpace | PairwiseVariant::IcAf => {
                    let p = partner(j);
                    let ls = self.ic_listen_slot(j);
                    let q = p ^ 1;
                    let unknowns = vec![msgs.id(j, p), msgs.id(partner(q), q)];
                    let self_term = known_combination(space, &[(msgs.id(p, j), beam(p, j))]);
                    let d = &channels.slots[ls];
                    UserObservation {
                        user: j,
                        wanted: vec![unknowns[0]],
                        unknowns,
                        h_eff: CMatrix::from_rows(&[
                            vec![d.h(j, p) * sqrt_p, d.h(j, q) * sqrt_p],
                            vec![beam(j, p), beam(partner(q), q)],
                        ])?,
                        cleaned: vec![heard[ls][&j].clone(), relay_y.minus(&self_term)],
                    }
                }
                PairwiseVariant::IcAlignment => {
                    let p = partner(j);
                    let rs = 1 - j % 2;
                    let self_term = known_combination(space, &[(msgs.id(p, j), beam(p, j))]);
                    let recorded = heard[rs][&j].scaled(C64::new(eff_gain / sqrt_p, 0.0));
                    let id = msgs.id(j, p);
                    UserObservation {
                        user: j,
                        unknowns: vec![id],
                        wanted: vec![id],
                        h_eff: CMatrix::from_rows(&[vec![beam(j, p)]])?,
                        cleaned: vec![relay_y.minus(&recorded).minus(&self_term)],
                    }
                }
                PairwiseVariant::XChannel => {
                    let group = x_other_group(j);
                    let os = x_dest_slot(j);
                    let rs = x_dest_slot(j ^ 1);
                    let unknowns: Vec<usize> = group.iter().map(|&s| msgs.id(j, s)).collect();
                    let own: Vec<(usize, C64)> = group.iter().map(|&i| (msgs.id(i, j), beam(i, j))).collect();
                    let self_term = known_combination(space, &own);
                    let recorded = heard[rs][&j].scaled(C64::new(eff_gain / sqrt_p, 0.0));
                    let d = &channels.slots[os];
                    UserObservation {
                        user: j,
                        wanted: unknowns.clone(),
                        unknowns,
                        h_eff: CMatrix::from_rows(&[
                            group.iter().map(|&s| d.h(j, s) * sqrt_p).collect(),
                            group.iter().map(|&s| beam(j, s)).collect(),
                        ])?,
                        cleaned: vec![heard[os][&j].clone(), relay_y.minus(&recorded).minus(&self_term)],
                    }
                }
            };
            observations.push(obs);
        }
        Ok(Round {
            relay_tx: vec![x],
            observations,
        })
    }
}
