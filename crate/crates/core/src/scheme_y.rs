//! K-user fully-connected Y channel with one multi-antenna relay.
//!
//! Phase one (slots `0..K`): in slot `k` every user except `k` sends its
//! symbol for `k`; user `k` and the relay listen. The relay zero-forces the
//! `K−1` symbols. Phase two (`K−2` slots): the relay broadcasts every symbol
//! on a beam nulled at all users that are neither its source nor its
//! destination. Each user cancels its own symbols and solves a
//! `(K−1)×(K−1)` system for its desired ones.

use std::collections::BTreeMap;

use crate::channel::{
    ChannelSet, FormSpace, LinearForm, MessageSet, Node, Signal, SignalSpace, SlotPlan, SlotSpec, Topology,
};
use crate::linalg::{null_space, CMatrix, Tolerance, C64};
use crate::round::{
    beamform, calibrate_by_simulation, df_estimates, known_combination, row_gain, run_relay_slot, run_user_slot,
    PrecoderSet, Round, RoundConfig, SchemeError, UserObservation,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct YScheme {
    users: usize,
    antennas: usize,
}

/// Precoders and relay gains for one realization.
#[derive(Clone, Debug)]
pub struct YPrepared {
    pub precoders: PrecoderSet,
    /// Gain of each phase-two slot.
    pub gains: Vec<f64>,
}

pub fn build_plan(users: usize) -> SlotPlan {
    let mut slots: Vec<SlotSpec> = (0..users)
        .map(|k| {
            SlotSpec::new(
                (0..users).filter(|&l| l != k).map(Node::User),
                [Node::User(k), Node::Relay],
            )
        })
        .collect();
    slots.extend((0..users.saturating_sub(2)).map(|_| SlotSpec::relay_broadcast(users)));
    SlotPlan { slots }
}

fn others(users: usize, k: usize) -> Vec<usize> {
    (0..users).filter(|&l| l != k).collect()
}

/// Null-space beams for relay slot `slot`: `v_{a,b} = v_{b,a}` is orthogonal
/// to the downlink row of every user outside `{a, b}`. The first basis column
/// is used when the null space has more than one dimension.
pub fn build_relay_precoders(channels: &ChannelSet, slot: usize) -> Result<PrecoderSet, SchemeError> {
    let users = channels.topology.users;
    let ch = channels.slot(slot)?;
    let mut set = PrecoderSet::default();
    for a in 0..users {
        for b in a + 1..users {
            let outside: Vec<usize> = (0..users).filter(|&i| i != a && i != b).collect();
            let rows = ch.downlink.select_rows(&outside);
            let basis = null_space(&rows, Tolerance::default())?;
            let v = basis.col_matrix(0);
            set.insert(slot, a, b, v.clone());
            set.insert(slot, b, a, v);
        }
    }
    Ok(set)
}

impl YScheme {
    pub fn new(users: usize, antennas: usize) -> Result<Self, SchemeError> {
        if users < 3 {
            return Err(SchemeError::InvalidConfig(format!("Y channel needs K >= 3 users, got {users}")));
        }
        if antennas + 1 < users {
            return Err(SchemeError::InvalidConfig(format!(
                "Y channel needs N >= K-1 relay antennas, got K={users}, N={antennas}"
            )));
        }
        Ok(YScheme { users, antennas })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn topology(&self) -> Topology {
        Topology::co_located(self.users, self.antennas).expect("validated in new")
    }

    pub fn messages(&self) -> MessageSet {
        MessageSet::all_pairs(self.users)
    }

    pub fn plan(&self) -> SlotPlan {
        build_plan(self.users)
    }

    pub fn slot_count(&self) -> usize {
        2 * self.users - 2
    }

    pub fn relay_slots(&self) -> std::ops::Range<usize> {
        self.users..self.slot_count()
    }

    pub fn prepare(&self, channels: &ChannelSet, cfg: &RoundConfig) -> Result<YPrepared, SchemeError> {
        self.check_channels(channels)?;
        let mut precoders = PrecoderSet::default();
        for n in self.relay_slots() {
            for (key, v) in build_relay_precoders(channels, n)?.iter() {
                precoders.insert(key.0, key.1, key.2, v.clone());
            }
        }
        let mut prep = YPrepared {
            precoders,
            gains: vec![1.0; self.users - 2],
        };
        prep.gains = calibrate_by_simulation(cfg.noise_on, cfg.power, false, |space: &mut FormSpace| {
            Ok(self.observe(&prep, channels, cfg, space)?.relay_tx)
        })?;
        Ok(prep)
    }

    fn check_channels(&self, channels: &ChannelSet) -> Result<(), SchemeError> {
        if channels.topology != self.topology() || channels.slot_count() < self.slot_count() {
            return Err(SchemeError::InvalidConfig(
                "channel realization does not match the Y scheme topology".into(),
            ));
        }
        Ok(())
    }

    pub fn observe<Sp: SignalSpace>(
        &self,
        prep: &YPrepared,
        channels: &ChannelSet,
        cfg: &RoundConfig,
        space: &mut Sp,
    ) -> Result<Round<Sp::Sig>, SchemeError> {
        self.check_channels(channels)?;
        let k_users = self.users;
        let msgs = self.messages();
        let plan = self.plan();
        let sqrt_p = cfg.sqrt_p();

        let mut direct: Vec<Sp::Sig> = Vec::with_capacity(k_users);
        let mut estimates: BTreeMap<usize, Sp::Sig> = BTreeMap::new();
        for k in 0..k_users {
            let senders: Vec<(usize, usize)> = others(k_users, k).into_iter().map(|l| (l, msgs.id(k, l))).collect();
            let mut rx = run_user_slot(k, &plan, &senders, channels, sqrt_p, space)?;
            direct.push(rx.remove(&Node::User(k)).expect("user k listens")[0].clone());
            let y_r = rx.remove(&Node::Relay).expect("relay listens");
            let est = df_estimates(k, &y_r, &senders, &channels.slots[k].uplink, cfg, space)?;
            estimates.extend(est);
        }

        let mut relay_tx = Vec::new();
        let mut relay_rx: Vec<BTreeMap<Node, Vec<Sp::Sig>>> = Vec::new();
        for (r, n) in self.relay_slots().enumerate() {
            let terms: Vec<(&CMatrix, &Sp::Sig)> = msgs
                .pairs()
                .map(|((d, s), id)| (prep.precoders.get(n, d, s), &estimates[&id]))
                .collect();
            let x = beamform(self.antennas, prep.gains[r], &terms);
            relay_tx.push(x.clone());
            relay_rx.push(run_relay_slot(n, &plan, x, channels, space)?);
        }

        let mut observations = Vec::with_capacity(k_users);
        for j in 0..k_users {
            let desired: Vec<usize> = others(k_users, j);
            let unknowns: Vec<usize> = desired.iter().map(|&l| msgs.id(j, l)).collect();
            let d1 = &channels.slots[j];
            let mut rows = vec![desired.iter().map(|&l| d1.h(j, l) * sqrt_p).collect::<Vec<C64>>()];
            let mut cleaned = vec![direct[j].clone()];
            for (r, n) in self.relay_slots().enumerate() {
                let gain = prep.gains[r];
                let down = channels.slots[n].downlink.row_entries(j);
                let own: Vec<(usize, C64)> = desired
                    .iter()
                    .map(|&i| (msgs.id(i, j), row_gain(down, prep.precoders.get(n, i, j)) * gain))
                    .collect();
                let self_term = known_combination(space, &own);
                cleaned.push(relay_rx[r][&Node::User(j)][0].minus(&self_term));
                rows.push(
                    desired
                        .iter()
                        .map(|&l| row_gain(down, prep.precoders.get(n, j, l)) * gain)
                        .collect(),
                );
            }
            observations.push(UserObservation {
                user: j,
                wanted: unknowns.clone(),
                unknowns,
                h_eff: CMatrix::from_rows(&rows)?,
                cleaned,
            });
        }
        Ok(Round {
            relay_tx,
            observations,
        })
    }

    /// Raw (uncleaned) symbolic relay-slot observations, for the
    /// interference-isolation check: `result[r][j]` is user `j` in relay slot `r`.
    pub fn relay_slot_forms(
        &self,
        prep: &YPrepared,
        channels: &ChannelSet,
        cfg: &RoundConfig,
    ) -> Result<Vec<Vec<LinearForm>>, SchemeError> {
        let mut space = FormSpace::new(false);
        let round = self.observe(prep, channels, cfg, &mut space)?;
        let plan = self.plan();
        self.relay_slots()
            .zip(round.relay_tx)
            .map(|(n, x)| {
                let rx = run_relay_slot(n, &plan, x, channels, &mut space)?;
                Ok((0..self.users).map(|j| rx[&Node::User(j)][0].clone()).collect())
            })
            .collect()
    }
}
