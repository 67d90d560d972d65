//! Schemes with single-antenna amplify-and-forward relays that share channel
//! knowledge but never received samples.
//!
//! Relay `n` stores only its own scalar observations and transmits
//! `α Σ_t w^n[t] y^n[t]`. The coefficients `w^n[t]` come from a central
//! planner and are chosen so that interference unknown to a user cancels over
//! the two-hop paths. One common gain `α` keeps every relay within power.

use crate::channel::{
    ChannelSet, FormSpace, MessageSet, Node, Signal, SignalSpace, SlotPlan, SlotSpec, Topology,
};
use crate::linalg::{self, null_space, unvec, CMatrix, Tolerance, C64};
use crate::round::{
    calibrate_by_simulation, known_combination, run_relay_slot, run_user_slot, Round, RoundConfig, SchemeError,
    UserObservation,
};

/// One single-antenna relay: its own receive history and its coefficient
/// for each stored slot.
#[derive(Clone, Debug)]
pub struct DistributedRelay<S> {
    index: usize,
    coefs: Vec<C64>,
    history: Vec<S>,
}

impl<S: Signal> DistributedRelay<S> {
    pub fn new(index: usize, coefs: Vec<C64>) -> Self {
        DistributedRelay {
            index,
            coefs,
            history: Vec::new(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn receive(&mut self, y: S) {
        self.history.push(y);
    }

    /// `gain · Σ_t w[t] y[t]` over the stored observations.
    pub fn transmit(&self, gain: f64) -> S {
        assert_eq!(self.history.len(), self.coefs.len(), "relay {} history incomplete", self.index);
        let mut x = S::zero();
        for (y, w) in self.history.iter().zip(&self.coefs) {
            x.add_scaled(y, w * gain);
        }
        x
    }
}

/// Hands each relay its own row of a coefficient matrix (`relays × stored slots`).
pub fn distribute<S: Signal>(coefs: &CMatrix) -> Vec<DistributedRelay<S>> {
    (0..coefs.rows())
        .map(|n| DistributedRelay::new(n, coefs.row_entries(n).to_vec()))
        .collect()
}

/// Runs the user slots, feeding each relay only its own antenna, then the
/// relay slot. Returns direct observations `heard[t]` (per user, `None` when
/// not listening), the relay transmit vector and the relay-slot observations.
type RelayRun<S> = (Vec<Vec<Option<S>>>, Vec<S>, Vec<S>);

fn run_af_round<Sp: SignalSpace>(
    plan: &SlotPlan,
    senders: &[Vec<(usize, usize)>],
    coefs: &CMatrix,
    gain: f64,
    channels: &ChannelSet,
    cfg: &RoundConfig,
    space: &mut Sp,
) -> Result<RelayRun<Sp::Sig>, SchemeError> {
    let users = channels.topology.users;
    let mut relays: Vec<DistributedRelay<Sp::Sig>> = distribute(coefs);
    let mut heard = Vec::new();
    for (t, s) in senders.iter().enumerate() {
        let rx = run_user_slot(t, plan, s, channels, cfg.sqrt_p(), space)?;
        for (relay, y) in relays.iter_mut().zip(&rx[&Node::Relay]) {
            relay.receive(y.clone());
        }
        heard.push((0..users).map(|u| rx.get(&Node::User(u)).map(|y| y[0].clone())).collect());
    }
    let x: Vec<Sp::Sig> = relays.iter().map(|r| r.transmit(gain)).collect();
    let n = senders.len();
    let rx = run_relay_slot(n, plan, x.clone(), channels, space)?;
    let relay_obs = (0..users).map(|u| rx[&Node::User(u)][0].clone()).collect();
    Ok((heard, x, relay_obs))
}

/// Two-hop row `g` for listener `j`, transmitter `i` sent in slot `t`:
/// component `n` is `downlink[j][n] · uplink_t[n][i]`.
pub fn two_hop_row(channels: &ChannelSet, relay_slot: usize, j: usize, i: usize, t: usize) -> Vec<C64> {
    let down = channels.slots[relay_slot].downlink.row_entries(j);
    let up = &channels.slots[t].uplink;
    down.iter().enumerate().map(|(n, d)| d * up[(n, i)]).collect()
}

// ---------------------------------------------------------------------------
// Two-pair two-way interference channel

fn partner(j: usize) -> usize {
    j ^ 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DistIcScheme {
    relays: usize,
}

#[derive(Clone, Debug)]
pub struct DistIcPrepared {
    /// `w[t]` for the two user slots, as columns of a `relays × 2` matrix.
    pub coefs: CMatrix,
    pub gain: f64,
}

impl DistIcPrepared {
    pub fn w(&self, t: usize) -> Vec<C64> {
        self.coefs.col(t)
    }
}

/// Neutralization gains: `w[0]` silences user 1's symbol at user 0 and user
/// 0's symbol at user 1; `w[1]` does the same for users 2 and 3. Unit norm.
pub fn dist_ic_gains(channels: &ChannelSet) -> Result<CMatrix, SchemeError> {
    let relay_slot = 2;
    let mut cols = Vec::new();
    for t in 0..2 {
        let (a, b) = (2 * t, 2 * t + 1);
        let rows = CMatrix::from_rows(&[
            two_hop_row(channels, relay_slot, a, b, t),
            two_hop_row(channels, relay_slot, b, a, t),
        ])?;
        cols.push(null_space(&rows, Tolerance::default())?.col_matrix(0));
    }
    Ok(CMatrix::hstack(&[&cols[0], &cols[1]])?)
}

impl DistIcScheme {
    pub fn new(relays: usize) -> Result<Self, SchemeError> {
        if relays == 0 {
            return Err(SchemeError::InvalidConfig("need at least one relay".into()));
        }
        Ok(DistIcScheme { relays })
    }

    pub fn topology(&self) -> Topology {
        Topology::distributed(4, self.relays).expect("validated in new")
    }

    pub fn messages(&self) -> MessageSet {
        MessageSet::new(4, (0..4).map(|s| (partner(s), s)))
    }

    pub fn slot_count(&self) -> usize {
        3
    }

    pub fn senders(&self, t: usize) -> Vec<(usize, usize)> {
        let msgs = self.messages();
        [2 * t, 2 * t + 1].iter().map(|&u| (u, msgs.id(partner(u), u))).collect()
    }

    pub fn plan(&self) -> SlotPlan {
        let mut slots: Vec<SlotSpec> = (0..2)
            .map(|t| {
                SlotSpec::new(
                    [Node::User(2 * t), Node::User(2 * t + 1)],
                    [Node::User(2 - 2 * t), Node::User(3 - 2 * t), Node::Relay],
                )
            })
            .collect();
        slots.push(SlotSpec::relay_broadcast(4));
        SlotPlan { slots }
    }

    fn check_channels(&self, channels: &ChannelSet) -> Result<(), SchemeError> {
        if channels.topology != self.topology() || channels.slot_count() < self.slot_count() {
            return Err(SchemeError::InvalidConfig(
                "channel realization does not match the distributed IC topology".into(),
            ));
        }
        Ok(())
    }

    pub fn prepare(&self, channels: &ChannelSet, cfg: &RoundConfig) -> Result<DistIcPrepared, SchemeError> {
        self.check_channels(channels)?;
        let mut prep = DistIcPrepared {
            coefs: dist_ic_gains(channels)?,
            gain: 1.0,
        };
        prep.gain = calibrate_by_simulation(cfg.noise_on, cfg.power, true, |space: &mut FormSpace| {
            Ok(self.observe(&prep, channels, cfg, space)?.relay_tx)
        })?[0];
        Ok(prep)
    }

    pub fn observe<Sp: SignalSpace>(
        &self,
        prep: &DistIcPrepared,
        channels: &ChannelSet,
        cfg: &RoundConfig,
        space: &mut Sp,
    ) -> Result<Round<Sp::Sig>, SchemeError> {
        self.check_channels(channels)?;
        let msgs = self.messages();
        let senders: Vec<_> = (0..2).map(|t| self.senders(t)).collect();
        let (heard, x, relay_obs) =
            run_af_round(&self.plan(), &senders, &prep.coefs, prep.gain, channels, cfg, space)?;
        let sqrt_p = cfg.sqrt_p();
        let scale = prep.gain * sqrt_p;
        let coef = |j: usize, s: usize| {
            let t = s / 2;
            linalg::dot(&two_hop_row(channels, 2, j, s, t), &prep.w(t)) * scale
        };

        let mut observations = Vec::with_capacity(4);
        for j in 0..4 {
            let p = partner(j);
            let q = p ^ 1;
            let ls = p / 2;
            let unknowns = vec![msgs.id(j, p), msgs.id(partner(q), q)];
            let self_term = known_combination(space, &[(msgs.id(p, j), coef(j, j))]);
            let d = &channels.slots[ls];
            observations.push(UserObservation {
                user: j,
                wanted: vec![unknowns[0]],
                unknowns,
                h_eff: CMatrix::from_rows(&[
                    vec![d.h(j, p) * sqrt_p, d.h(j, q) * sqrt_p],
                    vec![coef(j, p), coef(j, q)],
                ])?,
                cleaned: vec![
                    heard[ls][j].clone().expect("user listens to its partner"),
                    relay_obs[j].minus(&self_term),
                ],
            });
        }
        Ok(Round {
            relay_tx: vec![x],
            observations,
        })
    }

    /// `|g_{a,b}·w[t]| / ‖g_{a,b}‖` for the four neutralization conditions.
    pub fn neutralization_residuals(&self, prep: &DistIcPrepared, channels: &ChannelSet) -> Vec<f64> {
        (0..2)
            .flat_map(|t| [(2 * t, 2 * t + 1), (2 * t + 1, 2 * t)].map(|(a, b)| (a, b, t)))
            .map(|(a, b, t)| {
                let g = two_hop_row(channels, 2, a, b, t);
                let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                linalg::dot(&g, &prep.w(t)).norm() / norm
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Three-user Y channel

const Y_USERS: usize = 3;
const Y_RELAY_SLOT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DistYScheme {
    relays: usize,
}

/// Per-user symbol classification and the stacked neutralization system.
#[derive(Clone, Debug)]
pub struct DistYSystem {
    /// Symbol `(dest, src)` of each column of the slot-ordered stack
    /// `[s_{0,·}; s_{1,·}; s_{2,·}]`.
    pub stack: Vec<(usize, usize)>,
    /// `P_j` with `stack = P_j · [desired_j; self_j; other_j]`.
    pub permutations: Vec<CMatrix>,
    /// Uplink columns (at the symbol's own slot) of the desired, self and
    /// other symbols of each user, `relays × 2` each.
    pub a: Vec<CMatrix>,
    pub b: Vec<CMatrix>,
    pub c: Vec<CMatrix>,
    /// Rows `e_kᵀ ⊗ (d_j ∘ u_l[k])ᵀ`, one per (user, unknown interferer).
    pub f_bar: CMatrix,
}

#[derive(Clone, Debug)]
pub struct DistYPrepared {
    pub system: DistYSystem,
    /// `V^R(n, k)`: relay `n`'s coefficient on its slot-`k` observation.
    pub v_r: CMatrix,
    pub null_dim: usize,
    pub gain: f64,
}

fn y_stack() -> Vec<(usize, usize)> {
    (0..Y_USERS)
        .flat_map(|k| (0..Y_USERS).filter(move |&l| l != k).map(move |l| (k, l)))
        .collect()
}

fn y_classes(j: usize) -> [Vec<(usize, usize)>; 3] {
    let stack = y_stack();
    let desired = stack.iter().copied().filter(|&(k, _)| k == j).collect();
    let own = stack.iter().copied().filter(|&(_, l)| l == j).collect();
    let other = stack.iter().copied().filter(|&(k, l)| k != j && l != j).collect();
    [desired, own, other]
}

pub fn dist_y_assemble(channels: &ChannelSet) -> Result<DistYSystem, SchemeError> {
    let r = channels.topology.relay_dim();
    let stack = y_stack();
    let up_col = |(k, l): (usize, usize)| channels.slots[k].uplink.col(l);
    let block = |syms: &[(usize, usize)]| {
        CMatrix::from_fn(r, syms.len(), |n, c| up_col(syms[c])[n])
    };
    let mut permutations = Vec::new();
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    let mut f_rows = Vec::new();
    for j in 0..Y_USERS {
        let [desired, own, other] = y_classes(j);
        let order: Vec<(usize, usize)> = desired.iter().chain(&own).chain(&other).copied().collect();
        permutations.push(CMatrix::from_fn(6, 6, |row, col| {
            if stack[row] == order[col] {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }));
        a.push(block(&desired));
        b.push(block(&own));
        c.push(block(&other));
        let down = channels.slots[Y_RELAY_SLOT].downlink.row_entries(j);
        for &(k, l) in &other {
            let u = up_col((k, l));
            let mut row = vec![C64::new(0.0, 0.0); Y_USERS * r];
            for n in 0..r {
                row[k * r + n] = down[n] * u[n];
            }
            f_rows.push(row);
        }
    }
    Ok(DistYSystem {
        stack,
        permutations,
        a,
        b,
        c,
        f_bar: CMatrix::from_rows(&f_rows)?,
    })
}

/// Unit-norm `V^R` whose vectorization lies in `null(F̄)`. Among the null
/// space it takes the projection of the all-ones vector, so that no slot's
/// column is structurally zero. Also returns the null-space dimension.
pub fn dist_y_solve(system: &DistYSystem, relays: usize) -> Result<(CMatrix, usize), SchemeError> {
    let basis = null_space(&system.f_bar, Tolerance::default())?;
    let dim = basis.cols();
    let ones = CMatrix::from_fn(basis.rows(), 1, |_, _| C64::new(1.0, 0.0));
    let mut v = &basis * &(&basis.adjoint() * &ones);
    if v.frobenius_norm() < 1e-6 {
        v = basis.col_matrix(0);
    }
    let v = v.scale_real(1.0 / v.frobenius_norm());
    Ok((unvec(&v, relays, Y_USERS)?, dim))
}

impl DistYScheme {
    pub fn new(relays: usize) -> Result<Self, SchemeError> {
        if relays == 0 {
            return Err(SchemeError::InvalidConfig("need at least one relay".into()));
        }
        Ok(DistYScheme { relays })
    }

    pub fn topology(&self) -> Topology {
        Topology::distributed(Y_USERS, self.relays).expect("validated in new")
    }

    pub fn messages(&self) -> MessageSet {
        MessageSet::all_pairs(Y_USERS)
    }

    pub fn slot_count(&self) -> usize {
        4
    }

    pub fn plan(&self) -> SlotPlan {
        crate::scheme_y::build_plan(Y_USERS)
    }

    pub fn senders(&self, k: usize) -> Vec<(usize, usize)> {
        let msgs = self.messages();
        (0..Y_USERS).filter(|&l| l != k).map(|l| (l, msgs.id(k, l))).collect()
    }

    fn check_channels(&self, channels: &ChannelSet) -> Result<(), SchemeError> {
        if channels.topology != self.topology() || channels.slot_count() < self.slot_count() {
            return Err(SchemeError::InvalidConfig(
                "channel realization does not match the distributed Y topology".into(),
            ));
        }
        Ok(())
    }

    pub fn prepare(&self, channels: &ChannelSet, cfg: &RoundConfig) -> Result<DistYPrepared, SchemeError> {
        self.check_channels(channels)?;
        let system = dist_y_assemble(channels)?;
        let (v_r, null_dim) = dist_y_solve(&system, self.relays)?;
        let mut prep = DistYPrepared {
            system,
            v_r,
            null_dim,
            gain: 1.0,
        };
        prep.gain = calibrate_by_simulation(cfg.noise_on, cfg.power, true, |space: &mut FormSpace| {
            Ok(self.observe(&prep, channels, cfg, space)?.relay_tx)
        })?[0];
        Ok(prep)
    }

    /// Coefficient of `s_{k,l}` at user `j` in the relay slot, per unit
    /// gain and unit `√P`.
    fn path(&self, v_r: &CMatrix, channels: &ChannelSet, j: usize, (k, l): (usize, usize)) -> C64 {
        let down = channels.slots[Y_RELAY_SLOT].downlink.row_entries(j);
        let up = &channels.slots[k].uplink;
        (0..self.relays).map(|n| down[n] * v_r[(n, k)] * up[(n, l)]).sum()
    }

    pub fn observe<Sp: SignalSpace>(
        &self,
        prep: &DistYPrepared,
        channels: &ChannelSet,
        cfg: &RoundConfig,
        space: &mut Sp,
    ) -> Result<Round<Sp::Sig>, SchemeError> {
        self.check_channels(channels)?;
        let msgs = self.messages();
        let senders: Vec<_> = (0..Y_USERS).map(|k| self.senders(k)).collect();
        let (heard, x, relay_obs) = run_af_round(&self.plan(), &senders, &prep.v_r, prep.gain, channels, cfg, space)?;
        let sqrt_p = cfg.sqrt_p();
        let scale = prep.gain * sqrt_p;

        let mut observations = Vec::with_capacity(Y_USERS);
        for j in 0..Y_USERS {
            let [desired, own, _] = y_classes(j);
            let unknowns: Vec<usize> = desired.iter().map(|&(k, l)| msgs.id(k, l)).collect();
            let self_terms: Vec<(usize, C64)> = own
                .iter()
                .map(|&(k, l)| (msgs.id(k, l), self.path(&prep.v_r, channels, j, (k, l)) * scale))
                .collect();
            let self_term = known_combination(space, &self_terms);
            let d = &channels.slots[j];
            observations.push(UserObservation {
                user: j,
                wanted: unknowns.clone(),
                unknowns,
                h_eff: CMatrix::from_rows(&[
                    desired.iter().map(|&(_, l)| d.h(j, l) * sqrt_p).collect(),
                    desired
                        .iter()
                        .map(|&s| self.path(&prep.v_r, channels, j, s) * scale)
                        .collect(),
                ])?,
                cleaned: vec![
                    heard[j][j].clone().expect("user listens in its own slot"),
                    relay_obs[j].minus(&self_term),
                ],
            });
        }
        Ok(Round {
            relay_tx: vec![x],
            observations,
        })
    }

    /// `‖(path coefficients of user j's unknown interferers)‖ / (‖d_j‖ ‖V^R‖)`
    /// for each user.
    pub fn neutralization_residuals(&self, prep: &DistYPrepared, channels: &ChannelSet) -> Vec<f64> {
        (0..Y_USERS)
            .map(|j| {
                let [_, _, other] = y_classes(j);
                let res: f64 = other
                    .iter()
                    .map(|&s| self.path(&prep.v_r, channels, j, s).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let d = channels.slots[Y_RELAY_SLOT].down_row(j).frobenius_norm();
                let up: f64 = other
                    .iter()
                    .map(|&(k, l)| channels.slots[k].uplink.col_matrix(l).frobenius_norm())
                    .fold(0.0, f64::max);
                res / (d * prep.v_r.frobenius_norm() * up)
            })
            .collect()
    }
}
