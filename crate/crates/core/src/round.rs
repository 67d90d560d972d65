//! Pieces shared by every scheme: round configuration, per-user cleaned
//! observations, zero-forcing, relay power calibration and the exact
//! decode analysis performed on [`LinearForm`] observations.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::channel::{
    apply, propagate, ChannelError, ChannelSet, FormSpace, LinearForm, Node, Signal, SignalSpace, SlotPlan,
};
use crate::linalg::{self, CMatrix, LinalgError, Tolerance, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("user {} effective channel has rank {rank}, needs {needed}", user + 1)]
    RankDeficient { user: usize, rank: usize, needed: usize },
    #[error("relay uplink in slot {slot} has rank {rank}, needs {needed}")]
    RelayRankDeficient { slot: usize, rank: usize, needed: usize },
    #[error("relay transmit signal has zero power")]
    SilentRelay,
}

impl SchemeError {
    /// True for failures caused by a numerically degenerate channel draw,
    /// which the caller may redraw.
    pub fn is_degenerate_draw(&self) -> bool {
        matches!(
            self,
            SchemeError::Linalg(
                LinalgError::Singular { .. } | LinalgError::EmptyNullSpace { .. } | LinalgError::NotPositiveDefinite
            ) | SchemeError::RankDeficient { .. }
                | SchemeError::RelayRankDeficient { .. }
                | SchemeError::SilentRelay
        )
    }
}

/// Per-round operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundConfig {
    /// Transmit power `P` of every node (linear).
    pub power: f64,
    pub noise_on: bool,
    /// Decode-and-forward relays use the true symbols instead of their ZF
    /// estimates.
    pub genie_relay: bool,
}

impl RoundConfig {
    pub fn new(power: f64, noise_on: bool) -> Result<Self, SchemeError> {
        if !(power > 0.0 && power.is_finite()) {
            return Err(ChannelError::BadPower(power).into());
        }
        Ok(RoundConfig {
            power,
            noise_on,
            genie_relay: false,
        })
    }

    pub fn from_db(db: f64, noise_on: bool) -> Result<Self, SchemeError> {
        Self::new(10f64.powf(db / 10.0), noise_on)
    }

    pub fn with_genie(mut self, genie: bool) -> Self {
        self.genie_relay = genie;
        self
    }

    pub fn sqrt_p(&self) -> f64 {
        self.power.sqrt()
    }
}

/// What one user decodes from: a stack of cleaned observations and the
/// coefficient matrix the user believes maps its unknown symbols onto them.
#[derive(Clone, Debug)]
pub struct UserObservation<S> {
    pub user: usize,
    /// Symbol ids solved for jointly, in column order of `h_eff`.
    pub unknowns: Vec<usize>,
    /// Subset of `unknowns` the user actually wants.
    pub wanted: Vec<usize>,
    pub h_eff: CMatrix,
    pub cleaned: Vec<S>,
}

/// Everything a scheme produces in one round.
#[derive(Clone, Debug)]
pub struct Round<S> {
    /// Relay transmit vectors, one per relay slot.
    pub relay_tx: Vec<Vec<S>>,
    pub observations: Vec<UserObservation<S>>,
}

/// Relay beamforming vectors `v_{i,j}[n]` keyed by `(slot, destination, source)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrecoderSet {
    vectors: BTreeMap<(usize, usize, usize), CMatrix>,
}

impl PrecoderSet {
    pub fn insert(&mut self, slot: usize, dest: usize, src: usize, v: CMatrix) {
        self.vectors.insert((slot, dest, src), v);
    }

    /// # Panics
    /// If no precoder was built for the message.
    pub fn get(&self, slot: usize, dest: usize, src: usize) -> &CMatrix {
        self.vectors
            .get(&(slot, dest, src))
            .unwrap_or_else(|| panic!("no precoder for ({dest}, {src}) in slot {slot}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), &CMatrix)> {
        self.vectors.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `Σ ‖v‖²` over every stored vector.
    pub fn total_energy(&self) -> f64 {
        self.vectors.values().map(CMatrix::frobenius_norm_sqr).sum()
    }
}

/// `row · v` for a downlink row (`1×N`) and a column vector (`N×1`).
pub fn row_gain(row: &[C64], v: &CMatrix) -> C64 {
    linalg::dot(row, v.as_slice())
}

/// Rank check followed by zero-forcing: returns estimates of `unknowns`.
pub fn zf_decode(obs: &UserObservation<C64>, tol: Tolerance) -> Result<Vec<C64>, SchemeError> {
    let needed = obs.unknowns.len();
    let rank = linalg::rank(&obs.h_eff, tol);
    if rank < needed {
        return Err(SchemeError::RankDeficient {
            user: obs.user,
            rank,
            needed,
        });
    }
    let inv = linalg::left_inverse(&obs.h_eff)?;
    Ok(apply(&inv, &obs.cleaned))
}

/// Zero-forcing estimate at a co-located relay. `h` is the uplink matrix in
/// physical units (already scaled by `√P`).
pub fn relay_zf_decode<S: Signal>(slot: usize, y_r: &[S], h: &CMatrix) -> Result<Vec<S>, SchemeError> {
    let needed = h.cols();
    let rank = linalg::rank(h, Tolerance::default());
    if rank < needed || h.rows() < needed {
        return Err(SchemeError::RelayRankDeficient { slot, rank, needed });
    }
    let u = linalg::left_inverse(h)?;
    Ok(apply(&u, y_r))
}

/// Relay gains meeting `E|x|² ≤ P` for each relay slot, from the unit-gain
/// transmit forms. A co-located relay budgets the whole vector; distributed
/// relays share the single gain that keeps the most loaded relay at `P`.
pub fn calibrate_gains(
    unit_tx: &[Vec<LinearForm>],
    power: f64,
    distributed: bool,
) -> Result<Vec<f64>, SchemeError> {
    unit_tx
        .iter()
        .map(|x| {
            let energies: Vec<f64> = x.iter().map(LinearForm::power).collect();
            let g = if distributed {
                energies
                    .iter()
                    .filter(|&&e| e > 0.0)
                    .map(|&e| (power / e).sqrt())
                    .fold(f64::INFINITY, f64::min)
            } else {
                let total: f64 = energies.iter().sum();
                (power / total).sqrt()
            };
            if g.is_finite() && g > 0.0 {
                Ok(g)
            } else {
                Err(SchemeError::SilentRelay)
            }
        })
        .collect()
}

/// Runs `simulate` in a symbolic space with unit relay gains and returns the
/// calibrated gains.
pub(crate) fn calibrate_by_simulation<F>(
    noise_on: bool,
    power: f64,
    distributed: bool,
    simulate: F,
) -> Result<Vec<f64>, SchemeError>
where
    F: FnOnce(&mut FormSpace) -> Result<Vec<Vec<LinearForm>>, SchemeError>,
{
    let mut space = FormSpace::new(noise_on);
    let unit = simulate(&mut space)?;
    calibrate_gains(&unit, power, distributed)
}

/// `√P · s_id` as transmitted by a user.
pub(crate) fn user_tx<Sp: SignalSpace>(space: &mut Sp, id: usize, sqrt_p: f64) -> Vec<Sp::Sig> {
    vec![space.symbol(id).scaled(C64::new(sqrt_p, 0.0))]
}

/// Decode-and-forward estimates for the symbols sent in one slot, as
/// `(symbol id, estimate)` in `senders` order. `senders` lists
/// `(user, symbol id)` of every transmitter of the slot.
pub(crate) fn df_estimates<Sp: SignalSpace>(
    slot: usize,
    y_r: &[Sp::Sig],
    senders: &[(usize, usize)],
    uplink: &CMatrix,
    cfg: &RoundConfig,
    space: &mut Sp,
) -> Result<Vec<(usize, Sp::Sig)>, SchemeError> {
    if cfg.genie_relay {
        return Ok(senders.iter().map(|&(_, id)| (id, space.symbol(id))).collect());
    }
    let users: Vec<usize> = senders.iter().map(|&(u, _)| u).collect();
    let h = uplink.select_columns(&users).scale_real(cfg.sqrt_p());
    let est = relay_zf_decode(slot, y_r, &h)?;
    Ok(senders.iter().map(|&(_, id)| id).zip(est).collect())
}

/// Every `(user, symbol id)` in `senders` transmits `√P · s` in `slot`.
pub(crate) fn run_user_slot<Sp: SignalSpace>(
    slot: usize,
    plan: &SlotPlan,
    senders: &[(usize, usize)],
    channels: &ChannelSet,
    sqrt_p: f64,
    space: &mut Sp,
) -> Result<BTreeMap<Node, Vec<Sp::Sig>>, SchemeError> {
    let tx: BTreeMap<Node, Vec<Sp::Sig>> = senders
        .iter()
        .map(|&(u, id)| (Node::User(u), user_tx(space, id, sqrt_p)))
        .collect();
    Ok(propagate(slot, plan, &tx, channels, space)?)
}

/// The relay transmits `x` in `slot`.
pub(crate) fn run_relay_slot<Sp: SignalSpace>(
    slot: usize,
    plan: &SlotPlan,
    x: Vec<Sp::Sig>,
    channels: &ChannelSet,
    space: &mut Sp,
) -> Result<BTreeMap<Node, Vec<Sp::Sig>>, SchemeError> {
    let tx = BTreeMap::from([(Node::Relay, x)]);
    Ok(propagate(slot, plan, &tx, channels, space)?)
}

/// `gain · Σ v · ŝ` as a relay transmit vector.
pub(crate) fn beamform<S: Signal>(dim: usize, gain: f64, terms: &[(&CMatrix, &S)]) -> Vec<S> {
    let mut x = vec![S::zero(); dim];
    for (v, s) in terms {
        for (a, xa) in x.iter_mut().enumerate() {
            xa.add_scaled(s, v[(a, 0)] * gain);
        }
    }
    x
}

/// `Σ_i c_i · s_i` for known symbols.
pub(crate) fn known_combination<Sp: SignalSpace>(space: &mut Sp, terms: &[(usize, C64)]) -> Sp::Sig {
    let mut acc = Sp::Sig::zero();
    for &(id, c) in terms {
        let s = space.symbol(id);
        acc.add_scaled(&s, c);
    }
    acc
}

/// Exact decode analysis of a symbolic observation.
#[derive(Clone, Debug, Serialize)]
pub struct DecodeReport {
    pub user: usize,
    pub unknowns: Vec<usize>,
    pub wanted: Vec<usize>,
    /// Numerical rank of the user's effective matrix.
    pub rank: usize,
    #[serde(skip)]
    pub h_eff: CMatrix,
    /// Coefficients of every symbol on every cleaned observation.
    #[serde(skip)]
    pub symbol_gain: CMatrix,
    /// Coefficients of every noise sample, `None` when noise is off.
    #[serde(skip)]
    pub noise_gain: Option<CMatrix>,
    /// Power of symbols outside `unknowns` relative to the power of `unknowns`.
    pub residual_interference: f64,
    /// `‖G_unknowns − h_eff‖_F / ‖h_eff‖_F`: disagreement between the true
    /// coefficients and the ones the user decodes with.
    pub model_mismatch: f64,
}

impl DecodeReport {
    /// Effective matrix `H̃` in unit-power form (`h_eff / √P`).
    pub fn h_tilde(&self, power: f64) -> CMatrix {
        self.h_eff.scale_real(1.0 / power.sqrt())
    }

    /// Noise covariance of the cleaned observation (`B Bᴴ`).
    pub fn noise_cov(&self) -> Option<CMatrix> {
        self.noise_gain.as_ref().map(|b| b * &b.adjoint())
    }
}

pub fn analyze(obs: &UserObservation<LinearForm>, symbol_count: usize) -> DecodeReport {
    let m = obs.cleaned.len();
    let noise_count = obs.cleaned.iter().map(|f| f.noise.len()).max().unwrap_or(0);
    let g = CMatrix::from_fn(m, symbol_count, |i, j| obs.cleaned[i].symbol_coef(j));
    let b = (noise_count > 0)
        .then(|| CMatrix::from_fn(m, noise_count, |i, j| obs.cleaned[i].noise_coef(j)))
        .filter(|b| b.max_abs() > 0.0);

    let unknown_power: f64 = obs.unknowns.iter().map(|&j| col_power(&g, j)).sum();
    let other_power: f64 = (0..symbol_count)
        .filter(|j| !obs.unknowns.contains(j))
        .map(|j| col_power(&g, j))
        .sum();
    let g_unknowns = g.select_columns(&obs.unknowns);
    let mismatch = g_unknowns.distance(&obs.h_eff) / obs.h_eff.frobenius_norm();

    DecodeReport {
        user: obs.user,
        unknowns: obs.unknowns.clone(),
        wanted: obs.wanted.clone(),
        rank: linalg::rank(&obs.h_eff, Tolerance::default()),
        h_eff: obs.h_eff.clone(),
        symbol_gain: g,
        noise_gain: b,
        residual_interference: if unknown_power > 0.0 {
            other_power / unknown_power
        } else {
            f64::INFINITY
        },
        model_mismatch: mismatch,
    }
}

fn col_power(m: &CMatrix, j: usize) -> f64 {
    (0..m.rows()).map(|i| m[(i, j)].norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrate_colocated_and_distributed() {
        let form = |c: f64| LinearForm {
            symbols: vec![C64::new(c, 0.0)],
            noise: vec![],
        };
        let tx = vec![vec![form(1.0), form(2.0)]];
        let g = calibrate_gains(&tx, 10.0, false).unwrap();
        assert!((g[0] - (10.0f64 / 5.0).sqrt()).abs() < 1e-15);
        let g = calibrate_gains(&tx, 10.0, true).unwrap();
        assert!((g[0] - (10.0f64 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(calibrate_gains(&[vec![form(0.0)]], 1.0, false), Err(SchemeError::SilentRelay));
    }

    #[test]
    fn zf_decode_rejects_rank_deficiency() {
        let h = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        let obs = UserObservation {
            user: 0,
            unknowns: vec![0, 1],
            wanted: vec![0],
            h_eff: h,
            cleaned: vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0)],
        };
        let err = zf_decode(&obs, Tolerance::default()).unwrap_err();
        assert!(matches!(err, SchemeError::RankDeficient { rank: 1, needed: 2, .. }));
        assert!(err.is_degenerate_draw());
        assert!(!SchemeError::InvalidConfig("x".into()).is_degenerate_draw());
    }

    #[test]
    fn analyze_separates_interference() {
        let obs = UserObservation {
            user: 0,
            unknowns: vec![0],
            wanted: vec![0],
            h_eff: CMatrix::from_real_rows(&[&[2.0]]).unwrap(),
            cleaned: vec![LinearForm {
                symbols: vec![C64::new(2.0, 0.0), C64::new(0.0, 0.0), C64::new(0.2, 0.0)],
                noise: vec![C64::new(1.0, 0.0)],
            }],
        };
        let r = analyze(&obs, 3);
        assert!((r.residual_interference - 0.01).abs() < 1e-15);
        assert_eq!(r.model_mismatch, 0.0);
        assert_eq!(r.rank, 1);
        assert!(r.noise_cov().is_some());
    }
}
