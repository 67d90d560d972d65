//! Uniform access to every scheme, plus the noise-off algebraic checks used
//! by `verify`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{
    draw_realization, ChannelSet, FormSpace, LinearForm, MessageSet, SampleSpace, SignalSpace, SlotPlan, SymbolMatrix,
    Topology,
};
use crate::linalg::{self, Tolerance};
use crate::round::{analyze, zf_decode, DecodeReport, Round, RoundConfig, SchemeError};
use crate::scheme_distributed::{DistIcPrepared, DistIcScheme, DistYPrepared, DistYScheme};
use crate::scheme_pairwise::{PairwisePrepared, PairwiseScheme, PairwiseVariant};
use crate::scheme_y::{YPrepared, YScheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Y,
    Ic,
    IcAlign,
    IcAf,
    X,
    DistIc,
    DistY,
}

impl SchemeId {
    pub const ALL: [SchemeId; 7] = [
        SchemeId::Y,
        SchemeId::Ic,
        SchemeId::IcAlign,
        SchemeId::IcAf,
        SchemeId::X,
        SchemeId::DistIc,
        SchemeId::DistY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Y => "y",
            SchemeId::Ic => "ic",
            SchemeId::IcAlign => "ic_align",
            SchemeId::IcAf => "ic_af",
            SchemeId::X => "x",
            SchemeId::DistIc => "dist_ic",
            SchemeId::DistY => "dist_y",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| SchemeError::InvalidConfig(format!("unknown scheme '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Y(YScheme),
    Pairwise(PairwiseScheme),
    DistIc(DistIcScheme),
    DistY(DistYScheme),
}

#[derive(Clone, Debug)]
pub enum Prepared {
    Y(YPrepared),
    Pairwise(PairwisePrepared),
    DistIc(DistIcPrepared),
    DistY(DistYPrepared),
}

fn fixed(name: &str, got: Option<usize>, want: usize, scheme: SchemeId) -> Result<(), SchemeError> {
    match got {
        Some(v) if v != want => Err(SchemeError::InvalidConfig(format!(
            "scheme {scheme} requires {name} = {want}, got {v}"
        ))),
        _ => Ok(()),
    }
}

impl Scheme {
    /// Builds a scheme, checking parameter compatibility. Unset parameters
    /// take the scheme's defaults (`y`: K = 4, N = K − 1).
    pub fn build(
        id: SchemeId,
        users: Option<usize>,
        antennas: Option<usize>,
        relays: Option<usize>,
    ) -> Result<Self, SchemeError> {
        match id {
            SchemeId::Y => {
                fixed("relays", relays, 1, id).map_err(|_| {
                    SchemeError::InvalidConfig("scheme y uses a co-located relay; set --n, not --relays".into())
                })?;
                let k = users.unwrap_or(4);
                Ok(Scheme::Y(YScheme::new(k, antennas.unwrap_or(k.saturating_sub(1)))?))
            }
            SchemeId::Ic | SchemeId::IcAlign | SchemeId::IcAf | SchemeId::X => {
                fixed("K", users, 4, id)?;
                fixed("N", antennas, 2, id)?;
                fixed("relays", relays, 1, id)?;
                let variant = match id {
                    SchemeId::Ic => PairwiseVariant::IcNullSpace,
                    SchemeId::IcAlign => PairwiseVariant::IcAlignment,
                    SchemeId::IcAf => PairwiseVariant::IcAf,
                    _ => PairwiseVariant::XChannel,
                };
                Ok(Scheme::Pairwise(PairwiseScheme::new(variant)))
            }
            SchemeId::DistIc | SchemeId::DistY => {
                fixed("K", users, if id == SchemeId::DistIc { 4 } else { 3 }, id)?;
                fixed("relays", relays, 3, id)?;
                if antennas.is_some() {
                    return Err(SchemeError::InvalidConfig(format!(
                        "scheme {id} uses single-antenna relays; set --relays, not --n"
                    )));
                }
                Ok(if id == SchemeId::DistIc {
                    Scheme::DistIc(DistIcScheme::new(3)?)
                } else {
                    Scheme::DistY(DistYScheme::new(3)?)
                })
            }
        }
    }

    pub fn id(&self) -> SchemeId {
        match self {
            Scheme::Y(_) => SchemeId::Y,
            Scheme::Pairwise(p) => match p.variant() {
                PairwiseVariant::IcNullSpace => SchemeId::Ic,
                PairwiseVariant::IcAlignment => SchemeId::IcAlign,
                PairwiseVariant::IcAf => SchemeId::IcAf,
                PairwiseVariant::XChannel => SchemeId::X,
            },
            Scheme::DistIc(_) => SchemeId::DistIc,
            Scheme::DistY(_) => SchemeId::DistY,
        }
    }

    pub fn topology(&self) -> Topology {
        match self {
            Scheme::Y(s) => s.topology(),
            Scheme::Pairwise(s) => s.topology(),
            Scheme::DistIc(s) => s.topology(),
            Scheme::DistY(s) => s.topology(),
        }
    }

    pub fn messages(&self) -> MessageSet {
        match self {
            Scheme::Y(s) => s.messages(),
            Scheme::Pairwise(s) => s.messages(),
            Scheme::DistIc(s) => s.messages(),
            Scheme::DistY(s) => s.messages(),
        }
    }

    pub fn plan(&self) -> SlotPlan {
        match self {
            Scheme::Y(s) => s.plan(),
            Scheme::Pairwise(s) => s.plan(),
            Scheme::DistIc(s) => s.plan(),
            Scheme::DistY(s) => s.plan(),
        }
    }

    pub fn slot_count(&self) -> usize {
        self.plan().len()
    }

    /// Symbols delivered per slot.
    pub fn nominal_dof(&self) -> f64 {
        self.messages().len() as f64 / self.slot_count() as f64
    }

    pub fn draw(&self, seed: u64, h_min: f64, h_max: f64) -> Result<ChannelSet, SchemeError> {
        Ok(draw_realization(&self.topology(), self.slot_count(), seed, h_min, h_max)?)
    }

    pub fn prepare(&self, channels: &ChannelSet, cfg: &RoundConfig) -> Result<Prepared, SchemeError> {
        Ok(match self {
            Scheme::Y(s) => Prepared::Y(s.prepare(channels, cfg)?),
            Scheme::Pairwise(s) => Prepared::Pairwise(s.prepare(channels, cfg)?),
            Scheme::DistIc(s) => Prepared::DistIc(s.prepare(channels, cfg)?),
            Scheme::DistY(s) => Prepared::DistY(s.prepare(channels, cfg)?),
        })
    }

    pub fn observe<Sp: SignalSpace>(
        &self,
        prep: &Prepared,
        channels: &ChannelSet,
        cfg: &RoundConfig,
        space: &mut Sp,
    ) -> Result<Round<Sp::Sig>, SchemeError> {
        match (self, prep) {
            (Scheme::Y(s), Prepared::Y(p)) => s.observe(p, channels, cfg, space),
            (Scheme::Pairwise(s), Prepared::Pairwise(p)) => s.observe(p, channels, cfg, space),
            (Scheme::DistIc(s), Prepared::DistIc(p)) => s.observe(p, channels, cfg, space),
            (Scheme::DistY(s), Prepared::DistY(p)) => s.observe(p, channels, cfg, space),
            _ => Err(SchemeError::InvalidConfig("prepared state belongs to another scheme".into())),
        }
    }

    /// Exact decode reports for one realization.
    pub fn reports(&self, prep: &Prepared, channels: &ChannelSet, cfg: &RoundConfig) -> Result<Vec<DecodeReport>, SchemeError> {
        let mut space = FormSpace::new(cfg.noise_on);
        let round = self.observe(prep, channels, cfg, &mut space)?;
        let n = self.messages().len();
        Ok(round.observations.iter().map(|o| analyze(o, n)).collect())
    }

    /// Scheme-specific construction residuals, each normalized so that an
    /// exact construction gives zero.
    pub fn construction_residuals(&self, prep: &Prepared, channels: &ChannelSet) -> BTreeMap<&'static str, f64> {
        let mut out = BTreeMap::new();
        let mut put = |name: &'static str, v: f64| {
            let e = out.entry(name).or_insert(0.0f64);
            *e = e.max(v);
        };
        match (self, prep) {
            (Scheme::Y(s), Prepared::Y(p)) => {
                for ((n, a, b), v) in p.precoders.iter() {
                    put("precoder_norm", (v.frobenius_norm() - 1.0).abs());
                    for i in (0..s.users()).filter(|&i| i != a && i != b) {
                        let row = channels.slots[n].down_row(i);
                        put("null_residual", (&row * v)[(0, 0)].norm() / row.frobenius_norm());
                    }
                }
            }
            (Scheme::Pairwise(s), Prepared::Pairwise(p)) => {
                let n = s.relay_slot();
                let ch = &channels.slots[n];
                for ((_, d, src), v) in p.precoders.iter() {
                    let gain = |u: usize| crate::round::row_gain(ch.downlink.row_entries(u), v);
                    match s.variant() {
                        PairwiseVariant::IcNullSpace | PairwiseVariant::IcAf => {
                            put("precoder_norm", (v.frobenius_norm() - 1.0).abs());
                            put("null_residual", gain(src ^ 1).norm() / ch.down_row(src ^ 1).frobenius_norm());
                        }
                        PairwiseVariant::IcAlignment => {
                            let t = src % 2;
                            for u in [1 - t, 3 - t] {
                                let target = channels.slots[t].h(u, src);
                                put("alignment_residual", (gain(u) - target).norm() / target.norm());
                            }
                        }
                        PairwiseVariant::XChannel => {
                            put("null_residual", gain(src ^ 1).norm() / ch.down_row(src ^ 1).frobenius_norm());
                            let slot = [2, 3, 0, 1][d];
                            let target = channels.slots[slot].h(d ^ 1, src);
                            put("alignment_residual", (gain(d ^ 1) - target).norm() / target.norm());
                        }
                    }
                }
            }
            (Scheme::DistIc(s), Prepared::DistIc(p)) => {
                for r in s.neutralization_residuals(p, channels) {
                    put("neutralization_residual", r);
                }
            }
            (Scheme::DistY(s), Prepared::DistY(p)) => {
                for r in s.neutralization_residuals(p, channels) {
                    put("neutralization_residual", r);
                }
            }
            _ => {}
        }
        out
    }
}

/// Outcome of the noise-off checks on one realization.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyRecord {
    /// Largest `|ŝ − s|` over every decoded symbol.
    pub recovery_error: f64,
    /// Largest relative power of symbols a user can neither cancel nor solve.
    pub residual_interference: f64,
    /// Largest relative gap between true and assumed effective coefficients.
    pub model_mismatch: f64,
    /// Smallest `rank(H̃_j) − unknowns` over users (0 when full rank).
    pub rank_deficit: usize,
    /// Largest relay power relative to `P`.
    pub relay_power_ratio: f64,
    pub construction: BTreeMap<&'static str, f64>,
    /// Dimension of the neutralization null space (distributed Y only).
    pub null_dim: Option<usize>,
}

/// Power used by the noise-off checks; the algebra is scale-free.
pub const VERIFY_POWER: f64 = 1.0;

/// Runs one realization with noise off: numeric decoding against the true
/// symbols plus the exact symbolic analysis.
pub fn verify_realization(
    scheme: &Scheme,
    channels: &ChannelSet,
    symbol_seed: u64,
    genie_relay: bool,
) -> Result<VerifyRecord, SchemeError> {
    let cfg = RoundConfig::new(VERIFY_POWER, false)?.with_genie(genie_relay);
    let prep = scheme.prepare(channels, &cfg)?;
    let msgs = scheme.messages();
    let symbols = SymbolMatrix::draw(&msgs, symbol_seed);
    let mut samples = SampleSpace::new(symbols.clone(), symbol_seed ^ 0x5eed, false);
    let round = scheme.observe(&prep, channels, &cfg, &mut samples)?;
    let tol = Tolerance::default();
    let mut recovery_error: f64 = 0.0;
    let mut rank_deficit = 0;
    for obs in &round.observations {
        let rank = linalg::rank(&obs.h_eff, tol);
        rank_deficit = rank_deficit.max(obs.unknowns.len().saturating_sub(rank));
        let est = zf_decode(obs, tol)?;
        for (e, &id) in est.iter().zip(&obs.unknowns) {
            recovery_error = recovery_error.max((e - symbols.values()[id]).norm());
        }
    }
    let mut forms = FormSpace::new(false);
    let sym_round: Round<LinearForm> = scheme.observe(&prep, channels, &cfg, &mut forms)?;
    let reports: Vec<DecodeReport> = sym_round
        .observations
        .iter()
        .map(|o| analyze(o, msgs.len()))
        .collect();
    let relay_power_ratio = sym_round
        .relay_tx
        .iter()
        .map(|x| {
            let powers = x.iter().map(LinearForm::power);
            if scheme.topology().is_distributed() {
                powers.fold(0.0, f64::max)
            } else {
                powers.sum()
            }
        })
        .fold(0.0, f64::max)
        / cfg.power;
    let null_dim = match &prep {
        Prepared::DistY(p) => Some(p.null_dim),
        _ => None,
    };
    Ok(VerifyRecord {
        recovery_error,
        residual_interference: reports.iter().map(|r| r.residual_interference).fold(0.0, f64::max),
        model_mismatch: reports.iter().map(|r| r.model_mismatch).fold(0.0, f64::max),
        rank_deficit,
        relay_power_ratio,
        construction: scheme.construction_residuals(&prep, channels),
        null_dim,
    })
}

/// Thresholds every noise-off realization must meet.
pub mod limits {
    pub const RECOVERY: f64 = 1e-8;
    pub const RESIDUAL_INTERFERENCE: f64 = 1e-16;
    pub const MODEL_MISMATCH: f64 = 1e-9;
    pub const CONSTRUCTION: f64 = 1e-9;
    pub const RELAY_POWER: f64 = 1.0 + 1e-6;
}

impl VerifyRecord {
    /// Name of the first violated check, if any.
    pub fn first_failure(&self) -> Option<String> {
        if self.recovery_error >= limits::RECOVERY {
            return Some(format!("symbol recovery error {:.3e}", self.recovery_error));
        }
        if self.residual_interference >= limits::RESIDUAL_INTERFERENCE {
            return Some(format!("residual interference {:.3e}", self.residual_interference));
        }
        if self.model_mismatch >= limits::MODEL_MISMATCH {
            return Some(format!("effective channel mismatch {:.3e}", self.model_mismatch));
        }
        if self.rank_deficit > 0 {
            return Some(format!("effective channel rank deficit {}", self.rank_deficit));
        }
        if self.relay_power_ratio > limits::RELAY_POWER {
            return Some(format!("relay power ratio {:.9}", self.relay_power_ratio));
        }
        self.construction
            .iter()
            .find(|(_, &v)| v >= limits::CONSTRUCTION)
            .map(|(k, v)| format!("{k} {v:.3e}"))
    }
}
