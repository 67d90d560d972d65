//! Network topology, channel realizations and half-duplex slot propagation.
//!
//! Signals flowing through the network are generic over [`Signal`]: either
//! plain complex samples, or [`LinearForm`]s that track the exact coefficient
//! of every information symbol and every noise sample. The second form is what
//! the rate and residual-interference analysis reads.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{CMatrix, C64};

pub const DEFAULT_H_MIN: f64 = 0.05;
pub const DEFAULT_H_MAX: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("magnitude band requires 0 < h_min < h_max < inf, got [{h_min}, {h_max}]")]
    BadBand { h_min: f64, h_max: f64 },
    #[error("invalid topology: {0}")]
    BadTopology(String),
    #[error("half-duplex violation in slot {slot}: {node} both transmits and receives")]
    HalfDuplexViolation { slot: usize, node: Node },
    #[error("slot {slot}: {node} transmits but is not a scheduled source")]
    NotScheduled { slot: usize, node: Node },
    #[error("slot {slot}: {node} is scheduled to transmit but has no signal")]
    MissingSignal { slot: usize, node: Node },
    #[error("slot {slot}: {node} signal has length {got}, expected {expected}")]
    SignalLength {
        slot: usize,
        node: Node,
        got: usize,
        expected: usize,
    },
    #[error("slot {slot} out of range (realization has {slots} slots)")]
    SlotOutOfRange { slot: usize, slots: usize },
    #[error("node {0} is not part of the topology")]
    UnknownNode(Node),
    #[error("transmit power must be positive and finite, got {0}")]
    BadPower(f64),
    #[error("channel document is malformed: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayConfig {
    /// One relay with `antennas` co-located antennas.
    CoLocated { antennas: usize },
    /// `relays` single-antenna relays that never share received samples.
    Distributed { relays: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub users: usize,
    pub relay: RelayConfig,
}

impl Topology {
    pub fn new(users: usize, relay: RelayConfig) -> Result<Self, ChannelError> {
        if users < 2 {
            return Err(ChannelError::BadTopology(format!("need at least 2 users, got {users}")));
        }
        let dim = match relay {
            RelayConfig::CoLocated { antennas } => antennas,
            RelayConfig::Distributed { relays } => relays,
        };
        if dim == 0 {
            return Err(ChannelError::BadTopology("relay dimension must be at least 1".into()));
        }
        Ok(Topology { users, relay })
    }

    pub fn co_located(users: usize, antennas: usize) -> Result<Self, ChannelError> {
        Self::new(users, RelayConfig::CoLocated { antennas })
    }

    pub fn distributed(users: usize, relays: usize) -> Result<Self, ChannelError> {
        Self::new(users, RelayConfig::Distributed { relays })
    }

    /// Antenna count of the co-located relay, or number of distributed relays.
    pub fn relay_dim(&self) -> usize {
        match self.relay {
            RelayConfig::CoLocated { antennas } => antennas,
            RelayConfig::Distributed { relays } => relays,
        }
    }

    pub fn is_distributed(&self) -> bool {
        matches!(self.relay, RelayConfig::Distributed { .. })
    }

    pub fn user_nodes(&self) -> impl Iterator<Item = Node> {
        (0..self.users).map(Node::User)
    }
}

/// Channel coefficients of one slot.
///
/// `user_to_user[(k, l)]` is the gain from user `l` to user `k`.
/// Column `l` of `uplink` is user `l`'s channel into the relay antennas (or
/// into relay `n` at row `n` for distributed relays). Row `k` of `downlink`
/// multiplies the relay transmit vector at user `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotChannels {
    pub user_to_user: CMatrix,
    pub uplink: CMatrix,
    pub downlink: CMatrix,
}

impl SlotChannels {
    pub fn h(&self, to: usize, from: usize) -> C64 {
        self.user_to_user[(to, from)]
    }

    /// Relay-to-user row for user `k`.
    pub fn down_row(&self, k: usize) -> CMatrix {
        self.downlink.row_matrix(k)
    }

    /// User-to-relay columns for the given users, in order.
    pub fn up_cols(&self, users: &[usize]) -> CMatrix {
        self.uplink.select_columns(users)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub topology: Topology,
    pub h_min: f64,
    pub h_max: f64,
    pub slots: Vec<SlotChannels>,
}

impl ChannelSet {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, n: usize) -> Result<&SlotChannels, ChannelError> {
        self.slots.get(n).ok_or(ChannelError::SlotOutOfRange {
            slot: n,
            slots: self.slots.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel sets always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, ChannelError> {
        let set: ChannelSet =
            serde_json::from_str(s).map_err(|e| ChannelError::Malformed(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), ChannelError> {
        let k = self.topology.users;
        let n = self.topology.relay_dim();
        for (i, s) in self.slots.iter().enumerate() {
            if s.user_to_user.shape() != (k, k) || s.uplink.shape() != (n, k) || s.downlink.shape() != (k, n) {
                return Err(ChannelError::Malformed(format!("slot {i} has wrong matrix shapes")));
            }
        }
        Ok(())
    }

    /// Smallest and largest coefficient magnitude over every link and slot.
    pub fn magnitude_range(&self) -> (f64, f64) {
        self.slots
            .iter()
            .flat_map(|s| {
                s.user_to_user
                    .as_slice()
                    .iter()
                    .chain(s.uplink.as_slice())
                    .chain(s.downlink.as_slice())
            })
            .fold((f64::INFINITY, 0.0), |(lo, hi), z| (lo.min(z.norm()), hi.max(z.norm())))
    }
}

/// One circularly-symmetric Gaussian coefficient conditioned on
/// `h_min <= |h| <= h_max`, drawn through the inverse CDF of the truncated
/// exponential law of `|h|²`.
pub fn banded_coefficient<R: Rng + ?Sized>(rng: &mut R, h_min: f64, h_max: f64) -> C64 {
    let a = h_min * h_min;
    let b = h_max * h_max;
    let u: f64 = rng.random();
    let mag_sqr = a - (u * (-(b - a)).exp_m1()).ln_1p();
    let phase = 2.0 * PI * rng.random::<f64>();
    C64::from_polar(mag_sqr.clamp(a, b).sqrt(), phase)
}

/// Draws every channel coefficient for `slot_count` slots, independently
/// per slot and per link. Deterministic in `seed`.
pub fn draw_realization(
    topology: &Topology,
    slot_count: usize,
    seed: u64,
    h_min: f64,
    h_max: f64,
) -> Result<ChannelSet, ChannelError> {
    if !(h_min > 0.0 && h_min < h_max && h_max.is_finite()) {
        return Err(ChannelError::BadBand { h_min, h_max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = topology.users;
    let n = topology.relay_dim();
    let mut draw = |rows: usize, cols: usize| {
        CMatrix::from_fn(rows, cols, |_, _| banded_coefficient(&mut rng, h_min, h_max))
    };
    let slots = (0..slot_count)
        .map(|_| SlotChannels {
            user_to_user: draw(k, k),
            uplink: draw(n, k),
            downlink: draw(k, n),
        })
        .collect();
    Ok(ChannelSet {
        topology: *topology,
        h_min,
        h_max,
        slots,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    User(usize),
    Relay,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::User(k) => write!(f, "user {}", k + 1),
            Node::Relay => write!(f, "relay"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub sources: BTreeSet<Node>,
    pub destinations: BTreeSet<Node>,
}

impl SlotSpec {
    pub fn new(sources: impl IntoIterator<Item = Node>, destinations: impl IntoIterator<Item = Node>) -> Self {
        SlotSpec {
            sources: sources.into_iter().collect(),
            destinations: destinations.into_iter().collect(),
        }
    }

    /// Relay broadcast to every user.
    pub fn relay_broadcast(users: usize) -> Self {
        Self::new([Node::Relay], (0..users).map(Node::User))
    }
}

/// Half-duplex transmission schedule of one scheme round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPlan {
    pub slots: Vec<SlotSpec>,
}

impl SlotPlan {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for (slot, spec) in self.slots.iter().enumerate() {
            if let Some(node) = spec.sources.intersection(&spec.destinations).next() {
                return Err(ChannelError::HalfDuplexViolation { slot, node: *node });
            }
        }
        Ok(())
    }
}

/// A received or transmitted baseband quantity.
pub trait Signal: Clone + fmt::Debug + Send + Sync {
    fn zero() -> Self;
    fn scaled(&self, c: C64) -> Self;
    /// `self += c · other`
    fn add_scaled(&mut self, other: &Self, c: C64);

    fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, C64::new(1.0, 0.0));
        out
    }

    fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, C64::new(-1.0, 0.0));
        out
    }
}

impl Signal for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }

    fn scaled(&self, c: C64) -> Self {
        self * c
    }

    fn add_scaled(&mut self, other: &Self, c: C64) {
        *self += other * c;
    }
}

/// Exact linear combination of unit-power information symbols and
/// unit-variance noise samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearForm {
    pub symbols: Vec<C64>,
    pub noise: Vec<C64>,
}

fn axpy(dst: &mut Vec<C64>, src: &[C64], c: C64) {
    if dst.len() < src.len() {
        dst.resize(src.len(), C64::new(0.0, 0.0));
    }
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s * c;
    }
}

impl LinearForm {
    pub fn symbol_coef(&self, id: usize) -> C64 {
        self.symbols.get(id).copied().unwrap_or_default()
    }

    pub fn noise_coef(&self, id: usize) -> C64 {
        self.noise.get(id).copied().unwrap_or_default()
    }

    /// Expected power `E|x|²` for independent unit-variance symbols and noise.
    pub fn power(&self) -> f64 {
        self.symbol_power() + self.noise_power()
    }

    pub fn symbol_power(&self) -> f64 {
        self.symbols.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn noise_power(&self) -> f64 {
        self.noise.iter().map(|z| z.norm_sqr()).sum()
    }
}

impl Signal for LinearForm {
    fn zero() -> Self {
        LinearForm::default()
    }

    fn scaled(&self, c: C64) -> Self {
        LinearForm {
            symbols: self.symbols.iter().map(|z| z * c).collect(),
            noise: self.noise.iter().map(|z| z * c).collect(),
        }
    }

    fn add_scaled(&mut self, other: &Self, c: C64) {
        axpy(&mut self.symbols, &other.symbols, c);
        axpy(&mut self.noise, &other.noise, c);
    }
}

/// `m · v` for a matrix of coefficients and a vector of signals.
pub fn apply<S: Signal>(m: &CMatrix, v: &[S]) -> Vec<S> {
    assert_eq!(m.cols(), v.len(), "apply: {} columns vs {} signals", m.cols(), v.len());
    (0..m.rows())
        .map(|i| {
            let mut acc = S::zero();
            for (j, s) in v.iter().enumerate() {
                acc.add_scaled(s, m[(i, j)]);
            }
            acc
        })
        .collect()
}

/// Source of information symbols and receiver noise for one round.
pub trait SignalSpace {
    type Sig: Signal;

    /// The unit-power information symbol with the given id.
    fn symbol(&mut self, id: usize) -> Self::Sig;
    /// A fresh unit-variance noise sample, or zero when noise is off.
    fn noise(&mut self) -> Self::Sig;
    fn noise_on(&self) -> bool;
}

/// Numeric samples: Gaussian symbols and noise from a seeded generator.
pub struct SampleSpace {
    symbols: Vec<C64>,
    rng: ChaCha8Rng,
    noise_on: bool,
}

/// Unit-variance circularly-symmetric complex Gaussian sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

impl SampleSpace {
    pub fn new(symbols: SymbolMatrix, noise_seed: u64, noise_on: bool) -> Self {
        SampleSpace {
            symbols: symbols.values,
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
            noise_on,
        }
    }

    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }
}

impl SignalSpace for SampleSpace {
    type Sig = C64;

    fn symbol(&mut self, id: usize) -> C64 {
        self.symbols[id]
    }

    fn noise(&mut self) -> C64 {
        if self.noise_on {
            complex_gaussian(&mut self.rng)
        } else {
            C64::new(0.0, 0.0)
        }
    }

    fn noise_on(&self) -> bool {
        self.noise_on
    }
}

/// Symbolic signals: every symbol is a basis vector and every noise draw
/// allocates a new noise index.
#[derive(Debug, Default)]
pub struct FormSpace {
    noise_on: bool,
    next_noise: usize,
}

impl FormSpace {
    pub fn new(noise_on: bool) -> Self {
        FormSpace {
            noise_on,
            next_noise: 0,
        }
    }

    pub fn noise_count(&self) -> usize {
        self.next_noise
    }
}

impl SignalSpace for FormSpace {
    type Sig = LinearForm;

    fn symbol(&mut self, id: usize) -> LinearForm {
        let mut symbols = vec![C64::new(0.0, 0.0); id + 1];
        symbols[id] = C64::new(1.0, 0.0);
        LinearForm {
            symbols,
            noise: Vec::new(),
        }
    }

    fn noise(&mut self) -> LinearForm {
        if !self.noise_on {
            return LinearForm::default();
        }
        let id = self.next_noise;
        self.next_noise += 1;
        let mut noise = vec![C64::new(0.0, 0.0); id + 1];
        noise[id] = C64::new(1.0, 0.0);
        LinearForm {
            symbols: Vec::new(),
            noise,
        }
    }

    fn noise_on(&self) -> bool {
        self.noise_on
    }
}

/// Which messages exist in a scheme. Message `W_{i,j}` travels from source
/// `j` to destination `i`; each carries one symbol with a dense id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageSet {
    users: usize,
    ids: BTreeMap<(usize, usize), usize>,
}

impl MessageSet {
    /// Builds the set from `(destination, source)` pairs; ids follow the
    /// sorted pair order.
    pub fn new(users: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let sorted: BTreeSet<(usize, usize)> = pairs.into_iter().collect();
        for &(d, s) in &sorted {
            assert!(d < users && s < users && d != s, "invalid message ({d}, {s})");
        }
        let ids = sorted.into_iter().enumerate().map(|(i, p)| (p, i)).collect();
        MessageSet { users, ids }
    }

    /// Every ordered pair of distinct users.
    pub fn all_pairs(users: usize) -> Self {
        Self::new(
            users,
            (0..users).flat_map(|d| (0..users).filter(move |&s| s != d).map(move |s| (d, s))),
        )
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Symbol id of the message from `src` to `dest`.
    ///
    /// # Panics
    /// If the message is null in this set.
    pub fn id(&self, dest: usize, src: usize) -> usize {
        *self
            .ids
            .get(&(dest, src))
            .unwrap_or_else(|| panic!("message ({dest}, {src}) is not part of this scheme"))
    }

    pub fn get(&self, dest: usize, src: usize) -> Option<usize> {
        self.ids.get(&(dest, src)).copied()
    }

    pub fn contains(&self, dest: usize, src: usize) -> bool {
        self.ids.contains_key(&(dest, src))
    }

    /// `(destination, source)` of a symbol id.
    pub fn pair(&self, id: usize) -> (usize, usize) {
        *self
            .ids
            .iter()
            .find(|(_, &v)| v == id)
            .map(|(p, _)| p)
            .expect("symbol id out of range")
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.ids.iter().map(|(&p, &i)| (p, i))
    }
}

/// Realized information symbols, one unit-power complex Gaussian per message.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolMatrix {
    users: usize,
    values: Vec<C64>,
    ids: BTreeMap<(usize, usize), usize>,
}

impl SymbolMatrix {
    pub fn draw(messages: &MessageSet, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_values(messages, (0..messages.len()).map(|_| complex_gaussian(&mut rng)).collect())
    }

    pub fn from_values(messages: &MessageSet, values: Vec<C64>) -> Self {
        assert_eq!(values.len(), messages.len(), "one value per message");
        SymbolMatrix {
            users: messages.users,
            values,
            ids: messages.ids.clone(),
        }
    }

    /// `s_{i,j}`, or `None` for a null message.
    pub fn get(&self, dest: usize, src: usize) -> Option<C64> {
        if dest >= self.users || src >= self.users {
            return None;
        }
        self.ids.get(&(dest, src)).map(|&i| self.values[i])
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }
}

/// Per-node transmit power; receiver noise has unit variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    power: f64,
}

impl NoiseModel {
    pub fn new(power: f64) -> Result<Self, ChannelError> {
        if power > 0.0 && power.is_finite() {
            Ok(NoiseModel { power })
        } else {
            Err(ChannelError::BadPower(power))
        }
    }

    pub fn from_db(db: f64) -> Result<Self, ChannelError> {
        Self::new(10f64.powf(db / 10.0))
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn noise_variance(&self) -> f64 {
        1.0
    }
}

/// Runs one slot: every destination receives the channel-weighted sum of all
/// scheduled transmissions plus one noise sample per receive antenna (drawn in
/// destination order). Users transmit length-1 vectors; the relay transmits
/// and receives vectors of length [`Topology::relay_dim`].
pub fn propagate<Sp: SignalSpace>(
    slot: usize,
    plan: &SlotPlan,
    tx: &BTreeMap<Node, Vec<Sp::Sig>>,
    channels: &ChannelSet,
    space: &mut Sp,
) -> Result<BTreeMap<Node, Vec<Sp::Sig>>, ChannelError> {
    let spec = plan.slots.get(slot).ok_or(ChannelError::SlotOutOfRange {
        slot,
        slots: plan.len(),
    })?;
    let ch = channels.slot(slot)?;
    let topo = &channels.topology;
    if let Some(node) = spec.sources.intersection(&spec.destinations).next() {
        return Err(ChannelError::HalfDuplexViolation { slot, node: *node });
    }
    let dim = |node: &Node| match node {
        Node::User(_) => 1,
        Node::Relay => topo.relay_dim(),
    };
    for node in spec.sources.iter().chain(&spec.destinations) {
        if let Node::User(k) = node {
            if *k >= topo.users {
                return Err(ChannelError::UnknownNode(*node));
            }
        }
    }
    for (node, sig) in tx {
        if !spec.sources.contains(node) {
            return Err(ChannelError::NotScheduled { slot, node: *node });
        }
        if sig.len() != dim(node) {
            return Err(ChannelError::SignalLength {
                slot,
                node: *node,
                got: sig.len(),
                expected: dim(node),
            });
        }
    }
    if let Some(node) = spec.sources.iter().find(|n| !tx.contains_key(n)) {
        return Err(ChannelError::MissingSignal { slot, node: *node });
    }

    let mut out = BTreeMap::new();
    for dest in &spec.destinations {
        let received = match dest {
            Node::User(k) => {
                let mut y = Sp::Sig::zero();
                for (src, x) in tx {
                    match src {
                        Node::User(l) => y.add_scaled(&x[0], ch.h(*k, *l)),
                        Node::Relay => {
                            for (n, xn) in x.iter().enumerate() {
                                y.add_scaled(xn, ch.downlink[(*k, n)]);
                            }
                        }
                    }
                }
                let z = space.noise();
                y.add_scaled(&z, C64::new(1.0, 0.0));
                vec![y]
            }
            Node::Relay => {
                let n_dim = topo.relay_dim();
                let mut y = vec![Sp::Sig::zero(); n_dim];
                for (src, x) in tx {
                    if let Node::User(l) = src {
                        for (n, yn) in y.iter_mut().enumerate() {
                            yn.add_scaled(&x[0], ch.uplink[(n, *l)]);
                        }
                    }
                }
                for yn in &mut y {
                    let z = space.noise();
                    yn.add_scaled(&z, C64::new(1.0, 0.0));
                }
                y
            }
        };
        out.insert(*dest, received);
    }
    Ok(out)
}
