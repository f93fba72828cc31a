//! Sparse population state with incrementally maintained aggregates.

use alloc::collections::BTreeMap;
use alloc::format;

use crate::error::Error;
use crate::math;
use crate::model::OffspringLaw;

/// Default number of incremental weight updates between from-scratch
/// recomputations of the `W` cache.
pub const DEFAULT_WEIGHT_REFRESH_INTERVAL: u32 = 1 << 16;

/// One elementary state transition of either process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// One parasite dies in a host carrying `level` parasites; at
    /// `level = 1` the host leaves the infected population.
    ParasiteDeath { level: u64 },
    /// A host at `source_level` infects a fresh host with `load >= 1`
    /// parasites.
    Infection { source_level: u64, load: u64 },
    /// Unit-rate jump of the absorbed empty state; keeps both the
    /// transition clock and the infection clock alive.
    PseudoJump,
}

impl EventKind {
    /// True for real infection events (the only moves that increase `S`).
    pub fn is_infection(&self) -> bool {
        matches!(self, EventKind::Infection { .. })
    }

    /// True for events counted by the infection clock: real infections
    /// plus the pseudoinfections emitted from the empty state.
    pub fn advances_infection_clock(&self) -> bool {
        matches!(self, EventKind::Infection { .. } | EventKind::PseudoJump)
    }
}

#[derive(Clone, Copy, Debug)]
struct LevelEntry {
    hosts: u64,
    /// `1 - q0^level`, fixed per level; cached to keep the sampling scan
    /// free of `exp` calls.
    infectivity: f64,
}

/// Finite-support map `level -> hosts` with cached aggregates.
///
/// The aggregates are the number of infected hosts `S`, the total
/// parasite count `P`, and the infective weight `W = sum_l xi_l
/// (1 - q0^l)` whose product with `lambda` is the branching infection
/// rate. `S` and `P` are integers and exact; `W` is a float maintained
/// by compensated addition and recomputed from scratch every
/// [`DEFAULT_WEIGHT_REFRESH_INTERVAL`] updates to bound drift.
///
/// A state is bound to the `q0` of the offspring law it was created
/// with; mixing states across laws is rejected in debug builds.
#[derive(Clone, Debug)]
pub struct SparseState {
    counts: BTreeMap<u64, LevelEntry>,
    s: u64,
    p_total: u64,
    w: f64,
    w_comp: f64,
    q0: f64,
    ln_q0: f64,
    w_updates: u32,
    w_refresh_every: u32,
}

impl PartialEq for SparseState {
    fn eq(&self, other: &Self) -> bool {
        self.q0.to_bits() == other.q0.to_bits()
            && self.counts.len() == other.counts.len()
            && self
                .counts
                .iter()
                .zip(other.counts.iter())
                .all(|((la, ea), (lb, eb))| la == lb && ea.hosts == eb.hosts)
    }
}

impl SparseState {
    /// The empty (absorbed) state for the given law.
    pub fn empty(law: &OffspringLaw) -> Self {
        Self {
            counts: BTreeMap::new(),
            s: 0,
            p_total: 0,
            w: 0.0,
            w_comp: 0.0,
            q0: law.q0(),
            ln_q0: if law.q0() == 0.0 { f64::NEG_INFINITY } else { math::ln(law.q0()) },
            w_updates: 0,
            w_refresh_every: DEFAULT_WEIGHT_REFRESH_INTERVAL,
        }
    }

    /// Builds a state from `(level, hosts)` pairs. Levels must be >= 1;
    /// pairs with zero hosts are ignored; repeated levels accumulate.
    pub fn from_counts<I>(law: &OffspringLaw, counts: I) -> Result<Self, Error>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut state = Self::empty(law);
        for (level, hosts) in counts {
            if level == 0 {
                return Err(Error::InvalidParams(
                    "level 0 is implicit (uninfected hosts); counts must use levels >= 1".into(),
                ));
            }
            if hosts == 0 {
                continue;
            }
            let infectivity = state.infectivity(level);
            let entry = state.counts.entry(level).or_insert(LevelEntry { hosts: 0, infectivity });
            entry.hosts += hosts;
            state.s = state
                .s
                .checked_add(hosts)
                .ok_or_else(|| Error::InvalidParams("host count overflow".into()))?;
            let parasites = level
                .checked_mul(hosts)
                .and_then(|p| state.p_total.checked_add(p))
                .ok_or_else(|| Error::InvalidParams("parasite count overflow".into()))?;
            state.p_total = parasites;
        }
        state.w = state.recompute_weight();
        state.w_comp = 0.0;
        Ok(state)
    }

    /// Number of infected hosts `S`.
    pub fn infected_hosts(&self) -> u64 {
        self.s
    }

    /// Total parasite count `P = sum_l l * xi_l`.
    pub fn total_parasites(&self) -> u64 {
        self.p_total
    }

    /// Infective weight `W = sum_l xi_l (1 - q0^l)`.
    pub fn infective_weight(&self) -> f64 {
        if self.counts.is_empty() {
            0.0
        } else {
            (self.w + self.w_comp).max(0.0)
        }
    }

    /// True once every host has cleared (the absorbing state).
    pub fn is_zero(&self) -> bool {
        self.counts.is_empty()
    }

    /// Hosts at the given parasite level.
    pub fn count_at(&self, level: u64) -> u64 {
        self.counts.get(&level).map_or(0, |e| e.hosts)
    }

    /// `q0` of the law this state is bound to.
    pub fn q0(&self) -> f64 {
        self.q0
    }

    /// Occupied `(level, hosts)` pairs in increasing level order.
    pub fn support(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&l, e)| (l, e.hosts))
    }

    /// Number of occupied levels.
    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    /// Sets how many incremental weight updates may pass between
    /// from-scratch refreshes of the `W` cache.
    pub fn set_weight_refresh_interval(&mut self, every: u32) {
        self.w_refresh_every = every.max(1);
    }

    /// `W` recomputed from scratch, in level order.
    pub fn recompute_weight(&self) -> f64 {
        self.counts.iter().map(|(&l, e)| e.hosts as f64 * self.infectivity(l)).sum()
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        self.counts.iter().map(|(&l, e)| (l, e.hosts, e.infectivity))
    }

    /// Applies a transition, returning the successor state.
    pub fn apply(&self, event: EventKind) -> Result<Self, Error> {
        let mut next = self.clone();
        next.apply_in_place(event)?;
        Ok(next)
    }

    /// Applies a transition in place.
    ///
    /// `S` changes by +1 exactly for infections, by -1 exactly for a
    /// death at level 1 and by 0 otherwise; `P` changes by -1 for any
    /// death and by `load` for an infection.
    pub fn apply_in_place(&mut self, event: EventKind) -> Result<(), Error> {
        match event {
            EventKind::ParasiteDeath { level } => {
                if level == 0 || self.count_at(level) == 0 {
                    return Err(Error::InfeasibleEvent(format!(
                        "parasite death at level {level} but no host is there"
                    )));
                }
                self.remove_host(level);
                if level >= 2 {
                    self.add_host(level - 1);
                }
            }
            EventKind::Infection { source_level, load } => {
                if load == 0 {
                    return Err(Error::InfeasibleEvent(
                        "infection with load 0 is not an event".into(),
                    ));
                }
                if self.count_at(source_level) == 0 {
                    return Err(Error::InfeasibleEvent(format!(
                        "infection sourced at level {source_level} but no host is there"
                    )));
                }
                self.add_host(load);
            }
            EventKind::PseudoJump => {
                if !self.is_zero() {
                    return Err(Error::InfeasibleEvent(
                        "pseudo-jump from a non-empty state".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn infectivity(&self, level: u64) -> f64 {
        if self.q0 == 0.0 {
            1.0
        } else {
            -math::expm1(level as f64 * self.ln_q0)
        }
    }

    fn add_host(&mut self, level: u64) {
        let infectivity = self.infectivity(level);
        let entry = self.counts.entry(level).or_insert(LevelEntry { hosts: 0, infectivity });
        entry.hosts += 1;
        let infectivity = entry.infectivity;
        self.s += 1;
        self.p_total += level;
        self.weight_add(infectivity);
    }

    fn remove_host(&mut self, level: u64) {
        let entry = self.counts.get_mut(&level).expect("checked by caller");
        entry.hosts -= 1;
        let infectivity = entry.infectivity;
        let empty = entry.hosts == 0;
        if empty {
            self.counts.remove(&level);
        }
        self.s -= 1;
        self.p_total -= level;
        if self.counts.is_empty() {
            self.w = 0.0;
            self.w_comp = 0.0;
            self.w_updates = 0;
        } else {
            self.weight_add(-infectivity);
        }
    }

    /// Neumaier-compensated update of the `W` cache.
    fn weight_add(&mut self, x: f64) {
        let sum = self.w + x;
        if math::abs(self.w) >= math::abs(x) {
            self.w_comp += (self.w - sum) + x;
        } else {
            self.w_comp += (x - sum) + self.w;
        }
        self.w = sum;
        self.w_updates += 1;
        if self.w_updates >= self.w_refresh_every {
            self.w = self.recompute_weight();
            self.w_comp = 0.0;
            self.w_updates = 0;
        }
    }
}
