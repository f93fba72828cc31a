//! Model parameters, offspring law, population state and jump rates.
//!
//! A population of hosts is classified by parasite burden: the state
//! records how many hosts carry `j >= 1` parasites. Each parasite dies
//! at rate `mu`; infectious contact happens at rate `lambda` per host,
//! and a contact with a host carrying `l` parasites transmits a load
//! distributed as the sum of `l` independent copies of the per-parasite
//! offspring variable `Y` (mean `theta`). Contacts transmitting load 0
//! are not events, so the total infection pressure of a state is
//! `lambda * sum_l xi_l (1 - q0^l)` with `q0 = P[Y = 0]`.
//!
//! Two processes share this vocabulary: the branching process, in which
//! every contact lands on a fresh host, and the `N`-host epidemic, in
//! which the infection rate carries an extra `1 - S/N` factor (`S` =
//! infected hosts). Both are absorbed in the empty state; by convention
//! all rates equal 1 there so that paths keep making (pseudo) jumps.

mod offspring;
mod state;

pub use offspring::{OffspringFamily, OffspringLaw};
pub use state::{EventKind, SparseState, DEFAULT_WEIGHT_REFRESH_INTERVAL};

use crate::error::Error;

/// Which of the two path laws is being simulated or evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProcessKind {
    /// Infection lands on a fresh host regardless of population size.
    Branching,
    /// Infection is thinned by the factor `1 - S/N`.
    Epidemic,
}

/// Rates and sizes of the host-parasite model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    lambda: f64,
    mu: f64,
    host_count: u64,
    offspring: OffspringLaw,
}

impl ModelParams {
    /// Validates `lambda > 0`, `mu > 0`, `host_count >= 2`.
    pub fn new(
        lambda: f64,
        mu: f64,
        host_count: u64,
        offspring: OffspringLaw,
    ) -> Result<Self, Error> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParams(alloc::format!(
                "contact rate lambda must be positive and finite, got {lambda}"
            )));
        }
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::InvalidParams(alloc::format!(
                "death rate mu must be positive and finite, got {mu}"
            )));
        }
        if host_count < 2 {
            return Err(Error::InvalidParams(alloc::format!(
                "host count N must be at least 2, got {host_count}"
            )));
        }
        Ok(Self { lambda, mu, host_count, offspring })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Total number of hosts `N`.
    pub fn host_count(&self) -> u64 {
        self.host_count
    }

    pub fn offspring(&self) -> &OffspringLaw {
        &self.offspring
    }

    /// Fresh empty state bound to this model's offspring law.
    pub fn empty_state(&self) -> SparseState {
        SparseState::empty(&self.offspring)
    }

    /// State with the given `(level, hosts)` pairs, bound to this model.
    pub fn state_from_counts<I>(&self, counts: I) -> Result<SparseState, Error>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        SparseState::from_counts(&self.offspring, counts)
    }

    /// Branching infection rate `Lambda(xi) = lambda * sum_l xi_l (1 - q0^l)`.
    ///
    /// Equals 1 on the empty state by convention.
    pub fn infection_rate_branching(&self, state: &SparseState) -> f64 {
        if state.is_zero() {
            return 1.0;
        }
        self.lambda * state.infective_weight()
    }

    /// Epidemic infection rate `Lambda_N(xi) = (1 - S/N) * Lambda(xi)`.
    ///
    /// Equals 1 on the empty state; fails if `S > N`.
    pub fn infection_rate_epidemic(&self, state: &SparseState) -> Result<f64, Error> {
        if state.is_zero() {
            return Ok(1.0);
        }
        let s = state.infected_hosts();
        let n = self.host_count;
        if s > n {
            return Err(Error::InvalidState { infected: s, hosts: n });
        }
        Ok((1.0 - s as f64 / n as f64) * self.lambda * state.infective_weight())
    }

    /// Total jump rate `rho(xi) = mu * P(xi) + Lambda(xi)` of the branching
    /// process; 1 on the empty state.
    pub fn jump_rate_branching(&self, state: &SparseState) -> f64 {
        if state.is_zero() {
            return 1.0;
        }
        self.mu * state.total_parasites() as f64 + self.infection_rate_branching(state)
    }

    /// Total jump rate `rho_N(xi)` of the epidemic; 1 on the empty state.
    pub fn jump_rate_epidemic(&self, state: &SparseState) -> Result<f64, Error> {
        if state.is_zero() {
            return Ok(1.0);
        }
        Ok(self.mu * state.total_parasites() as f64 + self.infection_rate_epidemic(state)?)
    }

    /// Infection rate of the requested process.
    pub fn infection_rate(&self, state: &SparseState, kind: ProcessKind) -> Result<f64, Error> {
        match kind {
            ProcessKind::Branching => Ok(self.infection_rate_branching(state)),
            ProcessKind::Epidemic => self.infection_rate_epidemic(state),
        }
    }

    /// Total jump rate of the requested process.
    pub fn jump_rate(&self, state: &SparseState, kind: ProcessKind) -> Result<f64, Error> {
        match kind {
            ProcessKind::Branching => Ok(self.jump_rate_branching(state)),
            ProcessKind::Epidemic => self.jump_rate_epidemic(state),
        }
    }
}
