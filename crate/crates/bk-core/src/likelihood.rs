//! Likelihood ratio between the epidemic and branching path laws.
//!
//! Along a path the ratio `dP_epidemic / dP_branching` picks up one
//! factor per transition,
//!
//! ```text
//!   exp{ (Lambda - Lambda_N)(xi_pre) * dt } * (1 - S(xi_pre)/N)^u ,
//! ```
//!
//! with `u = 1` exactly when the event is an infection; grouping the
//! factors between consecutive infection-clock events gives the
//! per-infection form, which integrates the rate difference over each
//! segment and applies one `(1 - S/N)` factor per infection. Both forms
//! agree on identical paths because the `(1 - S/N)` factor always uses
//! the state just before the jump. All accumulation is done in the log
//! domain; both increments vanish on the empty state, whose rates are 1.
//!
//! Under the branching law the running ratio is a mean-one martingale.
//! Stopping it at the first oversized standardized holding time
//! (`E > N/S`) or the first time the ratio exceeds 2 makes the
//! increments bounded by `2 (S_cap / N)(1 + 2E)`, which is checked on
//! every step in debug builds.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;
use crate::model::{ModelParams, SparseState};
use crate::sim::{Event, PathRecord};

/// Which filtration the ratio is computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LrMode {
    /// One factor per transition; horizon counts transitions.
    PerTransition,
    /// One factor per infection-clock event; horizon counts infections.
    PerInfection,
}

/// Which stopping time froze the ratio first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopCause {
    /// A standardized holding time exceeded its cap at this step index.
    HoldingTime { index: u64 },
    /// The running ratio first exceeded 2 at this step index.
    RatioCap { index: u64 },
}

/// Result of evaluating the (stopped) likelihood ratio over a path.
#[derive(Clone, Debug)]
pub struct LrOutcome {
    /// Stopped ratio (frozen at the first stopping time, if any).
    pub l_tilde: f64,
    pub log_l_tilde: f64,
    /// Unstopped ratio at the horizon.
    pub l_final: f64,
    pub log_l_final: f64,
    /// First stopping time that fired, if any.
    pub stopped: Option<StopCause>,
    /// Index of the first oversized holding time, tracked independently.
    pub tau1: Option<u64>,
    /// Index where the unstopped ratio first exceeded 2, tracked
    /// independently.
    pub tau2: Option<u64>,
    /// Standardized exponentials, one per clock step.
    pub exponentials: Vec<f64>,
    /// Clock steps processed (transitions or infection events).
    pub steps: u64,
    /// `S_cap = horizon + S(initial)`, the infected-count bound in force.
    pub s_cap: u64,
    /// Whether the size hypothesis of the matching TV bound holds
    /// (`S_cap sqrt(horizon) < N` per-transition, `<= N` per-infection).
    pub size_condition_ok: bool,
}

/// Incremental likelihood-ratio accumulator.
///
/// Feed every transition of a path in order via [`Self::update`],
/// passing the state *before* the event. In per-infection mode the
/// drift and exponential integrals accumulate silently between
/// infection-clock events; the clock only advances when one closes.
#[derive(Clone, Debug)]
pub struct LikelihoodState {
    mode: LrMode,
    n_hosts: u64,
    s_cap: u64,
    log_l: f64,
    lin_l: f64,
    frozen: Option<(f64, StopCause)>,
    clock: u64,
    tau1: Option<u64>,
    tau2: Option<u64>,
    exponentials: Vec<f64>,
    pending_drift: f64,
    pending_exp: f64,
}

impl LikelihoodState {
    /// Starts a ratio at 1 (`log L = 0`).
    ///
    /// `horizon` is the number of clock steps that will be fed (used for
    /// `S_cap` and, in per-infection mode, the holding-time cap
    /// `N / S_cap`).
    pub fn new(mode: LrMode, horizon: u64, initial_infected: u64, n_hosts: u64) -> Self {
        Self {
            mode,
            n_hosts,
            s_cap: horizon + initial_infected,
            log_l: 0.0,
            lin_l: 1.0,
            frozen: None,
            clock: 0,
            tau1: None,
            tau2: None,
            exponentials: Vec::new(),
            pending_drift: 0.0,
            pending_exp: 0.0,
        }
    }

    pub fn mode(&self) -> LrMode {
        self.mode
    }

    /// Completed clock steps.
    pub fn steps(&self) -> u64 {
        self.clock
    }

    /// Running (unstopped) log ratio.
    pub fn log_l(&self) -> f64 {
        self.log_l
    }

    /// Log of the stopped ratio.
    pub fn log_l_tilde(&self) -> f64 {
        self.frozen.map_or(self.log_l, |(log, _)| log)
    }

    pub fn stopped(&self) -> Option<StopCause> {
        self.frozen.map(|(_, cause)| cause)
    }

    /// Folds one transition into the ratio. `pre_state` must be the state
    /// the event fired from.
    pub fn update(
        &mut self,
        pre_state: &SparseState,
        params: &ModelParams,
        event: &Event,
    ) -> Result<(), Error> {
        let n = self.n_hosts as f64;
        let s_pre = pre_state.infected_hosts();
        let is_infection = event.kind.is_infection();
        if is_infection && s_pre >= self.n_hosts {
            return Err(Error::InvalidState { infected: s_pre + 1, hosts: self.n_hosts });
        }
        let lambda_branching = params.infection_rate_branching(pre_state);
        let lambda_epidemic = params.infection_rate_epidemic(pre_state)?;
        let drift = (lambda_branching - lambda_epidemic) * event.dt;

        match self.mode {
            LrMode::PerTransition => {
                let rho = params.jump_rate_branching(pre_state);
                let exponential = rho * event.dt;
                self.exponentials.push(exponential);
                // tau1 fires on the pre-step index and freezes the ratio
                // before this step's factor is applied.
                if self.tau1.is_none() && s_pre > 0 && exponential > n / s_pre as f64 {
                    self.tau1 = Some(self.clock);
                    if self.frozen.is_none() {
                        self.frozen =
                            Some((self.log_l, StopCause::HoldingTime { index: self.clock }));
                    }
                }
                let was_frozen = self.frozen.is_some();
                let jump_term = if is_infection { math::ln_1p(-(s_pre as f64) / n) } else { 0.0 };
                self.advance(drift + jump_term, exponential, was_frozen);
            }
            LrMode::PerInfection => {
                self.pending_drift += drift;
                self.pending_exp += lambda_branching * event.dt;
                if !event.kind.advances_infection_clock() {
                    return Ok(());
                }
                let exponential = self.pending_exp;
                self.exponentials.push(exponential);
                if self.tau1.is_none() && exponential > n / self.s_cap as f64 {
                    self.tau1 = Some(self.clock);
                    if self.frozen.is_none() {
                        self.frozen =
                            Some((self.log_l, StopCause::HoldingTime { index: self.clock }));
                    }
                }
                let was_frozen = self.frozen.is_some();
                let jump_term = if is_infection { math::ln_1p(-(s_pre as f64) / n) } else { 0.0 };
                let increment = self.pending_drift + jump_term;
                self.pending_drift = 0.0;
                self.pending_exp = 0.0;
                self.advance(increment, exponential, was_frozen);
            }
        }
        Ok(())
    }

    fn advance(&mut self, increment: f64, exponential: f64, was_frozen: bool) {
        self.log_l += increment;
        let lin_new = math::exp(self.log_l);
        if !was_frozen {
            // bounded-increment property of the stopped martingale
            let cap = 2.0 * self.s_cap as f64 / self.n_hosts as f64 * (1.0 + 2.0 * exponential);
            debug_assert!(
                math::abs(lin_new - self.lin_l) <= cap * (1.0 + 1e-9) + 1e-12,
                "stopped-ratio increment {} exceeds cap {cap}",
                math::abs(lin_new - self.lin_l),
            );
        }
        self.lin_l = lin_new;
        self.clock += 1;
        if self.tau2.is_none() && self.log_l > core::f64::consts::LN_2 {
            self.tau2 = Some(self.clock);
            if self.frozen.is_none() {
                self.frozen = Some((self.log_l, StopCause::RatioCap { index: self.clock }));
            }
        }
    }

    /// Finishes the accumulation.
    pub fn finish(self, size_condition_ok: bool) -> LrOutcome {
        let log_l_tilde = self.log_l_tilde();
        LrOutcome {
            l_tilde: math::exp(log_l_tilde),
            log_l_tilde,
            l_final: math::exp(self.log_l),
            log_l_final: self.log_l,
            stopped: self.frozen.map(|(_, cause)| cause),
            tau1: self.tau1,
            tau2: self.tau2,
            exponentials: self.exponentials,
            steps: self.clock,
            s_cap: self.s_cap,
            size_condition_ok,
        }
    }
}

/// Evaluates the stopped likelihood ratio of a recorded path up to
/// `horizon` clock steps (transitions or infection-clock events,
/// depending on `mode`).
///
/// The size hypothesis of the matching TV bound is reported, not
/// enforced: the ratio is well defined either way.
pub fn stopped_lr(
    path: &PathRecord,
    params: &ModelParams,
    mode: LrMode,
    horizon: u64,
) -> Result<LrOutcome, Error> {
    let s0 = path.initial.infected_hosts();
    let s_cap = horizon + s0;
    let n = params.host_count() as f64;
    let margin = s_cap as f64 * math::sqrt(horizon as f64);
    let size_condition_ok = match mode {
        LrMode::PerTransition => margin < n,
        LrMode::PerInfection => margin <= n,
    };

    let available = match mode {
        LrMode::PerTransition => path.events.len() as u64,
        LrMode::PerInfection => path.infection_clock_count(),
    };
    if available < horizon {
        return Err(Error::InvalidParams(format!(
            "path provides {available} clock steps but horizon is {horizon}"
        )));
    }

    let mut lr = LikelihoodState::new(mode, horizon, s0, params.host_count());
    let mut state = path.initial.clone();
    for event in &path.events {
        if lr.steps() >= horizon {
            break;
        }
        lr.update(&state, params, event)?;
        state.apply_in_place(event.kind)?;
    }
    Ok(lr.finish(size_condition_ok))
}
