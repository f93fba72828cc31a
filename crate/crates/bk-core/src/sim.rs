//! Exact continuous-time simulation of both processes.
//!
//! One step draws the holding time from an exponential with the state's
//! total jump rate, then picks the event by competing rates: a parasite
//! death at level `j` with weight `j * mu * xi_j`, otherwise an infection
//! whose source is picked with weight `xi_l (1 - q0^l)` and whose load is
//! `U_l` resampled until nonzero. Loads are conditioned by rejection
//! rather than by thinning contacts, so every recorded event is a real
//! state transition and the transition / infection clocks match the path
//! sigma-algebras exactly. The empty state emits unit-rate pseudo-jumps.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::Error;
use crate::model::{ModelParams, ProcessKind, SparseState};

pub use crate::model::EventKind;

/// One simulated transition with its holding time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    /// Holding time since the previous event; strictly positive.
    pub dt: f64,
}

/// When to stop extending a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Record exactly this many transitions (pseudo-jumps included).
    MaxTransitions(u64),
    /// Record until this many infection-clock events (infections plus
    /// pseudoinfections) have occurred.
    MaxInfections(u64),
    /// Record every event whose time is at most this horizon; the first
    /// event that would cross it is discarded.
    MaxTime(f64),
}

/// A simulated trajectory: initial state plus replayable event sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub initial: SparseState,
    pub process: ProcessKind,
    pub events: Vec<Event>,
    /// Positions (into `events`) of the infection-clock events.
    pub infection_index: Vec<u64>,
}

impl PathRecord {
    /// Number of infection-clock events in the record.
    pub fn infection_clock_count(&self) -> u64 {
        self.infection_index.len() as u64
    }

    /// Total elapsed time over all recorded events.
    pub fn total_time(&self) -> f64 {
        self.events.iter().map(|e| e.dt).sum()
    }

    /// Number of transitions needed to include the `k`-th (1-based)
    /// infection-clock event, or `None` if the record has fewer.
    pub fn transitions_until_infection(&self, k: u64) -> Option<u64> {
        if k == 0 || k > self.infection_clock_count() {
            return None;
        }
        Some(self.infection_index[(k - 1) as usize] + 1)
    }

    /// Replays every event from the initial state, verifying feasibility,
    /// and returns the final state.
    pub fn final_state(&self) -> Result<SparseState, Error> {
        let mut state = self.initial.clone();
        for ev in &self.events {
            state.apply_in_place(ev.kind)?;
        }
        Ok(state)
    }
}

/// Draws one transition of the requested process and applies it to
/// `state`, returning the event.
pub fn step<R: Rng + ?Sized>(
    state: &mut SparseState,
    params: &ModelParams,
    kind: ProcessKind,
    rng: &mut R,
) -> Result<Event, Error> {
    if state.is_zero() {
        let dt: f64 = Exp1.sample(rng);
        return Ok(Event { kind: EventKind::PseudoJump, dt });
    }

    let death_rate = params.mu() * state.total_parasites() as f64;
    let infection_rate = params.infection_rate(state, kind)?;
    let total = death_rate + infection_rate;
    let exp: f64 = Exp1.sample(rng);
    let dt = exp / total;

    let u_cat: f64 = rng.random();
    let is_death = infection_rate == 0.0 || u_cat * total < death_rate;
    let event_kind = if is_death {
        let target = rng.random::<f64>() * death_rate;
        let mut cum = 0.0;
        let mut chosen = 0;
        for (level, hosts, _) in state.entries() {
            chosen = level;
            cum += params.mu() * (level * hosts) as f64;
            if target < cum {
                break;
            }
        }
        EventKind::ParasiteDeath { level: chosen }
    } else {
        // The source distribution is the same under both processes: the
        // epidemic's (1 - S/N) factor scales all sources alike.
        let source_mass = params.lambda() * state.infective_weight();
        let target = rng.random::<f64>() * source_mass;
        let mut cum = 0.0;
        let mut chosen = 0;
        for (level, hosts, infectivity) in state.entries() {
            chosen = level;
            cum += params.lambda() * hosts as f64 * infectivity;
            if target < cum {
                break;
            }
        }
        let load = params.offspring().sample_positive_load(chosen, rng);
        EventKind::Infection { source_level: chosen, load }
    };

    state.apply_in_place(event_kind)?;
    Ok(Event { kind: event_kind, dt })
}

/// Simulates a path from `initial` until the stop rule is met.
pub fn simulate_path<R: Rng + ?Sized>(
    initial: &SparseState,
    params: &ModelParams,
    kind: ProcessKind,
    stop: StopRule,
    rng: &mut R,
) -> Result<PathRecord, Error> {
    if let StopRule::MaxTime(t) = stop {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "time horizon must be positive and finite, got {t}"
            )));
        }
    }
    if kind == ProcessKind::Epidemic && initial.infected_hosts() > params.host_count() {
        return Err(Error::InvalidState {
            infected: initial.infected_hosts(),
            hosts: params.host_count(),
        });
    }

    let mut state = initial.clone();
    let mut events = Vec::new();
    let mut infection_index = Vec::new();
    let mut elapsed = 0.0f64;

    loop {
        match stop {
            StopRule::MaxTransitions(m) => {
                if events.len() as u64 >= m {
                    break;
                }
            }
            StopRule::MaxInfections(m) => {
                if infection_index.len() as u64 >= m {
                    break;
                }
            }
            StopRule::MaxTime(_) => {}
        }
        let event = step(&mut state, params, kind, rng)?;
        if let StopRule::MaxTime(t) = stop {
            if elapsed + event.dt > t {
                break;
            }
            elapsed += event.dt;
        }
        if event.kind.advances_infection_clock() {
            infection_index.push(events.len() as u64);
        }
        events.push(event);
    }

    Ok(PathRecord { initial: initial.clone(), process: kind, events, infection_index })
}
