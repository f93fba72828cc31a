//! Joint construction of the branching and epidemic processes.
//!
//! The branching path is simulated with the shared step code; at every
//! real infection event an independent coin declares divergence with
//! probability `S_pre / N`, the chance that the epidemic's contact falls
//! on an already-infected host. Up to the first divergence the two paths
//! coincide event for event, so the divergence probability before `M`
//! infections upper-bounds the total variation distance between the two
//! path laws on the infection filtration. The run stops at the first
//! divergence; the epidemic is not continued past it.

use rand::Rng;

use crate::error::Error;
use crate::model::{ModelParams, ProcessKind, SparseState};
use crate::sim::{step, PathRecord};

/// Where a coupled run stopped agreeing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Divergence {
    /// 1-based ordinal of the infection-clock event that diverged.
    pub infection_ordinal: u64,
    /// Index of that event in the branching record.
    pub event_index: u64,
    /// Absolute time of the divergent event.
    pub time: f64,
}

/// One realization of the coupled pair.
///
/// Before the divergence (if any) the epidemic path is the branching
/// path, event for event; a run without divergence carries the full
/// `max_infections` worth of shared history.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub branching_path: PathRecord,
    pub divergence: Option<Divergence>,
    /// Infection-clock events completed while still coupled.
    pub infections_before_divergence: u64,
}

impl CoupledRun {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }
}

/// Runs the coupling until the first divergence or `max_infections`
/// infection-clock events, whichever comes first.
///
/// The branching marginal is exact: the coin draws are independent of
/// the step draws. A non-diverged prefix always satisfies `S <= N`, so
/// it replays feasibly as an epidemic path.
pub fn coupled_simulate<R: Rng + ?Sized>(
    initial: &SparseState,
    params: &ModelParams,
    max_infections: u64,
    rng: &mut R,
) -> Result<CoupledRun, Error> {
    let n = params.host_count();
    if initial.infected_hosts() > n {
        return Err(Error::InvalidState { infected: initial.infected_hosts(), hosts: n });
    }

    let mut state = initial.clone();
    let mut events = alloc::vec::Vec::new();
    let mut infection_index = alloc::vec::Vec::new();
    let mut elapsed = 0.0f64;
    let mut divergence = None;

    while (infection_index.len() as u64) < max_infections {
        let pre_infected = state.infected_hosts();
        let event = step(&mut state, params, ProcessKind::Branching, rng)?;
        elapsed += event.dt;
        if event.kind.advances_infection_clock() {
            infection_index.push(events.len() as u64);
        }
        let is_real_infection = event.kind.is_infection();
        events.push(event);
        if is_real_infection {
            let coin: f64 = rng.random();
            if coin < pre_infected as f64 / n as f64 {
                divergence = Some(Divergence {
                    infection_ordinal: infection_index.len() as u64,
                    event_index: (events.len() - 1) as u64,
                    time: elapsed,
                });
                break;
            }
        }
    }

    let clock = infection_index.len() as u64;
    Ok(CoupledRun {
        branching_path: PathRecord {
            initial: initial.clone(),
            process: ProcessKind::Branching,
            events,
            infection_index,
        },
        infections_before_divergence: if divergence.is_some() { clock - 1 } else { clock },
        divergence,
    })
}
