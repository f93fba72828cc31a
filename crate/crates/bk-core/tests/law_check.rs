//! Small-instance law check: the simulator's distribution over 2-step
//! path skeletons matches exact enumeration of the competing-exponential
//! probabilities.
//!
//! The toy instance uses the unit point-mass offspring law, under which
//! every host carries exactly one parasite and the population state is
//! just the infected-host count `k`: deaths happen at rate `mu k`,
//! infections at `lambda k` (branching) or `lambda k (1 - k/N)`
//! (epidemic), and the empty state pseudo-jumps. The oracle below
//! enumerates the finite skeleton tree with those formulas only; it
//! never calls the simulator's sampling code.

use std::collections::BTreeMap;

use bk_core::model::{ModelParams, OffspringLaw, ProcessKind};
use bk_core::sim::{simulate_path, EventKind, StopRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LAMBDA: f64 = 1.0;
const MU: f64 = 1.0;
const HOSTS: u64 = 10;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Cat {
    Death,
    Infection,
    Pseudo,
}

/// Exact skeleton distribution after `depth` transitions from `k` hosts.
fn enumerate(
    k: u64,
    depth: usize,
    prefix: &mut Vec<Cat>,
    prob: f64,
    epidemic: bool,
    out: &mut BTreeMap<Vec<Cat>, f64>,
) {
    if depth == 0 {
        *out.entry(prefix.clone()).or_insert(0.0) += prob;
        return;
    }
    if k == 0 {
        prefix.push(Cat::Pseudo);
        enumerate(0, depth - 1, prefix, prob, epidemic, out);
        prefix.pop();
        return;
    }
    let death = MU * k as f64;
    let infection = if epidemic {
        LAMBDA * k as f64 * (1.0 - k as f64 / HOSTS as f64)
    } else {
        LAMBDA * k as f64
    };
    let total = death + infection;
    prefix.push(Cat::Death);
    enumerate(k - 1, depth - 1, prefix, prob * death / total, epidemic, out);
    prefix.pop();
    if infection > 0.0 {
        prefix.push(Cat::Infection);
        enumerate(k + 1, depth - 1, prefix, prob * infection / total, epidemic, out);
        prefix.pop();
    }
}

fn run_law_check(kind: ProcessKind) {
    let law = OffspringLaw::point_mass(1).unwrap();
    let params = ModelParams::new(LAMBDA, MU, HOSTS, law.clone()).unwrap();
    let initial = params.state_from_counts([(1, 1)]).unwrap();

    let mut exact = BTreeMap::new();
    enumerate(1, 2, &mut Vec::new(), 1.0, kind == ProcessKind::Epidemic, &mut exact);
    let mass: f64 = exact.values().sum();
    assert!((mass - 1.0).abs() < 1e-12, "oracle must be a distribution");

    let replicates = 100_000u64;
    let mut observed: BTreeMap<Vec<Cat>, u64> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..replicates {
        let path =
            simulate_path(&initial, &params, kind, StopRule::MaxTransitions(2), &mut rng).unwrap();
        let skeleton: Vec<Cat> = path
            .events
            .iter()
            .map(|e| match e.kind {
                EventKind::ParasiteDeath { .. } => Cat::Death,
                EventKind::Infection { .. } => Cat::Infection,
                EventKind::PseudoJump => Cat::Pseudo,
            })
            .collect();
        *observed.entry(skeleton).or_insert(0) += 1;
    }

    for (skeleton, count) in &observed {
        assert!(exact.contains_key(skeleton), "impossible skeleton {skeleton:?} observed");
        let _ = count;
    }
    for (skeleton, p) in &exact {
        let freq = observed.get(skeleton).copied().unwrap_or(0) as f64 / replicates as f64;
        let se = (p * (1.0 - p) / replicates as f64).sqrt();
        assert!(
            (freq - p).abs() <= 4.0 * se,
            "{kind:?} skeleton {skeleton:?}: freq {freq} vs exact {p} (se {se})"
        );
    }
}

#[test]
fn branching_two_step_skeletons_match_enumeration() {
    run_law_check(ProcessKind::Branching);
}

#[test]
fn epidemic_two_step_skeletons_match_enumeration() {
    run_law_check(ProcessKind::Epidemic);
}

/// Exact epidemic probability of `S(xi^(m)) > threshold` after `m`
/// transitions, enumerated on the host-count chain.
fn exact_epidemic_hit_after_transitions(k: u64, depth: u32, threshold: u64) -> f64 {
    if depth == 0 {
        return if k > threshold { 1.0 } else { 0.0 };
    }
    if k == 0 {
        return exact_epidemic_hit_after_transitions(0, depth - 1, threshold);
    }
    let death = MU * k as f64;
    let infection = LAMBDA * k as f64 * (1.0 - k as f64 / HOSTS as f64);
    let total = death + infection;
    let mut p = death / total * exact_epidemic_hit_after_transitions(k - 1, depth - 1, threshold);
    if infection > 0.0 {
        p += infection / total * exact_epidemic_hit_after_transitions(k + 1, depth - 1, threshold);
    }
    p
}

/// Exact epidemic probability of `S > threshold` at the `m_inf`-th
/// infection-clock event (pseudoinfections included).
fn exact_epidemic_hit_at_infection(k: u64, done: u64, m_inf: u64, threshold: u64) -> f64 {
    if k == 0 {
        // absorbed: every remaining clock event is a pseudoinfection at
        // state 0, which cannot exceed any threshold
        return 0.0;
    }
    let death = MU * k as f64;
    let infection = LAMBDA * k as f64 * (1.0 - k as f64 / HOSTS as f64);
    let total = death + infection;
    let after_infection = if done + 1 == m_inf {
        if k + 1 > threshold {
            1.0
        } else {
            0.0
        }
    } else {
        exact_epidemic_hit_at_infection(k + 1, done + 1, m_inf, threshold)
    };
    death / total * exact_epidemic_hit_at_infection(k - 1, done, m_inf, threshold)
        + infection / total * after_infection
}

/// Change of measure on the transition filtration: for a functional `f`
/// of the first `m` transitions, `E_branching[f L_m] = E_epidemic[f]`.
/// The right side is enumerated exactly; the left side averages the
/// simulated branching paths weighted by the unstopped ratio.
#[test]
fn change_of_measure_matches_epidemic_law_per_transition() {
    use bk_core::likelihood::{stopped_lr, LrMode};

    let law = OffspringLaw::point_mass(1).unwrap();
    let params = ModelParams::new(LAMBDA, MU, HOSTS, law).unwrap();
    let initial = params.state_from_counts([(1, 1)]).unwrap();
    let m = 4u64;
    let threshold = 1u64;
    let exact = exact_epidemic_hit_after_transitions(1, m as u32, threshold);

    let replicates = 200_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut weighted = Vec::with_capacity(replicates as usize);
    for _ in 0..replicates {
        let path =
            simulate_path(&initial, &params, ProcessKind::Branching, StopRule::MaxTransitions(m), &mut rng)
                .unwrap();
        let out = stopped_lr(&path, &params, LrMode::PerTransition, m).unwrap();
        let hit = path.final_state().unwrap().infected_hosts() > threshold;
        weighted.push(if hit { out.l_final } else { 0.0 });
    }
    let n = replicates as f64;
    let mean = weighted.iter().sum::<f64>() / n;
    let var = weighted.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(
        (mean - exact).abs() <= 4.0 * se,
        "E_br[f L] = {mean:.6} vs exact epidemic probability {exact:.6} (se {se:.2e})"
    );
}

/// Same identity on the infection filtration with the per-infection
/// ratio: `E_branching[g L'_M] = E_epidemic[g]`.
#[test]
fn change_of_measure_matches_epidemic_law_per_infection() {
    use bk_core::likelihood::{stopped_lr, LrMode};

    let law = OffspringLaw::point_mass(1).unwrap();
    let params = ModelParams::new(LAMBDA, MU, HOSTS, law).unwrap();
    let initial = params.state_from_counts([(1, 1)]).unwrap();
    let m_inf = 3u64;
    let threshold = 2u64;
    let exact = exact_epidemic_hit_at_infection(1, 0, m_inf, threshold);
    assert!(exact > 0.0 && exact < 1.0, "toy functional must be non-degenerate");

    let replicates = 200_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut weighted = Vec::with_capacity(replicates as usize);
    for _ in 0..replicates {
        let path = simulate_path(
            &initial,
            &params,
            ProcessKind::Branching,
            StopRule::MaxInfections(m_inf),
            &mut rng,
        )
        .unwrap();
        let out = stopped_lr(&path, &params, LrMode::PerInfection, m_inf).unwrap();
        let hit = path.final_state().unwrap().infected_hosts() > threshold;
        weighted.push(if hit { out.l_final } else { 0.0 });
    }
    let n = replicates as f64;
    let mean = weighted.iter().sum::<f64>() / n;
    let var = weighted.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(
        (mean - exact).abs() <= 4.0 * se,
        "E_br[g L'] = {mean:.6} vs exact epidemic probability {exact:.6} (se {se:.2e})"
    );
}
