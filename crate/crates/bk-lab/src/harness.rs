//! Replicated Monte Carlo experiments and bound-verification reports.
//!
//! Every experiment follows the same discipline: replicate `i` draws its
//! randomness from a ChaCha stream that is a pure function of
//! `(master_seed, i)`, per-replicate outcomes are collected in replicate
//! order, and aggregation is a sequential fold over that order. Results
//! are therefore identical for any thread count.
//!
//! A [`BoundReport`] compares an empirical estimate against a closed-form
//! bound: `Violated` needs the estimate to clear the bound by more than
//! `k` standard errors (default 3), and a report whose theorem hypothesis
//! fails is `Inconclusive` rather than judged.

use bk_core::bounds::{
    self, rc_params, tail_bound_exponential, tail_bound_gaussian, RcParams, TailParams, TvBound,
};
use bk_core::coupling::coupled_simulate;
use bk_core::likelihood::{stopped_lr, LrMode, LrOutcome};
use bk_core::model::{ModelParams, ProcessKind, SparseState};
use bk_core::sim::{simulate_path, step, PathRecord, StopRule};
use bk_core::Error as CoreError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::stats::{self, chi_square_gof, ks_test_exp1, Chi2Report, Estimate, KsReport};

/// Errors raised while running an experiment.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("simulation failed: {0}")]
    Core(#[from] CoreError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

/// Which path filtration an experiment works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HorizonMode {
    /// Paths of exactly this many transitions.
    Transitions(u64),
    /// Paths with exactly this many infection-clock events.
    Infections(u64),
}

impl HorizonMode {
    pub fn horizon(&self) -> u64 {
        match *self {
            HorizonMode::Transitions(m) | HorizonMode::Infections(m) => m,
        }
    }

    pub fn lr_mode(&self) -> LrMode {
        match self {
            HorizonMode::Transitions(_) => LrMode::PerTransition,
            HorizonMode::Infections(_) => LrMode::PerInfection,
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        match *self {
            HorizonMode::Transitions(m) => StopRule::MaxTransitions(m),
            HorizonMode::Infections(m) => StopRule::MaxInfections(m),
        }
    }

    fn tv_bound(&self, s0: u64, n: u64) -> TvBound {
        match *self {
            HorizonMode::Transitions(m) => bounds::tv_bound_transitions(m, s0, n),
            HorizonMode::Infections(m) => bounds::tv_bound_infections(m, s0, n),
        }
    }
}

/// A replicated experiment over one model configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub initial: SparseState,
    pub mode: HorizonMode,
    pub replicates: u64,
    pub master_seed: u64,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
    /// SE multiplier for the `Violated` verdict.
    pub verdict_k: f64,
}

/// Verdict of a bound comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl core::fmt::Display for Verdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Verdict::Holds => write!(f, "holds"),
            Verdict::Violated => write!(f, "violated"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// An evaluated bound: theory vs Monte Carlo.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub name: String,
    pub theoretical: f64,
    pub empirical: f64,
    pub se: f64,
    pub verdict: Verdict,
    pub note: String,
}

impl BoundReport {
    pub fn evaluate(
        name: impl Into<String>,
        theoretical: f64,
        empirical: Estimate,
        verdict_k: f64,
        hypothesis_ok: bool,
        note: impl Into<String>,
    ) -> Self {
        let verdict = if !hypothesis_ok {
            Verdict::Inconclusive
        } else if empirical.value - verdict_k * empirical.se > theoretical {
            Verdict::Violated
        } else {
            Verdict::Holds
        };
        BoundReport {
            name: name.into(),
            theoretical,
            empirical: empirical.value,
            se: empirical.se,
            verdict,
            note: note.into(),
        }
    }
}

/// Runs `replicates` independent jobs on a dedicated thread pool, each
/// seeded with stream `stream_offset + i` of `master_seed`. Outcomes
/// come back in replicate order.
pub fn run_replicates<T, F>(
    replicates: u64,
    master_seed: u64,
    stream_offset: u64,
    threads: usize,
    job: F,
) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> Result<T, CoreError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Invalid(format!("thread pool: {e}")))?;
    let results: Result<Vec<T>, CoreError> = pool.install(|| {
        (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
                rng.set_stream(stream_offset.wrapping_add(i).wrapping_add(1));
                job(i, &mut rng)
            })
            .collect()
    });
    Ok(results?)
}

/// Moments of the stopped likelihood ratio over replicated branching
/// paths, plus the stopping-time frequencies of the TV decomposition.
#[derive(Clone, Debug)]
pub struct LrMoments {
    /// `E L~` (martingale mean, 1 in theory).
    pub mean_l: Estimate,
    /// `E |1 - L~|`.
    pub abs_dev: Estimate,
    /// `E (1 - L~)^+`.
    pub pos_dev: Estimate,
    /// `E (L~ - 1)^2`.
    pub second_moment: Estimate,
    /// `P[tau1 fired within the horizon]`.
    pub p_tau1: Estimate,
    /// `P[tau2 fired and tau1 did not]`.
    pub p_tau2_only: Estimate,
    /// Per-replicate `1{tau1} + 1{tau2 only} + (1 - L~)^+`, the one-sided
    /// TV assembly.
    pub assembly: Estimate,
    pub replicates: u64,
}

struct LrSample {
    l_tilde: f64,
    tau1: bool,
    tau2_only: bool,
}

fn lr_sample(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<LrSample, CoreError> {
    let path = simulate_path(
        &cfg.initial,
        &cfg.params,
        ProcessKind::Branching,
        cfg.mode.stop_rule(),
        rng,
    )?;
    let out = stopped_lr(&path, &cfg.params, cfg.mode.lr_mode(), cfg.mode.horizon())?;
    Ok(LrSample {
        l_tilde: out.l_tilde,
        tau1: out.tau1.is_some(),
        tau2_only: out.tau2.is_some() && out.tau1.is_none(),
    })
}

/// Estimates the likelihood-ratio moments of the configuration.
pub fn estimate_lr_moments(cfg: &ExperimentConfig) -> Result<LrMoments, HarnessError> {
    if cfg.replicates == 0 {
        return Err(HarnessError::Invalid("replicates must be >= 1".into()));
    }
    let samples = run_replicates(cfg.replicates, cfg.master_seed, 0, cfg.threads, |_, rng| {
        lr_sample(cfg, rng)
    })?;
    let l: Vec<f64> = samples.iter().map(|s| s.l_tilde).collect();
    let abs: Vec<f64> = samples.iter().map(|s| (1.0 - s.l_tilde).abs()).collect();
    let pos: Vec<f64> = samples.iter().map(|s| (1.0 - s.l_tilde).max(0.0)).collect();
    let sq: Vec<f64> = samples.iter().map(|s| (s.l_tilde - 1.0).powi(2)).collect();
    let t1: Vec<f64> = samples.iter().map(|s| f64::from(u8::from(s.tau1))).collect();
    let t2: Vec<f64> = samples.iter().map(|s| f64::from(u8::from(s.tau2_only))).collect();
    let assembly: Vec<f64> = samples
        .iter()
        .map(|s| {
            f64::from(u8::from(s.tau1))
                + f64::from(u8::from(s.tau2_only))
                + (1.0 - s.l_tilde).max(0.0)
        })
        .collect();
    Ok(LrMoments {
        mean_l: stats::mean_se(&l),
        abs_dev: stats::mean_se(&abs),
        pos_dev: stats::mean_se(&pos),
        second_moment: stats::mean_se(&sq),
        p_tau1: stats::mean_se(&t1),
        p_tau2_only: stats::mean_se(&t2),
        assembly: stats::mean_se(&assembly),
        replicates: cfg.replicates,
    })
}

/// Outcome of the TV-bound verification on one configuration.
#[derive(Clone, Debug)]
pub struct TvVerification {
    pub bound: TvBound,
    pub moments: LrMoments,
    pub reports: Vec<BoundReport>,
}

/// Verifies the total-variation bound pieces on one configuration:
/// the one-sided assembly and half the absolute deviation against
/// `8 S sqrt(horizon) / N`, the second moment against
/// `52 m S^2 / N^2`, and the holding-time stopping rarity against
/// `m e^{-N/S}`.
pub fn verify_tv(cfg: &ExperimentConfig) -> Result<TvVerification, HarnessError> {
    let s0 = cfg.initial.infected_hosts();
    let n = cfg.params.host_count();
    let horizon = cfg.mode.horizon();
    let bound = cfg.mode.tv_bound(s0, n);
    let moments = estimate_lr_moments(cfg)?;

    let s_cap = bound.s_cap as f64;
    let nf = n as f64;
    let variance_bound = 52.0 * horizon as f64 * s_cap * s_cap / (nf * nf);
    let tau1_bound = horizon as f64 * (-nf / s_cap).exp();

    let reports = vec![
        BoundReport::evaluate(
            "tv_assembly",
            bound.bound,
            moments.assembly,
            cfg.verdict_k,
            bound.valid,
            "P[tau1] + P[tau2, no tau1] + E(1-L~)+ vs 8 S sqrt(h) / N",
        ),
        BoundReport::evaluate(
            "tv_half_abs_dev",
            bound.bound,
            Estimate::new(0.5 * moments.abs_dev.value, 0.5 * moments.abs_dev.se),
            cfg.verdict_k,
            bound.valid,
            "E|1-L~|/2 vs 8 S sqrt(h) / N",
        ),
        BoundReport::evaluate(
            "variance_bound",
            variance_bound,
            moments.second_moment,
            cfg.verdict_k,
            true,
            "E(L~-1)^2 vs 52 h S^2 / N^2",
        ),
        BoundReport::evaluate(
            "tau1_rarity",
            tau1_bound,
            moments.p_tau1,
            cfg.verdict_k,
            true,
            "P[tau1 <= h] vs h e^{-N/S}",
        ),
    ];
    Ok(TvVerification { bound, moments, reports })
}

/// Path functionals measurable at the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Functional {
    /// Constant 1 (gap must vanish).
    ConstOne,
    /// Indicator that the final infected count exceeds the threshold.
    FinalInfectedAbove(u64),
}

impl Functional {
    pub fn eval(&self, path: &PathRecord) -> Result<bool, CoreError> {
        match *self {
            Functional::ConstOne => Ok(true),
            Functional::FinalInfectedAbove(threshold) => {
                Ok(path.final_state()?.infected_hosts() > threshold)
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Functional::ConstOne => "const_1".into(),
            Functional::FinalInfectedAbove(t) => format!("S_final_gt_{t}"),
        }
    }
}

/// Result of the two-sample functional-gap experiment.
#[derive(Clone, Debug)]
pub struct FunctionalGap {
    pub p_branching: Estimate,
    pub p_epidemic: Estimate,
    /// `|p_branching - p_epidemic|` with combined SE.
    pub gap: Estimate,
    pub bound: TvBound,
    pub report: BoundReport,
}

/// Simulates both processes independently and compares the probability
/// gap of the functional against the TV bound.
pub fn verify_functional_gap(
    cfg: &ExperimentConfig,
    functional: Functional,
) -> Result<FunctionalGap, HarnessError> {
    let sample = |kind: ProcessKind, offset: u64| -> Result<Estimate, HarnessError> {
        let hits =
            run_replicates(cfg.replicates, cfg.master_seed, offset, cfg.threads, |_, rng| {
                let path =
                    simulate_path(&cfg.initial, &cfg.params, kind, cfg.mode.stop_rule(), rng)?;
                functional.eval(&path)
            })?;
        let count = hits.iter().filter(|h| **h).count() as u64;
        Ok(stats::proportion(count, cfg.replicates))
    };
    // disjoint stream ranges keep the two samples independent
    let p_branching = sample(ProcessKind::Branching, 0)?;
    let p_epidemic = sample(ProcessKind::Epidemic, cfg.replicates)?;

    let gap = Estimate::new(
        (p_branching.value - p_epidemic.value).abs(),
        (p_branching.se * p_branching.se + p_epidemic.se * p_epidemic.se).sqrt(),
    );
    let bound = cfg.mode.tv_bound(cfg.initial.infected_hosts(), cfg.params.host_count());
    let report = BoundReport::evaluate(
        format!("functional_gap[{}]", functional.label()),
        bound.bound,
        gap,
        cfg.verdict_k,
        bound.valid,
        "|P_epi[f] - P_br[f]| vs 8 S sqrt(h) / N",
    );
    Ok(FunctionalGap { p_branching, p_epidemic, gap, bound, report })
}

/// Synthetic-martingale tail experiment for the concentration lemma.
#[derive(Clone, Debug)]
pub struct ConcentrationConfig {
    /// Constant part of the increment envelope.
    pub a: f64,
    /// Exponential part of the increment envelope.
    pub b: f64,
    /// Martingale steps per replicate.
    pub steps: u64,
    pub y_grid: Vec<f64>,
    pub replicates: u64,
    pub master_seed: u64,
    pub threads: usize,
    pub verdict_k: f64,
    /// Replaces the fair sign by +1, breaking the martingale hypothesis
    /// (negative control).
    pub drifted: bool,
}

/// One tail comparison at a grid level.
#[derive(Clone, Debug)]
pub struct TailReport {
    pub y: f64,
    /// `upper` for `P[L_n - L_0 >= y]`, `lower` for `<= -y`.
    pub tail: &'static str,
    pub report: BoundReport,
}

/// Simulates `L_n - L_0 = sum zeta_k (a + b E_k)` with fair independent
/// signs (so `|dL| <= a + b E` holds with equality) and checks both
/// lemma tails on the grid. The Gaussian-type bound is `Inconclusive`
/// outside its validity range.
pub fn concentration_test(cfg: &ConcentrationConfig) -> Result<Vec<TailReport>, HarnessError> {
    if cfg.a < 0.0 || cfg.b < 0.0 || cfg.a.max(cfg.b) <= 0.0 {
        return Err(HarnessError::Invalid("need a, b >= 0 with max(a, b) > 0".into()));
    }
    let deviations = run_replicates(cfg.replicates, cfg.master_seed, 0, cfg.threads, |_, rng| {
        let mut dev = 0.0f64;
        for _ in 0..cfg.steps {
            let e: f64 = Exp1.sample(rng);
            // short-circuit keeps the drifted control from consuming a draw
            let sign = if cfg.drifted || rng.random::<bool>() { 1.0 } else { -1.0 };
            dev += sign * (cfg.a + cfg.b * e);
        }
        Ok(dev)
    })?;

    let mut out = Vec::new();
    for &y in &cfg.y_grid {
        let upper = deviations.iter().filter(|d| **d >= y).count() as u64;
        let lower = deviations.iter().filter(|d| **d <= -y).count() as u64;
        for (tail, count) in [("upper", upper), ("lower", lower)] {
            let empirical = stats::proportion(count, cfg.replicates);
            let params = TailParams { a: cfg.a, b: cfg.b, n: cfg.steps, y };
            let (gaussian, in_range) = tail_bound_gaussian(&params);
            out.push(TailReport {
                y,
                tail,
                report: BoundReport::evaluate(
                    format!("tail_gaussian[{tail}][y={y}]"),
                    gaussian,
                    empirical,
                    cfg.verdict_k,
                    in_range,
                    "exp{-3y^2 / (8n((a+b)^2+b^2))}",
                ),
            });
            out.push(TailReport {
                y,
                tail,
                report: BoundReport::evaluate(
                    format!("tail_exponential[{tail}][y={y}]"),
                    tail_bound_exponential(&params),
                    empirical,
                    cfg.verdict_k,
                    true,
                    "exp{-y / (15 max(a,b) sqrt(n)) + 2/135}",
                ),
            });
        }
    }
    Ok(out)
}

/// Relative-closeness verification result.
#[derive(Clone, Debug)]
pub struct RcVerification {
    pub rc: RcParams,
    pub reports: Vec<BoundReport>,
}

/// Verifies the relative-closeness theorem at level `r`: deviation
/// `P[|L~'_M - 1| > eps/2]`, the stopping probability, and the full
/// bad-set probability, all against their eta pieces. Every report is
/// `Inconclusive` when a theorem hypothesis fails.
pub fn rc_test(cfg: &ExperimentConfig, r: f64) -> Result<RcVerification, HarnessError> {
    let HorizonMode::Infections(m_inf) = cfg.mode else {
        return Err(HarnessError::Invalid(
            "relative closeness is defined on the infection filtration".into(),
        ));
    };
    if r < 1.0 {
        return Err(HarnessError::Invalid(format!("need r >= 1, got {r}")));
    }
    let rc = rc_params(m_inf, cfg.params.host_count(), cfg.initial.infected_hosts(), r);

    struct RcSample {
        exceeded: bool,
        stopped: bool,
    }
    let half_eps = rc.eps / 2.0;
    let samples = run_replicates(cfg.replicates, cfg.master_seed, 0, cfg.threads, |_, rng| {
        let path = simulate_path(
            &cfg.initial,
            &cfg.params,
            ProcessKind::Branching,
            StopRule::MaxInfections(m_inf),
            rng,
        )?;
        let out = stopped_lr(&path, &cfg.params, LrMode::PerInfection, m_inf)?;
        Ok(RcSample {
            exceeded: (out.l_tilde - 1.0).abs() > half_eps,
            stopped: out.stopped.is_some(),
        })
    })?;

    let count = |f: &dyn Fn(&RcSample) -> bool| samples.iter().filter(|s| f(s)).count() as u64;
    let exceeded = stats::proportion(count(&|s| s.exceeded), cfg.replicates);
    let stopped = stats::proportion(count(&|s| s.stopped), cfg.replicates);
    let bad_set = stats::proportion(count(&|s| s.exceeded || s.stopped), cfg.replicates);

    let nf = cfg.params.host_count() as f64;
    let stopping_eta = (2.0f64 / 135.0).exp() * (-1.0 / (60.0 * rc.psi)).exp()
        + m_inf as f64 * (-nf / rc.s_cap as f64).exp();
    let deviation_eta = 2.0 * rc.psi.powf(r);
    let hypothesis_ok = rc.valid();

    let reports = vec![
        BoundReport::evaluate(
            "rc_deviation",
            deviation_eta,
            exceeded,
            cfg.verdict_k,
            hypothesis_ok,
            "P[|L~'_M - 1| > eps/2] vs 2 psi^r",
        ),
        BoundReport::evaluate(
            "rc_stopping",
            stopping_eta,
            stopped,
            cfg.verdict_k,
            hypothesis_ok,
            "P[min(t'1, t'2) <= M] vs remaining eta terms",
        ),
        BoundReport::evaluate(
            "rc_bad_set",
            rc.eta,
            bad_set,
            cfg.verdict_k,
            hypothesis_ok,
            "P[R^c] vs eta",
        ),
    ];
    Ok(RcVerification { rc, reports })
}

/// One grid time of the growth experiment.
#[derive(Clone, Debug)]
pub struct GrowthRow {
    pub t: f64,
    pub mean_parasites: Estimate,
    /// Predicted mean parasite count `P(0) e^{(lambda theta - mu) t}`.
    pub predicted: f64,
    /// Mean infected hosts; a diagnostic with no closed-form target
    /// (for theta > e the host count grows strictly slower than the
    /// parasite count).
    pub mean_hosts: Estimate,
}

/// Mean-growth and extinction report for the branching process.
#[derive(Clone, Debug)]
pub struct GrowthReport {
    pub rows: Vec<GrowthRow>,
    /// Fraction of replicates absorbed in the empty state by the horizon.
    pub extinction: Estimate,
    pub horizon: f64,
    pub criticality: bounds::Criticality,
    pub replicates: u64,
}

/// Once every grid snapshot is taken, a path that has grown past this
/// many parasites is declared surviving without simulating it to the
/// horizon: its extinction probability is at most `q^cutoff` for an
/// extinction root `q < 1`, far below Monte Carlo resolution, while the
/// event count to reach the horizon would grow exponentially.
pub const GROWTH_SIZE_CUTOFF: u64 = 10_000;

/// Tracks the mean total parasite count along a time grid against
/// `P(0) e^{(lambda theta - mu) t}` and the extinction frequency by
/// `horizon`. Extinction means absorption in the empty state;
/// pseudo-jumps afterwards are not simulated, and paths past
/// [`GROWTH_SIZE_CUTOFF`] count as surviving.
pub fn growth_and_extinction(
    cfg: &ExperimentConfig,
    t_grid: &[f64],
    horizon: f64,
) -> Result<GrowthReport, HarnessError> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Err(HarnessError::Invalid("time grid must be positive and finite".into()));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let end = horizon.max(*grid.last().unwrap());

    struct GrowthSample {
        parasites_at: Vec<f64>,
        hosts_at: Vec<f64>,
        extinct: bool,
    }
    let grid_ref = &grid;
    let samples = run_replicates(cfg.replicates, cfg.master_seed, 0, cfg.threads, |_, rng| {
        let mut state = cfg.initial.clone();
        let mut t = 0.0f64;
        let mut snapshots = Vec::with_capacity(grid_ref.len());
        let mut host_snapshots = Vec::with_capacity(grid_ref.len());
        let mut extinct = false;
        while t <= end {
            if state.is_zero() {
                extinct = true;
                break;
            }
            if snapshots.len() == grid_ref.len() && state.total_parasites() > GROWTH_SIZE_CUTOFF {
                break;
            }
            let pre_parasites = state.total_parasites() as f64;
            let pre_hosts = state.infected_hosts() as f64;
            let ev = step(&mut state, &cfg.params, ProcessKind::Branching, rng)?;
            let t_next = t + ev.dt;
            while snapshots.len() < grid_ref.len() && grid_ref[snapshots.len()] < t_next {
                snapshots.push(pre_parasites);
                host_snapshots.push(pre_hosts);
            }
            t = t_next;
        }
        // absorbed (or horizon reached): the counts are frozen from here on
        let (frozen_p, frozen_s) = if extinct {
            (0.0, 0.0)
        } else {
            (state.total_parasites() as f64, state.infected_hosts() as f64)
        };
        while snapshots.len() < grid_ref.len() {
            snapshots.push(frozen_p);
            host_snapshots.push(frozen_s);
        }
        Ok(GrowthSample { parasites_at: snapshots, hosts_at: host_snapshots, extinct })
    })?;

    let growth_rate = bounds::criticality(&cfg.params).mean_growth_rate;
    let p0 = cfg.initial.total_parasites() as f64;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let parasites: Vec<f64> = samples.iter().map(|s| s.parasites_at[i]).collect();
            let hosts: Vec<f64> = samples.iter().map(|s| s.hosts_at[i]).collect();
            GrowthRow {
                t,
                mean_parasites: stats::mean_se(&parasites),
                predicted: p0 * (growth_rate * t).exp(),
                mean_hosts: stats::mean_se(&hosts),
            }
        })
        .collect();
    let extinct_count = samples.iter().filter(|s| s.extinct).count() as u64;
    Ok(GrowthReport {
        rows,
        extinction: stats::proportion(extinct_count, cfg.replicates),
        horizon: end,
        criticality: bounds::criticality(&cfg.params),
        replicates: cfg.replicates,
    })
}

/// Per-replicate outcome of a coupled run (CSV row of the `coupling`
/// command).
#[derive(Clone, Debug)]
pub struct CouplingRow {
    pub replicate: u64,
    pub diverged: bool,
    /// 1-based infection ordinal of the divergence, if any.
    pub divergence_index: Option<u64>,
    /// Infection-clock events completed while coupled.
    pub n_infections: u64,
}

/// Divergence-probability estimate of the coupling.
#[derive(Clone, Debug)]
pub struct CouplingTv {
    pub estimate: Estimate,
    pub rows: Vec<CouplingRow>,
    pub max_infections: u64,
}

/// Estimates `P[divergence before M infections]`, a direct TV upper
/// estimate on the infection filtration.
pub fn tv_upper_from_coupling(
    cfg: &ExperimentConfig,
    max_infections: u64,
) -> Result<CouplingTv, HarnessError> {
    let rows = run_replicates(cfg.replicates, cfg.master_seed, 0, cfg.threads, |i, rng| {
        let run = coupled_simulate(&cfg.initial, &cfg.params, max_infections, rng)?;
        Ok(CouplingRow {
            replicate: i,
            diverged: run.diverged(),
            divergence_index: run.divergence.map(|d| d.infection_ordinal),
            n_infections: run.infections_before_divergence,
        })
    })?;
    let diverged = rows.iter().filter(|r| r.diverged).count() as u64;
    Ok(CouplingTv { estimate: stats::proportion(diverged, cfg.replicates), rows, max_infections })
}

/// Cross-check of the two TV upper estimates.
#[derive(Clone, Debug)]
pub struct CouplingConsistency {
    pub coupling: Estimate,
    pub half_abs_dev: Estimate,
    /// Raised when the two estimates sit more than 5 combined SE apart;
    /// a consistency alarm, not a theorem violation.
    pub alarm: bool,
}

/// Compares the coupling divergence probability with `E|1 - L~'_M| / 2`
/// on the same infection horizon.
pub fn coupling_vs_lr_consistency(
    cfg: &ExperimentConfig,
    max_infections: u64,
) -> Result<CouplingConsistency, HarnessError> {
    let coupling = tv_upper_from_coupling(cfg, max_infections)?.estimate;
    let lr_cfg = ExperimentConfig {
        mode: HorizonMode::Infections(max_infections),
        // a different stream space than the coupling runs
        master_seed: cfg.master_seed.wrapping_add(0x9e37_79b9),
        ..cfg.clone()
    };
    let moments = estimate_lr_moments(&lr_cfg)?;
    let half_abs_dev = Estimate::new(0.5 * moments.abs_dev.value, 0.5 * moments.abs_dev.se);
    let combined = (coupling.se * coupling.se + half_abs_dev.se * half_abs_dev.se).sqrt();
    let alarm = (coupling.value - half_abs_dev.value).abs() > 5.0 * combined;
    Ok(CouplingConsistency { coupling, half_abs_dev, alarm })
}

/// One-step generator check against the exact rates.
#[derive(Clone, Debug)]
pub struct GeneratorCheck {
    pub chi2: Chi2Report,
    pub mean_dt: f64,
    pub expected_mean_dt: f64,
    /// z-score of the observed mean holding time.
    pub mean_dt_z: f64,
    /// `(label, expected probability, observed count)` per category.
    pub categories: Vec<(String, f64, u64)>,
}

/// Repeats single steps from a fixed state and compares the event-category
/// frequencies (death at each occupied level, infection) and the mean
/// holding time with the exact generator.
pub fn empirical_generator_check(
    params: &ModelParams,
    state: &SparseState,
    kind: ProcessKind,
    n_steps: u64,
    seed: u64,
) -> Result<GeneratorCheck, HarnessError> {
    if state.is_zero() {
        return Err(HarnessError::Invalid("generator check needs a non-empty state".into()));
    }
    let total_rate = params.jump_rate(state, kind)?;
    let infection_rate = params.infection_rate(state, kind)?;
    let levels: Vec<u64> = state.support().map(|(l, _)| l).collect();
    let mut expected: Vec<f64> =
        state.support().map(|(l, h)| params.mu() * (l * h) as f64 / total_rate).collect();
    expected.push(infection_rate / total_rate);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; expected.len()];
    let mut dt_sum = 0.0;
    for _ in 0..n_steps {
        let mut working = state.clone();
        let ev = step(&mut working, params, kind, &mut rng)?;
        dt_sum += ev.dt;
        match ev.kind {
            bk_core::EventKind::ParasiteDeath { level } => {
                let idx = levels.iter().position(|&l| l == level).expect("occupied level");
                counts[idx] += 1;
            }
            bk_core::EventKind::Infection { .. } => *counts.last_mut().unwrap() += 1,
            bk_core::EventKind::PseudoJump => unreachable!("state is non-empty"),
        }
    }

    let chi2 = chi_square_gof(&counts, &expected);
    let mean_dt = dt_sum / n_steps as f64;
    let expected_mean_dt = 1.0 / total_rate;
    // holding times are Exp(total): SD = mean
    let z = (mean_dt - expected_mean_dt) / (expected_mean_dt / (n_steps as f64).sqrt());
    let mut categories: Vec<(String, f64, u64)> = levels
        .iter()
        .zip(&counts)
        .zip(&expected)
        .map(|((l, c), e)| (format!("death@{l}"), *e, *c))
        .collect();
    categories.push(("infection".into(), *expected.last().unwrap(), *counts.last().unwrap()));
    Ok(GeneratorCheck { chi2, mean_dt, expected_mean_dt, mean_dt_z: z, categories })
}

/// Pooled standardized holding times of replicated branching paths,
/// KS-tested against the standard exponential.
pub fn holding_time_ks(cfg: &ExperimentConfig, n_samples: usize) -> Result<KsReport, HarnessError> {
    let per_path = cfg.mode.horizon().max(1);
    let paths_needed = n_samples.div_ceil(per_path as usize) as u64;
    let chunks = run_replicates(paths_needed, cfg.master_seed, 0, cfg.threads, |_, rng| {
        let path = simulate_path(
            &cfg.initial,
            &cfg.params,
            ProcessKind::Branching,
            StopRule::MaxTransitions(per_path),
            rng,
        )?;
        let out = stopped_lr(&path, &cfg.params, LrMode::PerTransition, per_path)?;
        Ok(out.exponentials)
    })?;
    let mut pooled: Vec<f64> = chunks.into_iter().flatten().collect();
    pooled.truncate(n_samples);
    Ok(ks_test_exp1(&pooled))
}

/// Re-exported likelihood outcome for callers that need raw per-replicate
/// values (the `lr-verify` CSV).
pub fn lr_outcome_for_replicate(
    cfg: &ExperimentConfig,
    replicate: u64,
) -> Result<LrOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(replicate.wrapping_add(1));
    let path = simulate_path(
        &cfg.initial,
        &cfg.params,
        ProcessKind::Branching,
        cfg.mode.stop_rule(),
        &mut rng,
    )?;
    Ok(stopped_lr(&path, &cfg.params, cfg.mode.lr_mode(), cfg.mode.horizon())?)
}
