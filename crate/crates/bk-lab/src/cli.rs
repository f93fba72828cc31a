//! Command-line interface: simulation, verification and sweep commands
//! over a flat `key = value` configuration with overrides.
//!
//! Every command prints a one-screen summary, optionally writes a CSV or
//! JSON-lines file, and exits nonzero exactly when some bound verdict is
//! `violated`. Partial output files are removed on failure.

use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bk_core::bounds::{self, rc_params};
use bk_core::likelihood::StopCause;
use bk_core::sim::simulate_path;

use crate::config::{parse_config, RunConfig};
use crate::harness::{
    concentration_test, coupling_vs_lr_consistency, empirical_generator_check, estimate_lr_moments,
    growth_and_extinction, holding_time_ks, lr_outcome_for_replicate, rc_test,
    tv_upper_from_coupling, verify_functional_gap, verify_tv, BoundReport, ConcentrationConfig,
    HorizonMode, Verdict,
};
use crate::output::{write_csv, write_path_jsonl};

/// Simulation and bound-verification laboratory for a host-parasite
/// epidemic and its branching approximation.
#[derive(Parser, Debug)]
#[command(name = "bklab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config key `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, 0 = auto (overrides `threads`).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Replicate count (overrides `replicates`).
    #[arg(long, global = true)]
    pub replicates: Option<u64>,
    /// Output file (overrides `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Extra KEY=VALUE overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Simulate one path and write it as JSON-lines.
    Simulate,
    /// Per-replicate stopped likelihood ratios, with moment summary.
    LrVerify,
    /// Verify the total-variation bound pieces (and a functional gap).
    Tv,
    /// Coupled runs: divergence CSV, TV upper estimate, LR cross-check.
    Coupling,
    /// Closed-form bound table over the configured grid.
    Bounds,
    /// Synthetic-martingale concentration tails against both bounds.
    Concentration,
    /// Relative-closeness verification at level r.
    Rc,
    /// Mean-growth curve and extinction frequency of the branching
    /// process, with a one-step generator check and holding-time KS.
    Growth,
    /// Repeat the tv verification over the configured sweep grid.
    Sweep,
}

/// Parses CLI arguments, runs the command, and returns the exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let mut overrides: Vec<(String, String)> = Vec::new();
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(threads) = cli.threads {
        overrides.push(("threads".into(), threads.to_string()));
    }
    if let Some(replicates) = cli.replicates {
        overrides.push(("replicates".into(), replicates.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), out.display().to_string()));
    }
    for pair in &cli.set {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{pair}`"))?;
        overrides.push((k.to_string(), v.to_string()));
    }

    let cfg = match parse_config(cli.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(errors) => {
            for e in &errors {
                eprintln!("config error: {e}");
            }
            return Ok(2);
        }
    };

    run_command(cli.command, &cfg)
}

/// Dispatches one command on a validated configuration.
pub fn run_command(command: Command, cfg: &RunConfig) -> anyhow::Result<i32> {
    let out = cfg.out.clone();
    let result = match command {
        Command::Simulate => cmd_simulate(cfg),
        Command::LrVerify => cmd_lr_verify(cfg),
        Command::Tv => cmd_tv(cfg),
        Command::Coupling => cmd_coupling(cfg),
        Command::Bounds => cmd_bounds(cfg),
        Command::Concentration => cmd_concentration(cfg),
        Command::Rc => cmd_rc(cfg),
        Command::Growth => cmd_growth(cfg),
        Command::Sweep => cmd_sweep(cfg),
    };
    if result.is_err() {
        if let Some(path) = out {
            let _ = std::fs::remove_file(path);
        }
    }
    result
}

fn out_path(cfg: &RunConfig, default_name: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(default_name))
}

fn print_reports(reports: &[BoundReport]) {
    println!("{:<34} {:>14} {:>14} {:>12}  verdict", "bound", "theoretical", "empirical", "se");
    for r in reports {
        println!(
            "{:<34} {:>14.6e} {:>14.6e} {:>12.3e}  {}",
            r.name, r.theoretical, r.empirical, r.se, r.verdict
        );
    }
}

fn exit_code(reports: &[BoundReport]) -> i32 {
    if reports.iter().any(|r| r.verdict == Verdict::Violated) {
        1
    } else {
        0
    }
}

fn report_rows(cfg: &RunConfig, reports: &[BoundReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                format!("{}", r.theoretical),
                format!("{}", r.empirical),
                format!("{}", r.se),
                r.verdict.to_string(),
                r.note.clone(),
                echo_config(cfg),
            ]
        })
        .collect()
}

const REPORT_HEADER: [&str; 7] =
    ["bound", "theoretical", "empirical", "se", "verdict", "note", "config"];

fn echo_config(cfg: &RunConfig) -> String {
    let (mode, horizon) = match cfg.mode {
        HorizonMode::Transitions(m) => ("transitions", m),
        HorizonMode::Infections(m) => ("infections", m),
    };
    format!(
        "lambda={} mu={} N={} offspring={:?} theta={} initial={} mode={} horizon={} replicates={} seed={}",
        cfg.lambda,
        cfg.mu,
        cfg.hosts,
        cfg.offspring,
        cfg.theta,
        cfg.initial
            .iter()
            .map(|(l, h)| format!("{h}x{l}"))
            .collect::<Vec<_>>()
            .join(","),
        mode,
        horizon,
        cfg.replicates,
        cfg.seed,
    )
}

fn cmd_simulate(cfg: &RunConfig) -> anyhow::Result<i32> {
    let params = cfg.model_params()?;
    let initial = cfg.initial_state()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let record = simulate_path(&initial, &params, cfg.process, cfg.stop, &mut rng)?;
    let path = out_path(cfg, "path.jsonl");
    write_path_jsonl(&path, &params, &record)
        .with_context(|| format!("writing {}", path.display()))?;
    let final_state = record.final_state()?;
    println!("process            {:?}", record.process);
    println!("stop rule          {:?}", cfg.stop);
    println!("events             {}", record.events.len());
    println!("infection events   {}", record.infection_clock_count());
    println!("total time         {:.6}", record.total_time());
    println!(
        "final state        S = {}, P = {}, levels = {}",
        final_state.infected_hosts(),
        final_state.total_parasites(),
        final_state.support_size()
    );
    println!("wrote              {}", path.display());
    Ok(0)
}

fn cmd_lr_verify(cfg: &RunConfig) -> anyhow::Result<i32> {
    let experiment = cfg.experiment()?;
    let moments = estimate_lr_moments(&experiment)?;

    let (mode_label, horizon) = match cfg.mode {
        HorizonMode::Transitions(m) => ("transitions", m),
        HorizonMode::Infections(m) => ("infections", m),
    };
    let s0: u64 = cfg.initial.iter().map(|(_, h)| h).sum();
    let size_ok = match cfg.mode {
        HorizonMode::Transitions(_) => bounds::tv_bound_transitions(horizon, s0, cfg.hosts).valid,
        HorizonMode::Infections(_) => bounds::tv_bound_infections(horizon, s0, cfg.hosts).valid,
    };
    if !size_ok {
        println!("warning: size hypothesis S_cap sqrt(horizon) vs N fails; ratios still defined");
    }
    let mut rows = Vec::with_capacity(cfg.replicates as usize);
    for i in 0..cfg.replicates {
        let out = lr_outcome_for_replicate(&experiment, i)?;
        let stopped = match out.stopped {
            None => "none".to_string(),
            Some(StopCause::HoldingTime { index }) => format!("tau1@{index}"),
            Some(StopCause::RatioCap { index }) => format!("tau2@{index}"),
        };
        rows.push(vec![
            i.to_string(),
            format!("{}", out.l_tilde),
            stopped,
            mode_label.to_string(),
            horizon.to_string(),
        ]);
    }
    let path = out_path(cfg, "lr_replicates.csv");
    write_csv(&path, &["replicate_id", "L_final", "stopped_at", "mode", "m_or_M"], &rows)
        .with_context(|| format!("writing {}", path.display()))?;

    println!("replicates         {}", cfg.replicates);
    println!("mean L~            {:.6} +- {:.2e}", moments.mean_l.value, moments.mean_l.se);
    println!("E|1 - L~|          {:.6e} +- {:.2e}", moments.abs_dev.value, moments.abs_dev.se);
    println!("E(1 - L~)+         {:.6e} +- {:.2e}", moments.pos_dev.value, moments.pos_dev.se);
    println!(
        "E(L~ - 1)^2        {:.6e} +- {:.2e}",
        moments.second_moment.value, moments.second_moment.se
    );
    println!("P[tau1]            {:.6e}", moments.p_tau1.value);
    println!("P[tau2, no tau1]   {:.6e}", moments.p_tau2_only.value);
    println!("wrote              {}", path.display());
    Ok(0)
}

fn cmd_tv(cfg: &RunConfig) -> anyhow::Result<i32> {
    let experiment = cfg.experiment()?;
    let verification = verify_tv(&experiment)?;
    let mut reports = verification.reports.clone();
    if let Some(functional) = cfg.functional {
        let gap = verify_functional_gap(&experiment, functional)?;
        println!(
            "functional gap     |{:.6e} - {:.6e}| = {:.6e} +- {:.2e}",
            gap.p_branching.value, gap.p_epidemic.value, gap.gap.value, gap.gap.se
        );
        reports.push(gap.report);
    }
    println!(
        "tv bound           {:.6e} (hypothesis {})",
        verification.bound.bound,
        if verification.bound.valid { "holds" } else { "fails: inconclusive" }
    );
    print_reports(&reports);
    let path = out_path(cfg, "tv_reports.csv");
    write_csv(&path, &REPORT_HEADER, &report_rows(cfg, &reports))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote              {}", path.display());
    Ok(exit_code(&reports))
}

fn cmd_coupling(cfg: &RunConfig) -> anyhow::Result<i32> {
    let experiment = cfg.experiment()?;
    let m_inf = match cfg.mode {
        HorizonMode::Infections(m) => m,
        HorizonMode::Transitions(_) => {
            return Err(anyhow!("coupling runs on the infection clock; set mode = infections"))
        }
    };
    let tv = tv_upper_from_coupling(&experiment, m_inf)?;
    let rows: Vec<Vec<String>> = tv
        .rows
        .iter()
        .map(|r| {
            vec![
                r.replicate.to_string(),
                if r.diverged { "1" } else { "0" }.to_string(),
                r.divergence_index.map_or(String::new(), |i| i.to_string()),
                r.n_infections.to_string(),
            ]
        })
        .collect();
    let path = out_path(cfg, "coupling.csv");
    write_csv(&path, &["replicate_id", "diverged", "divergence_index", "n_infections"], &rows)
        .with_context(|| format!("writing {}", path.display()))?;

    let consistency = coupling_vs_lr_consistency(&experiment, m_inf)?;
    println!("max infections     {m_inf}");
    println!(
        "P[divergence]      {:.6e} +- {:.2e}",
        consistency.coupling.value, consistency.coupling.se
    );
    println!(
        "E|1 - L~'|/2       {:.6e} +- {:.2e}",
        consistency.half_abs_dev.value, consistency.half_abs_dev.se
    );
    println!(
        "consistency alarm  {}",
        if consistency.alarm { "RAISED (estimates > 5 combined SE apart)" } else { "quiet" }
    );
    println!("wrote              {}", path.display());
    Ok(0)
}

fn cmd_bounds(cfg: &RunConfig) -> anyhow::Result<i32> {
    let header = [
        "horizon",
        "N",
        "s0",
        "tv_transitions",
        "tv_t1_valid",
        "tv_infections",
        "tv_t2_valid",
        "psi",
        "c_r",
        "eps_r",
        "eta_r",
        "rc_valid",
        "criticality",
        "regime",
        "growth_rate",
        "eps0",
    ];
    let grid: Vec<RunConfig> = match &cfg.sweep {
        None => vec![cfg.clone()],
        Some((key, values)) => values
            .iter()
            .map(|v| cfg.with_sweep_value(key, *v).map_err(|e| anyhow!("sweep: {}", e[0])))
            .collect::<Result<_, _>>()?,
    };
    let mut rows = Vec::new();
    for point in &grid {
        let s0: u64 = point.initial.iter().map(|(_, h)| h).sum();
        let horizon = point.mode.horizon();
        let t1 = bounds::tv_bound_transitions(horizon, s0, point.hosts);
        let t2 = bounds::tv_bound_infections(horizon, s0, point.hosts);
        let rc = rc_params(horizon, point.hosts, s0, point.r);
        let crit = bounds::criticality(&point.model_params()?);
        rows.push(vec![
            horizon.to_string(),
            point.hosts.to_string(),
            s0.to_string(),
            format!("{}", t1.bound),
            t1.valid.to_string(),
            format!("{}", t2.bound),
            t2.valid.to_string(),
            format!("{}", rc.psi),
            format!("{}", rc.c_r),
            format!("{}", rc.eps),
            format!("{}", rc.eta),
            rc.valid().to_string(),
            format!("{}", crit.parameter),
            format!("{:?}", crit.regime),
            format!("{}", crit.mean_growth_rate),
            format!("{}", bounds::epsilon0()),
        ]);
    }
    let path = out_path(cfg, "bounds.csv");
    write_csv(&path, &header, &rows).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{:<10} {:>10} {:>14} {:>14} {:>12} {:>12}",
        "horizon", "N", "tv_trans", "tv_inf", "eps_r", "eta_r"
    );
    for row in &rows {
        println!(
            "{:<10} {:>10} {:>14.8} {:>14.8} {:>12.6} {:>12.6}",
            row[0],
            row[1],
            row[3].parse::<f64>().unwrap_or(f64::NAN),
            row[5].parse::<f64>().unwrap_or(f64::NAN),
            row[9].parse::<f64>().unwrap_or(f64::NAN),
            row[10].parse::<f64>().unwrap_or(f64::NAN),
        );
    }
    println!("wrote              {}", path.display());
    Ok(0)
}

fn cmd_concentration(cfg: &RunConfig) -> anyhow::Result<i32> {
    let conc = ConcentrationConfig {
        a: cfg.conc_a,
        b: cfg.conc_b,
        steps: cfg.conc_steps,
        y_grid: cfg.y_grid.clone(),
        replicates: cfg.replicates,
        master_seed: cfg.seed,
        threads: cfg.effective_threads(),
        verdict_k: cfg.verdict_k,
        drifted: cfg.conc_drifted,
    };
    let tails = concentration_test(&conc)?;
    let reports: Vec<BoundReport> = tails.iter().map(|t| t.report.clone()).collect();
    println!(
        "synthetic martingale: a = {}, b = {}, n = {}, replicates = {}{}",
        conc.a,
        conc.b,
        conc.steps,
        conc.replicates,
        if conc.drifted { " [drifted control]" } else { "" }
    );
    print_reports(&reports);
    let path = out_path(cfg, "concentration.csv");
    write_csv(&path, &REPORT_HEADER, &report_rows(cfg, &reports))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote              {}", path.display());
    Ok(exit_code(&reports))
}

fn cmd_rc(cfg: &RunConfig) -> anyhow::Result<i32> {
    let experiment = cfg.experiment()?;
    let verification = rc_test(&experiment, cfg.r)?;
    let rc = verification.rc;
    println!("r                  {}", cfg.r);
    println!("psi                {:.6e}", rc.psi);
    println!("eps_r              {:.6e}", rc.eps);
    println!("eta_r              {:.6e}", rc.eta);
    println!(
        "hypotheses         psi<=1: {}, eps<=1: {}, M >= (C_r^2/5) log N: {}",
        rc.psi_valid, rc.eps_valid, rc.m_valid
    );
    print_reports(&verification.reports);
    let path = out_path(cfg, "rc_reports.csv");
    write_csv(&path, &REPORT_HEADER, &report_rows(cfg, &verification.reports))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote              {}", path.display());
    Ok(exit_code(&verification.reports))
}

fn cmd_growth(cfg: &RunConfig) -> anyhow::Result<i32> {
    let experiment = cfg.experiment()?;
    let report = growth_and_extinction(&experiment, &cfg.t_grid, cfg.extinction_horizon)?;
    println!(
        "criticality        {:.4} ({:?}), mean growth rate {:.4}",
        report.criticality.parameter,
        report.criticality.regime,
        report.criticality.mean_growth_rate
    );
    println!("{:<10} {:>14} {:>12} {:>14} {:>14}", "t", "mean P", "se", "predicted", "mean S");
    let mut rows = Vec::new();
    for row in &report.rows {
        println!(
            "{:<10} {:>14.6} {:>12.3e} {:>14.6} {:>14.6}",
            row.t,
            row.mean_parasites.value,
            row.mean_parasites.se,
            row.predicted,
            row.mean_hosts.value
        );
        rows.push(vec![
            format!("{}", row.t),
            format!("{}", row.mean_parasites.value),
            format!("{}", row.mean_parasites.se),
            format!("{}", row.predicted),
            format!("{}", row.mean_hosts.value),
            format!("{}", row.mean_hosts.se),
        ]);
    }
    println!(
        "extinction by t={}  {:.4} +- {:.2e}",
        report.horizon, report.extinction.value, report.extinction.se
    );

    let check = empirical_generator_check(
        &experiment.params,
        &experiment.initial,
        bk_core::ProcessKind::Branching,
        10_000,
        cfg.seed ^ 0x6e65_7874,
    )?;
    println!(
        "generator check    chi2 = {:.3} (dof {}), p = {:.4}; mean dt z = {:+.2}",
        check.chi2.statistic, check.chi2.dof, check.chi2.p_value, check.mean_dt_z
    );
    let ks_cfg = crate::harness::ExperimentConfig {
        mode: HorizonMode::Transitions(50),
        ..experiment.clone()
    };
    let ks = holding_time_ks(&ks_cfg, 10_000)?;
    println!("holding-time KS    D = {:.5}, p = {:.4} (n = {})", ks.statistic, ks.p_value, ks.n);

    let path = out_path(cfg, "growth.csv");
    write_csv(&path, &["t", "mean_parasites", "se", "predicted", "mean_hosts", "hosts_se"], &rows)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote              {}", path.display());
    Ok(0)
}

fn cmd_sweep(cfg: &RunConfig) -> anyhow::Result<i32> {
    let Some((key, values)) = cfg.sweep.clone() else {
        return Err(anyhow!("sweep needs the `sweep` key, e.g. sweep = N:500,1000,2000"));
    };
    let header = [
        "sweep_key",
        "sweep_value",
        "config",
        "tv_bound",
        "bound_valid",
        "mean_L",
        "mean_L_se",
        "abs_dev",
        "pos_dev",
        "second_moment",
        "variance_bound",
        "p_tau1",
        "p_tau2_only",
        "assembly",
        "assembly_se",
        "verdicts",
    ];
    let mut rows = Vec::new();
    let mut any_violated = false;
    println!("sweep over {key}: {values:?}");
    for value in &values {
        let point = cfg
            .with_sweep_value(&key, *value)
            .map_err(|e| anyhow!("sweep value {value}: {}", e[0]))?;
        let experiment = point.experiment()?;
        let v = verify_tv(&experiment)?;
        let verdicts: Vec<String> =
            v.reports.iter().map(|r| format!("{}:{}", r.name, r.verdict)).collect();
        any_violated |= v.reports.iter().any(|r| r.verdict == Verdict::Violated);
        let s_cap = v.bound.s_cap as f64;
        let nf = point.hosts as f64;
        let variance_bound = 52.0 * point.mode.horizon() as f64 * s_cap * s_cap / (nf * nf);
        println!(
            "  {key} = {:<10} assembly {:.4e} vs bound {:.4e} ({})",
            value,
            v.moments.assembly.value,
            v.bound.bound,
            if v.bound.valid { "valid" } else { "hypothesis fails" }
        );
        rows.push(vec![
            key.clone(),
            RunConfig::format_sweep_value(*value),
            echo_config(&point),
            format!("{}", v.bound.bound),
            v.bound.valid.to_string(),
            format!("{}", v.moments.mean_l.value),
            format!("{}", v.moments.mean_l.se),
            format!("{}", v.moments.abs_dev.value),
            format!("{}", v.moments.pos_dev.value),
            format!("{}", v.moments.second_moment.value),
            format!("{variance_bound}"),
            format!("{}", v.moments.p_tau1.value),
            format!("{}", v.moments.p_tau2_only.value),
            format!("{}", v.moments.assembly.value),
            format!("{}", v.moments.assembly.se),
            verdicts.join(";"),
        ]);
    }
    let path = out_path(cfg, "sweep.csv");
    write_csv(&path, &header, &rows).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote              {}", path.display());
    Ok(if any_violated { 1 } else { 0 })
}

/// Binary entry point.
pub fn main_entry() -> anyhow::Result<i32> {
    run(Cli::parse())
}
