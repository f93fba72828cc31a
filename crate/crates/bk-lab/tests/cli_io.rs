//! CLI-level behaviour: file round trips, output determinism across
//! thread counts, exit codes and config diagnostics.

use std::path::PathBuf;

use bk_core::model::ProcessKind;
use bk_core::sim::{simulate_path, StopRule};
use bk_lab::cli::{run, run_command, Cli, Command};
use bk_lab::config::{parse_config, RunConfig};
use bk_lab::harness::HorizonMode;
use bk_lab::output::read_path_jsonl;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn base_config(out: PathBuf) -> RunConfig {
    RunConfig {
        hosts: 500,
        theta: 1.5,
        mode: HorizonMode::Transitions(20),
        replicates: 500,
        seed: 9,
        out: Some(out),
        ..RunConfig::default()
    }
}

#[test]
fn simulate_writes_one_line_per_event_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("path.jsonl");
    let mut cfg = base_config(out.clone());
    cfg.stop = StopRule::MaxTransitions(10);
    cfg.process = ProcessKind::Branching;
    let code = run_command(Command::Simulate, &cfg).unwrap();
    assert_eq!(code, 0);

    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 11, "header plus exactly 10 event lines");

    // the file re-parses to the identical record
    let (params, parsed) = read_path_jsonl(&out).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let expected = simulate_path(
        &cfg.initial_state().unwrap(),
        &cfg.model_params().unwrap(),
        ProcessKind::Branching,
        StopRule::MaxTransitions(10),
        &mut rng,
    )
    .unwrap();
    assert_eq!(params, cfg.model_params().unwrap());
    assert_eq!(parsed, expected);
}

#[test]
fn tv_outputs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("tv1.csv");
    let out4 = dir.path().join("tv4.csv");

    let mut cfg1 = base_config(out1.clone());
    cfg1.threads = Some(1);
    assert_eq!(run_command(Command::Tv, &cfg1).unwrap(), 0);

    let mut cfg4 = base_config(out4.clone());
    cfg4.threads = Some(4);
    assert_eq!(run_command(Command::Tv, &cfg4).unwrap(), 0);

    let bytes1 = std::fs::read(&out1).unwrap();
    let bytes4 = std::fs::read(&out4).unwrap();
    assert_eq!(bytes1, bytes4, "different thread counts changed the output file");

    // same seed, same thread count: byte-for-byte reproducible
    let out1b = dir.path().join("tv1b.csv");
    let mut cfg1b = base_config(out1b.clone());
    cfg1b.threads = Some(1);
    assert_eq!(run_command(Command::Tv, &cfg1b).unwrap(), 0);
    assert_eq!(bytes1, std::fs::read(&out1b).unwrap());
}

#[test]
fn lr_verify_csv_has_expected_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lr.csv");
    let mut cfg = base_config(out.clone());
    cfg.replicates = 25;
    assert_eq!(run_command(Command::LrVerify, &cfg).unwrap(), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# bklab-csv v1"));
    assert_eq!(lines.next(), Some("replicate_id,L_final,stopped_at,mode,m_or_M"));
    assert_eq!(lines.count(), 25);
}

#[test]
fn sweep_emits_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let mut cfg = base_config(out.clone());
    cfg.replicates = 200;
    cfg.sweep = Some(("N".to_string(), vec![500.0, 1000.0, 2000.0]));
    assert_eq!(run_command(Command::Sweep, &cfg).unwrap(), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    // schema comment + header + 3 grid rows
    assert_eq!(text.lines().count(), 5);
    for n in ["500", "1000", "2000"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("N,{n},"))), "missing row for N={n}");
    }
}

#[test]
fn growth_subcritical_control_runs_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("growth.csv");
    let mut cfg = base_config(out.clone());
    cfg.lambda = 0.5;
    cfg.theta = 1.0;
    cfg.replicates = 400;
    cfg.t_grid = vec![5.0];
    cfg.extinction_horizon = 20.0;
    assert_eq!(run_command(Command::Growth, &cfg).unwrap(), 0);
    assert!(out.exists());
}

#[test]
fn bad_config_exits_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "theta = -3\nwhatsthis = 1\n").unwrap();
    let cli = Cli {
        command: Command::Bounds,
        config: Some(conf),
        seed: None,
        threads: None,
        replicates: None,
        out: None,
        set: vec![],
    };
    assert_eq!(run(cli).unwrap(), 2);
}

#[test]
fn cli_overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("ok.conf");
    std::fs::write(&conf, "replicates = 50\nN = 500\ntheta = 1.5\n").unwrap();
    let out = dir.path().join("lr.csv");
    let cli = Cli {
        command: Command::LrVerify,
        config: Some(conf),
        seed: Some(3),
        threads: Some(1),
        replicates: Some(7),
        out: Some(out.clone()),
        set: vec!["horizon=5".to_string()],
    };
    assert_eq!(run(cli).unwrap(), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2 + 7, "override replicates=7 must win");
    assert!(text.lines().last().unwrap().ends_with(",transitions,5"));
}

#[test]
fn failed_command_removes_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let mut cfg = base_config(out.clone());
    // coupling demands the infection clock; transitions mode errors out
    cfg.mode = HorizonMode::Transitions(5);
    assert!(run_command(Command::Coupling, &cfg).is_err());
    assert!(!out.exists(), "failed command left a partial output file");
}

#[test]
fn parse_config_without_file_uses_defaults() {
    let cfg = parse_config(None, &[("seed".into(), "11".into())]).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.hosts, 100);
}
