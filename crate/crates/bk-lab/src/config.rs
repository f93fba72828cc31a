//! Flat `key = value` run configuration with command-line overrides.
//!
//! The grammar is one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored. Unknown keys are rejected and every
//! numeric key is range-checked at parse time; parsing reports *all*
//! errors, not just the first. Overrides are `key=value` pairs applied
//! after the file.
//!
//! Keys (defaults in parentheses):
//!
//! ```text
//! lambda       contact rate > 0                        (1.0)
//! mu           parasite death rate > 0                 (1.0)
//! N            host count >= 2                         (100)
//! offspring    poisson | geometric | pointmass         (poisson)
//! theta        offspring mean > 0; integer >= 1
//!              for pointmass                           (1.0)
//! initial      COUNTxLEVEL[,COUNTxLEVEL...]            (1x1)
//! mode         transitions | infections                (transitions)
//! horizon      clock steps per path                    (50)
//! replicates   Monte Carlo replicates >= 1             (1000)
//! seed         master seed                             (0)
//! threads      worker threads; 0 = auto                (env BKLAB_THREADS or auto)
//! process      branching | epidemic (simulate)         (branching)
//! stop         transitions:M | infections:M | time:T
//!              (simulate)                              (transitions:10)
//! out          output file path                        (command default)
//! r            relative-closeness order >= 1 (rc)      (1.0)
//! conc_a       increment constant >= 0 (concentration) (1.0)
//! conc_b       increment slope >= 0 (concentration)    (1.0)
//! conc_steps   martingale steps >= 1 (concentration)   (100)
//! conc_drifted true | false, negative control          (false)
//! y_grid       comma list of deviation levels > 0      (5,10,20,40)
//! t_grid       comma list of times > 0 (growth)        (1.0)
//! ext_horizon  extinction horizon > 0 (growth)         (50.0)
//! functional   const1 | s_above:K (tv)                 (unset)
//! sweep        KEY:V1,V2,... grid for sweep/bounds     (unset)
//! verdict_k    SE multiplier for violations > 0        (3.0)
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use bk_core::model::{ModelParams, OffspringFamily, OffspringLaw, ProcessKind, SparseState};
use bk_core::sim::StopRule;

use crate::harness::{ExperimentConfig, Functional, HorizonMode};

/// One configuration problem, with enough context to fix it.
#[derive(Clone, Debug)]
pub struct ConfigError {
    /// `file:line`, `override`, or `config` for cross-key checks.
    pub source: String,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: key `{}`: {}", self.source, self.key, self.message)
    }
}

/// Fully validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub lambda: f64,
    pub mu: f64,
    pub hosts: u64,
    pub offspring: OffspringFamily,
    pub theta: f64,
    pub initial: Vec<(u64, u64)>,
    pub mode: HorizonMode,
    pub replicates: u64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub process: ProcessKind,
    pub stop: StopRule,
    pub out: Option<PathBuf>,
    pub r: f64,
    pub conc_a: f64,
    pub conc_b: f64,
    pub conc_steps: u64,
    pub conc_drifted: bool,
    pub y_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub extinction_horizon: f64,
    pub functional: Option<Functional>,
    pub sweep: Option<(String, Vec<f64>)>,
    pub verdict_k: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda: 1.0,
            mu: 1.0,
            hosts: 100,
            offspring: OffspringFamily::Poisson,
            theta: 1.0,
            initial: vec![(1, 1)],
            mode: HorizonMode::Transitions(50),
            replicates: 1000,
            seed: 0,
            threads: None,
            process: ProcessKind::Branching,
            stop: StopRule::MaxTransitions(10),
            out: None,
            r: 1.0,
            conc_a: 1.0,
            conc_b: 1.0,
            conc_steps: 100,
            conc_drifted: false,
            y_grid: vec![5.0, 10.0, 20.0, 40.0],
            t_grid: vec![1.0],
            extinction_horizon: 50.0,
            functional: None,
            sweep: None,
            verdict_k: 3.0,
        }
    }
}

/// Keys the `sweep` grid may vary.
pub const SWEEPABLE_KEYS: &[&str] = &["N", "horizon", "replicates", "lambda", "mu", "theta"];

/// Parses the optional file, then applies `key=value` overrides.
/// Collects every error instead of stopping at the first.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunConfig, Vec<ConfigError>> {
    let mut cfg = RunConfig::default();
    let mut errors = Vec::new();
    let mut mode_kind = "transitions".to_string();
    let mut horizon = 50u64;

    if let Some(path) = file {
        match std::fs::read_to_string(path) {
            Err(e) => errors.push(ConfigError {
                source: path.display().to_string(),
                key: "-".into(),
                message: format!("cannot read config file: {e}"),
            }),
            Ok(text) => {
                for (lineno, raw) in text.lines().enumerate() {
                    let line = raw.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let source = format!("{}:{}", path.display(), lineno + 1);
                    match line.split_once('=') {
                        None => errors.push(ConfigError {
                            source,
                            key: line.to_string(),
                            message: "expected `key = value`".into(),
                        }),
                        Some((k, v)) => apply_key(
                            &mut cfg,
                            &mut mode_kind,
                            &mut horizon,
                            k.trim(),
                            v.trim(),
                            &source,
                            &mut errors,
                        ),
                    }
                }
            }
        }
    }
    for (k, v) in overrides {
        apply_key(
            &mut cfg,
            &mut mode_kind,
            &mut horizon,
            k.trim(),
            v.trim(),
            "override",
            &mut errors,
        );
    }

    cfg.mode = match mode_kind.as_str() {
        "transitions" => HorizonMode::Transitions(horizon),
        "infections" => HorizonMode::Infections(horizon),
        _ => unreachable!("validated on assignment"),
    };

    // cross-key validation
    let s0: u64 = cfg.initial.iter().map(|(_, h)| h).sum();
    if s0 > cfg.hosts {
        errors.push(ConfigError {
            source: "config".into(),
            key: "initial".into(),
            message: format!("{s0} infected hosts exceed N = {}", cfg.hosts),
        });
    }
    if cfg.offspring == OffspringFamily::PointMass && (cfg.theta.fract() != 0.0 || cfg.theta < 1.0)
    {
        errors.push(ConfigError {
            source: "config".into(),
            key: "theta".into(),
            message: format!("pointmass needs an integer theta >= 1, got {}", cfg.theta),
        });
    }

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_key(
    cfg: &mut RunConfig,
    mode_kind: &mut String,
    horizon: &mut u64,
    key: &str,
    value: &str,
    source: &str,
    errors: &mut Vec<ConfigError>,
) {
    let mut fail = |message: String| {
        errors.push(ConfigError { source: source.into(), key: key.into(), message });
    };
    match key {
        "lambda" => match positive_f64(value) {
            Ok(v) => cfg.lambda = v,
            Err(m) => fail(m),
        },
        "mu" => match positive_f64(value) {
            Ok(v) => cfg.mu = v,
            Err(m) => fail(m),
        },
        "N" => match value.parse::<u64>() {
            Ok(v) if v >= 2 => cfg.hosts = v,
            Ok(v) => fail(format!("host count must be >= 2, got {v}")),
            Err(e) => fail(format!("not an integer: {e}")),
        },
        "offspring" => match value {
            "poisson" => cfg.offspring = OffspringFamily::Poisson,
            "geometric" => cfg.offspring = OffspringFamily::Geometric,
            "pointmass" => cfg.offspring = OffspringFamily::PointMass,
            other => fail(format!("unknown family `{other}` (poisson|geometric|pointmass)")),
        },
        "theta" => match positive_f64(value) {
            Ok(v) => cfg.theta = v,
            Err(m) => fail(m),
        },
        "initial" => match parse_initial(value) {
            Ok(v) => cfg.initial = v,
            Err(m) => fail(m),
        },
        "mode" => match value {
            "transitions" | "infections" => *mode_kind = value.to_string(),
            other => fail(format!("unknown mode `{other}` (transitions|infections)")),
        },
        "horizon" => match value.parse::<u64>() {
            Ok(v) => *horizon = v,
            Err(e) => fail(format!("not an integer: {e}")),
        },
        "replicates" => match value.parse::<u64>() {
            Ok(v) if v >= 1 => cfg.replicates = v,
            Ok(_) => fail("replicates must be >= 1".into()),
            Err(e) => fail(format!("not an integer: {e}")),
        },
        "seed" => match value.parse::<u64>() {
            Ok(v) => cfg.seed = v,
            Err(e) => fail(format!("not an integer: {e}")),
        },
        "threads" => match value.parse::<usize>() {
            Ok(v) => cfg.threads = Some(v),
            Err(e) => fail(format!("not an integer: {e}")),
        },
        "process" => match value {
            "branching" => cfg.process = ProcessKind::Branching,
            "epidemic" => cfg.process = ProcessKind::Epidemic,
            other => fail(format!("unknown process `{other}` (branching|epidemic)")),
        },
        "stop" => match parse_stop(value) {
            Ok(v) => cfg.stop = v,
            Err(m) => fail(m),
        },
        "out" => cfg.out = Some(PathBuf::from(value)),
        "r" => match positive_f64(value) {
            Ok(v) if v >= 1.0 => cfg.r = v,
            Ok(v) => fail(format!("r must be >= 1, got {v}")),
            Err(m) => fail(m),
        },
        "conc_a" => match nonnegative_f64(value) {
            Ok(v) => cfg.conc_a = v,
            Err(m) => fail(m),
        },
        "conc_b" => match nonnegative_f64(value) {
            Ok(v) => cfg.conc_b = v,
            Err(m) => fail(m),
        },
        "conc_steps" => match value.parse::<u64>() {
            Ok(v) if v >= 1 => cfg.conc_steps = v,
            Ok(_) => fail("conc_steps must be >= 1".into()),
            Err(e) => fail(format!("not an integer: {e}")),
        },
        "conc_drifted" => match value {
            "true" => cfg.conc_drifted = true,
            "false" => cfg.conc_drifted = false,
            other => fail(format!("expected true|false, got `{other}`")),
        },
        "y_grid" => match parse_f64_list(value, 0.0) {
            Ok(v) => cfg.y_grid = v,
            Err(m) => fail(m),
        },
        "t_grid" => match parse_f64_list(value, f64::MIN_POSITIVE) {
            Ok(v) => cfg.t_grid = v,
            Err(m) => fail(m),
        },
        "ext_horizon" => match positive_f64(value) {
            Ok(v) => cfg.extinction_horizon = v,
            Err(m) => fail(m),
        },
        "functional" => match parse_functional(value) {
            Ok(v) => cfg.functional = Some(v),
            Err(m) => fail(m),
        },
        "sweep" => match parse_sweep(value) {
            Ok(v) => cfg.sweep = Some(v),
            Err(m) => fail(m),
        },
        "verdict_k" => match positive_f64(value) {
            Ok(v) => cfg.verdict_k = v,
            Err(m) => fail(m),
        },
        other => fail(format!("unknown key `{other}`")),
    }
}

fn positive_f64(value: &str) -> Result<f64, String> {
    let v: f64 = value.parse().map_err(|e| format!("not a number: {e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

fn nonnegative_f64(value: &str) -> Result<f64, String> {
    let v: f64 = value.parse().map_err(|e| format!("not a number: {e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be >= 0 and finite, got {v}"))
    }
}

fn parse_f64_list(value: &str, min_exclusive: f64) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let v: f64 = part.trim().parse().map_err(|e| format!("`{part}`: {e}"))?;
        if !v.is_finite() || v < min_exclusive {
            return Err(format!("`{part}` out of range"));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

/// `COUNTxLEVEL[,COUNTxLEVEL...]`, e.g. `1x1` or `2x3,1x7`.
fn parse_initial(value: &str) -> Result<Vec<(u64, u64)>, String> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let (count, level) =
            part.trim().split_once('x').ok_or_else(|| format!("`{part}`: expected COUNTxLEVEL"))?;
        let count: u64 = count.trim().parse().map_err(|e| format!("`{part}`: count: {e}"))?;
        let level: u64 = level.trim().parse().map_err(|e| format!("`{part}`: level: {e}"))?;
        if count == 0 || level == 0 {
            return Err(format!("`{part}`: counts and levels must be >= 1"));
        }
        out.push((level, count));
    }
    if out.is_empty() {
        return Err("empty initial state".into());
    }
    Ok(out)
}

fn parse_stop(value: &str) -> Result<StopRule, String> {
    let (kind, num) = value.split_once(':').ok_or_else(|| "expected KIND:VALUE".to_string())?;
    match kind.trim() {
        "transitions" => {
            let m: u64 = num.trim().parse().map_err(|e| format!("count: {e}"))?;
            Ok(StopRule::MaxTransitions(m))
        }
        "infections" => {
            let m: u64 = num.trim().parse().map_err(|e| format!("count: {e}"))?;
            Ok(StopRule::MaxInfections(m))
        }
        "time" => {
            let t: f64 = num.trim().parse().map_err(|e| format!("time: {e}"))?;
            if t > 0.0 && t.is_finite() {
                Ok(StopRule::MaxTime(t))
            } else {
                Err(format!("time must be positive, got {t}"))
            }
        }
        other => Err(format!("unknown stop kind `{other}` (transitions|infections|time)")),
    }
}

fn parse_functional(value: &str) -> Result<Functional, String> {
    if value == "const1" {
        return Ok(Functional::ConstOne);
    }
    if let Some(rest) = value.strip_prefix("s_above:") {
        let threshold: u64 = rest.trim().parse().map_err(|e| format!("threshold: {e}"))?;
        return Ok(Functional::FinalInfectedAbove(threshold));
    }
    Err(format!("unknown functional `{value}` (const1 | s_above:K)"))
}

fn parse_sweep(value: &str) -> Result<(String, Vec<f64>), String> {
    let (key, list) = value.split_once(':').ok_or_else(|| "expected KEY:V1,V2,...".to_string())?;
    let key = key.trim();
    if !SWEEPABLE_KEYS.contains(&key) {
        return Err(format!("cannot sweep `{key}` (one of {SWEEPABLE_KEYS:?})"));
    }
    let values = parse_f64_list(list, 0.0)?;
    Ok((key.to_string(), values))
}

impl RunConfig {
    /// Number formatting that survives a round trip through `apply_key`.
    pub fn format_sweep_value(v: f64) -> String {
        if v.fract() == 0.0 && v.abs() < 1e15 {
            format!("{}", v as i64)
        } else {
            format!("{v}")
        }
    }

    /// Applies one sweep value to a copy of the configuration.
    pub fn with_sweep_value(&self, key: &str, value: f64) -> Result<RunConfig, Vec<ConfigError>> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        let mut errors = Vec::new();
        let mut mode_kind = match self.mode {
            HorizonMode::Transitions(_) => "transitions".to_string(),
            HorizonMode::Infections(_) => "infections".to_string(),
        };
        let mut horizon = self.mode.horizon();
        apply_key(
            &mut cfg,
            &mut mode_kind,
            &mut horizon,
            key,
            &Self::format_sweep_value(value),
            "sweep",
            &mut errors,
        );
        cfg.mode = match mode_kind.as_str() {
            "transitions" => HorizonMode::Transitions(horizon),
            _ => HorizonMode::Infections(horizon),
        };
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(errors)
        }
    }

    pub fn offspring_law(&self) -> Result<OffspringLaw, bk_core::Error> {
        match self.offspring {
            OffspringFamily::Poisson => OffspringLaw::poisson(self.theta),
            OffspringFamily::Geometric => OffspringLaw::geometric(self.theta),
            OffspringFamily::PointMass => OffspringLaw::point_mass(self.theta as u64),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams, bk_core::Error> {
        ModelParams::new(self.lambda, self.mu, self.hosts, self.offspring_law()?)
    }

    pub fn initial_state(&self) -> Result<SparseState, bk_core::Error> {
        SparseState::from_counts(&self.offspring_law()?, self.initial.iter().copied())
    }

    /// Explicit `threads` key, else `BKLAB_THREADS`, else the rayon default.
    pub fn effective_threads(&self) -> usize {
        self.threads.unwrap_or_else(|| {
            std::env::var("BKLAB_THREADS").ok().and_then(|v| v.parse().ok()).unwrap_or(0)
        })
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, bk_core::Error> {
        Ok(ExperimentConfig {
            params: self.model_params()?,
            initial: self.initial_state()?,
            mode: self.mode,
            replicates: self.replicates,
            master_seed: self.seed,
            threads: self.effective_threads(),
            verdict_k: self.verdict_k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let f = write_tmp(
            "lambda = 1\nmu = 1\noffspring = poisson\ntheta = 1\nN = 100\ninitial = 1x1\n",
        );
        let cfg = parse_config(Some(f.path()), &[]).unwrap();
        assert_eq!(cfg.replicates, 1000);
        assert_eq!(cfg.mode, HorizonMode::Transitions(50));
        assert_eq!(cfg.initial, vec![(1, 1)]);
        assert_eq!(cfg.verdict_k, 3.0);
    }

    #[test]
    fn negative_theta_is_a_range_error() {
        let f = write_tmp("theta = -1\n");
        let errs = parse_config(Some(f.path()), &[]).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].key, "theta");
        assert!(errs[0].source.ends_with(":1"));
    }

    #[test]
    fn all_errors_are_collected() {
        let f = write_tmp("theta = -1\nbogus = 3\nN = 1\n");
        let errs = parse_config(Some(f.path()), &[]).unwrap_err();
        assert_eq!(errs.len(), 3);
        let keys: Vec<&str> = errs.iter().map(|e| e.key.as_str()).collect();
        assert_eq!(keys, vec!["theta", "bogus", "N"]);
    }

    #[test]
    fn override_beats_file() {
        let f = write_tmp("replicates = 500\n");
        let cfg =
            parse_config(Some(f.path()), &[("replicates".to_string(), "10".to_string())]).unwrap();
        assert_eq!(cfg.replicates, 10);
    }

    #[test]
    fn initial_grammar_and_saturation_check() {
        let f = write_tmp("initial = 2x3,1x7\nN = 5\n");
        let cfg = parse_config(Some(f.path()), &[]).unwrap();
        assert_eq!(cfg.initial, vec![(3, 2), (7, 1)]);

        let f = write_tmp("initial = 9x1\nN = 5\n");
        let errs = parse_config(Some(f.path()), &[]).unwrap_err();
        assert!(errs.iter().any(|e| e.key == "initial" && e.message.contains("exceed")));
    }

    #[test]
    fn pointmass_requires_integer_theta() {
        let f = write_tmp("offspring = pointmass\ntheta = 1.5\n");
        let errs = parse_config(Some(f.path()), &[]).unwrap_err();
        assert!(errs.iter().any(|e| e.key == "theta"));
        let f = write_tmp("offspring = pointmass\ntheta = 2\n");
        assert!(parse_config(Some(f.path()), &[]).is_ok());
    }

    #[test]
    fn stop_and_sweep_grammar() {
        let f = write_tmp(
            "stop = time:2.5\nsweep = N:500,1000,2000\nmode = infections\nhorizon = 30\n",
        );
        let cfg = parse_config(Some(f.path()), &[]).unwrap();
        assert_eq!(cfg.stop, StopRule::MaxTime(2.5));
        assert_eq!(cfg.mode, HorizonMode::Infections(30));
        let (key, values) = cfg.sweep.clone().unwrap();
        assert_eq!(key, "N");
        assert_eq!(values, vec![500.0, 1000.0, 2000.0]);
        let swept = cfg.with_sweep_value("N", 2000.0).unwrap();
        assert_eq!(swept.hosts, 2000);
    }

    #[test]
    fn missing_file_reports_path() {
        let errs = parse_config(Some(Path::new("/nonexistent/bk.conf")), &[]).unwrap_err();
        assert!(errs[0].message.contains("cannot read"));
    }
}
