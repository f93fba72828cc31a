//! Output file formats: versioned CSV and JSON-lines path records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use bk_core::model::{ModelParams, OffspringFamily, OffspringLaw, ProcessKind};
use bk_core::sim::{Event, EventKind, PathRecord};
use serde::{Deserialize, Serialize};

/// Schema tag written as the first line of every CSV output.
pub const CSV_SCHEMA: &str = "# bklab-csv v1";
/// Schema tag of the JSON-lines path format.
pub const PATH_SCHEMA: &str = "bklab-path-v1";

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed path file: {0}")]
    Malformed(String),
    #[error("model: {0}")]
    Model(#[from] bk_core::Error),
}

/// RFC-4180-style quoting: a field is quoted only when it contains a
/// comma, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes a CSV file with the schema comment line and a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), OutputError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_SCHEMA}")?;
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let line: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PathHeader {
    schema: String,
    process: String,
    lambda: f64,
    mu: f64,
    hosts: u64,
    family: String,
    theta: f64,
    /// `(level, hosts)` pairs of the initial state.
    initial: Vec<(u64, u64)>,
}

/// One event per line; `dt` is the holding time since the previous event.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EventLine {
    Death { level: u64, dt: f64 },
    Infection { source: u64, load: u64, dt: f64 },
    Pseudo { dt: f64 },
}

fn family_label(family: OffspringFamily) -> &'static str {
    match family {
        OffspringFamily::Poisson => "poisson",
        OffspringFamily::Geometric => "geometric",
        OffspringFamily::PointMass => "pointmass",
    }
}

fn process_label(kind: ProcessKind) -> &'static str {
    match kind {
        ProcessKind::Branching => "branching",
        ProcessKind::Epidemic => "epidemic",
    }
}

/// Writes a path as JSON-lines: a header object, then one event object
/// per line.
pub fn write_path_jsonl(
    path: &Path,
    params: &ModelParams,
    record: &PathRecord,
) -> Result<(), OutputError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = PathHeader {
        schema: PATH_SCHEMA.to_string(),
        process: process_label(record.process).to_string(),
        lambda: params.lambda(),
        mu: params.mu(),
        hosts: params.host_count(),
        family: family_label(params.offspring().family()).to_string(),
        theta: params.offspring().theta(),
        initial: record.initial.support().collect(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for ev in &record.events {
        let line = match ev.kind {
            EventKind::ParasiteDeath { level } => EventLine::Death { level, dt: ev.dt },
            EventKind::Infection { source_level, load } => {
                EventLine::Infection { source: source_level, load, dt: ev.dt }
            }
            EventKind::PseudoJump => EventLine::Pseudo { dt: ev.dt },
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a JSON-lines path file back into the model and the record.
pub fn read_path_jsonl(path: &Path) -> Result<(ModelParams, PathRecord), OutputError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header: PathHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(OutputError::Malformed("empty file".into())),
    };
    if header.schema != PATH_SCHEMA {
        return Err(OutputError::Malformed(format!("unknown schema `{}`", header.schema)));
    }
    let law = match header.family.as_str() {
        "poisson" => OffspringLaw::poisson(header.theta)?,
        "geometric" => OffspringLaw::geometric(header.theta)?,
        "pointmass" => OffspringLaw::point_mass(header.theta as u64)?,
        other => return Err(OutputError::Malformed(format!("unknown family `{other}`"))),
    };
    let params = ModelParams::new(header.lambda, header.mu, header.hosts, law.clone())?;
    let process = match header.process.as_str() {
        "branching" => ProcessKind::Branching,
        "epidemic" => ProcessKind::Epidemic,
        other => return Err(OutputError::Malformed(format!("unknown process `{other}`"))),
    };
    let initial = params.state_from_counts(header.initial)?;

    let mut events = Vec::new();
    let mut infection_index = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (kind, dt) = match serde_json::from_str(&line)? {
            EventLine::Death { level, dt } => (EventKind::ParasiteDeath { level }, dt),
            EventLine::Infection { source, load, dt } => {
                (EventKind::Infection { source_level: source, load }, dt)
            }
            EventLine::Pseudo { dt } => (EventKind::PseudoJump, dt),
        };
        if kind.advances_infection_clock() {
            infection_index.push(events.len() as u64);
        }
        events.push(Event { kind, dt });
    }
    Ok((params, PathRecord { initial, process, events, infection_index }))
}
