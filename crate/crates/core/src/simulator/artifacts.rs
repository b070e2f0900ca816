//! CSV and JSON artifacts of a run.
//!
//! Every CSV starts with a `# schema: 1` comment line followed by a header
//! row. Floats use Rust's shortest round-trip formatting, so identical runs
//! give identical bytes. Wall-clock columns are written as 0 unless timing
//! is requested, since they are the only nondeterministic quantity.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::metrics::{windowed, Summary, ARTIFACT_SCHEMA};
use super::{EventRecord, SimOutput};
use crate::controllers::Action;

pub const EVENTS_FILE: &str = "events.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub const EVENT_COLUMNS: [&str; 9] =
    ["time", "kind", "agent", "target", "u_i", "j", "u_j", "solver_calls", "solver_wall_us"];

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn schema_line<W: Write>(w: &mut W) -> io::Result<()> {
    writeln!(w, "# schema: {ARTIFACT_SCHEMA}")
}

/// One row per processed event. `u_i` is the dwell decided at the agent's
/// current target, `j`/`u_j` the planned next target and its dwell.
pub fn write_event_log<W: Write>(mut w: W, events: &[EventRecord], timing: bool) -> io::Result<()> {
    schema_line(&mut w)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EVENT_COLUMNS).map_err(csv_error)?;
    for e in events {
        let (u_i, j, u_j, calls, wall) = match e.decision {
            None => (String::new(), String::new(), String::new(), String::new(), String::new()),
            Some(d) => {
                let (u_i, j, u_j) = match d.action {
                    Action::Dwell { dwell, next, next_dwell } => {
                        (dwell.to_string(), opt(next), if next.is_some() { next_dwell.to_string() } else { String::new() })
                    }
                    Action::Depart { to, dwell_there } => ("0".into(), to.to_string(), dwell_there.to_string()),
                    Action::Wait => (String::new(), String::new(), String::new()),
                };
                let wall = if timing { d.wall_us.to_string() } else { "0".into() };
                (u_i, j, u_j, d.solver_calls.to_string(), wall)
            }
        };
        out.write_record([e.time.to_string(), e.kind.to_string(), opt(e.agent), opt(e.target), u_i, j, u_j, calls, wall])
            .map_err(csv_error)?;
    }
    out.flush()
}

/// Sampled series: running objectives, windowed objectives over `window`,
/// per-target covariances and, when present, tracking errors.
pub fn write_metrics<W: Write>(mut w: W, run: &SimOutput, window: f64) -> io::Result<()> {
    schema_line(&mut w)?;
    let mut out = csv::Writer::from_writer(w);
    let m = run.final_omega.len();
    let mut header: Vec<String> =
        ["t", "sum_trace_omega", "J_t", "Jhat_t", "J_window", "Jhat_window"].iter().map(|s| s.to_string()).collect();
    header.extend((0..m).map(|i| format!("omega_{i}")));
    if run.tracking_errors.is_some() {
        header.extend((0..m).map(|i| format!("e_{i}")));
    }
    out.write_record(&header).map_err(csv_error)?;
    let win = windowed(&run.samples, window);
    for (k, s) in run.samples.iter().enumerate() {
        let mut row = vec![
            s.t.to_string(),
            s.sum_omega().to_string(),
            s.j().to_string(),
            s.jhat().to_string(),
            win[k].0.to_string(),
            win[k].1.to_string(),
        ];
        row.extend(s.omega.iter().map(|x| x.to_string()));
        if let Some(errors) = &run.tracking_errors {
            row.extend(errors.iter().map(|e| e[k].to_string()));
        }
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()
}

pub fn summary_json(summary: &Summary, timing: bool) -> String {
    let mut s = summary.clone();
    if !timing {
        s.mean_solver_wall_us = 0.0;
    }
    serde_json::to_string_pretty(&s).expect("summary serializes") + "\n"
}

/// Writes the event log, metrics and summary of `run` into `dir`.
pub fn write_run(dir: &Path, run: &SimOutput, window: f64, timing: bool) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_event_log(BufWriter::new(File::create(dir.join(EVENTS_FILE))?), &run.events, timing)?;
    write_metrics(BufWriter::new(File::create(dir.join(METRICS_FILE))?), run, window)?;
    std::fs::write(dir.join(SUMMARY_FILE), summary_json(&run.summary, timing))
}
