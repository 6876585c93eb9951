//! Plain-text persistence: CSV tables for catalogs, trials, CIT
//! samples, reward logs and fits.
//!
//! All files are UTF-8, comma separated with a header row, `.` decimal
//! separator, no quoting (ids never contain commas). Floats are written
//! in Rust's shortest round-trip form so emit/parse round-trips are
//! exact.

use std::collections::BTreeSet;
use std::path::Path;

use crate::env::TerminalKind;
use crate::error::{Error, Result};
use crate::evaluator::CitSampleSet;
use crate::fitter::{FitResult, ParamGrid};
use crate::learner::RewardLogEntry;
use crate::scenario::{ScenarioKind, ScenarioSpec};

/// One observed (participant, scenario, crossing-initiation-time) trial,
/// real or synthesized.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub participant_id: String,
    pub scenario_id: String,
    /// Crossing initiation time, s.
    pub cit: f64,
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    std::fs::write(path, content).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Iterates data lines of a CSV body, checking the header first.
fn csv_lines<'a>(
    path: &Path,
    text: &'a str,
    expected_header: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == expected_header => {}
        Some((_, header)) => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header `{expected_header}`, found `{header}`"),
            ))
        }
        None => return Err(Error::parse(path, 1, "empty file")),
    }
    Ok(lines
        .map(|(idx, line)| (idx + 1, line))
        .filter(|(_, line)| !line.is_empty()))
}

fn parse_f64(path: &Path, line: usize, field: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("invalid {field} `{value}`")))
}

pub const CATALOG_HEADER: &str = "id,kind,v0_mps,d0_m,tau0_s,dstop_m";

pub fn write_catalog(catalog: &[ScenarioSpec], path: &Path) -> Result<()> {
    let mut out = String::from(CATALOG_HEADER);
    out.push('\n');
    for spec in catalog {
        let dstop = spec.d_stop.map(|d| format!("{d}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            spec.id,
            spec.kind.as_str(),
            spec.v0,
            spec.d0,
            spec.tau0,
            dstop
        ));
    }
    write_file(path, &out)
}

pub fn read_catalog(path: &Path) -> Result<Vec<ScenarioSpec>> {
    let text = read_file(path)?;
    let mut catalog = Vec::new();
    for (line_no, line) in csv_lines(path, &text, CATALOG_HEADER)? {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(path, line_no, "expected 6 fields"));
        }
        let kind = ScenarioKind::parse(fields[1])
            .ok_or_else(|| Error::parse(path, line_no, format!("unknown kind `{}`", fields[1])))?;
        let spec = ScenarioSpec {
            id: fields[0].to_string(),
            kind,
            v0: parse_f64(path, line_no, "v0_mps", fields[2])?,
            d0: parse_f64(path, line_no, "d0_m", fields[3])?,
            tau0: parse_f64(path, line_no, "tau0_s", fields[4])?,
            d_stop: if fields[5].is_empty() {
                None
            } else {
                Some(parse_f64(path, line_no, "dstop_m", fields[5])?)
            },
        };
        spec.validate()
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        catalog.push(spec);
    }
    Ok(catalog)
}

pub const TRIALS_HEADER: &str = "participant_id,scenario_id,cit_s";

pub fn write_trials(trials: &[TrialRecord], path: &Path) -> Result<()> {
    let mut out = String::from(TRIALS_HEADER);
    out.push('\n');
    for t in trials {
        out.push_str(&format!(
            "{},{},{}\n",
            t.participant_id, t.scenario_id, t.cit
        ));
    }
    write_file(path, &out)
}

/// Parses a trials table. Every scenario id must appear in `known_ids`;
/// violations report the offending line.
pub fn read_trials(path: &Path, known_ids: &BTreeSet<String>) -> Result<Vec<TrialRecord>> {
    let text = read_file(path)?;
    let mut trials = Vec::new();
    for (line_no, line) in csv_lines(path, &text, TRIALS_HEADER)? {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, line_no, "expected 3 fields"));
        }
        let scenario_id = fields[1].to_string();
        if !known_ids.contains(&scenario_id) {
            return Err(Error::parse(
                path,
                line_no,
                format!("unknown scenario_id `{scenario_id}`"),
            ));
        }
        let cit = parse_f64(path, line_no, "cit_s", fields[2])?;
        if !(cit > 0.0) {
            return Err(Error::parse(path, line_no, format!("cit_s must be positive, got {cit}")));
        }
        trials.push(TrialRecord {
            participant_id: fields[0].to_string(),
            scenario_id,
            cit,
        });
    }
    if trials.is_empty() {
        return Err(Error::Invalid(format!(
            "{}: no trials found",
            path.display()
        )));
    }
    Ok(trials)
}

pub const CIT_SAMPLES_HEADER: &str = "scenario_id,sigma_v,c,rep,cit_s,outcome";

/// One grid rollout row as exported by the simulate command.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTrialRow {
    pub scenario_id: String,
    pub sigma_v: f64,
    pub c: f64,
    pub rep: u32,
    pub cit: Option<f64>,
    pub outcome: TerminalKind,
}

pub fn outcome_str(kind: TerminalKind) -> &'static str {
    match kind {
        TerminalKind::Arrival => "arrival",
        TerminalKind::Collision => "collision",
        TerminalKind::Timeout => "timeout",
        TerminalKind::None => unreachable!("trials always terminate"),
    }
}

fn parse_outcome(path: &Path, line: usize, s: &str) -> Result<TerminalKind> {
    match s {
        "arrival" => Ok(TerminalKind::Arrival),
        "collision" => Ok(TerminalKind::Collision),
        "timeout" => Ok(TerminalKind::Timeout),
        _ => Err(Error::parse(path, line, format!("unknown outcome `{s}`"))),
    }
}

pub fn write_cit_samples(rows: &[GridTrialRow], path: &Path) -> Result<()> {
    let mut out = String::from(CIT_SAMPLES_HEADER);
    out.push('\n');
    for row in rows {
        let cit = row.cit.map(|c| format!("{c}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.scenario_id,
            row.sigma_v,
            row.c,
            row.rep,
            cit,
            outcome_str(row.outcome)
        ));
    }
    write_file(path, &out)
}

pub fn read_cit_samples(path: &Path) -> Result<Vec<GridTrialRow>> {
    let text = read_file(path)?;
    let mut rows = Vec::new();
    for (line_no, line) in csv_lines(path, &text, CIT_SAMPLES_HEADER)? {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(path, line_no, "expected 6 fields"));
        }
        let cit = if fields[4].is_empty() {
            None
        } else {
            Some(parse_f64(path, line_no, "cit_s", fields[4])?)
        };
        rows.push(GridTrialRow {
            scenario_id: fields[0].to_string(),
            sigma_v: parse_f64(path, line_no, "sigma_v", fields[1])?,
            c: parse_f64(path, line_no, "c", fields[2])?,
            rep: fields[3]
                .parse::<u32>()
                .map_err(|_| Error::parse(path, line_no, format!("invalid rep `{}`", fields[3])))?,
            cit,
            outcome: parse_outcome(path, line_no, fields[5])?,
        });
    }
    Ok(rows)
}

/// Rebuilds a sample set from exported rows. The grid axes are the
/// sorted distinct parameter values found in the table.
pub fn sample_set_from_rows(rows: &[GridTrialRow]) -> Result<CitSampleSet> {
    if rows.is_empty() {
        return Err(Error::Invalid("no CIT sample rows".into()));
    }
    let mut sigmas: Vec<f64> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    for row in rows {
        if !sigmas.iter().any(|&s| s == row.sigma_v) {
            sigmas.push(row.sigma_v);
        }
        if !cs.iter().any(|&c| c == row.c) {
            cs.push(row.c);
        }
    }
    sigmas.sort_by(|a, b| a.total_cmp(b));
    cs.sort_by(|a, b| a.total_cmp(b));
    let grid = ParamGrid {
        sigma_v_values: sigmas,
        c_values: cs,
    };
    let mut set = CitSampleSet::new(grid);
    for row in rows {
        let si = set
            .grid
            .sigma_v_values
            .iter()
            .position(|&s| s == row.sigma_v)
            .unwrap();
        let ci = set.grid.c_values.iter().position(|&c| c == row.c).unwrap();
        let trial = crate::evaluator::TrialResult {
            scenario_id: row.scenario_id.clone(),
            sigma_v: row.sigma_v,
            c: row.c,
            cit: row.cit,
            // Not represented in the export; first-step statistics are
            // only available from live simulation.
            go_step: None,
            outcome: row.outcome,
        };
        set.insert_trial(&row.scenario_id, si, ci, &trial);
    }
    Ok(set)
}

pub const REWARD_LOG_HEADER: &str = "episode,mean_reward";

pub fn write_reward_log(log: &[RewardLogEntry], path: &Path) -> Result<()> {
    let mut out = String::from(REWARD_LOG_HEADER);
    out.push('\n');
    for entry in log {
        out.push_str(&format!("{},{}\n", entry.episode, entry.mean_reward));
    }
    write_file(path, &out)
}

pub const FITS_HEADER: &str = "participant_id,sigma_v,c,log_lik,n_trials";

pub fn write_fits(fits: &[FitResult], path: &Path) -> Result<()> {
    let mut out = String::from(FITS_HEADER);
    out.push('\n');
    for fit in fits {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fit.participant, fit.sigma_v, fit.c, fit.log_lik, fit.n_trials
        ));
    }
    write_file(path, &out)
}
