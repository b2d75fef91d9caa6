//! Trace CSV: one row per (run, phase).
//!
//! Header `label,n_nodes,freq_level,phase,seconds,joules`. Rows sharing
//! (label, n_nodes, freq_level) form one run, in order of first appearance.
//! `seconds` or `joules` may be blank but not both. A run without a `total`
//! row gets the sum of its phases as total.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{FreqLevel, MetricsError, Phase, Result, RunRecord};
use crate::comms::Topology;

pub const TRACE_HEADER: [&str; 6] = ["label", "n_nodes", "freq_level", "phase", "seconds", "joules"];

fn parse_opt(field: &str, what: &str) -> std::result::Result<Option<f64>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
        _ => Err(format!("{what} '{field}' is not a non-negative number")),
    }
}

/// Parses trace rows into runs; every problem is reported with its row number
/// (the header is row 1).
pub fn parse_trace<R: Read>(mut input: R) -> Result<Vec<RunRecord>> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|source| MetricsError::Io {
        path: "<trace>".into(),
        source,
    })?;
    if text.trim().is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut col = [0usize; 6];
    let mut errors = Vec::new();
    for (i, name) in TRACE_HEADER.iter().enumerate() {
        match headers.iter().position(|h| h == *name) {
            Some(c) => col[i] = c,
            None => errors.push(format!("row 1: missing column '{name}'")),
        }
    }
    if !errors.is_empty() {
        return Err(MetricsError::Schema(errors));
    }

    let mut runs: Vec<RunRecord> = Vec::new();
    let mut index: BTreeMap<(String, usize, FreqLevel), usize> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("row {row}: {e}"));
                continue;
            }
        };
        let get = |k: usize| rec.get(col[k]).unwrap_or("");
        let mut row_err = |msg: String| errors.push(format!("row {row}: {msg}"));
        let label = get(0).to_string();
        if label.is_empty() {
            row_err("empty label".into());
            continue;
        }
        let n_nodes = match get(1).parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                row_err(format!("n_nodes '{}' is not a positive integer", get(1)));
                continue;
            }
        };
        let parsed = (
            get(2).parse::<FreqLevel>(),
            get(3).parse::<Phase>(),
            parse_opt(get(4), "seconds"),
            parse_opt(get(5), "joules"),
        );
        let (freq, phase, secs, joules) = match parsed {
            (Ok(f), Ok(p), Ok(s), Ok(j)) => (f, p, s, j),
            (f, p, s, j) => {
                for e in [f.err(), p.err(), s.err(), j.err()].into_iter().flatten() {
                    row_err(e);
                }
                continue;
            }
        };
        if secs.is_none() && joules.is_none() {
            row_err("both seconds and joules are blank".into());
            continue;
        }
        let key = (label.clone(), n_nodes, freq);
        let slot = *index.entry(key).or_insert_with(|| {
            let topo = Topology::new(n_nodes, 1, 1).expect("n_nodes >= 1");
            runs.push(RunRecord::new(label.clone(), topo, freq));
            runs.len() - 1
        });
        let run = &mut runs[slot];
        for (value, map) in [(secs, &mut run.phase_times), (joules, &mut run.energy_joules)] {
            if let Some(v) = value {
                if map.insert(phase, v).is_some() {
                    errors.push(format!("row {row}: duplicate {phase} entry for {label}/{n_nodes}/{freq}"));
                }
            }
        }
    }
    if !errors.is_empty() {
        return Err(MetricsError::Schema(errors));
    }
    for run in &mut runs {
        for map in [&mut run.phase_times, &mut run.energy_joules] {
            if !map.contains_key(&Phase::Total) && !map.is_empty() {
                let sum = map.values().sum();
                map.insert(Phase::Total, sum);
            }
        }
        if let Err(e) = run.validate() {
            errors.push(format!("run {}/{}/{}: {e}", run.label, run.n_nodes(), run.freq_level));
        }
    }
    if !errors.is_empty() {
        return Err(MetricsError::Schema(errors));
    }
    if runs.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    Ok(runs)
}

pub fn read_trace(path: &Path) -> Result<Vec<RunRecord>> {
    let f = File::open(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(f)
}

/// Writes runs as trace rows (phases in canonical order, blanks for gaps).
pub fn write_trace<W: Write>(runs: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for run in runs {
        for phase in Phase::ALL {
            let s = run.phase_times.get(&phase);
            let j = run.energy_joules.get(&phase);
            if s.is_none() && j.is_none() {
                continue;
            }
            let fmt = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                run.label.clone(),
                run.n_nodes().to_string(),
                run.freq_level.to_string(),
                phase.to_string(),
                fmt(s),
                fmt(j),
            ])?;
        }
    }
    w.flush().map_err(|source| MetricsError::Io {
        path: "<trace>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_trace_file(runs: &[RunRecord], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_trace(runs, f)
}
