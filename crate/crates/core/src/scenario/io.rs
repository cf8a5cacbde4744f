//! Scenario files: one JSON record per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::error::Category;

use super::{DataError, Scenario};

/// Parses a scenario file's contents. Blank lines are ignored; records are
/// numbered from 0 in order of appearance.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>, DataError> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = out.len();
        let scenario: Scenario = serde_json::from_str(line).map_err(|e| match e.classify() {
            Category::Data => DataError::Validation {
                record,
                message: e.to_string(),
            },
            _ => DataError::Parse {
                record,
                line: line_no + 1,
                message: e.to_string(),
            },
        })?;
        scenario
            .validate()
            .map_err(|message| DataError::Validation { record, message })?;
        out.push(scenario);
    }
    Ok(out)
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>, DataError> {
    parse_scenarios(&fs::read_to_string(path)?)
}

pub fn write_scenarios<W: Write>(mut w: W, scenarios: &[Scenario]) -> std::io::Result<()> {
    for s in scenarios {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_scenarios(path: impl AsRef<Path>, scenarios: &[Scenario]) -> Result<(), DataError> {
    let file = fs::File::create(path)?;
    write_scenarios(BufWriter::new(file), scenarios)?;
    Ok(())
}
