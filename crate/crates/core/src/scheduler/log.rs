use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Localize,
    Partial,
    Global,
    Joint,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Localize => "localize",
            Phase::Partial => "partial",
            Phase::Global => "global",
            Phase::Joint => "joint",
        })
    }
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    /// Image being registered (or the newest registered image).
    pub image: Option<usize>,
    pub level: usize,
    pub epochs: usize,
    /// Registered images at the end of the phase.
    pub registered: usize,
    /// Loss on the fixed evaluation rays before and after the phase.
    pub start_loss: f64,
    pub end_loss: f64,
    pub wall_seconds: f64,
}

/// Writes one JSON object per line.
pub fn write_log(path: &Path, records: &[PhaseRecord]) -> std::io::Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(std::io::Error::other)?);
        text.push('\n');
    }
    fs::write(path, text)
}

pub fn read_log(path: &Path) -> std::io::Result<Vec<PhaseRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let records = vec![PhaseRecord {
            phase: Phase::Localize,
            image: Some(3),
            level: 0,
            epochs: 900,
            registered: 4,
            start_loss: 0.25,
            end_loss: 0.125,
            wall_seconds: 1.5,
        }];
        write_log(&path, &records).unwrap();
        assert_eq!(read_log(&path).unwrap(), records);
        assert!(fs::read_to_string(&path).unwrap().contains("\"phase\":\"localize\""));
    }
}
