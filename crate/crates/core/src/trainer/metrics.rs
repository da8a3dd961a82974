use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training step's logged quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    /// Fraction of this step's rollouts that were correct.
    pub train_accuracy: f64,
    /// avg@k on the test set; only on evaluation steps.
    pub eval_accuracy: Option<f64>,
    pub mean_response_length: f64,
    pub mean_outcome_reward: f64,
    pub max_outcome_reward: f64,
    /// Mean predictor loss over the batch, measured before the update.
    pub mean_predictor_loss: Option<f64>,
    pub mean_exploration_reward: f64,
    pub decay_factor: f64,
    pub wall_clock_seconds: Option<f64>,
}

pub fn write_log(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        writeln!(w, "{}", serde_json::to_string(row).expect("row serializes"))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<MetricRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MetricRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lossless_round_trip() {
        let row = MetricRow {
            step: 3,
            train_accuracy: 0.1 + 0.2,
            eval_accuracy: None,
            mean_response_length: 17.0 / 3.0,
            mean_outcome_reward: 1e-17,
            max_outcome_reward: 1.0,
            mean_predictor_loss: Some(std::f64::consts::PI),
            mean_exploration_reward: 0.0,
            decay_factor: 40.0 / 43.0,
            wall_clock_seconds: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        write_log(&p, &[row.clone(), row.clone()]).unwrap();
        assert_eq!(read_log(&p).unwrap(), vec![row.clone(), row]);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("{\"step\":3,\"train_accuracy\":"));
    }
}
