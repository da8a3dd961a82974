use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{solver, Problem};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Mix of 3- and 4-operand problems.
    Countdown34,
    /// 4-operand problems only.
    Countdown4,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "countdown34" => Ok(Mode::Countdown34),
            "countdown4" => Ok(Mode::Countdown4),
            other => Err(format!("unknown mode `{other}` (expected countdown34 or countdown4)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationLimits {
    pub max_operand: i64,
    pub max_target: i64,
    pub cap: usize,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        GenerationLimits {
            max_operand: 20,
            max_target: 100,
            cap: 100_000,
        }
    }
}

/// Generates `count` distinct solvable problems. Ids are `0..count` in
/// generation order.
///
/// Operands are drawn uniformly from `1..=max_operand`; the target is drawn
/// uniformly from the values in `1..=max_target` reachable from them, so
/// every problem carries a solution by construction.
pub fn generate_dataset(
    seed: u64,
    count: usize,
    mode: Mode,
    limits: &GenerationLimits,
) -> Result<Vec<Problem>> {
    if count == 0 {
        return Err(Error::Contract("dataset count must be at least 1".into()));
    }
    if count > limits.cap {
        return Err(Error::Capacity {
            requested: count,
            cap: limits.cap,
        });
    }
    if limits.max_operand < 1 || limits.max_target < 1 {
        return Err(Error::Contract("operand and target bounds must be positive".into()));
    }
    let mode_tag = match mode {
        Mode::Countdown34 => 34,
        Mode::Countdown4 => 4,
    };
    let mut rng = rng::stream(seed, &[rng::tag::DATA, mode_tag]);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let max_attempts = count.saturating_mul(1000).max(10_000);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Capacity {
                requested: count,
                cap: out.len(),
            });
        }
        let n = match mode {
            Mode::Countdown4 => 4,
            Mode::Countdown34 => rng.random_range(3..=4),
        };
        let operands: Vec<i64> = (0..n)
            .map(|_| rng.random_range(1..=limits.max_operand))
            .collect();
        let targets = solver::reachable(&operands, 1..=limits.max_target);
        if targets.is_empty() {
            continue;
        }
        let pick = rng.random_range(0..targets.len());
        let target = *targets.keys().nth(pick).expect("index within bounds");
        let mut key = operands.clone();
        key.sort_unstable();
        if !seen.insert((key, target)) {
            continue;
        }
        out.push(Problem {
            id: out.len() as u64,
            operands,
            target,
        });
    }
    Ok(out)
}

/// Generates `train + test` problems and splits them; ids are disjoint.
pub fn generate_split(
    seed: u64,
    train: usize,
    test: usize,
    mode: Mode,
    limits: &GenerationLimits,
) -> Result<(Vec<Problem>, Vec<Problem>)> {
    let mut all = generate_dataset(seed, train + test, mode, limits)?;
    let test_part = all.split_off(train);
    Ok((all, test_part))
}

pub fn write_problems(path: &Path, problems: &[Problem]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in problems {
        let line = serde_json::to_string(p).expect("problem serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_problems(path: &Path) -> Result<Vec<Problem>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Problem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if !(3..=4).contains(&p.operands.len()) || p.operands.iter().any(|&x| x < 1) || p.target < 1
        {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "expected 3 or 4 positive operands and a positive target".into(),
            });
        }
        out.push(p);
    }
    Ok(out)
}
