use serde::Serialize;

use super::MetricRow;
use crate::error::{Error, Result};

/// How fast the mean predictor loss falls in each run.
///
/// `slope` is the least-squares slope of `ln(loss)` against the step, a
/// relative decay rate that ranks `1/(1+t)` ahead of `1/(1+t/2)` over any
/// horizon. The slope of the raw loss is kept as `linear_slope`; over long
/// horizons it is dominated by the flat tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub runs: Vec<RunSlope>,
    /// Labels ordered from fastest to slowest loss decay (most negative
    /// slope first).
    pub fastest_decay_first: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSlope {
    pub label: String,
    pub slope: f64,
    pub linear_slope: f64,
    pub first_loss: f64,
    pub last_loss: f64,
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

pub fn exploration_diagnostic(logs: &[(String, Vec<MetricRow>)]) -> Result<DiagnosticReport> {
    if logs.len() < 2 {
        return Err(Error::Contract("the diagnostic compares at least two logs".into()));
    }
    let mut runs = Vec::with_capacity(logs.len());
    for (label, rows) in logs {
        let missing = || Error::MissingColumn {
            log: label.clone(),
            column: "mean_predictor_loss".into(),
        };
        if rows.is_empty() {
            return Err(missing());
        }
        let ys = rows
            .iter()
            .map(|r| r.mean_predictor_loss.ok_or_else(missing))
            .collect::<Result<Vec<f64>>>()?;
        let xs: Vec<f64> = rows.iter().map(|r| r.step as f64).collect();
        let logs: Vec<f64> = ys.iter().map(|y| y.max(f64::MIN_POSITIVE).ln()).collect();
        runs.push(RunSlope {
            label: label.clone(),
            slope: ols_slope(&xs, &logs),
            linear_slope: ols_slope(&xs, &ys),
            first_loss: ys[0],
            last_loss: ys[ys.len() - 1],
        });
    }
    let mut order: Vec<&RunSlope> = runs.iter().collect();
    order.sort_by(|a, b| a.slope.total_cmp(&b.slope));
    let fastest_decay_first = order.iter().map(|r| r.label.clone()).collect();
    Ok(DiagnosticReport {
        runs,
        fastest_decay_first,
    })
}
