//! Evaluation records and across-seed aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One evaluation point of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub seed: u64,
    pub mean_return: f64,
    pub failure_rate: f64,
    /// Average acting risk level during evaluation; the static level for
    /// non-adaptive policies.
    pub mean_risk_alpha: f64,
    pub q_estimation_error: f64,
}

/// Across-seed mean and standard error at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub step: usize,
    pub n_seeds: usize,
    pub mean_return: f64,
    pub mean_return_stderr: f64,
    pub failure_rate: f64,
    pub failure_rate_stderr: f64,
    pub mean_risk_alpha: f64,
    pub mean_risk_alpha_stderr: f64,
    pub q_estimation_error: f64,
    pub q_estimation_error_stderr: f64,
}

/// Sample mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Check that a per-seed series is well formed.
pub fn validate_series(records: &[MetricsRecord]) -> Result<()> {
    for w in records.windows(2) {
        if w[1].step <= w[0].step {
            return Err(invalid(format!(
                "metric steps not increasing: {} then {}",
                w[0].step, w[1].step
            )));
        }
    }
    for r in records {
        if !(0.0..=1.0).contains(&r.failure_rate) {
            return Err(invalid(format!(
                "failure rate {} outside [0, 1]",
                r.failure_rate
            )));
        }
    }
    Ok(())
}

/// Per-step aggregate over every series that has a record at that step.
pub fn aggregate(series: &[Vec<MetricsRecord>]) -> Vec<AggregateRecord> {
    let mut by_step: BTreeMap<usize, Vec<&MetricsRecord>> = BTreeMap::new();
    for s in series {
        for r in s {
            by_step.entry(r.step).or_default().push(r);
        }
    }
    by_step
        .into_iter()
        .map(|(step, rs)| {
            let col = |f: fn(&MetricsRecord) -> f64| {
                mean_stderr(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let (mean_return, mean_return_stderr) = col(|r| r.mean_return);
            let (failure_rate, failure_rate_stderr) = col(|r| r.failure_rate);
            let (mean_risk_alpha, mean_risk_alpha_stderr) = col(|r| r.mean_risk_alpha);
            let (q_estimation_error, q_estimation_error_stderr) = col(|r| r.q_estimation_error);
            AggregateRecord {
                step,
                n_seeds: rs.len(),
                mean_return,
                mean_return_stderr,
                failure_rate,
                failure_rate_stderr,
                mean_risk_alpha,
                mean_risk_alpha_stderr,
                q_estimation_error,
                q_estimation_error_stderr,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: usize, seed: u64, ret: f64) -> MetricsRecord {
        MetricsRecord {
            step,
            seed,
            mean_return: ret,
            failure_rate: 0.1,
            mean_risk_alpha: 0.5,
            q_estimation_error: -ret,
        }
    }

    #[test]
    fn identical_series_have_zero_stderr() {
        let s: Vec<Vec<_>> = (0..5)
            .map(|k| vec![rec(10, k, 2.0), rec(20, k, 3.0)])
            .collect();
        let agg = aggregate(&s);
        assert_eq!(agg.len(), 2);
        for a in &agg {
            assert_eq!(a.n_seeds, 5);
            assert_eq!(a.mean_return_stderr, 0.0);
            assert_eq!(a.failure_rate_stderr, 0.0);
        }
        assert_eq!(agg[1].mean_return, 3.0);
    }

    #[test]
    fn aggregate_mean_is_the_arithmetic_mean() {
        let s = vec![
            vec![rec(5, 0, 1.0)],
            vec![rec(5, 1, 2.0)],
            vec![rec(5, 2, 6.0)],
        ];
        let a = aggregate(&s)[0];
        assert_eq!(a.mean_return, 3.0);
        // sd = sqrt(((−2)² + (−1)² + 3²) / 2) = sqrt(7)
        assert!((a.mean_return_stderr - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_value_has_zero_stderr() {
        assert_eq!(mean_stderr(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn csv_round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![rec(1, 7, 0.1 + 0.2), rec(2, 7, -1.5)];
        write_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(
            "step,seed,mean_return,failure_rate,mean_risk_alpha,q_estimation_error\n"
        ));
        let back: Vec<MetricsRecord> = read_csv(&p).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn validation_catches_bad_series() {
        assert!(validate_series(&[rec(10, 0, 1.0), rec(10, 0, 1.0)]).is_err());
        let mut r = rec(1, 0, 0.0);
        r.failure_rate = 1.5;
        assert!(validate_series(&[r]).is_err());
        assert!(validate_series(&[rec(1, 0, 0.0), rec(2, 0, 0.0)]).is_ok());
    }
}
