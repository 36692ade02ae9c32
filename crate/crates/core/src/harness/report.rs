//! Plots and summary tables from result directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use super::metrics::{aggregate, read_csv, write_csv, AggregateRecord, MetricsRecord};
use super::run::AGGREGATE_CSV;
use super::sweep::SweepResult;
use crate::error::{Error, Result};

pub const SWEEP_JSON: &str = "sweep.json";

/// What [`report`] produced and what it had to skip.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportSummary {
    pub experiments: Vec<String>,
    pub plots: Vec<PathBuf>,
    pub tables: Vec<PathBuf>,
    /// Files or series that could not be read; the report continues without them.
    pub missing: Vec<String>,
}

/// One experiment's per-seed series and aggregate.
#[derive(Debug, Clone)]
struct Experiment {
    name: String,
    dir: PathBuf,
    seeds: Vec<Vec<MetricsRecord>>,
    aggregate: Vec<AggregateRecord>,
}

#[derive(Debug, Clone, Copy)]
struct Metric {
    name: &'static str,
    label: &'static str,
    mean: fn(&AggregateRecord) -> f64,
    stderr: fn(&AggregateRecord) -> f64,
}

const METRICS: [Metric; 4] = [
    Metric {
        name: "mean_return",
        label: "mean return",
        mean: |a| a.mean_return,
        stderr: |a| a.mean_return_stderr,
    },
    Metric {
        name: "failure_rate",
        label: "failure rate",
        mean: |a| a.failure_rate,
        stderr: |a| a.failure_rate_stderr,
    },
    Metric {
        name: "mean_risk_alpha",
        label: "mean risk level",
        mean: |a| a.mean_risk_alpha,
        stderr: |a| a.mean_risk_alpha_stderr,
    },
    Metric {
        name: "q_estimation_error",
        label: "Q estimation error (initial Q minus best discounted return)",
        mean: |a| a.q_estimation_error,
        stderr: |a| a.q_estimation_error_stderr,
    },
];

fn seed_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load_experiment(dir: &Path, missing: &mut Vec<String>) -> Result<Option<Experiment>> {
    let files = seed_files(dir)?;
    if files.is_empty() {
        return Ok(None);
    }
    let mut seeds = Vec::new();
    for f in &files {
        match read_csv::<MetricsRecord>(f) {
            Ok(rows) if !rows.is_empty() => seeds.push(rows),
            Ok(_) => missing.push(format!("{}: empty series", f.display())),
            Err(e) => missing.push(format!("{}: {e}", f.display())),
        }
    }
    if seeds.is_empty() {
        return Ok(None);
    }
    let agg_path = dir.join(AGGREGATE_CSV);
    let aggregate = match read_csv::<AggregateRecord>(&agg_path) {
        Ok(a) if !a.is_empty() => a,
        _ => {
            missing.push(format!(
                "{}: recomputed from per-seed series",
                agg_path.display()
            ));
            aggregate(&seeds)
        }
    };
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("experiment")
        .to_string();
    Ok(Some(Experiment {
        name,
        dir: dir.to_path_buf(),
        seeds,
        aggregate,
    }))
}

fn plot_error(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

fn padded_range(lo: f64, hi: f64) -> std::ops::Range<f64> {
    if !(lo.is_finite() && hi.is_finite()) {
        return 0.0..1.0;
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad)..(hi + pad)
}

/// Line plot of several named aggregate series with mean ± standard error
/// bands; series from a single seed get no band.
fn plot_series(
    path: &Path,
    title: &str,
    metric: Metric,
    series: &[(&str, &[AggregateRecord])],
) -> Result<()> {
    let points = series.iter().flat_map(|(_, s)| s.iter());
    let (mut xmax, mut ylo, mut yhi) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for a in points {
        let (m, e) = ((metric.mean)(a), (metric.stderr)(a));
        xmax = xmax.max(a.step as f64);
        ylo = ylo.min(m - e);
        yhi = yhi.max(m + e);
    }
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..xmax, padded_range(ylo, yhi))
        .map_err(plot_error)?;
    chart
        .configure_mesh()
        .x_desc("environment steps")
        .y_desc(metric.label)
        .draw()
        .map_err(plot_error)?;
    for (k, (name, s)) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        if s.iter().any(|a| a.n_seeds > 1) {
            let upper = s
                .iter()
                .map(|a| (a.step as f64, (metric.mean)(a) + (metric.stderr)(a)));
            let lower = s
                .iter()
                .rev()
                .map(|a| (a.step as f64, (metric.mean)(a) - (metric.stderr)(a)));
            chart
                .draw_series(std::iter::once(Polygon::new(
                    upper.chain(lower).collect::<Vec<_>>(),
                    color.mix(0.2).filled(),
                )))
                .map_err(plot_error)?;
        }
        chart
            .draw_series(LineSeries::new(
                s.iter().map(|a| (a.step as f64, (metric.mean)(a))),
                color.stroke_width(2),
            ))
            .map_err(plot_error)?
            .label(*name)
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2))
            });
    }
    if series.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_error)?;
    }
    root.present().map_err(plot_error)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct FinalRow {
    experiment: String,
    n_seeds: usize,
    step: usize,
    mean_return: f64,
    mean_return_stderr: f64,
    failure_rate: f64,
    failure_rate_stderr: f64,
    mean_risk_alpha: f64,
    q_estimation_error: f64,
}

fn final_rows(experiments: &[Experiment]) -> Vec<FinalRow> {
    experiments
        .iter()
        .filter_map(|e| {
            e.aggregate.last().map(|a| FinalRow {
                experiment: e.name.clone(),
                n_seeds: a.n_seeds,
                step: a.step,
                mean_return: a.mean_return,
                mean_return_stderr: a.mean_return_stderr,
                failure_rate: a.failure_rate,
                failure_rate_stderr: a.failure_rate_stderr,
                mean_risk_alpha: a.mean_risk_alpha,
                q_estimation_error: a.q_estimation_error,
            })
        })
        .collect()
}

fn final_table(rows: &[FinalRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.experiment.len())
        .max()
        .unwrap_or(0)
        .max(10);
    let mut s = format!(
        "{:<width$} {:>5} {:>8} {:>16} {:>16} {:>8} {:>9}\n",
        "experiment", "seeds", "step", "return", "failure rate", "alpha", "Q error"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$} {:>5} {:>8} {:>8.3} ± {:<5.3} {:>8.3} ± {:<5.3} {:>8.3} {:>9.3}",
            r.experiment,
            r.n_seeds,
            r.step,
            r.mean_return,
            r.mean_return_stderr,
            r.failure_rate,
            r.failure_rate_stderr,
            r.mean_risk_alpha,
            r.q_estimation_error
        );
    }
    s
}

fn report_sweep(path: &Path, out: &mut ReportSummary) {
    match SweepResult::load_json(path) {
        Ok(sweep) => {
            let dir = path.parent().unwrap_or(Path::new("."));
            let txt = dir.join("sweep_table.txt");
            let csv = dir.join("sweep_table.csv");
            match std::fs::write(&txt, sweep.to_table_string())
                .map_err(Error::from)
                .and_then(|_| sweep.write_csv(&csv))
            {
                Ok(()) => out.tables.extend([txt, csv]),
                Err(e) => out.missing.push(format!("{}: {e}", path.display())),
            }
        }
        Err(e) => out.missing.push(format!("{}: {e}", path.display())),
    }
}

/// Render every experiment and sweep found in `dir` or its immediate
/// subdirectories. Errors only when nothing at all can be reported.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    if !dir.is_dir() {
        return Err(Error::NoResults(dir.display().to_string()));
    }
    let mut out = ReportSummary::default();
    let mut candidates = vec![dir.to_path_buf()];
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    candidates.extend(subdirs);

    let mut experiments = Vec::new();
    for c in &candidates {
        if let Some(e) = load_experiment(c, &mut out.missing)? {
            experiments.push(e);
        }
        let sweep = c.join(SWEEP_JSON);
        if sweep.exists() {
            report_sweep(&sweep, &mut out);
        }
    }
    if experiments.is_empty() && out.tables.is_empty() {
        return Err(Error::NoResults(dir.display().to_string()));
    }

    for e in &experiments {
        for m in METRICS {
            let p = e.dir.join(format!("{}.svg", m.name));
            let title = format!("{}: {} ({} seeds)", e.name, m.label, e.seeds.len());
            match plot_series(&p, &title, m, &[(&e.name, &e.aggregate)]) {
                Ok(()) => out.plots.push(p),
                Err(err) => out.missing.push(format!("{}: {err}", p.display())),
            }
        }
        out.experiments.push(e.name.clone());
    }

    if !experiments.is_empty() {
        if experiments.len() > 1 {
            let series: Vec<(&str, &[AggregateRecord])> = experiments
                .iter()
                .map(|e| (e.name.as_str(), e.aggregate.as_slice()))
                .collect();
            for m in METRICS {
                let p = dir.join(format!("compare_{}.svg", m.name));
                match plot_series(&p, m.label, m, &series) {
                    Ok(()) => out.plots.push(p),
                    Err(err) => out.missing.push(format!("{}: {err}", p.display())),
                }
            }
        }
        let rows = final_rows(&experiments);
        let txt = dir.join("summary.txt");
        let csv = dir.join("summary.csv");
        std::fs::write(&txt, final_table(&rows))?;
        write_csv(&csv, &rows)?;
        out.tables.extend([txt, csv]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::SweepRow;

    fn series(seed: u64, offset: f64) -> Vec<MetricsRecord> {
        (1..=4)
            .map(|k| MetricsRecord {
                step: k * 100,
                seed,
                mean_return: k as f64 + offset,
                failure_rate: 0.5 / k as f64,
                mean_risk_alpha: 0.8,
                q_estimation_error: 1.0 / k as f64,
            })
            .collect()
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(dir.path()), Err(Error::NoResults(_))));
    }

    #[test]
    fn single_seed_plots_without_bands() {
        let dir = tempfile::tempdir().unwrap();
        write_csv(&dir.path().join("seed_0.csv"), &series(0, 0.0)).unwrap();
        let out = report(dir.path()).unwrap();
        assert_eq!(out.plots.len(), 4);
        let svg = std::fs::read_to_string(dir.path().join("mean_return.svg")).unwrap();
        assert!(svg.contains("<svg"));
        assert!(!svg.contains("<polygon"));
        assert!(out.missing.iter().any(|m| m.contains("recomputed")));
    }

    #[test]
    fn multi_seed_experiments_and_comparison() {
        let dir = tempfile::tempdir().unwrap();
        for (name, off) in [("a", 0.0), ("b", 1.0)] {
            let d = dir.path().join(name);
            std::fs::create_dir_all(&d).unwrap();
            let s: Vec<_> = (0..3).map(|k| series(k, off + k as f64 * 0.1)).collect();
            for (k, r) in s.iter().enumerate() {
                write_csv(&d.join(format!("seed_{k}.csv")), r).unwrap();
            }
            write_csv(&d.join(AGGREGATE_CSV), &aggregate(&s)).unwrap();
        }
        std::fs::write(dir.path().join("a/seed_9.csv"), "garbage").unwrap();
        let out = report(dir.path()).unwrap();
        assert_eq!(out.experiments, vec!["a", "b"]);
        assert_eq!(out.plots.len(), 12);
        assert!(out.missing.iter().any(|m| m.contains("seed_9")));
        let svg = std::fs::read_to_string(dir.path().join("a/failure_rate.svg")).unwrap();
        assert!(svg.contains("<polygon"));
        let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.lines().count() == 3);
    }

    #[test]
    fn sweep_table_is_rendered() {
        let dir = tempfile::tempdir().unwrap();
        let sweep = SweepResult {
            alphas: vec![0.1, 0.9],
            rows: vec![SweepRow {
                setting: "light south".into(),
                failure_rates: vec![0.0, 0.0],
                mean_returns: vec![1.0, 1.0],
                best: 0.0,
                mean: 0.0,
                worst: 0.0,
                best_alpha: 0.1,
            }],
        };
        sweep.save_json(&dir.path().join(SWEEP_JSON)).unwrap();
        let out = report(dir.path()).unwrap();
        assert_eq!(out.tables.len(), 2);
        let t = std::fs::read_to_string(dir.path().join("sweep_table.txt")).unwrap();
        assert!(t.contains("best") && t.contains("mean") && t.contains("worst"));
    }
}
