//! Risk-level sweep of a tabular return-distribution table on the gridworld.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{SweepConfig, WindSetting};
use super::evaluate::{evaluate, EvalSettings, TablePolicy};
use super::seeds::split;
use crate::agents::{
    distributional_policy_evaluation, value_iteration, GridMdp, QTable, QuantileTable,
};
use crate::envs::{GridConfig, GridEnv, GridLayout};
use crate::error::{invalid, Result};

/// Failure rates of one evaluation setting, one entry per swept risk level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub failure_rates: Vec<f64>,
    pub mean_returns: Vec<f64>,
    pub best: f64,
    pub mean: f64,
    pub worst: f64,
    /// Risk level attaining `best`; ties go to the higher mean return, then
    /// to the smaller risk level.
    pub best_alpha: f64,
}

impl SweepRow {
    pub fn spread(&self) -> f64 {
        self.worst - self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub alphas: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

/// Exact tabular solution of the gridworld under its configured wind.
#[derive(Debug, Clone)]
pub struct TrainedTable {
    pub layout: GridLayout,
    pub mdp: GridMdp,
    pub q: QTable,
    pub table: QuantileTable,
    pub discount: f64,
}

/// Value iteration, then distributional evaluation of its greedy policy.
pub fn train_table(cfg: &SweepConfig) -> Result<TrainedTable> {
    let layout = GridLayout::new(&cfg.grid)?;
    let mdp = GridMdp::new(&layout, &cfg.grid.wind)?;
    let q = value_iteration(
        &mdp.mdp,
        cfg.tabular.discount,
        cfg.value_iteration_tolerance,
        cfg.tabular.max_sweeps,
    )?;
    let table = distributional_policy_evaluation(&mdp.mdp, &q.greedy_policy(), &cfg.tabular)?;
    Ok(TrainedTable {
        layout,
        mdp,
        q,
        table,
        discount: cfg.tabular.discount,
    })
}

/// Evaluate `table` at every risk level under every setting. Returns are
/// discounted with the table's own discount.
///
/// Episode `k` of setting `i` uses the same environment seed for every risk
/// level, so the result does not depend on the order of `alphas`.
pub fn alpha_sweep(
    trained: &TrainedTable,
    grid: &GridConfig,
    settings: &[WindSetting],
    alphas: &[f64],
    episodes: usize,
    seed: u64,
    step_cap: usize,
) -> Result<SweepResult> {
    if alphas.is_empty() || settings.is_empty() {
        return Err(invalid(
            "sweep needs at least one risk level and one setting",
        ));
    }
    let mut rows = Vec::with_capacity(settings.len());
    for (i, setting) in settings.iter().enumerate() {
        let cfg = GridConfig {
            wind: setting.wind,
            ..grid.clone()
        };
        let mut env = GridEnv::new(cfg)?;
        let eval = EvalSettings {
            n_episodes: episodes,
            seed: split(seed, i as u64),
            discount: trained.discount,
            step_cap,
        };
        let mut failure_rates = Vec::with_capacity(alphas.len());
        let mut mean_returns = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let policy = TablePolicy {
                layout: &trained.layout,
                mdp: &trained.mdp,
                table: &trained.table,
                alpha,
            };
            let summary = evaluate(&policy, &mut env, &eval)?;
            failure_rates.push(summary.failure_rate);
            mean_returns.push(summary.mean_return);
        }
        rows.push(summarize(
            &setting.name,
            alphas,
            failure_rates,
            mean_returns,
        ));
    }
    Ok(SweepResult {
        alphas: alphas.to_vec(),
        rows,
    })
}

fn summarize(
    setting: &str,
    alphas: &[f64],
    failure_rates: Vec<f64>,
    mean_returns: Vec<f64>,
) -> SweepRow {
    let best = failure_rates.iter().copied().fold(f64::INFINITY, f64::min);
    let worst = failure_rates
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mean = failure_rates.iter().sum::<f64>() / failure_rates.len() as f64;
    let best_alpha = (0..alphas.len())
        .filter(|&k| failure_rates[k] == best)
        .min_by(|&i, &j| {
            mean_returns[j]
                .total_cmp(&mean_returns[i])
                .then(alphas[i].total_cmp(&alphas[j]))
        })
        .map_or(f64::NAN, |k| alphas[k]);
    SweepRow {
        setting: setting.into(),
        failure_rates,
        mean_returns,
        best,
        mean,
        worst,
        best_alpha,
    }
}

/// Train on the configured wind and sweep every setting.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let trained = train_table(cfg)?;
    alpha_sweep(
        &trained,
        &cfg.grid,
        &cfg.settings,
        &cfg.alphas,
        cfg.episodes,
        cfg.eval_seed,
        cfg.eval_step_cap,
    )
}

impl SweepResult {
    /// Plain-text table with one row per setting.
    pub fn to_table_string(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.setting.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let mut s = format!("{:<width$}", "setting");
        for a in &self.alphas {
            let _ = write!(s, " {:>6}", format!("a={a}"));
        }
        let _ = writeln!(
            s,
            " {:>6} {:>6} {:>6} {:>7}",
            "best", "mean", "worst", "best_a"
        );
        for r in &self.rows {
            let _ = write!(s, "{:<width$}", r.setting);
            for f in &r.failure_rates {
                let _ = write!(s, " {f:>6.2}");
            }
            let _ = writeln!(
                s,
                " {:>6.2} {:>6.3} {:>6.2} {:>7}",
                r.best, r.mean, r.worst, r.best_alpha
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["setting".to_string()];
        header.extend(self.alphas.iter().map(|a| format!("alpha_{a}")));
        header.extend(["best", "mean", "worst", "best_alpha"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.setting.clone()];
            rec.extend(r.failure_rates.iter().map(|f| f.to_string()));
            rec.extend([r.best, r.mean, r.worst, r.best_alpha].map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
