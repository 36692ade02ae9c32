//! Command-line front end: train, evaluate, sweep and report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ara_core::distcore::{MappingKind, RiskMapping, RiskPolicy};
use ara_core::harness::{
    evaluate, load_checkpoint, report, run_experiment, run_sweep, AgentPolicy, EvalSettings,
    ExperimentConfig, SweepConfig,
};
use ara_core::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "ara",
    version,
    about = "Risk-adaptive distributional RL experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Neutral,
    StaticCvar,
    Ara,
}

#[derive(clap::Args)]
struct RiskArgs {
    /// Replace the configured risk policy.
    #[arg(long, value_enum)]
    risk_policy: Option<PolicyArg>,
    /// CVaR level for a static policy; implies `--risk-policy static-cvar` when given alone.
    #[arg(long)]
    alpha: Option<f64>,
    /// Uncertainty mapping for ARA: exponential, linear or logarithmic.
    #[arg(long)]
    mapping: Option<MappingKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write metrics and checkpoints.
    Train {
        config: PathBuf,
        /// Run only these seeds (repeatable).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Total environment steps; the evaluation interval is clipped to it.
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        risk: RiskArgs,
        /// Output directory (defaults to the configured one).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a checkpoint, optionally under modified environment parameters.
    Eval {
        checkpoint: PathBuf,
        /// Environment overrides such as `wind.strength=0.9` or `variation_fraction=0.4`.
        overrides: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        /// Step cap for environments without their own limit.
        #[arg(long, default_value_t = 500)]
        step_cap: usize,
        #[arg(long, default_value_t = 0.99)]
        discount: f64,
    },
    /// Run the gridworld risk-level sweep.
    Sweep {
        config: PathBuf,
        /// Evaluation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Episodes per risk level and setting.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render plots and summary tables for a results directory.
    Report { dir: PathBuf },
}

fn resolve_policy(current: RiskPolicy, risk: &RiskArgs) -> Result<RiskPolicy> {
    let kind = match (risk.risk_policy, risk.alpha, risk.mapping) {
        (None, None, None) => return Ok(current),
        (Some(p), _, _) => p,
        (None, Some(_), None) => PolicyArg::StaticCvar,
        (None, None, Some(_)) => PolicyArg::Ara,
        (None, Some(_), Some(_)) => {
            return Err(Error::Config(
                "--alpha and --mapping need an explicit --risk-policy".into(),
            ))
        }
    };
    match kind {
        PolicyArg::Neutral => Ok(RiskPolicy::Neutral),
        PolicyArg::StaticCvar => {
            let alpha = risk.alpha.or(current
                .fixed_alpha()
                .filter(|_| !matches!(current, RiskPolicy::Neutral)));
            let alpha = alpha.ok_or_else(|| Error::Config("static-cvar needs --alpha".into()))?;
            RiskPolicy::static_cvar(alpha)
        }
        PolicyArg::Ara => {
            let mapping = match (risk.mapping, current) {
                (Some(kind), RiskPolicy::Ara { mapping }) => RiskMapping { kind, ..mapping },
                (Some(kind), _) => RiskMapping::new(kind),
                (None, RiskPolicy::Ara { mapping }) => mapping,
                (None, _) => RiskMapping::new(MappingKind::Exponential),
            };
            Ok(RiskPolicy::Ara { mapping })
        }
    }
}

fn train(
    config: &Path,
    seeds: Vec<u64>,
    steps: Option<usize>,
    risk: &RiskArgs,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if !seeds.is_empty() {
        cfg.seeds = seeds;
    }
    if let Some(steps) = steps {
        cfg.total_steps = steps;
        cfg.eval_interval = cfg.eval_interval.min(steps.max(1));
    }
    cfg.agent.risk_policy = resolve_policy(cfg.agent.risk_policy, risk)?;
    if let Some(dir) = output {
        cfg.output_dir = dir;
    }
    cfg.validate()?;
    let result = run_experiment(&cfg)?;
    for (seed, err) in &result.failures {
        eprintln!("seed {seed} failed: {err}");
    }
    if let Some(last) = result.aggregate.last() {
        println!(
            "{} ({}): step {} over {} seeds: return {:.3} ± {:.3}, failure rate {:.3} ± {:.3}, mean α {:.3}",
            cfg.name,
            cfg.agent.risk_policy.label(),
            last.step,
            last.n_seeds,
            last.mean_return,
            last.mean_return_stderr,
            last.failure_rate,
            last.failure_rate_stderr,
            last.mean_risk_alpha,
        );
    }
    println!("results written to {}", result.run_dir.display());
    if result.runs.is_empty() {
        return Err(Error::Config("every seed failed".into()));
    }
    Ok(())
}

fn eval(checkpoint: &Path, overrides: &[String], settings: EvalSettings) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let mut spec = ck.manifest.env.clone();
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not of the form key=value")))?;
        spec.set_override(key.trim(), value)?;
    }
    let mut env = spec.build()?;
    let policy = AgentPolicy::new(&ck.agent, ck.rnd.as_ref())?;
    let summary = evaluate(&policy, env.as_mut(), &settings)?;
    println!("episodes {}", settings.n_episodes);
    println!("mean_return {:.6}", summary.mean_return);
    println!("failure_rate {:.6}", summary.failure_rate);
    println!("mean_risk_alpha {:.6}", summary.mean_risk_alpha);
    println!("q_estimation_error {:.6}", summary.q_estimation_error());
    Ok(())
}

fn sweep(
    config: &Path,
    seed: Option<u64>,
    episodes: Option<usize>,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = SweepConfig::load(config)?;
    if let Some(s) = seed {
        cfg.eval_seed = s;
    }
    if let Some(n) = episodes {
        cfg.episodes = n;
    }
    if let Some(dir) = output {
        cfg.output_dir = dir;
    }
    let result = run_sweep(&cfg)?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir)?;
    result.save_json(&dir.join(ara_core::harness::SWEEP_JSON))?;
    result.write_csv(&dir.join("sweep.csv"))?;
    print!("{}", result.to_table_string());
    println!("results written to {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seeds,
            steps,
            risk,
            output,
        } => train(&config, seeds, steps, &risk, output),
        Command::Eval {
            checkpoint,
            overrides,
            seed,
            episodes,
            step_cap,
            discount,
        } => eval(
            &checkpoint,
            &overrides,
            EvalSettings {
                n_episodes: episodes,
                seed,
                discount,
                step_cap,
            },
        ),
        Command::Sweep {
            config,
            seed,
            episodes,
            output,
        } => sweep(&config, seed, episodes, output),
        Command::Report { dir } => {
            let summary = report(&dir)?;
            for m in &summary.missing {
                eprintln!("missing: {m}");
            }
            println!(
                "{} experiment(s), {} plot(s), {} table(s) in {}",
                summary.experiments.len(),
                summary.plots.len(),
                summary.tables.len(),
                dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(p: Option<PolicyArg>, alpha: Option<f64>, mapping: Option<MappingKind>) -> RiskArgs {
        RiskArgs {
            risk_policy: p,
            alpha,
            mapping,
        }
    }

    #[test]
    fn alpha_alone_selects_static_cvar() {
        let p = resolve_policy(RiskPolicy::Neutral, &args(None, Some(0.3), None)).unwrap();
        assert_eq!(p, RiskPolicy::StaticCvar { alpha: 0.3 });
    }

    #[test]
    fn mapping_keeps_configured_alpha_min() {
        let current = RiskPolicy::Ara {
            mapping: RiskMapping::with_alpha_min(MappingKind::Exponential, 0.2).unwrap(),
        };
        let p = resolve_policy(current, &args(None, None, Some(MappingKind::Linear))).unwrap();
        let RiskPolicy::Ara { mapping } = p else {
            panic!()
        };
        assert_eq!(
            (mapping.kind, mapping.alpha_min),
            (MappingKind::Linear, 0.2)
        );
    }

    #[test]
    fn ambiguous_or_incomplete_flags_are_rejected() {
        assert!(resolve_policy(
            RiskPolicy::Neutral,
            &args(None, Some(0.3), Some(MappingKind::Linear))
        )
        .is_err());
        assert!(resolve_policy(
            RiskPolicy::Neutral,
            &args(Some(PolicyArg::StaticCvar), None, None)
        )
        .is_err());
        assert!(resolve_policy(
            RiskPolicy::Neutral,
            &args(Some(PolicyArg::StaticCvar), Some(1.5), None)
        )
        .is_err());
    }

    #[test]
    fn no_flags_keep_the_config() {
        let current = RiskPolicy::StaticCvar { alpha: 0.4 };
        assert_eq!(
            resolve_policy(current, &args(None, None, None)).unwrap(),
            current
        );
        let p = resolve_policy(current, &args(Some(PolicyArg::StaticCvar), None, None)).unwrap();
        assert_eq!(p, current);
    }
}
