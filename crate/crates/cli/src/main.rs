//! `pof-sim`: run scenarios, sweeps and the follower-attack table, and plot
//! the resulting CSVs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use platoon_pof::harness::csvio::{maneuver_rows, write_maneuver, write_scenario, write_security, write_sweep};
use platoon_pof::harness::plot::{csv_files, emit_plots};
use platoon_pof::harness::sweep::DEFAULT_SEEDS;
use platoon_pof::harness::{
    run_scenario, run_security_sweep, run_sweep, AdjustChoice, DeadlineChoice, ScenarioConfig, ScenarioKind, SweepParam,
};

#[derive(Parser)]
#[command(name = "pof-sim", version, about = "Proof-of-following platoon simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write traces, challenges, messages and result CSVs.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat scenarios over a parameter grid and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// K, M, lambda or gamma.
        #[arg(long, default_value = "K")]
        param: String,
        /// Comma-separated grid; defaults depend on the parameter.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
    },
    /// Random-walk follower attack over K; writes security.csv.
    Security {
        #[command(flatten)]
        common: Common,
        #[arg(long = "k-grid", value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5])]
        k_grid: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
    },
    /// Single maneuver between two distances for several λ; writes maneuver.csv.
    Maneuver {
        #[command(flatten)]
        common: Common,
        /// Target distance; the maneuver starts at d_ref.
        #[arg(long, default_value_t = 42.0)]
        checkpoint: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.4])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 20.0)]
        duration: f64,
    },
    /// Render SVG charts for CSVs (default: every CSV in --out).
    Plot {
        /// CSV files to plot.
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Flags shared by the simulation commands. Anything given here overrides
/// the config file.
#[derive(Args)]
struct Common {
    /// TOML file with flat keys named like the parameters (lambda, dt, K, ...).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "v_V", alias = "v-v")]
    v_v: Option<f64>,
    #[arg(long = "v_C", alias = "v-c")]
    v_c: Option<f64>,
    #[arg(long = "d_ref", alias = "d-ref")]
    d_ref: Option<f64>,
    #[arg(long = "g_min", alias = "g-min")]
    g_min: Option<f64>,
    #[arg(long = "g_max", alias = "g-max")]
    g_max: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// none, repeat or recompute.
    #[arg(long)]
    adjust: Option<String>,
    /// acc or simple.
    #[arg(long = "deadline-policy")]
    deadline_policy: Option<String>,
    /// Fixed checkpoint sequence, comma-separated.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<f64>>,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { c.$field = v; })* };
        }
        set!(seed, k, v_v, v_c, g_min, g_max, rho, dt, lambda, tau, gamma, epsilon, sigma);
        if self.m.is_some() {
            c.m = self.m;
        }
        if self.d_ref.is_some() {
            c.d_ref = self.d_ref;
        }
        if let Some(s) = &self.scenario {
            c.scenario = s.parse::<ScenarioKind>()?;
        }
        if let Some(a) = &self.adjust {
            c.adjust = a.parse::<AdjustChoice>()?;
        }
        if let Some(p) = &self.deadline_policy {
            c.deadline_policy = match p.as_str() {
                "acc" => DeadlineChoice::Acc,
                "simple" => DeadlineChoice::Simple,
                other => bail!("unknown deadline policy '{other}' (acc or simple)"),
            };
        }
        if self.checkpoints.is_some() {
            c.checkpoints = self.checkpoints.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn default_grid(param: SweepParam) -> Vec<f64> {
    match param {
        SweepParam::K => (1..=8).map(f64::from).collect(),
        SweepParam::M => vec![11.0, 21.0, 31.0, 41.0, 51.0],
        SweepParam::Lambda => vec![0.1, 0.2, 0.3, 0.4, 0.5],
        SweepParam::Gamma => vec![0.1, 0.2, 0.3, 0.5, 1.0],
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { common } => {
            let cfg = common.config()?;
            let r = run_scenario(&cfg)?;
            write_scenario(&common.out, &r, cfg.dt)?;
            let time = r
                .verification_time
                .map(|t| format!("{t:.1} s"))
                .unwrap_or_else(|| "-".into());
            println!(
                "{} seed={} K={} outcome={} admitted={} verification_time={}",
                r.kind,
                r.seed,
                cfg.k,
                r.outcome.label(),
                r.admitted.as_deref().unwrap_or("-"),
                time
            );
            if let Some(o) = &r.candidate_outcome {
                println!("candidate: {}", o.label());
            }
        }
        Command::Sweep {
            common,
            param,
            grid,
            seeds,
        } => {
            let cfg = common.config()?;
            let param: SweepParam = param.parse()?;
            let grid = if grid.is_empty() { default_grid(param) } else { grid };
            let rows = run_sweep(&cfg, param, &grid, seeds)?;
            ensure_dir(&common.out)?;
            write_sweep(&common.out.join("sweep.csv"), &rows)?;
            for r in &rows {
                println!(
                    "{}={} runs={} pass_rate={:.3} mean={:.2} s sd={:.2} s",
                    r.param, r.value, r.runs, r.pass_rate, r.mean_time, r.std_time
                );
            }
        }
        Command::Security { common, k_grid, trials } => {
            let cfg = common.config()?;
            let rows = run_security_sweep(&cfg, &k_grid, trials)?;
            ensure_dir(&common.out)?;
            write_security(&common.out.join("security.csv"), &rows)?;
            for r in &rows {
                println!(
                    "K={} interior {}/{} (exact {:.3e}) accepted {}/{} (exact {:.3e}) bound {:.3e}",
                    r.k,
                    r.interior.passes,
                    r.trials,
                    r.schedule_interior,
                    r.verdict.passes,
                    r.trials,
                    r.schedule_verdict,
                    r.guess_bound
                );
            }
        }
        Command::Maneuver {
            common,
            checkpoint,
            lambdas,
            duration,
        } => {
            let cfg = common.config()?;
            let rows = maneuver_rows(cfg.d_ref(), checkpoint, cfg.v_v, &cfg.acc_params(), &lambdas, duration)?;
            ensure_dir(&common.out)?;
            let path = common.out.join("maneuver.csv");
            write_maneuver(&path, rows)?;
            println!("wrote {}", path.display());
        }
        Command::Plot { inputs, out } => {
            let inputs = if inputs.is_empty() { csv_files(&out)? } else { inputs };
            for p in emit_plots(&inputs, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
