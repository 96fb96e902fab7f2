use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use lfrl_cli::pipeline::{self, EvalBacking};
use lfrl_cli::plot;
use lfrl_core::{Checkpoint, Split};

#[derive(Parser)]
#[command(name = "lfrl", version, about = "Safe RL for load-following control: plant, ROM identification, lambda-PPO")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test scenarios and a manifest.
    GenScenarios {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the supervised plant over training demand curves for sysid.
    SimulatePlant {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the reduced-order model and print the fit report.
    Identify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy on the reduced-order model.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        rom: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep the multipliers fixed at `L1,L2` instead of learning them.
        #[arg(long, value_name = "L1,L2")]
        fixed_lambda: Option<String>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        ignore_config_hash: bool,
    },
    /// Deterministic evaluation over a scenario split.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reduced-order model to evaluate on.
        #[arg(long, required_unless_present = "plant")]
        rom: Option<PathBuf>,
        /// Evaluate on the reference plant instead of the model.
        #[arg(long, conflicts_with = "rom")]
        plant: bool,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Also write per-scenario episode logs here.
        #[arg(long)]
        episodes: Option<PathBuf>,
    },
    /// Deploy a policy on the reference plant with action-rate clipping.
    Transfer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Per-step action change limit; `inf` disables clipping.
        #[arg(long, default_value_t = 5e-4)]
        eta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an episode, epoch-log or trajectory CSV as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_logging(level: &str) {
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn parse_pair(s: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("--fixed-lambda: cannot parse `{s}`"))?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => bail!("--fixed-lambda expects two comma-separated values"),
    }
}

fn load_checkpoint(p: &Path) -> Result<Checkpoint> {
    Ok(Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?)
}

fn run(cli: Cli) -> Result<()> {
    let cfg_path = match &cli.cmd {
        Command::GenScenarios { config, .. }
        | Command::SimulatePlant { config, .. }
        | Command::Identify { config, .. }
        | Command::Train { config, .. }
        | Command::Evaluate { config, .. }
        | Command::Transfer { config, .. } => config.clone(),
        Command::Plot { .. } => None,
    };
    let mut cfg = pipeline::load_config(cfg_path.as_deref())?;
    init_logging(&cfg.log_level);
    match cli.cmd {
        Command::GenScenarios { out, .. } => {
            let set = pipeline::gen_scenarios(&cfg, &out)?;
            println!(
                "{} scenarios ({} train, {} val, {} test) written to {}",
                set.len(),
                set.train.len(),
                set.val.len(),
                set.test.len(),
                out.display()
            );
        }
        Command::SimulatePlant { scenarios, out, .. } => {
            let set = pipeline::read_scenarios(&scenarios)?;
            let runs = pipeline::simulate_plant(&cfg, &set)?;
            pipeline::write_trajectories(&out, &runs)?;
            println!("{} trajectories written to {}", runs.len(), out.display());
        }
        Command::Identify { data, out, .. } => {
            let runs = pipeline::read_trajectories(&data)?;
            let (rom, report) = pipeline::identify(&cfg, &runs)?;
            pipeline::save_rom(&rom, &out)?;
            print!("{report}");
            println!("model written to {}", out.display());
        }
        Command::Train {
            rom,
            scenarios,
            out,
            fixed_lambda,
            resume,
            ignore_config_hash,
            ..
        } => {
            if let Some(s) = fixed_lambda {
                cfg.train.fixed_lambda = Some(parse_pair(&s)?);
            }
            cfg.validate_training()?;
            let rom = pipeline::load_rom(&rom)?;
            let set = pipeline::read_scenarios(&scenarios)?;
            let resume = resume.as_deref().map(load_checkpoint).transpose()?;
            let outcome = pipeline::train(&cfg, &rom, &set, &out, resume, ignore_config_hash)?;
            let l = outcome.state.lagrange.lambda;
            println!(
                "trained {} epochs, lambda = ({}, {}); checkpoints in {}",
                outcome.state.epoch,
                l[0],
                l[1],
                out.display()
            );
        }
        Command::Evaluate {
            ckpt,
            scenarios,
            out,
            rom,
            split,
            episodes,
            ..
        } => {
            let c = load_checkpoint(&ckpt)?;
            let set = pipeline::read_scenarios(&scenarios)?;
            let rom = rom.as_deref().map(pipeline::load_rom).transpose()?;
            let backing = match &rom {
                Some(r) => EvalBacking::Rom(r),
                None => EvalBacking::Plant,
            };
            let (report, logs) = pipeline::evaluate(&cfg, &c, backing, set.split(split))?;
            pipeline::write_report(&report, &out)?;
            if let Some(dir) = episodes {
                pipeline::write_episodes(&logs, &dir)?;
            }
            println!(
                "N={} r_bar={} d={} omega={} p_hat={}",
                report.n(),
                report.r_bar,
                report.d,
                report.omega,
                report.p_hat
            );
        }
        Command::Transfer {
            ckpt,
            scenario,
            eta,
            out,
            ..
        } => {
            let c = load_checkpoint(&ckpt)?;
            let sc = pipeline::read_scenario_file(&scenario)?;
            let log = pipeline::transfer(&cfg, &c, &sc, eta)?;
            pipeline::write_episode(&log, &out)?;
            let mut prev = sc.demand[0];
            let mut max_step = 0.0_f64;
            for s in &log.steps {
                max_step = max_step.max((s.action - prev).abs());
                prev = s.action;
            }
            let report = lfrl_core::MetricsReport::from_logs(std::slice::from_ref(&log))?;
            println!(
                "{} steps, max |a_t - a_t-1| = {max_step:e}, omega = {}, d = {}",
                log.steps.len(),
                report.omega,
                report.d
            );
            if let Some(reason) = &log.truncated {
                eprintln!("episode truncated: {reason}");
            }
        }
        Command::Plot { input, out } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let svg = plot::plot_csv(&text).with_context(|| format!("plotting {}", input.display()))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&out, svg)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err
        .chain()
        .any(|e| e.downcast_ref::<lfrl_core::Error>().is_some_and(lfrl_core::Error::is_numeric));
    if numeric {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
