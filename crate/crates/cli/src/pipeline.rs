//! File-level pipeline steps behind each command.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use lfrl_core::env::make_scenario_set;
use lfrl_core::metrics::evaluate_policy;
use lfrl_core::plant::{read_trajectory_csv, simulate_tracking, write_trajectory_csv};
use lfrl_core::ppo::{self, EPOCH_STATS_HEADER};
use lfrl_core::sysid::{identify_rom, ROM_STATE_NAMES};
use lfrl_core::{
    Backing, Checkpoint, EpisodeLog, EpochStats, FitReport, MetricsReport, RomModel, RunConfig, Scenario, ScenarioSet,
    Split, TrainerState, Trajectory, TrajectoryRow,
};

pub const MANIFEST: &str = "manifest.csv";
pub const EPOCH_LOG: &str = "epoch_stats.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

/// Generate the scenario set and write one CSV per scenario plus a manifest
/// of `seed,split,file`.
pub fn gen_scenarios(cfg: &RunConfig, out: &Path) -> Result<ScenarioSet> {
    let set = make_scenario_set(
        cfg.master_seed,
        cfg.n_train,
        cfg.n_val,
        cfg.n_test,
        cfg.train.horizon,
        &cfg.scenario_params(),
        &cfg.plant,
    )?;
    fs::create_dir_all(out)?;
    let mut manifest = create(&out.join(MANIFEST))?;
    writeln!(manifest, "seed,split,file")?;
    for split in [Split::Train, Split::Val, Split::Test] {
        for (i, s) in set.split(split).iter().enumerate() {
            let name = format!("{split}_{i:05}.csv");
            let mut w = create(&out.join(&name))?;
            s.write_csv(&mut w)?;
            w.flush()?;
            writeln!(manifest, "{},{split},{name}", s.seed)?;
        }
    }
    manifest.flush()?;
    info!("wrote {} scenarios to {}", set.len(), out.display());
    Ok(set)
}

pub fn read_scenario_file(path: &Path) -> Result<Scenario> {
    Ok(Scenario::read_csv(open(path)?, &path.display().to_string())?)
}

pub fn read_scenarios(dir: &Path) -> Result<ScenarioSet> {
    let mpath = dir.join(MANIFEST);
    let mut all = Vec::new();
    for (i, line) in open(&mpath)?.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            bail!("{}:{}: expected seed,split,file", mpath.display(), i + 1);
        }
        let s = read_scenario_file(&dir.join(parts[2].trim()))?;
        if s.seed.to_string() != parts[0].trim() {
            bail!("{}: seed {} does not match manifest entry {}", parts[2], s.seed, parts[0]);
        }
        all.push(s);
    }
    Ok(ScenarioSet::from_scenarios(all))
}

/// Closed-loop plant runs over the demand curves of the first
/// `sysid_trajectories` training scenarios.
pub fn simulate_plant(cfg: &RunConfig, set: &ScenarioSet) -> Result<Vec<(u64, Vec<TrajectoryRow>)>> {
    let n = cfg.sysid_trajectories;
    if set.train.len() < n {
        bail!("need {n} training scenarios for sysid, found {}", set.train.len());
    }
    set.train[..n]
        .iter()
        .map(|s| Ok((s.seed, simulate_tracking(&s.demand, &cfg.plant, &cfg.tracking_options(s.seed))?)))
        .collect()
}

pub fn write_trajectories(out: &Path, runs: &[(u64, Vec<TrajectoryRow>)]) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut manifest = create(&out.join(MANIFEST))?;
    writeln!(manifest, "seed,file")?;
    for (i, (seed, rows)) in runs.iter().enumerate() {
        let name = format!("traj_{i:04}.csv");
        let mut w = create(&out.join(&name))?;
        write_trajectory_csv(&mut w, rows)?;
        w.flush()?;
        writeln!(manifest, "{seed},{name}")?;
    }
    manifest.flush()?;
    Ok(())
}

pub fn read_trajectories(dir: &Path) -> Result<Vec<Vec<TrajectoryRow>>> {
    let mut out = Vec::new();
    for (i, line) in open(&dir.join(MANIFEST))?.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let file = line.split(',').nth(1).context("manifest line without file")?.trim().to_string();
        let p = dir.join(&file);
        out.push(read_trajectory_csv(open(&p)?, &p.display().to_string())?);
    }
    Ok(out)
}

pub fn identify(cfg: &RunConfig, runs: &[Vec<TrajectoryRow>]) -> Result<(RomModel, FitReport)> {
    let trajs: Vec<Trajectory> = runs.iter().map(|r| Trajectory::from_plant_rows(r)).collect();
    Ok(identify_rom(&trajs, &ROM_STATE_NAMES, &["setpoint"], &cfg.identify)?)
}

pub fn save_rom(rom: &RomModel, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    rom.save(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_rom(path: &Path) -> Result<RomModel> {
    Ok(RomModel::load(open(path)?, &path.display().to_string())?)
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:05}.ckpt")
}

pub struct TrainOutcome {
    pub stats: Vec<EpochStats>,
    pub state: TrainerState,
}

/// Train into `out`, writing the epoch log, periodic checkpoints and a final
/// checkpoint. With `resume`, earlier epoch-log rows are kept and training
/// continues from the checkpoint.
pub fn train(
    cfg: &RunConfig,
    rom: &RomModel,
    set: &ScenarioSet,
    out: &Path,
    resume: Option<Checkpoint>,
    ignore_hash: bool,
) -> Result<TrainOutcome> {
    cfg.validate_training()?;
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let mut state = match resume {
        Some(c) => {
            if c.config_hash != hash && !ignore_hash {
                bail!(
                    "checkpoint config hash {:016x} differs from current config {:016x}; pass --ignore-config-hash to resume anyway",
                    c.config_hash,
                    hash
                );
            }
            c.state
        }
        None => TrainerState::init(&cfg.train, lfrl_core::Env::obs_dim())?,
    };
    let mut rows: Vec<String> = Vec::new();
    let log_path = out.join(EPOCH_LOG);
    if state.epoch > 0 && log_path.exists() {
        for line in open(&log_path)?.lines().skip(1) {
            let line = line?;
            match EpochStats::parse_row(&line) {
                Some(s) if s.epoch < state.epoch => rows.push(line),
                _ => {}
            }
        }
    }
    let mut f = create(&log_path)?;
    writeln!(f, "{EPOCH_STATS_HEADER}")?;
    for r in &rows {
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    let config_path = out.join("config.txt");
    fs::write(&config_path, cfg.to_text())?;
    let every = cfg.checkpoint_every;
    let stats = ppo::train(&cfg.train, &mut state, rom, &cfg.plant, &set.train, |s, st| {
        info!(
            "epoch {:4}  return {:9.4}  J=({:.4}, {:.4})  lambda=({:.4}, {:.4})  kl {:.5}  iters {}/{}  {:.2}s",
            s.epoch, s.mean_return, s.j[0], s.j[1], s.lambda[0], s.lambda[1], s.kl_stop, s.policy_iters, s.value_iters, s.wall_s
        );
        let mut row = s.clone();
        if !cfg.record_wall_time {
            row.wall_s = 0.0;
        }
        writeln!(f, "{}", row.csv_row())?;
        f.flush()?;
        if st.epoch % every == 0 || st.epoch == cfg.train.epochs {
            let c = Checkpoint {
                seed: cfg.train.seed,
                config_hash: hash,
                state: st.clone(),
            };
            c.save(&out.join(checkpoint_name(st.epoch)))?;
            if st.epoch == cfg.train.epochs {
                c.save(&out.join(FINAL_CHECKPOINT))?;
            }
        }
        Ok(())
    })?;
    Ok(TrainOutcome { stats, state })
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochStats>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate().skip(1) {
        let line = line?;
        out.push(EpochStats::parse_row(&line).with_context(|| format!("{}:{}: bad epoch row", path.display(), i + 1))?);
    }
    Ok(out)
}

pub enum EvalBacking<'a> {
    Rom(&'a RomModel),
    Plant,
}

pub fn evaluate(
    cfg: &RunConfig,
    ckpt: &Checkpoint,
    backing: EvalBacking<'_>,
    scenarios: &[Scenario],
) -> Result<(MetricsReport, Vec<EpisodeLog>)> {
    let b = match backing {
        EvalBacking::Rom(r) => Backing::Rom(r),
        EvalBacking::Plant => Backing::Plant {
            config: &cfg.plant,
            step_seconds: cfg.dt_rom(),
        },
    };
    Ok(evaluate_policy(&ckpt.state.policy, b, &cfg.plant, scenarios, true, cfg.train.seed)?)
}

pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn transfer(cfg: &RunConfig, ckpt: &Checkpoint, scenario: &Scenario, eta: f64) -> Result<EpisodeLog> {
    let backing = Backing::Plant {
        config: &cfg.plant,
        step_seconds: cfg.dt_rom(),
    };
    Ok(ppo::transfer_rollout(&ckpt.state.policy, backing, &cfg.plant, scenario, eta)?)
}

pub fn write_episode(log: &EpisodeLog, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    log.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Per-scenario episode files `episode_<seed>.csv` under `dir`.
pub fn write_episodes(logs: &[EpisodeLog], dir: &Path) -> Result<Vec<PathBuf>> {
    logs.iter()
        .map(|l| {
            let p = dir.join(format!("episode_{}.csv", l.scenario_seed));
            write_episode(l, &p)?;
            Ok(p)
        })
        .collect()
}
