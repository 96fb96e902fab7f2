//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, unknown keys are an error.
//! Every key has a default, so an empty file is a valid configuration.
//! `RunConfig::to_text` prints every key in a fixed order and is the input
//! of the configuration hash stored in checkpoints.

use std::path::Path;

use crate::env::{ConstraintParams, DemandParams, ScenarioParams};
use crate::error::{Error, Result};
use crate::plant::{fmt_num, PlantConfig, TrackingOptions};
use crate::ppo::TrainConfig;
use crate::sysid::IdentifyOptions;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub demand: DemandParams,
    pub constraints: ConstraintParams,
    pub identify: IdentifyOptions,
    pub train: TrainConfig,
    pub master_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Number of training scenarios simulated on the plant for sysid.
    pub sysid_trajectories: usize,
    pub sysid_dither: f64,
    pub sysid_steady_start: bool,
    pub checkpoint_every: usize,
    /// Transfer action-rate limit per step.
    pub eta: f64,
    /// Write measured wall time into the epoch log; off keeps outputs
    /// byte-reproducible.
    pub record_wall_time: bool,
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            plant: PlantConfig::default(),
            demand: DemandParams::default(),
            constraints: ConstraintParams::default(),
            identify: IdentifyOptions::default(),
            train: TrainConfig::default(),
            master_seed: 7,
            n_train: 1200,
            n_val: 10,
            n_test: 30,
            sysid_trajectories: 60,
            sysid_dither: 0.02,
            sysid_steady_start: true,
            checkpoint_every: 10,
            eta: 5e-4,
            record_wall_time: false,
            log_level: "info".into(),
        }
    }
}

enum Field<'a> {
    F(&'a mut f64),
    U(&'a mut usize),
    U64(&'a mut u64),
    B(&'a mut bool),
    S(&'a mut String),
    UList(&'a mut Vec<usize>),
    OptPair(&'a mut Option<[f64; 2]>),
}

impl Field<'_> {
    fn show(&self) -> String {
        match self {
            Field::F(v) => fmt_num(**v),
            Field::U(v) => v.to_string(),
            Field::U64(v) => v.to_string(),
            Field::B(v) => v.to_string(),
            Field::S(v) => v.to_string(),
            Field::UList(v) => v.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            Field::OptPair(v) => match v {
                None => "none".into(),
                Some([a, b]) => format!("{},{}", fmt_num(*a), fmt_num(*b)),
            },
        }
    }

    fn set(&mut self, text: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.trim().parse::<T>().map_err(|e| format!("cannot parse `{s}`: {e}"))
        }
        match self {
            Field::F(v) => **v = num(text)?,
            Field::U(v) => **v = num(text)?,
            Field::U64(v) => **v = num(text)?,
            Field::B(v) => **v = num(text)?,
            Field::S(v) => **v = text.trim().to_string(),
            Field::UList(v) => {
                **v = text.split(',').map(num).collect::<std::result::Result<_, _>>()?;
            }
            Field::OptPair(v) => {
                let t = text.trim();
                **v = if t.eq_ignore_ascii_case("none") {
                    None
                } else {
                    let p: Vec<f64> = t.split(',').map(num).collect::<std::result::Result<_, _>>()?;
                    if p.len() != 2 {
                        return Err("expected `none` or two comma-separated values".into());
                    }
                    Some([p[0], p[1]])
                };
            }
        }
        Ok(())
    }
}

impl RunConfig {
    fn fields(&mut self) -> Vec<(&'static str, Field<'_>)> {
        use Field::*;
        let p = &mut self.plant;
        let d = &mut self.demand;
        let c = &mut self.constraints;
        let i = &mut self.identify;
        let t = &mut self.train;
        vec![
            ("master_seed", U64(&mut self.master_seed)),
            ("n_train", U(&mut self.n_train)),
            ("n_val", U(&mut self.n_val)),
            ("n_test", U(&mut self.n_test)),
            ("T", U(&mut t.horizon)),
            ("beta", F(&mut p.beta)),
            ("lambda_gen", F(&mut p.lambda_gen)),
            ("lambda_d", F(&mut p.lambda_d)),
            ("alpha_f", F(&mut p.alpha_f)),
            ("alpha_c", F(&mut p.alpha_c)),
            ("t_core_out_nom", F(&mut p.t_core_out_nom)),
            ("t_core_in_nom", F(&mut p.t_core_in_nom)),
            ("sec_rise", F(&mut p.sec_rise)),
            ("t_sink", F(&mut p.t_sink)),
            ("ua_sg", F(&mut p.ua_sg)),
            ("hx_flow_exponent", F(&mut p.hx_flow_exponent)),
            ("p_base", F(&mut p.p_base)),
            ("p_flow_coeff", F(&mut p.p_flow_coeff)),
            ("tau_core", F(&mut p.tau_core)),
            ("tau_hx_p", F(&mut p.tau_hx_p)),
            ("tau_hx_s", F(&mut p.tau_hx_s)),
            ("tau_sg", F(&mut p.tau_sg)),
            ("tau_q", F(&mut p.tau_q)),
            ("tau_p", F(&mut p.tau_p)),
            ("dt_plant", F(&mut p.dt_plant)),
            ("rk_substep", F(&mut p.rk_substep)),
            ("power_kp", F(&mut p.power_pid.kp)),
            ("power_ki", F(&mut p.power_pid.ki)),
            ("power_kd", F(&mut p.power_pid.kd)),
            ("power_out_min", F(&mut p.power_pid.out_min)),
            ("power_out_max", F(&mut p.power_pid.out_max)),
            ("outlet_kp", F(&mut p.outlet_pid.kp)),
            ("outlet_ki", F(&mut p.outlet_pid.ki)),
            ("outlet_kd", F(&mut p.outlet_pid.kd)),
            ("outlet_out_min", F(&mut p.outlet_pid.out_min)),
            ("outlet_out_max", F(&mut p.outlet_pid.out_max)),
            ("inlet_kp", F(&mut p.inlet_pid.kp)),
            ("inlet_ki", F(&mut p.inlet_pid.ki)),
            ("inlet_kd", F(&mut p.inlet_pid.kd)),
            ("inlet_out_min", F(&mut p.inlet_pid.out_min)),
            ("inlet_out_max", F(&mut p.inlet_pid.out_max)),
            ("demand_initial_hold_min", U(&mut d.initial_hold.0)),
            ("demand_initial_hold_max", U(&mut d.initial_hold.1)),
            ("demand_ramps_min", U(&mut d.ramps.0)),
            ("demand_ramps_max", U(&mut d.ramps.1)),
            ("demand_first_level_min", F(&mut d.first_level.0)),
            ("demand_first_level_max", F(&mut d.first_level.1)),
            ("demand_level_min", F(&mut d.level.0)),
            ("demand_level_max", F(&mut d.level.1)),
            ("demand_max_rate", F(&mut d.max_rate)),
            ("demand_min_rate_fraction", F(&mut d.min_rate_fraction)),
            ("demand_hold_min", U(&mut d.hold.0)),
            ("demand_hold_max", U(&mut d.hold.1)),
            ("floor_power_min", F(&mut c.floor_power.0)),
            ("floor_power_max", F(&mut c.floor_power.1)),
            ("outlet_margin_min", F(&mut c.outlet_margin.0)),
            ("outlet_margin_max", F(&mut c.outlet_margin.1)),
            ("constraint_max_steps", U(&mut c.max_steps)),
            ("inlet_relax_min", F(&mut c.inlet_relax.0)),
            ("inlet_relax_max", F(&mut c.inlet_relax.1)),
            ("outlet_relax_min", F(&mut c.outlet_relax.0)),
            ("outlet_relax_max", F(&mut c.outlet_relax.1)),
            ("sysid_trajectories", U(&mut self.sysid_trajectories)),
            ("sysid_dither", F(&mut self.sysid_dither)),
            ("sysid_steady_start", B(&mut self.sysid_steady_start)),
            ("sysid_degree", U(&mut i.degree)),
            ("sysid_include_control", B(&mut i.include_control)),
            ("sysid_threshold", F(&mut i.threshold)),
            ("sysid_max_iters", U(&mut i.max_iters)),
            ("sysid_holdout_fraction", F(&mut i.holdout_fraction)),
            ("subsample_factor", U(&mut i.subsample_factor)),
            ("dt_record", F(&mut i.dt_record)),
            ("gamma", F(&mut t.gamma)),
            ("gae_lambda", F(&mut t.gae_lambda)),
            ("clip_eps", F(&mut t.clip_eps)),
            ("kl_threshold", F(&mut t.kl_threshold)),
            ("delta", F(&mut t.delta)),
            ("lambda_lr", F(&mut t.lambda_lr)),
            ("policy_lr", F(&mut t.policy_lr)),
            ("value_lr", F(&mut t.value_lr)),
            ("epochs", U(&mut t.epochs)),
            ("workers", U(&mut t.workers)),
            ("sub_episodes", U(&mut t.sub_episodes)),
            ("policy_iters", U(&mut t.policy_iters)),
            ("value_iters", U(&mut t.value_iters)),
            ("fixed_lambda", OptPair(&mut t.fixed_lambda)),
            ("seed", U64(&mut t.seed)),
            ("hidden", UList(&mut t.hidden)),
            ("log_std_min", F(&mut t.log_std_min)),
            ("log_std_max", F(&mut t.log_std_max)),
            ("init_log_std", F(&mut t.init_log_std)),
            ("checkpoint_every", U(&mut self.checkpoint_every)),
            ("eta", F(&mut self.eta)),
            ("record_wall_time", B(&mut self.record_wall_time)),
            ("log_level", S(&mut self.log_level)),
        ]
    }

    /// All recognised keys in canonical order.
    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().fields().into_iter().map(|(k, _)| k).collect()
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut unknown = Vec::new();
        let mut seen = std::collections::HashSet::new();
        {
            let mut fields = cfg.fields();
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
                let k = k.trim();
                match fields.iter_mut().find(|(name, _)| *name == k) {
                    Some((_, f)) => {
                        if !seen.insert(k.to_string()) {
                            return Err(Error::parse(path, i + 1, format!("duplicate key `{k}`")));
                        }
                        f.set(v).map_err(|e| Error::parse(path, i + 1, format!("{k}: {e}")))?;
                    }
                    None => unknown.push(format!("`{k}` (line {})", i + 1)),
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::contract(format!("{path}: unknown keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::contract(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Checks that do not depend on the command; the discount budget is
    /// checked by `validate_training`.
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::contract("scenario counts must be >= 1"));
        }
        if self.sysid_trajectories < 2 || self.sysid_trajectories > self.n_train {
            return Err(Error::contract("sysid_trajectories must lie in [2, n_train]"));
        }
        if !(self.sysid_dither >= 0.0) {
            return Err(Error::contract("sysid_dither must be >= 0"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::contract("eta must be > 0 (use inf to disable clipping)"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::contract("checkpoint_every must be >= 1"));
        }
        if self.identify.subsample_factor == 0 || !(self.identify.dt_record > 0.0) {
            return Err(Error::contract("subsample_factor and dt_record must be positive"));
        }
        if self.train.horizon < 2 {
            return Err(Error::contract("T must be >= 2"));
        }
        Ok(())
    }

    pub fn validate_training(&self) -> Result<()> {
        self.validate()?;
        self.train.validate()
    }

    /// ROM step length in seconds.
    pub fn dt_rom(&self) -> f64 {
        self.identify.dt_record * self.identify.subsample_factor as f64
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            demand: self.demand.clone(),
            constraints: self.constraints.clone(),
        }
    }

    /// Plant tracking options for the sysid trajectory of one scenario.
    pub fn tracking_options(&self, seed: u64) -> TrackingOptions {
        TrackingOptions {
            dt_hold: self.dt_rom(),
            dt_record: self.identify.dt_record,
            dither: self.sysid_dither,
            steady_start: self.sysid_steady_start,
            seed,
        }
    }

    pub fn to_text(&self) -> String {
        let mut c = self.clone();
        c.fields()
            .iter()
            .map(|(k, f)| format!("{k} = {}\n", f.show()))
            .collect()
    }

    /// FNV-1a hash of the canonical text.
    pub fn hash(&self) -> u64 {
        fnv1a(self.to_text().as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
}
