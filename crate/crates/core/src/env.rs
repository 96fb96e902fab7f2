//! Constrained load-following environment: scenario generation, observation
//! assembly, vector rewards and constraint indicators, backed either by an
//! identified model or by the reference plant.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::plant::{fmt_num, steps_in, trim, ControlledPlant, PlantConfig};
use crate::seed;
use crate::sysid::{rom_state, RomModel, ROM_STATE_NAMES};

/// Action (power setpoint) bounds.
pub const ACTION_MIN: f64 = 0.4;
pub const ACTION_MAX: f64 = 1.05;

/// Number of constraints.
pub const N_CONSTRAINTS: usize = 2;

pub const SCENARIO_HEADER: &str = "t,demand,c_in_min,c_out_max";
pub const EPISODE_HEADER: &str = "t,action,demand,c_in_min,c_out_max,t_hx_s_in,t_hx_s_out,r0,c1,c2";

const STREAM_DEMAND: u64 = 1;
const STREAM_BOUNDS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::contract(format!("unknown split `{s}`"))),
        }
    }
}

/// Demand-curve generator settings. Counts and durations are in model steps,
/// rates in power fraction per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandParams {
    pub initial_hold: (usize, usize),
    pub ramps: (usize, usize),
    pub first_level: (f64, f64),
    pub level: (f64, f64),
    pub max_rate: f64,
    /// Each ramp runs at `max_rate * U(min_rate_fraction, 1)`.
    pub min_rate_fraction: f64,
    pub hold: (usize, usize),
}

impl Default for DemandParams {
    fn default() -> Self {
        DemandParams {
            initial_hold: (10, 40),
            ramps: (1, 3),
            first_level: (0.5, 0.9),
            level: (0.5, 1.0),
            max_rate: 0.01,
            min_rate_fraction: 0.3,
            hold: (10, 60),
        }
    }
}

/// Constraint-schedule generator settings.
///
/// The inlet minimum starts at the steady secondary inlet temperature of a
/// random floor power; the outlet maximum starts a random margin above the
/// full-power steady outlet temperature. Step changes only relax a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintParams {
    pub floor_power: (f64, f64),
    pub outlet_margin: (f64, f64),
    pub max_steps: usize,
    pub inlet_relax: (f64, f64),
    pub outlet_relax: (f64, f64),
}

impl Default for ConstraintParams {
    fn default() -> Self {
        ConstraintParams {
            floor_power: (0.55, 0.97),
            outlet_margin: (0.01, 0.1),
            max_steps: 2,
            inlet_relax: (0.02, 0.3),
            outlet_relax: (0.01, 0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub c_in_min: Vec<f64>,
    pub c_out_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    /// Horizon T in model steps; curves hold T + 1 samples.
    pub horizon: usize,
    pub demand: Vec<f64>,
    pub bounds: Bounds,
    pub split: Split,
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn uniform_count(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Piecewise-linear demand: hold at 1.0, then rate-limited ramps to random
/// levels with holds in between. Returns `T + 1` samples.
pub fn gen_demand(seed: u64, horizon: usize, params: &DemandParams) -> Result<Vec<f64>> {
    if horizon < 2 {
        return Err(Error::contract("demand horizon must be >= 2"));
    }
    let mut rng = seed::rng(seed, &[STREAM_DEMAND]);
    let mut d = vec![1.0; horizon + 1];
    let mut t = uniform_count(&mut rng, params.initial_hold);
    let mut level = 1.0_f64;
    let n_ramps = uniform_count(&mut rng, params.ramps);
    for r in 0..n_ramps {
        if t > horizon {
            break;
        }
        let target = uniform(&mut rng, if r == 0 { params.first_level } else { params.level });
        let rate = params.max_rate * uniform(&mut rng, (params.min_rate_fraction, 1.0));
        while t <= horizon && level != target {
            level = if (target - level).abs() <= rate {
                target
            } else {
                level + rate * (target - level).signum()
            };
            d[t] = level;
            t += 1;
        }
        let hold = uniform_count(&mut rng, params.hold);
        let end = (t + hold).min(horizon + 1);
        d[t.min(horizon + 1)..end].fill(level);
        t = end;
    }
    if t <= horizon {
        d[t..].fill(level);
    }
    Ok(d)
}

/// Step-wise constant bounds with up to `max_steps` relaxing step changes.
pub fn gen_constraint_schedule(
    seed: u64,
    horizon: usize,
    params: &ConstraintParams,
    plant: &PlantConfig,
) -> Result<Bounds> {
    if horizon < 2 {
        return Err(Error::contract("constraint horizon must be >= 2"));
    }
    let mut rng = seed::rng(seed, &[STREAM_BOUNDS]);
    let floor = uniform(&mut rng, params.floor_power);
    let margin = uniform(&mut rng, params.outlet_margin);
    let c_in0 = trim(floor, plant)?.t_hx_s_in;
    let c_out0 = trim(1.0, plant)?.t_hx_s_out + margin;
    let mut c_in_min = vec![c_in0; horizon + 1];
    let mut c_out_max = vec![c_out0; horizon + 1];
    let n_steps = uniform_count(&mut rng, (0, params.max_steps));
    for _ in 0..n_steps {
        let at = rng.random_range(1..=horizon);
        if rng.random_bool(0.5) {
            let dv = uniform(&mut rng, params.inlet_relax);
            c_in_min[at..].iter_mut().for_each(|v| *v -= dv);
        } else {
            let dv = uniform(&mut rng, params.outlet_relax);
            c_out_max[at..].iter_mut().for_each(|v| *v += dv);
        }
    }
    Ok(Bounds { c_in_min, c_out_max })
}

impl Scenario {
    pub fn generate(
        seed: u64,
        horizon: usize,
        split: Split,
        demand: &DemandParams,
        constraints: &ConstraintParams,
        plant: &PlantConfig,
    ) -> Result<Self> {
        Ok(Scenario {
            seed,
            horizon,
            demand: gen_demand(seed, horizon, demand)?,
            bounds: gen_constraint_schedule(seed, horizon, constraints, plant)?,
            split,
        })
    }

    fn check(&self) -> Result<()> {
        let n = self.horizon + 1;
        if self.horizon < 1
            || self.demand.len() != n
            || self.bounds.c_in_min.len() != n
            || self.bounds.c_out_max.len() != n
        {
            return Err(Error::contract(format!("scenario {}: curve lengths disagree with horizon", self.seed)));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# seed={} split={}", self.seed, self.split)?;
        writeln!(w, "{SCENARIO_HEADER}")?;
        for t in 0..=self.horizon {
            writeln!(
                w,
                "{t},{},{},{}",
                fmt_num(self.demand[t]),
                fmt_num(self.bounds.c_in_min[t]),
                fmt_num(self.bounds.c_out_max[t])
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty scenario file"))?;
        let meta = meta?;
        let mut seed = None;
        let mut split = None;
        for tok in meta.trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("split", v)) => split = v.parse::<Split>().ok(),
                _ => {}
            }
        }
        let (seed, split) = match (seed, split) {
            (Some(s), Some(p)) => (s, p),
            _ => return Err(Error::parse(path, 1, "expected `# seed=<u64> split=<train|val|test>`")),
        };
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == SCENARIO_HEADER => {}
            _ => return Err(Error::parse(path, 2, "unexpected scenario header")),
        }
        let (mut demand, mut c_in, mut c_out) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::parse(path, i + 1, e.to_string()));
            if f.len() != 4 || f[0].trim().parse::<usize>().ok() != Some(demand.len()) {
                return Err(Error::parse(path, i + 1, "expected `t,demand,c_in_min,c_out_max` with consecutive t"));
            }
            demand.push(parse(f[1])?);
            c_in.push(parse(f[2])?);
            c_out.push(parse(f[3])?);
        }
        if demand.len() < 3 {
            return Err(Error::parse(path, 2, "scenario needs at least three rows"));
        }
        Ok(Scenario {
            seed,
            horizon: demand.len() - 1,
            demand,
            bounds: Bounds { c_in_min: c_in, c_out_max: c_out },
            split,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub train: Vec<Scenario>,
    pub val: Vec<Scenario>,
    pub test: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn split(&self, s: Split) -> &[Scenario] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scenario> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// Regroup loose scenarios by their split tag, preserving order.
    pub fn from_scenarios(all: Vec<Scenario>) -> Self {
        let mut set = ScenarioSet { train: vec![], val: vec![], test: vec![] };
        for s in all {
            match s.split {
                Split::Train => set.train.push(s),
                Split::Val => set.val.push(s),
                Split::Test => set.test.push(s),
            }
        }
        set
    }
}

/// Scenario seeds derived from `master_seed` by counter; a bijective mix
/// keeps them distinct.
pub fn scenario_seed(master_seed: u64, index: u64) -> u64 {
    seed::splitmix64(master_seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioParams {
    pub demand: DemandParams,
    pub constraints: ConstraintParams,
}

pub fn make_scenario_set(
    master_seed: u64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    horizon: usize,
    params: &ScenarioParams,
    plant: &PlantConfig,
) -> Result<ScenarioSet> {
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::contract("every split needs at least one scenario"));
    }
    let mut idx = 0u64;
    let mut make = |n: usize, split: Split| -> Result<Vec<Scenario>> {
        (0..n)
            .map(|_| {
                let s = scenario_seed(master_seed, idx);
                idx += 1;
                Scenario::generate(s, horizon, split, &params.demand, &params.constraints, plant)
            })
            .collect()
    };
    Ok(ScenarioSet {
        train: make(n_train, Split::Train)?,
        val: make(n_val, Split::Val)?,
        test: make(n_test, Split::Test)?,
    })
}

/// Indicator costs: inlet below its minimum, outlet above its maximum.
/// Equality with a bound is safe.
pub fn constraint_indicator(t_in: f64, t_out: f64, c_in_min: f64, c_out_max: f64) -> [f64; N_CONSTRAINTS] {
    [
        f64::from(u8::from(c_in_min - t_in > 0.0)),
        f64::from(u8::from(t_out - c_out_max > 0.0)),
    ]
}

pub fn primary_reward(demand: f64, action: f64) -> f64 {
    -(demand - action).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardVector {
    pub r0: f64,
    pub costs: [f64; N_CONSTRAINTS],
}

/// One environment transition as logged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub action: f64,
    pub demand: f64,
    /// Bounds the post-step state is judged against.
    pub c_in_min: f64,
    pub c_out_max: f64,
    pub t_in: f64,
    pub t_out: f64,
    pub reward: RewardVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub scenario_seed: u64,
    pub steps: Vec<StepRecord>,
    /// Set when the episode ended early; carries the reason.
    pub truncated: Option<String>,
}

impl EpisodeLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{EPISODE_HEADER}")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.t,
                fmt_num(s.action),
                fmt_num(s.demand),
                fmt_num(s.c_in_min),
                fmt_num(s.c_out_max),
                fmt_num(s.t_in),
                fmt_num(s.t_out),
                fmt_num(s.reward.r0),
                s.reward.costs[0],
                s.reward.costs[1]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, path: &str, scenario_seed: u64) -> Result<Self> {
        let mut steps = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != EPISODE_HEADER {
                    return Err(Error::parse(path, 1, "unexpected episode header"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if v.len() != 10 {
                return Err(Error::parse(path, i + 1, "expected 10 fields"));
            }
            steps.push(StepRecord {
                t: v[0] as usize,
                action: v[1],
                demand: v[2],
                c_in_min: v[3],
                c_out_max: v[4],
                t_in: v[5],
                t_out: v[6],
                reward: RewardVector { r0: v[7], costs: [v[8], v[9]] },
            });
        }
        Ok(EpisodeLog { scenario_seed, steps, truncated: None })
    }
}

/// Dynamics behind an environment.
#[derive(Debug, Clone, Copy)]
pub enum Backing<'a> {
    Rom(&'a RomModel),
    /// Reference plant under supervisory control, advanced `step_seconds`
    /// per environment step.
    Plant { config: &'a PlantConfig, step_seconds: f64 },
}

#[derive(Debug, Clone)]
enum ModelState {
    Rom(Vec<f64>),
    Plant(Box<ControlledPlant>),
}

/// An episode in progress over one scenario.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    backing: Backing<'a>,
    scenario: &'a Scenario,
    state: ModelState,
    t: usize,
    last_action: Option<f64>,
    idx_in: usize,
    idx_out: usize,
    plant_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: RewardVector,
    pub done: bool,
    pub record: StepRecord,
}

impl<'a> Env<'a> {
    /// Start an episode at the steady state for the initial demand.
    pub fn reset(backing: Backing<'a>, scenario: &'a Scenario, plant: &PlantConfig) -> Result<(Self, Vec<f64>)> {
        scenario.check()?;
        let start = trim(scenario.demand[0], plant)?;
        let pos = |n: &str| ROM_STATE_NAMES.iter().position(|s| *s == n).expect("known state");
        let (state, idx_in, idx_out, plant_steps) = match backing {
            Backing::Rom(rom) => {
                if rom.n_state() != ROM_STATE_NAMES.len()
                    || rom.state_names.iter().zip(ROM_STATE_NAMES).any(|(a, b)| a != b)
                {
                    return Err(Error::contract("model state does not match the plant's reduced state"));
                }
                (ModelState::Rom(rom_state(&start)), pos("t_hx_s_in"), pos("t_hx_s_out"), 0)
            }
            Backing::Plant { config: cfg, step_seconds } => {
                let p = ControlledPlant::at_trim(scenario.demand[0], cfg)?;
                let n = steps_in(step_seconds, cfg.dt_plant)?;
                (ModelState::Plant(Box::new(p)), pos("t_hx_s_in"), pos("t_hx_s_out"), n)
            }
        };
        let env = Env {
            backing,
            scenario,
            state,
            t: 0,
            last_action: None,
            idx_in,
            idx_out,
            plant_steps,
        };
        let obs = env.observation();
        Ok((env, obs))
    }

    /// Plant-backed environments advance this long per step (s).
    pub fn step_duration(&self) -> f64 {
        match self.backing {
            Backing::Rom(r) => r.dt_rom,
            Backing::Plant { config, .. } => self.plant_steps as f64 * config.dt_plant,
        }
    }

    pub fn state(&self) -> Vec<f64> {
        match &self.state {
            ModelState::Rom(x) => x.clone(),
            ModelState::Plant(p) => rom_state(&p.state),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.scenario.horizon
    }

    pub fn last_action(&self) -> Option<f64> {
        self.last_action
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn obs_dim() -> usize {
        ROM_STATE_NAMES.len() + N_CONSTRAINTS + 1
    }

    /// `[x_t, c_in_min_t, c_out_max_t, demand_t]`.
    pub fn observation(&self) -> Vec<f64> {
        let mut o = self.state();
        o.push(self.scenario.bounds.c_in_min[self.t]);
        o.push(self.scenario.bounds.c_out_max[self.t]);
        o.push(self.scenario.demand[self.t]);
        o
    }

    pub fn step(&mut self, action: f64) -> Result<Step> {
        if self.t >= self.scenario.horizon {
            return Err(Error::contract("step after episode end"));
        }
        if !(ACTION_MIN..=ACTION_MAX).contains(&action) {
            return Err(Error::contract(format!("action {action} outside [{ACTION_MIN}, {ACTION_MAX}]")));
        }
        match &mut self.state {
            ModelState::Rom(x) => {
                let Backing::Rom(rom) = self.backing else { unreachable!() };
                let next = rom.step(x, &[action])?;
                *x = next;
            }
            ModelState::Plant(p) => {
                let dur = self.plant_steps as f64 * p.config.dt_plant;
                p.advance(action, dur)?;
            }
        }
        let demand = self.scenario.demand[self.t];
        self.t += 1;
        self.last_action = Some(action);
        let x = self.state();
        let (t_in, t_out) = (x[self.idx_in], x[self.idx_out]);
        let c_in_min = self.scenario.bounds.c_in_min[self.t];
        let c_out_max = self.scenario.bounds.c_out_max[self.t];
        let reward = RewardVector {
            r0: primary_reward(demand, action),
            costs: constraint_indicator(t_in, t_out, c_in_min, c_out_max),
        };
        let record = StepRecord {
            t: self.t - 1,
            action,
            demand,
            c_in_min,
            c_out_max,
            t_in,
            t_out,
            reward,
        };
        Ok(Step {
            obs: self.observation(),
            reward,
            done: self.t == self.scenario.horizon,
            record,
        })
    }
}
