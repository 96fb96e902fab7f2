//! Synthetic reference plant: one-group point kinetics coupled to lumped
//! thermal nodes, under a three-loop PID supervisory controller.
//!
//! All quantities are normalized. Power, flows and heat rates are fractions
//! of nominal; temperatures are `(T - T_ref) / 100 K`. Reactivity (`rho_ext`
//! and the feedback coefficients) is in absolute units, the same units as
//! `beta`.
//!
//! The precursor state is scaled so that it equals the power at equilibrium:
//! `c = C * Λ * λ_d / β`. With that scaling the kinetics read
//!
//! ```text
//! dP/dt = ((ρ - β) / Λ) P + (β / Λ) c
//! dc/dt = λ_d (P - c)
//! ```
//!
//! Thermal layout (primary loop, intermediate heat exchanger, secondary loop,
//! steam generator):
//!
//! ```text
//! τ_core  dT_co/dt = ΔT_core P      - ṁ_p (T_co - T_ci)
//! τ_hx_p  dT_ci/dt = ṁ_p (T_co - T_ci) - ΔT_core q_hx
//! τ_hx_s  dT_so/dt = ΔT_sec q_hx    - ṁ_s (T_so - T_si)
//! τ_sg    dT_si/dt = ṁ_s (T_so - T_si) - ΔT_sec q_sg
//! τ_q     dq_hx/dt = UA_hx ṁ_s^n (T̄_p - T̄_s) - q_hx
//! τ_q     dq_sg/dt = UA_sg (T̄_s - T_sink)    - q_sg
//! τ_p     dp/dt    = p_base + p_flow ṁ_p²    - p
//! ```
//!
//! The actuators (`rho_ext`, `mdot_p`, `mdot_s`) are held constant between
//! controller updates.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Number of integrated plant state variables (time excluded).
pub const N_STATE: usize = 12;

/// Lowest and highest admissible power setpoints.
pub const SETPOINT_MIN: f64 = 0.4;
pub const SETPOINT_MAX: f64 = 1.05;

const TRIM_TOL: f64 = 1e-8;

/// Names of the state variables in vector order.
pub const STATE_NAMES: [&str; N_STATE] = [
    "power",
    "precursor",
    "t_core_in",
    "t_core_out",
    "t_hx_s_in",
    "t_hx_s_out",
    "mdot_p",
    "mdot_s",
    "p_core_out",
    "q_hx",
    "q_sg",
    "rho_ext",
];

/// Trajectory CSV header.
pub const TRAJECTORY_HEADER: &str = "time,power,precursor,t_core_in,t_core_out,t_hx_s_in,t_hx_s_out,mdot_p,mdot_s,p_core_out,q_hx,q_sg,rho_ext,setpoint";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub power: f64,
    pub precursor: f64,
    pub t_core_in: f64,
    pub t_core_out: f64,
    pub t_hx_s_in: f64,
    pub t_hx_s_out: f64,
    pub mdot_p: f64,
    pub mdot_s: f64,
    pub p_core_out: f64,
    pub q_hx: f64,
    pub q_sg: f64,
    pub rho_ext: f64,
    pub time: f64,
}

impl PlantState {
    pub fn to_array(&self) -> [f64; N_STATE] {
        [
            self.power,
            self.precursor,
            self.t_core_in,
            self.t_core_out,
            self.t_hx_s_in,
            self.t_hx_s_out,
            self.mdot_p,
            self.mdot_s,
            self.p_core_out,
            self.q_hx,
            self.q_sg,
            self.rho_ext,
        ]
    }

    pub fn from_array(v: &[f64; N_STATE], time: f64) -> Self {
        PlantState {
            power: v[0],
            precursor: v[1],
            t_core_in: v[2],
            t_core_out: v[3],
            t_hx_s_in: v[4],
            t_hx_s_out: v[5],
            mdot_p: v[6],
            mdot_s: v[7],
            p_core_out: v[8],
            q_hx: v[9],
            q_sg: v[10],
            rho_ext: v[11],
            time,
        }
    }

    /// Value of a state variable by name (see [`STATE_NAMES`]).
    pub fn get(&self, name: &str) -> Option<f64> {
        let i = STATE_NAMES.iter().position(|n| *n == name)?;
        Some(self.to_array()[i])
    }

    fn check_finite(&self) -> Result<()> {
        let v = self.to_array();
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite plant state field `{}`",
                STATE_NAMES[i]
            )));
        }
        Ok(())
    }
}

/// Gains and saturation limits of one PID loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub out_min: f64,
    pub out_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub beta: f64,
    /// Neutron generation time Λ (s).
    pub lambda_gen: f64,
    /// Precursor decay constant (1/s).
    pub lambda_d: f64,
    pub alpha_f: f64,
    pub alpha_c: f64,
    pub t_core_out_nom: f64,
    pub t_core_in_nom: f64,
    /// Secondary temperature rise at nominal power and flow.
    pub sec_rise: f64,
    /// Steam-generator sink temperature.
    pub t_sink: f64,
    pub ua_sg: f64,
    /// Secondary flow exponent of the heat-exchanger conductance.
    pub hx_flow_exponent: f64,
    pub p_base: f64,
    pub p_flow_coeff: f64,
    pub tau_core: f64,
    pub tau_hx_p: f64,
    pub tau_hx_s: f64,
    pub tau_sg: f64,
    pub tau_q: f64,
    pub tau_p: f64,
    /// Controller update interval (s).
    pub dt_plant: f64,
    /// Largest internal Runge-Kutta substep (s). The prompt-neutron mode has
    /// an eigenvalue near -β/Λ, so this must stay well below 2.78 Λ/β.
    pub rk_substep: f64,
    pub power_pid: PidGains,
    pub outlet_pid: PidGains,
    pub inlet_pid: PidGains,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let beta = 0.0065;
        PlantConfig {
            beta,
            lambda_gen: 5e-4,
            lambda_d: 0.08,
            alpha_f: -0.003,
            alpha_c: -0.003,
            t_core_out_nom: 1.0,
            t_core_in_nom: 0.0,
            sec_rise: 0.3,
            t_sink: -1.5,
            ua_sg: 0.8,
            hx_flow_exponent: 0.8,
            p_base: 0.6,
            p_flow_coeff: 0.4,
            tau_core: 20.0,
            tau_hx_p: 20.0,
            tau_hx_s: 20.0,
            tau_sg: 30.0,
            tau_q: 20.0,
            tau_p: 5.0,
            dt_plant: 0.5,
            rk_substep: 0.05,
            power_pid: PidGains {
                kp: 0.003,
                ki: 0.0005,
                kd: 0.0,
                out_min: -0.5 * beta,
                out_max: 0.5 * beta,
            },
            outlet_pid: PidGains {
                kp: -1.5,
                ki: -0.1,
                kd: 0.0,
                out_min: 0.05,
                out_max: 1.5,
            },
            inlet_pid: PidGains {
                kp: -1.0,
                ki: -0.05,
                kd: 0.0,
                out_min: 0.05,
                out_max: 1.5,
            },
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("lambda_gen", self.lambda_gen),
            ("lambda_d", self.lambda_d),
            ("tau_core", self.tau_core),
            ("tau_hx_p", self.tau_hx_p),
            ("tau_hx_s", self.tau_hx_s),
            ("tau_sg", self.tau_sg),
            ("tau_q", self.tau_q),
            ("tau_p", self.tau_p),
            ("dt_plant", self.dt_plant),
            ("rk_substep", self.rk_substep),
            ("sec_rise", self.sec_rise),
            ("ua_sg", self.ua_sg),
            ("hx_flow_exponent", self.hx_flow_exponent),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("plant config `{name}` must be > 0, got {v}")));
            }
        }
        if self.core_rise() <= 0.0 {
            return Err(Error::contract("t_core_out_nom must exceed t_core_in_nom"));
        }
        if self.hx_drive(1.0) <= 0.0 {
            return Err(Error::contract(
                "secondary mean temperature at full power must lie below the primary mean",
            ));
        }
        Ok(())
    }

    /// Nominal core temperature rise.
    pub fn core_rise(&self) -> f64 {
        self.t_core_out_nom - self.t_core_in_nom
    }

    fn primary_mean_nom(&self) -> f64 {
        0.5 * (self.t_core_out_nom + self.t_core_in_nom)
    }

    /// Steady-state secondary mean temperature at a given power.
    fn secondary_mean_at(&self, power: f64) -> f64 {
        self.t_sink + power / self.ua_sg
    }

    fn hx_drive(&self, power: f64) -> f64 {
        self.primary_mean_nom() - self.secondary_mean_at(power)
    }

    /// Heat-exchanger conductance, fixed so that nominal secondary flow
    /// carries nominal power.
    pub fn ua_hx(&self) -> f64 {
        1.0 / self.hx_drive(1.0)
    }
}

/// Time derivatives of the twelve state variables, in [`STATE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRates(pub [f64; N_STATE]);

impl StateRates {
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let i = STATE_NAMES.iter().position(|n| *n == name)?;
        Some(self.0[i])
    }
}

fn rates(v: &[f64; N_STATE], cfg: &PlantConfig, ua_hx: f64) -> [f64; N_STATE] {
    let [power, prec, t_ci, t_co, t_si, t_so, mdot_p, mdot_s, p_co, q_hx, q_sg, rho_ext] = *v;
    let rho = rho_ext
        + cfg.alpha_f * (t_co - cfg.t_core_out_nom)
        + cfg.alpha_c * (t_ci - cfg.t_core_in_nom);
    let d_power = (rho - cfg.beta) / cfg.lambda_gen * power + cfg.beta / cfg.lambda_gen * prec;
    let d_prec = cfg.lambda_d * (power - prec);

    let core_flow_heat = mdot_p * (t_co - t_ci);
    let sec_flow_heat = mdot_s * (t_so - t_si);
    let d_t_co = (cfg.core_rise() * power - core_flow_heat) / cfg.tau_core;
    let d_t_ci = (core_flow_heat - cfg.core_rise() * q_hx) / cfg.tau_hx_p;
    let d_t_so = (cfg.sec_rise * q_hx - sec_flow_heat) / cfg.tau_hx_s;
    let d_t_si = (sec_flow_heat - cfg.sec_rise * q_sg) / cfg.tau_sg;

    let primary_mean = 0.5 * (t_co + t_ci);
    let secondary_mean = 0.5 * (t_so + t_si);
    let q_hx_target = ua_hx * mdot_s.max(0.0).powf(cfg.hx_flow_exponent) * (primary_mean - secondary_mean);
    let q_sg_target = cfg.ua_sg * (secondary_mean - cfg.t_sink);
    let d_q_hx = (q_hx_target - q_hx) / cfg.tau_q;
    let d_q_sg = (q_sg_target - q_sg) / cfg.tau_q;
    let d_p = (cfg.p_base + cfg.p_flow_coeff * mdot_p * mdot_p - p_co) / cfg.tau_p;

    [
        d_power, d_prec, d_t_ci, d_t_co, d_t_si, d_t_so, 0.0, 0.0, d_p, d_q_hx, d_q_sg, 0.0,
    ]
}

/// Time derivatives of the plant state.
pub fn plant_derivs(state: &PlantState, config: &PlantConfig) -> Result<StateRates> {
    state.check_finite()?;
    Ok(StateRates(rates(&state.to_array(), config, config.ua_hx())))
}

/// One classical fourth-order Runge-Kutta step of size `h`, no substepping.
pub fn rk4_step(state: &PlantState, config: &PlantConfig, h: f64) -> PlantState {
    let ua = config.ua_hx();
    let y = state.to_array();
    let add = |a: &[f64; N_STATE], k: &[f64; N_STATE], s: f64| {
        let mut out = *a;
        for (o, kv) in out.iter_mut().zip(k) {
            *o += s * kv;
        }
        out
    };
    let k1 = rates(&y, config, ua);
    let k2 = rates(&add(&y, &k1, 0.5 * h), config, ua);
    let k3 = rates(&add(&y, &k2, 0.5 * h), config, ua);
    let k4 = rates(&add(&y, &k3, h), config, ua);
    let mut next = y;
    for i in 0..N_STATE {
        next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    PlantState::from_array(&next, state.time + h)
}

/// Advance the plant by `dt` seconds with actuators held, using RK4 substeps
/// no larger than `config.rk_substep`.
pub fn plant_step(state: &PlantState, config: &PlantConfig, dt: f64) -> Result<PlantState> {
    if !(dt > 0.0 && dt <= 8.0 * config.dt_plant) {
        return Err(Error::contract(format!(
            "plant step dt = {dt} outside (0, {}]",
            8.0 * config.dt_plant
        )));
    }
    state.check_finite()?;
    let n = (dt / config.rk_substep - 1e-9).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let mut s = *state;
    for _ in 0..n {
        s = rk4_step(&s, config, h);
    }
    s.time = state.time + dt;
    if let Some(i) = s.to_array().iter().position(|v| !v.is_finite()) {
        return Err(Error::Integration {
            field: STATE_NAMES[i],
            time: s.time,
        });
    }
    Ok(s)
}

/// Steady state at the requested power with primary temperatures at their
/// nominal values and zero external reactivity.
pub fn trim(power_fraction: f64, config: &PlantConfig) -> Result<PlantState> {
    if !(SETPOINT_MIN..=SETPOINT_MAX).contains(&power_fraction) {
        return Err(Error::contract(format!(
            "trim power {power_fraction} outside [{SETPOINT_MIN}, {SETPOINT_MAX}]"
        )));
    }
    config.validate()?;
    let p = power_fraction;
    let mdot_p = p * config.core_rise() / (config.t_core_out_nom - config.t_core_in_nom);
    let drive = config.hx_drive(p);
    if drive <= 0.0 {
        return Err(Error::Trim { power: p, residual: f64::INFINITY });
    }
    // Steady heat-exchanger duty equals power; solve the conductance law for flow.
    let mdot_s = (p / (config.ua_hx() * drive)).powf(1.0 / config.hx_flow_exponent);
    let secondary_mean = config.secondary_mean_at(p);
    let rise = config.sec_rise * p / mdot_s;
    let state = PlantState {
        power: p,
        precursor: p,
        t_core_in: config.t_core_in_nom,
        t_core_out: config.t_core_out_nom,
        t_hx_s_in: secondary_mean - 0.5 * rise,
        t_hx_s_out: secondary_mean + 0.5 * rise,
        mdot_p,
        mdot_s,
        p_core_out: config.p_base + config.p_flow_coeff * mdot_p * mdot_p,
        q_hx: p,
        q_sg: p,
        rho_ext: 0.0,
        time: 0.0,
    };
    let residual = plant_derivs(&state, config)
        .map(|r| r.max_abs())
        .unwrap_or(f64::INFINITY);
    if !(residual < TRIM_TOL) || !(mdot_s > 0.0 && mdot_s <= 1.5) {
        return Err(Error::Trim { power: p, residual });
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral: f64,
    pub prev_error: f64,
    pub out_min: f64,
    pub out_max: f64,
}

impl PidState {
    pub fn new(gains: PidGains) -> Self {
        PidState {
            kp: gains.kp,
            ki: gains.ki,
            kd: gains.kd,
            integral: 0.0,
            prev_error: 0.0,
            out_min: gains.out_min,
            out_max: gains.out_max,
        }
    }

    /// Loop whose integral alone produces `output` at zero error.
    pub fn holding(gains: PidGains, output: f64) -> Self {
        let mut pid = PidState::new(gains);
        if gains.ki != 0.0 {
            pid.integral = output / gains.ki;
        }
        pid
    }

    /// One controller update with conditional-integration anti-windup.
    ///
    /// The integral is frozen when the output saturates and the error would
    /// push it further into saturation, and is always clamped so that
    /// `ki * integral` stays inside the output range.
    pub fn step(&self, setpoint: f64, measurement: f64, dt: f64) -> (f64, PidState) {
        assert!(dt > 0.0, "pid dt must be positive");
        let e = setpoint - measurement;
        let deriv = if self.kd != 0.0 {
            self.kd * (e - self.prev_error) / dt
        } else {
            0.0
        };
        let candidate = self.integral + e * dt;
        let raw = self.kp * e + self.ki * candidate + deriv;
        let push = if self.ki != 0.0 { self.ki * e } else { self.kp * e };
        let freeze = (raw > self.out_max && push > 0.0) || (raw < self.out_min && push < 0.0);
        let mut integral = if freeze { self.integral } else { candidate };
        if self.ki != 0.0 {
            let (a, b) = (self.out_min / self.ki, self.out_max / self.ki);
            integral = integral.clamp(a.min(b), a.max(b));
        }
        let output = (self.kp * e + self.ki * integral + deriv).clamp(self.out_min, self.out_max);
        let next = PidState {
            integral,
            prev_error: e,
            ..*self
        };
        (output, next)
    }
}

/// The three supervisory loops: power via reactivity, core outlet
/// temperature via primary flow, core inlet temperature via secondary flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supervisor {
    pub power: PidState,
    pub outlet: PidState,
    pub inlet: PidState,
}

impl Supervisor {
    /// Controllers initialised bumplessly on a steady state.
    pub fn at_trim(state: &PlantState, config: &PlantConfig) -> Self {
        Supervisor {
            power: PidState::holding(config.power_pid, state.rho_ext),
            outlet: PidState::holding(config.outlet_pid, state.mdot_p),
            inlet: PidState::holding(config.inlet_pid, state.mdot_s),
        }
    }
}

pub fn supervisory_step(
    state: &PlantState,
    power_setpoint: f64,
    pids: &Supervisor,
    config: &PlantConfig,
    dt: f64,
) -> Result<(PlantState, Supervisor)> {
    if !(SETPOINT_MIN..=SETPOINT_MAX).contains(&power_setpoint) {
        return Err(Error::contract(format!(
            "power setpoint {power_setpoint} outside [{SETPOINT_MIN}, {SETPOINT_MAX}]"
        )));
    }
    let (rho_ext, power) = pids.power.step(power_setpoint, state.power, dt);
    let (mdot_p, outlet) = pids.outlet.step(config.t_core_out_nom, state.t_core_out, dt);
    let (mdot_s, inlet) = pids.inlet.step(config.t_core_in_nom, state.t_core_in, dt);
    let actuated = PlantState {
        rho_ext,
        mdot_p,
        mdot_s,
        ..*state
    };
    let next = plant_step(&actuated, config, dt)?;
    Ok((next, Supervisor { power, outlet, inlet }))
}

/// A plant running under supervisory control.
#[derive(Debug, Clone)]
pub struct ControlledPlant {
    pub state: PlantState,
    pub pids: Supervisor,
    pub config: PlantConfig,
}

impl ControlledPlant {
    pub fn at_trim(power: f64, config: &PlantConfig) -> Result<Self> {
        let state = trim(power, config)?;
        Ok(ControlledPlant {
            pids: Supervisor::at_trim(&state, config),
            state,
            config: config.clone(),
        })
    }

    /// Hold `setpoint` for `duration` seconds of controller updates.
    pub fn advance(&mut self, setpoint: f64, duration: f64) -> Result<()> {
        let n = steps_in(duration, self.config.dt_plant)?;
        for _ in 0..n {
            let (s, p) = supervisory_step(&self.state, setpoint, &self.pids, &self.config, self.config.dt_plant)?;
            self.state = s;
            self.pids = p;
        }
        Ok(())
    }
}

/// Integer number of `step`s in `duration`, or an error when not a multiple.
pub fn steps_in(duration: f64, step: f64) -> Result<usize> {
    let n = (duration / step).round();
    if n < 1.0 || ((n * step) - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(Error::contract(format!(
            "duration {duration} s is not a positive multiple of {step} s"
        )));
    }
    Ok(n as usize)
}

/// One recorded sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub state: PlantState,
    pub setpoint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOptions {
    /// Interval over which each demand sample is held as setpoint (s).
    pub dt_hold: f64,
    /// Recording interval (s).
    pub dt_record: f64,
    /// Standard deviation of a random offset added to each held setpoint.
    pub dither: f64,
    /// Leave the opening hold at the initial demand undithered.
    pub steady_start: bool,
    pub seed: u64,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        TrackingOptions {
            dt_hold: 25.0,
            dt_record: 5.0,
            dither: 0.02,
            steady_start: true,
            seed: 0,
        }
    }
}

/// Drive the plant through a demand curve sampled every `dt_hold` seconds,
/// recording every `dt_record` seconds. Row `k` carries the setpoint applied
/// from its time onward.
pub fn simulate_tracking(
    demand: &[f64],
    config: &PlantConfig,
    opts: &TrackingOptions,
) -> Result<Vec<TrajectoryRow>> {
    if demand.len() < 2 {
        return Err(Error::contract("demand curve needs at least two samples"));
    }
    let per_hold = steps_in(opts.dt_hold, opts.dt_record)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, opts.dither.max(0.0))
        .map_err(|e| Error::contract(format!("dither: {e}")))?;
    let mut plant = ControlledPlant::at_trim(demand[0], config)?;
    let mut rows = Vec::with_capacity(demand.len() * per_hold);
    let mut departed = false;
    for &d in &demand[..demand.len() - 1] {
        let mut sp = d;
        departed |= d != demand[0];
        if opts.dither > 0.0 && (departed || !opts.steady_start) {
            sp = (d + noise.sample(&mut rng)).clamp(SETPOINT_MIN, SETPOINT_MAX);
        }
        for _ in 0..per_hold {
            rows.push(TrajectoryRow { state: plant.state, setpoint: sp });
            plant.advance(sp, opts.dt_record)?;
        }
    }
    rows.push(TrajectoryRow {
        state: plant.state,
        setpoint: demand[demand.len() - 1],
    });
    Ok(rows)
}

pub fn write_trajectory_csv<W: Write>(mut w: W, rows: &[TrajectoryRow]) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        let s = &r.state;
        write!(w, "{}", fmt_num(s.time))?;
        for v in s.to_array() {
            write!(w, ",{}", fmt_num(v))?;
        }
        writeln!(w, ",{}", fmt_num(r.setpoint))?;
    }
    Ok(())
}

pub fn read_trajectory_csv<R: BufRead>(r: R, path: &str) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != TRAJECTORY_HEADER {
                return Err(Error::parse(path, 1, "unexpected trajectory header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if vals.len() != N_STATE + 2 {
            return Err(Error::parse(path, i + 1, format!("expected {} fields", N_STATE + 2)));
        }
        let mut a = [0.0; N_STATE];
        a.copy_from_slice(&vals[1..=N_STATE]);
        rows.push(TrajectoryRow {
            state: PlantState::from_array(&a, vals[0]),
            setpoint: vals[N_STATE + 1],
        });
    }
    Ok(rows)
}

/// Shortest decimal that round-trips the value exactly.
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}
