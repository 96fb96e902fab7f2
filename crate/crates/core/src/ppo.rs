//! Chance-constrained PPO with monotone Lagrange multipliers.
//!
//! Each epoch collects full episodes from parallel workers, scores them with
//! the penalized reward `r0 - Σ λ_k c_k`, estimates advantages by GAE over
//! sub-episode segments, then runs many PPO-clip policy steps and value
//! regression steps (fast timescale) followed by a single multiplier update
//! (slow timescale).

use std::time::Instant;

use log::{debug, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::env::{Backing, Env, EpisodeLog, RewardVector, Scenario, ACTION_MAX, ACTION_MIN, N_CONSTRAINTS};
use crate::error::{Error, Result};
use crate::nn::{gaussian_entropy, Adam, Mlp, Policy};
use crate::plant::PlantConfig;
use crate::seed;

/// Fraction of dropped episodes above which an epoch fails.
pub const MAX_DROP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    /// GAE weighting ξ.
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub kl_threshold: f64,
    /// Per-constraint violation budget δ.
    pub delta: f64,
    pub lambda_lr: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub epochs: usize,
    pub workers: usize,
    pub horizon: usize,
    pub sub_episodes: usize,
    pub policy_iters: usize,
    pub value_iters: usize,
    pub fixed_lambda: Option<[f64; N_CONSTRAINTS]>,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub init_log_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            kl_threshold: 0.015,
            delta: 0.05,
            lambda_lr: 5e-3,
            policy_lr: 3e-4,
            value_lr: 3e-4,
            epochs: 150,
            workers: 8,
            horizon: 300,
            sub_episodes: 5,
            policy_iters: 80,
            value_iters: 80,
            fixed_lambda: None,
            seed: 0,
            hidden: vec![64, 64],
            log_std_min: -5.0,
            log_std_max: 1.0,
            init_log_std: -1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.gamma) {
            return Err(Error::contract(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::contract("gae_lambda must lie in [0, 1]"));
        }
        if !open(self.clip_eps) {
            return Err(Error::contract("clip_eps must lie in (0, 1)"));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("lambda_lr", self.lambda_lr),
            ("policy_lr", self.policy_lr),
            ("value_lr", self.value_lr),
            ("kl_threshold", self.kl_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.workers == 0 || self.epochs == 0 || self.sub_episodes == 0 || self.horizon < 2 {
            return Err(Error::contract("workers, epochs and sub_episodes must be >= 1, horizon >= 2"));
        }
        if self.sub_episodes > self.horizon {
            return Err(Error::contract("more sub-episodes than steps"));
        }
        if let Some(l) = self.fixed_lambda {
            if l.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::contract("fixed multipliers must be finite and >= 0"));
            }
        }
        let b = gamma_budget_check(self.gamma, self.horizon)?;
        if !b.pass {
            return Err(Error::contract(format!(
                "gamma = {} fails the budget condition gamma^(T-1) >= 1 - gamma for T = {}; minimal feasible gamma is {:.4}",
                self.gamma, self.horizon, b.min_gamma
            )));
        }
        Ok(())
    }

    /// Per-constraint discounted budget δ(1-γ).
    pub fn budget(&self) -> f64 {
        self.delta * (1.0 - self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaBudget {
    pub pass: bool,
    pub min_gamma: f64,
}

/// Whether `γ^(T-1) >= 1 - γ`, and the smallest γ for which it holds.
pub fn gamma_budget_check(gamma: f64, horizon: usize) -> Result<GammaBudget> {
    if horizon < 2 {
        return Err(Error::contract("budget check needs T >= 2"));
    }
    let f = |g: f64| g.powi(horizon as i32 - 1) - (1.0 - g);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(GammaBudget {
        pass: gamma > 0.0 && gamma < 1.0 && f(gamma) >= 0.0,
        min_gamma: hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LagrangeState {
    pub lambda: [f64; N_CONSTRAINTS],
}

pub fn penalized_reward(r: &RewardVector, l: &LagrangeState) -> f64 {
    r.r0 - r.costs.iter().zip(&l.lambda).map(|(c, lam)| c * lam).sum::<f64>()
}

/// One worker episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRollout {
    pub scenario_seed: u64,
    pub worker: usize,
    /// Observations `s_0 .. s_T`; one more than actions.
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<f64>,
    pub pre_squash: Vec<f64>,
    pub log_prob_old: Vec<f64>,
    pub rewards: Vec<RewardVector>,
}

impl EpisodeRollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `Σ_t γ^t c_k(s_{t+1})` per constraint.
    pub fn discounted_costs(&self, gamma: f64) -> [f64; N_CONSTRAINTS] {
        let mut j = [0.0; N_CONSTRAINTS];
        let mut g = 1.0;
        for r in &self.rewards {
            for k in 0..N_CONSTRAINTS {
                j[k] += g * r.costs[k];
            }
            g *= gamma;
        }
        j
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub episodes: Vec<EpisodeRollout>,
    pub dropped: usize,
}

impl RolloutBatch {
    pub fn n_steps(&self) -> usize {
        self.episodes.iter().map(EpisodeRollout::len).sum()
    }

    /// `Ĵ_k`: mean discounted cost over episodes.
    pub fn mean_discounted_costs(&self, gamma: f64) -> [f64; N_CONSTRAINTS] {
        let mut j = [0.0; N_CONSTRAINTS];
        let n = self.episodes.len().max(1) as f64;
        for e in &self.episodes {
            let d = e.discounted_costs(gamma);
            for k in 0..N_CONSTRAINTS {
                j[k] += d[k] / n;
            }
        }
        j
    }
}

/// Run one stochastic episode per scenario, one worker per scenario, in
/// parallel. Worker `w` draws from the stream `(seed, w)`.
pub fn collect_rollouts(
    policy: &Policy,
    backing: Backing<'_>,
    plant: &PlantConfig,
    scenarios: &[&Scenario],
    seed: u64,
) -> Result<RolloutBatch> {
    if scenarios.is_empty() {
        return Err(Error::contract("rollout collection needs at least one scenario"));
    }
    let results: Vec<Result<EpisodeRollout>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(w, sc)| run_episode(policy, backing, plant, sc, w, seed))
        .collect();
    let mut episodes = Vec::with_capacity(results.len());
    let mut dropped = 0;
    for (w, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => episodes.push(e),
            Err(e) if e.is_numeric() => {
                warn!("worker {w}: episode on scenario {} dropped: {e}", scenarios[w].seed);
                dropped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if dropped as f64 > MAX_DROP_FRACTION * scenarios.len() as f64 {
        return Err(Error::Diverged(format!("{dropped} of {} episodes diverged", scenarios.len())));
    }
    Ok(RolloutBatch { episodes, dropped })
}

fn run_episode(
    policy: &Policy,
    backing: Backing<'_>,
    plant: &PlantConfig,
    scenario: &Scenario,
    worker: usize,
    seed: u64,
) -> Result<EpisodeRollout> {
    let mut rng = seed::rng(seed, &[worker as u64]);
    let (mut env, mut obs) = Env::reset(backing, scenario, plant)?;
    let t = scenario.horizon;
    let mut ep = EpisodeRollout {
        scenario_seed: scenario.seed,
        worker,
        obs: Vec::with_capacity(t + 1),
        actions: Vec::with_capacity(t),
        pre_squash: Vec::with_capacity(t),
        log_prob_old: Vec::with_capacity(t),
        rewards: Vec::with_capacity(t),
    };
    loop {
        let (a, lp, u) = policy.sample(&obs, &mut rng)?;
        let step = env.step(a)?;
        ep.obs.push(std::mem::replace(&mut obs, step.obs));
        ep.actions.push(a);
        ep.pre_squash.push(u);
        ep.log_prob_old.push(lp);
        ep.rewards.push(step.reward);
        if step.done {
            break;
        }
    }
    ep.obs.push(obs);
    Ok(ep)
}

/// GAE over one segment. `values` holds `V(s_t)` for every step plus the
/// value of the state after the last step; pass `terminal = true` to treat
/// that final state as worth zero.
pub fn gae_segment(rewards: &[f64], values: &[f64], terminal: bool, gamma: f64, xi: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1, "values must include the bootstrap state");
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 == n && terminal { 0.0 } else { values[t + 1] };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * xi * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Segment boundaries `[start, end)` splitting `len` steps into `parts`
/// near-equal pieces.
pub fn segments(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let parts = parts.clamp(1, len.max(1));
    (0..parts).map(|i| (i * len / parts, (i + 1) * len / parts)).collect()
}

/// Flattened training data of one epoch.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub obs: DMatrix<f64>,
    pub pre_squash: Vec<f64>,
    pub log_prob_old: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Advantages and returns for every step of a batch, with sub-episode
/// bootstrapping from the value network. Advantages are normalized to zero
/// mean and unit variance.
pub fn compute_gae(
    batch: &RolloutBatch,
    value: &Mlp,
    gamma: f64,
    xi: f64,
    lagrange: &LagrangeState,
    sub_episodes: usize,
) -> Result<TrainingBatch> {
    let n = batch.n_steps();
    let d = value.n_inputs();
    let mut all_obs = DMatrix::zeros(d, n + batch.episodes.len());
    let mut c = 0;
    for e in &batch.episodes {
        for o in &e.obs {
            all_obs.set_column(c, &nalgebra::DVector::from_column_slice(o));
            c += 1;
        }
    }
    let (v_all, _) = value.forward(&all_obs)?;
    let mut obs = DMatrix::zeros(d, n);
    let mut pre_squash = Vec::with_capacity(n);
    let mut log_prob_old = Vec::with_capacity(n);
    let mut advantages = Vec::with_capacity(n);
    let mut returns = Vec::with_capacity(n);
    let (mut vc, mut oc) = (0, 0);
    for e in &batch.episodes {
        let len = e.len();
        let values: Vec<f64> = (0..=len).map(|i| v_all[(0, vc + i)]).collect();
        let rewards: Vec<f64> = e.rewards.iter().map(|r| penalized_reward(r, lagrange)).collect();
        for (s, t) in segments(len, sub_episodes) {
            let (a, r) = gae_segment(&rewards[s..t], &values[s..=t], t == len, gamma, xi);
            advantages.extend(a);
            returns.extend(r);
        }
        for i in 0..len {
            obs.set_column(oc, &all_obs.column(vc + i));
            oc += 1;
        }
        pre_squash.extend_from_slice(&e.pre_squash);
        log_prob_old.extend_from_slice(&e.log_prob_old);
        vc += len + 1;
    }
    normalize(&mut advantages);
    Ok(TrainingBatch {
        obs,
        pre_squash,
        log_prob_old,
        advantages,
        returns,
    })
}

fn normalize(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1-ε, 1+ε)A)`.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Surrogate value, its gradient with respect to each sample's new
/// log-probability, and the sample KL estimate `mean(logp_old - logp_new)`.
pub fn surrogate(logp_new: &[f64], logp_old: &[f64], adv: &[f64], eps: f64) -> (f64, Vec<f64>, f64) {
    let n = logp_new.len() as f64;
    let mut obj = 0.0;
    let mut kl = 0.0;
    let grad = logp_new
        .iter()
        .zip(logp_old)
        .zip(adv)
        .map(|((&new, &old), &a)| {
            let ratio = (new - old).exp();
            let unclipped = ratio * a;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
            obj += unclipped.min(clipped);
            kl += old - new;
            if unclipped <= clipped {
                unclipped / n
            } else {
                0.0
            }
        })
        .collect();
    (obj / n, grad, kl / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyUpdateStats {
    pub iters: usize,
    pub kl: f64,
    pub objective: f64,
    pub aborted: bool,
}

/// PPO-clip ascent with KL early stopping. A step that would push the sample
/// KL past `kl_threshold` is undone, so the returned policy always satisfies
/// the threshold.
pub fn ppo_update(
    policy: &mut Policy,
    adam: &mut Adam,
    batch: &TrainingBatch,
    clip_eps: f64,
    kl_threshold: f64,
    max_iters: usize,
    lr: f64,
) -> Result<PolicyUpdateStats> {
    let start = (policy.clone(), adam.clone());
    let mut prev = start.clone();
    let mut stats = PolicyUpdateStats {
        iters: 0,
        kl: 0.0,
        objective: 0.0,
        aborted: false,
    };
    for it in 0..=max_iters {
        let lp = policy.log_prob_batch(&batch.obs, &batch.pre_squash)?;
        let (obj, dobj, kl) = surrogate(&lp.logp, &batch.log_prob_old, &batch.advantages, clip_eps);
        if !obj.is_finite() || !kl.is_finite() {
            warn!("policy update aborted: non-finite surrogate at iteration {it}");
            (*policy, *adam) = start;
            stats.aborted = true;
            stats.iters = 0;
            return Ok(stats);
        }
        if kl > kl_threshold && it > 0 {
            (*policy, *adam) = prev;
            stats.iters = it - 1;
            debug!("policy update: KL {kl:.5} > {kl_threshold} at iteration {it}, last step undone");
            return Ok(stats);
        }
        stats.kl = kl;
        stats.objective = obj;
        stats.iters = it;
        if it == max_iters {
            break;
        }
        // Descend on the negative surrogate.
        let w: Vec<f64> = dobj.iter().map(|g| -g).collect();
        let grads = policy.logp_weighted_grad(&lp, &w)?;
        prev = (policy.clone(), adam.clone());
        if !adam.step_mlp(&mut policy.net, &grads, lr)? {
            warn!("policy update aborted: non-finite gradient at iteration {it}");
            (*policy, *adam) = start;
            stats.aborted = true;
            stats.iters = 0;
            return Ok(stats);
        }
    }
    Ok(stats)
}

/// Mean squared error of the value net and its gradient.
pub fn value_loss_grad(value: &Mlp, obs: &DMatrix<f64>, returns: &[f64]) -> Result<(f64, crate::nn::MlpGrads)> {
    let (v, cache) = value.forward(obs)?;
    let n = returns.len() as f64;
    let mut g = DMatrix::zeros(1, returns.len());
    let mut loss = 0.0;
    for (i, r) in returns.iter().enumerate() {
        let e = v[(0, i)] - r;
        loss += e * e / n;
        g[(0, i)] = 2.0 * e / n;
    }
    let (grads, _) = value.backward(&cache, &g)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueUpdateStats {
    pub iters: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub aborted: bool,
}

pub fn value_update(
    value: &mut Mlp,
    adam: &mut Adam,
    obs: &DMatrix<f64>,
    returns: &[f64],
    iters: usize,
    lr: f64,
) -> Result<ValueUpdateStats> {
    let start = (value.clone(), adam.clone());
    let mut stats = ValueUpdateStats {
        iters: 0,
        loss_before: f64::NAN,
        loss_after: f64::NAN,
        aborted: false,
    };
    for it in 0..=iters {
        let (loss, grads) = value_loss_grad(value, obs, returns)?;
        if it == 0 {
            stats.loss_before = loss;
        }
        stats.loss_after = loss;
        if !loss.is_finite() {
            warn!("value update aborted: non-finite loss at iteration {it}");
            (*value, *adam) = start;
            stats.aborted = true;
            stats.iters = 0;
            return Ok(stats);
        }
        if it == iters {
            break;
        }
        if !adam.step_mlp(value, &grads, lr)? {
            (*value, *adam) = start;
            stats.aborted = true;
            stats.iters = 0;
            return Ok(stats);
        }
        stats.iters = it + 1;
    }
    Ok(stats)
}

/// `λ_k += λ_lr · max(0, Ĵ_k - δ(1-γ))`.
pub fn lambda_update(l: &LagrangeState, j: &[f64; N_CONSTRAINTS], budget: f64, lambda_lr: f64) -> LagrangeState {
    let mut next = *l;
    for k in 0..N_CONSTRAINTS {
        // Gradient of the multiplier loss, clipped to be non-positive.
        let grad = (budget - j[k]).min(0.0);
        if grad < 0.0 {
            next.lambda[k] -= lambda_lr * grad;
        }
    }
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean undiscounted load-following reward per episode.
    pub mean_return: f64,
    pub j: [f64; N_CONSTRAINTS],
    /// Multipliers after this epoch's update.
    pub lambda: [f64; N_CONSTRAINTS],
    pub entropy: f64,
    pub kl_stop: f64,
    pub policy_iters: usize,
    pub value_iters: usize,
    pub wall_s: f64,
}

pub const EPOCH_STATS_HEADER: &str =
    "epoch,mean_return,J1,J2,lambda1,lambda2,entropy,kl_stop,policy_iters,value_iters,wall_s";

impl EpochStats {
    pub fn csv_row(&self) -> String {
        let f = crate::plant::fmt_num;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            f(self.mean_return),
            f(self.j[0]),
            f(self.j[1]),
            f(self.lambda[0]),
            f(self.lambda[1]),
            f(self.entropy),
            f(self.kl_stop),
            self.policy_iters,
            self.value_iters,
            f(self.wall_s)
        )
    }

    pub fn parse_row(line: &str) -> Option<Self> {
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 11 {
            return None;
        }
        let f = |i: usize| v[i].trim().parse::<f64>().ok();
        Some(EpochStats {
            epoch: v[0].trim().parse().ok()?,
            mean_return: f(1)?,
            j: [f(2)?, f(3)?],
            lambda: [f(4)?, f(5)?],
            entropy: f(6)?,
            kl_stop: f(7)?,
            policy_iters: v[8].trim().parse().ok()?,
            value_iters: v[9].trim().parse().ok()?,
            wall_s: f(10)?,
        })
    }
}

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    /// Number of completed epochs.
    pub epoch: usize,
    pub policy: Policy,
    pub value: Mlp,
    pub policy_adam: Adam,
    pub value_adam: Adam,
    pub lagrange: LagrangeState,
}

impl TrainerState {
    pub fn init(cfg: &TrainConfig, obs_dim: usize) -> Result<Self> {
        let mut rng = seed::rng(cfg.seed, &[u64::MAX]);
        let policy = Policy::init(
            obs_dim,
            &cfg.hidden,
            (ACTION_MIN, ACTION_MAX),
            (cfg.log_std_min, cfg.log_std_max),
            cfg.init_log_std,
            &mut rng,
        )?;
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(1);
        let value = Mlp::init(&sizes, 1.0, &mut rng)?;
        Ok(TrainerState {
            epoch: 0,
            policy_adam: Adam::for_mlp(&policy.net),
            value_adam: Adam::for_mlp(&value),
            policy,
            value,
            lagrange: LagrangeState {
                lambda: cfg.fixed_lambda.unwrap_or([0.0; N_CONSTRAINTS]),
            },
        })
    }
}

/// Scenarios used by each worker in a given epoch: consecutive entries of
/// the training split, wrapping around.
pub fn epoch_scenarios<'a>(train: &'a [Scenario], epoch: usize, workers: usize) -> Vec<&'a Scenario> {
    (0..workers).map(|w| &train[(epoch * workers + w) % train.len()]).collect()
}

/// One full training epoch on `state`.
pub fn train_epoch(
    cfg: &TrainConfig,
    state: &mut TrainerState,
    rom: &crate::sysid::RomModel,
    plant: &PlantConfig,
    train: &[Scenario],
) -> Result<EpochStats> {
    if train.is_empty() {
        return Err(Error::contract("training needs at least one scenario"));
    }
    let t0 = Instant::now();
    let epoch = state.epoch;
    let scen = epoch_scenarios(train, epoch, cfg.workers);
    let batch = collect_rollouts(
        &state.policy,
        Backing::Rom(rom),
        plant,
        &scen,
        seed::derive(cfg.seed, &[epoch as u64]),
    )?;
    let tb = compute_gae(&batch, &state.value, cfg.gamma, cfg.gae_lambda, &state.lagrange, cfg.sub_episodes)?;
    let entropy = {
        let lp = state.policy.log_prob_batch(&tb.obs, &tb.pre_squash)?;
        lp.log_std.iter().map(|&s| gaussian_entropy(s)).sum::<f64>() / lp.log_std.len().max(1) as f64
    };
    let ps = ppo_update(
        &mut state.policy,
        &mut state.policy_adam,
        &tb,
        cfg.clip_eps,
        cfg.kl_threshold,
        cfg.policy_iters,
        cfg.policy_lr,
    )?;
    let vs = value_update(
        &mut state.value,
        &mut state.value_adam,
        &tb.obs,
        &tb.returns,
        cfg.value_iters,
        cfg.value_lr,
    )?;
    let j = batch.mean_discounted_costs(cfg.gamma);
    if cfg.fixed_lambda.is_none() {
        state.lagrange = lambda_update(&state.lagrange, &j, cfg.budget(), cfg.lambda_lr);
    }
    state.epoch += 1;
    let n_ep = batch.episodes.len().max(1) as f64;
    let mean_return = batch
        .episodes
        .iter()
        .map(|e| e.rewards.iter().map(|r| r.r0).sum::<f64>())
        .sum::<f64>()
        / n_ep;
    Ok(EpochStats {
        epoch,
        mean_return,
        j,
        lambda: state.lagrange.lambda,
        entropy,
        kl_stop: ps.kl,
        policy_iters: ps.iters,
        value_iters: vs.iters,
        wall_s: t0.elapsed().as_secs_f64(),
    })
}

/// Train from `state` until `cfg.epochs` epochs are complete, calling
/// `on_epoch` after each.
pub fn train<F>(
    cfg: &TrainConfig,
    state: &mut TrainerState,
    rom: &crate::sysid::RomModel,
    plant: &PlantConfig,
    train_set: &[Scenario],
    mut on_epoch: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&EpochStats, &TrainerState) -> Result<()>,
{
    cfg.validate()?;
    if let Some(s) = train_set.iter().find(|s| s.horizon != cfg.horizon) {
        return Err(Error::contract(format!(
            "scenario {} has horizon {}, config expects {}",
            s.seed, s.horizon, cfg.horizon
        )));
    }
    let mut out = Vec::new();
    while state.epoch < cfg.epochs {
        let st = train_epoch(cfg, state, rom, plant, train_set)?;
        on_epoch(&st, state)?;
        out.push(st);
    }
    Ok(out)
}

/// Rate-limited step from `prev` toward `requested`: the change is clipped
/// to `[-eta, eta]` and the result never moves more than `eta` from `prev`.
pub fn clip_action(prev: f64, requested: f64, eta: f64) -> f64 {
    if eta.is_infinite() {
        return requested;
    }
    let mut a = prev + (requested - prev).clamp(-eta, eta);
    while (a - prev).abs() > eta {
        a = if a > prev { a.next_down() } else { a.next_up() };
    }
    a
}

/// Deploy the deterministic policy on an environment with action-rate
/// clipping. The first step is clipped relative to the initial demand.
pub fn transfer_rollout(
    policy: &Policy,
    backing: Backing<'_>,
    plant: &PlantConfig,
    scenario: &Scenario,
    eta: f64,
) -> Result<EpisodeLog> {
    if !(eta > 0.0) {
        return Err(Error::contract("eta must be > 0"));
    }
    let (mut env, mut obs) = Env::reset(backing, scenario, plant)?;
    let mut log = EpisodeLog {
        scenario_seed: scenario.seed,
        ..Default::default()
    };
    let mut prev = scenario.demand[0];
    loop {
        let req = policy.mean_action(&obs)?;
        let a = clip_action(prev, req, eta).clamp(ACTION_MIN, ACTION_MAX);
        match env.step(a) {
            Ok(step) => {
                log.steps.push(step.record);
                obs = step.obs;
                prev = a;
                if step.done {
                    break;
                }
            }
            Err(e) if e.is_numeric() => {
                warn!("transfer on scenario {} truncated at step {}: {e}", scenario.seed, env.t());
                log.truncated = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_examples() {
        let b = gamma_budget_check(0.99, 300).unwrap();
        assert!(b.pass);
        assert!(!gamma_budget_check(0.9, 2250).unwrap().pass);
        let m = gamma_budget_check(0.5, 2250).unwrap().min_gamma;
        assert!((m - 0.9974).abs() < 1e-4, "{m}");
    }

    #[test]
    fn penalized_reward_examples() {
        let r = RewardVector { r0: -0.01, costs: [1.0, 0.0] };
        assert!((penalized_reward(&r, &LagrangeState { lambda: [0.4, 0.5] }) + 0.41).abs() < 1e-15);
        assert_eq!(penalized_reward(&r, &LagrangeState::default()), -0.01);
    }

    #[test]
    fn single_terminal_step_advantage() {
        let (a, r) = gae_segment(&[1.0], &[0.5, 123.0], true, 0.99, 0.95);
        assert!((a[0] - 0.5).abs() < 1e-15);
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_xi_gives_td_errors() {
        let r = [0.3, -0.2, 0.1];
        let v = [0.5, 0.4, -0.1, 0.7];
        let (a, _) = gae_segment(&r, &v, false, 0.9, 0.0);
        for t in 0..3 {
            assert!((a[t] - (r[t] + 0.9 * v[t + 1] - v[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn segments_partition() {
        assert_eq!(segments(10, 5), vec![(0, 2), (2, 4), (4, 6), (6, 8), (8, 10)]);
        assert_eq!(segments(7, 2), vec![(0, 3), (3, 7)]);
    }

    #[test]
    fn clip_objective_examples() {
        assert_eq!(clipped_objective(1.5, 1.0, 0.2), 1.2);
        assert_eq!(clipped_objective(0.5, -1.0, 0.2), -0.8);
        assert_eq!(clipped_objective(1.0, -0.7, 0.2), -0.7);
    }

    #[test]
    fn lambda_update_examples() {
        let l = LagrangeState { lambda: [0.2, 0.0] };
        let n = lambda_update(&l, &[0.5, 0.005], 0.01, 0.01);
        assert!((n.lambda[0] - 0.2049).abs() < 1e-15);
        assert_eq!(n.lambda[1], 0.0);
    }

    #[test]
    fn clip_action_limits_change() {
        assert_eq!(clip_action(0.8, 0.9, f64::INFINITY), 0.9);
        let a = clip_action(0.8, 0.9, 5e-4);
        assert!((a - 0.8).abs() <= 5e-4);
        assert!((a - 0.8005).abs() < 1e-15);
        let a = clip_action(0.7, 0.2, 5e-4);
        assert!((0.7 - a) <= 5e-4);
    }
}
