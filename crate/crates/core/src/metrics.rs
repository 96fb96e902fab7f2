//! Evaluation metrics over logged episodes and batch policy evaluation.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::env::{Backing, Env, EpisodeLog, Scenario};
use crate::error::{Error, Result};
use crate::nn::Policy;
use crate::plant::{fmt_num, PlantConfig};
use crate::seed;

pub const REPORT_HEADER: &str = "scenario_seed,sum_r0,sum_c1,sum_c2,D_in,D_out,viol_steps,tau,safe_episode";

/// Per-episode summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub scenario_seed: u64,
    pub sum_r0: f64,
    pub sum_c: [f64; 2],
    pub d_in: f64,
    pub d_out: f64,
    pub viol_steps: usize,
    pub tau: usize,
}

impl EpisodeSummary {
    pub fn of(log: &EpisodeLog) -> Self {
        let mut s = EpisodeSummary {
            scenario_seed: log.scenario_seed,
            sum_r0: 0.0,
            sum_c: [0.0; 2],
            d_in: 0.0,
            d_out: 0.0,
            viol_steps: 0,
            tau: log.steps.len(),
        };
        for st in &log.steps {
            s.sum_r0 += st.reward.r0;
            s.sum_c[0] += st.reward.costs[0];
            s.sum_c[1] += st.reward.costs[1];
            if st.c_in_min - st.t_in > 0.0 {
                s.d_in += st.c_in_min - st.t_in;
            }
            if st.t_out - st.c_out_max > 0.0 {
                s.d_out += st.t_out - st.c_out_max;
            }
            if st.reward.costs.iter().any(|c| *c > 0.0) {
                s.viol_steps += 1;
            }
        }
        if s.tau > 0 {
            s.d_in /= s.tau as f64;
            s.d_out /= s.tau as f64;
        }
        s
    }

    pub fn safe(&self) -> bool {
        self.viol_steps == 0
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.tau == 0 {
            0.0
        } else {
            self.viol_steps as f64 / self.tau as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub r_bar: f64,
    pub d: f64,
    pub omega: f64,
    pub p_hat: f64,
    pub episodes: Vec<EpisodeSummary>,
}

impl MetricsReport {
    pub fn from_logs(logs: &[EpisodeLog]) -> Result<Self> {
        if logs.is_empty() {
            return Err(Error::contract("metrics need at least one episode"));
        }
        Ok(Self::from_summaries(logs.iter().map(EpisodeSummary::of).collect()))
    }

    pub fn from_summaries(episodes: Vec<EpisodeSummary>) -> Self {
        let n = episodes.len() as f64;
        let r_bar = episodes.iter().map(|e| e.sum_r0 - e.sum_c[0] - e.sum_c[1]).sum::<f64>() / n;
        let d = episodes.iter().map(|e| e.d_in + e.d_out).sum::<f64>() / (2.0 * n);
        let omega = episodes.iter().map(EpisodeSummary::violation_fraction).sum::<f64>() / n;
        let p_hat = episodes.iter().filter(|e| e.safe()).count() as f64 / n;
        MetricsReport {
            r_bar,
            d,
            omega,
            p_hat,
            episodes,
        }
    }

    pub fn n(&self) -> usize {
        self.episodes.len()
    }

    /// Per-scenario rows followed by a `mean` footer.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                e.scenario_seed,
                fmt_num(e.sum_r0),
                fmt_num(e.sum_c[0]),
                fmt_num(e.sum_c[1]),
                fmt_num(e.d_in),
                fmt_num(e.d_out),
                e.viol_steps,
                e.tau,
                u8::from(e.safe())
            )?;
        }
        writeln!(
            w,
            "# summary N={} r_bar={} d={} omega={} p_hat={}",
            self.n(),
            fmt_num(self.r_bar),
            fmt_num(self.d),
            fmt_num(self.omega),
            fmt_num(self.p_hat)
        )?;
        Ok(())
    }

    /// Reads the per-scenario rows back and recomputes the aggregates.
    pub fn read_csv<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let mut eps = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let ln = i + 1;
            if i == 0 {
                if line.trim() != REPORT_HEADER {
                    return Err(Error::parse(path, ln, "unexpected report header"));
                }
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let v: Vec<&str> = line.split(',').map(str::trim).collect();
            if v.len() != 9 {
                return Err(Error::parse(path, ln, "expected 9 fields"));
            }
            let bad = |e: String| Error::parse(path, ln, e);
            let f = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            let u = |s: &str| s.parse::<u64>().map_err(|e| bad(e.to_string()));
            eps.push(EpisodeSummary {
                scenario_seed: u(v[0])?,
                sum_r0: f(v[1])?,
                sum_c: [f(v[2])?, f(v[3])?],
                d_in: f(v[4])?,
                d_out: f(v[5])?,
                viol_steps: u(v[6])? as usize,
                tau: u(v[7])? as usize,
            });
        }
        if eps.is_empty() {
            return Err(Error::parse(path, 1, "report has no episodes"));
        }
        Ok(Self::from_summaries(eps))
    }
}

pub fn reward_cost_score(logs: &[EpisodeLog]) -> Result<f64> {
    Ok(MetricsReport::from_logs(logs)?.r_bar)
}

pub fn violation_distance(logs: &[EpisodeLog]) -> Result<f64> {
    Ok(MetricsReport::from_logs(logs)?.d)
}

pub fn violation_rate(logs: &[EpisodeLog]) -> Result<f64> {
    Ok(MetricsReport::from_logs(logs)?.omega)
}

pub fn joint_safety_estimate(logs: &[EpisodeLog]) -> Result<f64> {
    Ok(MetricsReport::from_logs(logs)?.p_hat)
}

/// Run `policy` once on every scenario. With `deterministic` the mean
/// action is used, otherwise actions are sampled from the stream
/// `(seed, scenario_seed)`.
pub fn rollout_logs(
    policy: &Policy,
    backing: Backing<'_>,
    plant: &PlantConfig,
    scenarios: &[Scenario],
    deterministic: bool,
    seed: u64,
) -> Result<Vec<EpisodeLog>> {
    if scenarios.is_empty() {
        return Err(Error::contract("evaluation needs at least one scenario"));
    }
    scenarios
        .par_iter()
        .map(|sc| {
            let mut rng = seed::rng(seed, &[sc.seed]);
            let (mut env, mut obs) = Env::reset(backing, sc, plant)?;
            let mut log = EpisodeLog {
                scenario_seed: sc.seed,
                ..Default::default()
            };
            loop {
                let a = if deterministic {
                    policy.mean_action(&obs)?
                } else {
                    policy.sample(&obs, &mut rng)?.0
                };
                let step = env.step(a)?;
                log.steps.push(step.record);
                obs = step.obs;
                if step.done {
                    break;
                }
            }
            Ok(log)
        })
        .collect()
}

pub fn evaluate_policy(
    policy: &Policy,
    backing: Backing<'_>,
    plant: &PlantConfig,
    scenarios: &[Scenario],
    deterministic: bool,
    seed: u64,
) -> Result<(MetricsReport, Vec<EpisodeLog>)> {
    let logs = rollout_logs(policy, backing, plant, scenarios, deterministic, seed)?;
    Ok((MetricsReport::from_logs(&logs)?, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{RewardVector, StepRecord};

    fn step(t: usize, r0: f64, t_in: f64, c_in: f64) -> StepRecord {
        StepRecord {
            t,
            action: 1.0,
            demand: 1.0,
            c_in_min: c_in,
            c_out_max: 10.0,
            t_in,
            t_out: 0.0,
            reward: RewardVector {
                r0,
                costs: [f64::from(u8::from(c_in - t_in > 0.0)), 0.0],
            },
        }
    }

    fn log(steps: Vec<StepRecord>) -> EpisodeLog {
        EpisodeLog {
            scenario_seed: 1,
            steps,
            truncated: None,
        }
    }

    #[test]
    fn score_hand_case() {
        let steps = (0..100).map(|t| step(t, -0.01, if t < 5 { -1.0 } else { 1.0 }, 0.0)).collect();
        let r = reward_cost_score(&[log(steps)]).unwrap();
        assert!((r + 6.0).abs() < 1e-12);
    }

    #[test]
    fn distance_hand_case() {
        let l = log(vec![step(0, 0.0, 0.49, 0.5), step(1, 0.0, 0.51, 0.5)]);
        let m = MetricsReport::from_logs(&[l]).unwrap();
        assert!((m.episodes[0].d_in - 0.005).abs() < 1e-12);
        assert!((m.d - 0.0025).abs() < 1e-12);
        assert_eq!(m.omega, 0.5);
        assert_eq!(m.p_hat, 0.0);
    }

    #[test]
    fn overlapping_violations_count_once() {
        let mut s = step(0, 0.0, -1.0, 0.0);
        s.t_out = 20.0;
        s.reward.costs = [1.0, 1.0];
        let m = MetricsReport::from_logs(&[log(vec![s, step(1, 0.0, 1.0, 0.0)])]).unwrap();
        assert_eq!(m.episodes[0].viol_steps, 1);
        assert_eq!(m.omega, 0.5);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(violation_rate(&[]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let l = log(vec![step(0, -0.2, 0.49, 0.5), step(1, -0.1, 0.51, 0.5)]);
        let m = MetricsReport::from_logs(&[l.clone(), l]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = MetricsReport::read_csv(&buf[..], "r.csv").unwrap();
        assert_eq!(back, m);
    }
}
