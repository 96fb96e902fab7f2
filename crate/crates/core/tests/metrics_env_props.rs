use lfrl_core::env::{
    constraint_indicator, gen_constraint_schedule, gen_demand, ConstraintParams, DemandParams, EpisodeLog,
    RewardVector, StepRecord,
};
use lfrl_core::metrics::MetricsReport;
use lfrl_core::plant::{plant_derivs, trim, PidGains, PidState, PlantConfig, SETPOINT_MAX, SETPOINT_MIN};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_episode(rng: &mut ChaCha8Rng, seed: u64) -> EpisodeLog {
    let tau = rng.random_range(1..40);
    let steps = (0..tau)
        .map(|t| {
            let (c_in, c_out) = (0.0, 1.0);
            let t_in = if rng.random_bool(0.2) { rng.random_range(-0.1..0.0) } else { rng.random_range(0.0..0.5) };
            let t_out = if rng.random_bool(0.2) { rng.random_range(1.0..1.1) } else { rng.random_range(0.5..1.0) };
            let d: f64 = rng.random_range(0.5..1.0);
            let a: f64 = rng.random_range(0.4..1.05);
            StepRecord {
                t,
                action: a,
                demand: d,
                c_in_min: c_in,
                c_out_max: c_out,
                t_in,
                t_out,
                reward: RewardVector { r0: -(d - a).powi(2), costs: constraint_indicator(t_in, t_out, c_in, c_out) },
            }
        })
        .collect();
    EpisodeLog { scenario_seed: seed, steps, truncated: None }
}

/// Single-loop reference implementation of all four metrics.
fn reference(logs: &[EpisodeLog]) -> (f64, f64, f64, f64) {
    let n = logs.len() as f64;
    let (mut r, mut d, mut om, mut safe) = (0.0, 0.0, 0.0, 0.0);
    for l in logs {
        let tau = l.steps.len() as f64;
        let (mut din, mut dout, mut tv) = (0.0, 0.0, 0.0);
        for s in &l.steps {
            r += s.reward.r0 - s.reward.costs[0] - s.reward.costs[1];
            if s.c_in_min - s.t_in > 0.0 {
                din += (s.t_in - s.c_in_min).abs();
            }
            if s.t_out - s.c_out_max > 0.0 {
                dout += (s.t_out - s.c_out_max).abs();
            }
            if s.reward.costs[0] + s.reward.costs[1] > 0.0 {
                tv += 1.0;
            }
        }
        d += din / tau + dout / tau;
        om += tv / tau;
        if tv == 0.0 {
            safe += 1.0;
        }
    }
    (r / n, d / (2.0 * n), om / n, safe / n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_reference_and_are_permutation_invariant(seed in 0u64..100_000, n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut logs: Vec<EpisodeLog> = (0..n).map(|i| random_episode(&mut rng, i as u64)).collect();
        let m = MetricsReport::from_logs(&logs).unwrap();
        let (r, d, om, p) = reference(&logs);
        prop_assert!((m.r_bar - r).abs() < 1e-12);
        prop_assert!((m.d - d).abs() < 1e-12);
        prop_assert!((m.omega - om).abs() < 1e-12);
        prop_assert!((m.p_hat - p).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.omega) && (0.0..=1.0).contains(&m.p_hat) && m.d >= 0.0);
        prop_assert_eq!(m.d == 0.0, m.omega == 0.0);
        let zero = m.episodes.iter().filter(|e| e.viol_steps == 0).count() as f64 / n as f64;
        prop_assert_eq!(m.p_hat, zero);
        logs.reverse();
        let k = seed as usize % n;
        logs.rotate_left(k);
        let p2 = MetricsReport::from_logs(&logs).unwrap();
        prop_assert!((p2.r_bar - m.r_bar).abs() < 1e-12 && (p2.d - m.d).abs() < 1e-12);
        prop_assert!((p2.omega - m.omega).abs() < 1e-12 && p2.p_hat == m.p_hat);
    }

    #[test]
    fn extra_violation_lowers_score(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = random_episode(&mut rng, 0);
        let base = MetricsReport::from_logs(std::slice::from_ref(&log)).unwrap().r_bar;
        let mut worse = log.clone();
        let s = &mut worse.steps[0];
        if s.reward.costs[0] == 0.0 {
            s.t_in = s.c_in_min - 0.05;
            s.reward.costs[0] = 1.0;
            prop_assert!(MetricsReport::from_logs(&[worse]).unwrap().r_bar < base);
        }
    }

    #[test]
    fn trim_residual_is_tiny(p in SETPOINT_MIN..=SETPOINT_MAX) {
        let cfg = PlantConfig::default();
        let s = trim(p, &cfg).unwrap();
        prop_assert!(plant_derivs(&s, &cfg).unwrap().max_abs() < 1e-8);
        prop_assert!((s.power - p).abs() < 1e-12);
    }

    #[test]
    fn pid_output_stays_in_bounds(
        errs in prop::collection::vec(-5.0f64..5.0, 1..200), kp in -3.0f64..3.0, ki in -1.0f64..1.0,
    ) {
        let g = PidGains { kp, ki, kd: 0.0, out_min: -0.5, out_max: 0.8 };
        let mut pid = PidState::new(g);
        for e in errs {
            let (out, next) = pid.step(e, 0.0, 0.5);
            prop_assert!((-0.5..=0.8).contains(&out));
            pid = next;
        }
    }
}

#[test]
fn indicator_matches_direct_comparison() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100_000 {
        let (t_in, t_out): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (ci, co): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let c = constraint_indicator(t_in, t_out, ci, co);
        assert_eq!(c[0] == 1.0, ci - t_in > 0.0);
        assert_eq!(c[1] == 1.0, t_out - co > 0.0);
    }
    assert_eq!(constraint_indicator(0.3, 0.5, 0.3, 0.5), [0.0, 0.0]);
}

#[test]
fn sampled_demand_curves_respect_limits() {
    let p = DemandParams::default();
    for seed in 0..10_000 {
        let d = gen_demand(seed, 300, &p).unwrap();
        assert_eq!(d.len(), 301);
        assert_eq!(d[0], 1.0);
        assert!(d.iter().all(|v| *v >= 0.5 - 1e-12 && *v <= 1.0 + 1e-12));
        assert!(d.windows(2).all(|w| (w[1] - w[0]).abs() <= p.max_rate + 1e-12));
    }
}

#[test]
fn sampled_schedules_are_ordered_and_feasible_at_trim() {
    let cfg = PlantConfig::default();
    let nominal = trim(1.0, &cfg).unwrap();
    for seed in 0..10_000 {
        let b = gen_constraint_schedule(seed, 300, &ConstraintParams::default(), &cfg).unwrap();
        for t in 0..=300 {
            assert!(b.c_in_min[t] < b.c_out_max[t]);
            assert_eq!(constraint_indicator(nominal.t_hx_s_in, nominal.t_hx_s_out, b.c_in_min[t], b.c_out_max[t]), [0.0, 0.0]);
        }
    }
}
