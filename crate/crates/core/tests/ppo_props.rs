use lfrl_core::env::RewardVector;
use lfrl_core::ppo::{
    clip_action, clipped_objective, gae_segment, gamma_budget_check, lambda_update, penalized_reward, segments,
    surrogate, LagrangeState,
};
use proptest::prelude::*;

/// Direct double sum `Â_t = Σ_l (γξ)^l δ_{t+l}` with explicit TD residuals.
fn gae_oracle(r: &[f64], v: &[f64], terminal: bool, gamma: f64, xi: f64) -> Vec<f64> {
    let n = r.len();
    let next_v = |k: usize| if k + 1 == n && terminal { 0.0 } else { v[k + 1] };
    (0..n)
        .map(|t| {
            let mut s = 0.0;
            for l in 0..n - t {
                let delta = r[t + l] + gamma * next_v(t + l) - v[t + l];
                s += (gamma * xi).powi(l as i32) * delta;
            }
            s
        })
        .collect()
}

fn segment_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, bool, f64, f64)> {
    (1usize..=60).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..1.0, n),
            prop::collection::vec(-5.0f64..5.0, n + 1),
            any::<bool>(),
            0.9f64..0.9999,
            0.0f64..=1.0,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn gae_matches_double_sum((r, v, term, g, xi) in segment_case()) {
        let (a, ret) = gae_segment(&r, &v, term, g, xi);
        let o = gae_oracle(&r, &v, term, g, xi);
        for t in 0..r.len() {
            prop_assert!((a[t] - o[t]).abs() <= 1e-12, "t={} {} vs {}", t, a[t], o[t]);
            prop_assert!((ret[t] - (o[t] + v[t])).abs() <= 1e-12);
        }
    }

    #[test]
    fn segments_partition_exactly(len in 1usize..500, parts in 1usize..20) {
        let s = segments(len, parts);
        prop_assert_eq!(s[0].0, 0);
        prop_assert_eq!(s.last().unwrap().1, len);
        for w in s.windows(2) {
            prop_assert_eq!(w[0].1, w[1].0);
        }
        let sizes: Vec<usize> = s.iter().map(|(a, b)| b - a).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn penalized_reward_is_affine_in_lambda(
        r0 in -1.0f64..0.0, c1 in 0u8..2, c2 in 0u8..2,
        l1 in 0.0f64..5.0, l2 in 0.0f64..5.0, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0,
    ) {
        let r = RewardVector { r0, costs: [c1.into(), c2.into()] };
        let a = penalized_reward(&r, &LagrangeState { lambda: [l1, l2] });
        let b = penalized_reward(&r, &LagrangeState { lambda: [l1 + d1, l2 + d2] });
        prop_assert!((b - a - (-f64::from(c1) * d1 - f64::from(c2) * d2)).abs() < 1e-12);
        prop_assert!((penalized_reward(&r, &LagrangeState::default()) - r0).abs() == 0.0);
    }

    #[test]
    fn clip_is_inactive_at_unit_ratio(adv in prop::collection::vec(-3.0f64..3.0, 1..50), eps in 0.05f64..0.5) {
        let lp: Vec<f64> = adv.iter().map(|a| a * 0.1 - 1.0).collect();
        let (obj, grad, kl) = surrogate(&lp, &lp, &adv, eps);
        let n = adv.len() as f64;
        prop_assert!((obj - adv.iter().sum::<f64>() / n).abs() < 1e-12);
        for (g, a) in grad.iter().zip(&adv) {
            prop_assert!((g - a / n).abs() < 1e-15);
        }
        prop_assert_eq!(kl, 0.0);
        for a in &adv {
            prop_assert_eq!(clipped_objective(1.0, *a, eps), *a);
        }
    }

    #[test]
    fn multipliers_never_decrease(
        start in prop::array::uniform2(0.0f64..3.0),
        js in prop::collection::vec(prop::array::uniform2(0.0f64..2.0), 1..40),
        budget in 0.0f64..0.5, lr in 1e-4f64..0.1,
    ) {
        let mut l = LagrangeState { lambda: start };
        for j in &js {
            let next = lambda_update(&l, j, budget, lr);
            for k in 0..2 {
                prop_assert!(next.lambda[k] >= l.lambda[k]);
                if j[k] <= budget {
                    prop_assert_eq!(next.lambda[k].to_bits(), l.lambda[k].to_bits());
                }
            }
            l = next;
        }
    }

    #[test]
    fn clipped_actions_respect_eta(
        prev in 0.4f64..1.05, reqs in prop::collection::vec(0.4f64..1.05, 1..200), eta in 1e-6f64..0.1,
    ) {
        let mut p = prev;
        for r in reqs {
            let a = clip_action(p, r, eta);
            prop_assert!((a - p).abs() <= eta);
            if (r - p).abs() <= eta {
                prop_assert!((a - r).abs() <= 4.0 * f64::EPSILON);
            }
            p = a;
        }
    }

    #[test]
    fn budget_check_agrees_with_condition(gamma in 0.5f64..0.99999, t in 2usize..5000) {
        let b = gamma_budget_check(gamma, t).unwrap();
        prop_assert_eq!(b.pass, gamma.powi(t as i32 - 1) >= 1.0 - gamma);
        if gamma >= b.min_gamma + 1e-8 {
            prop_assert!(b.pass);
        }
    }
}

#[test]
fn budget_min_gamma_for_long_horizon() {
    let b = gamma_budget_check(0.99, 2250).unwrap();
    assert!(!b.pass);
    assert!((0.9973..=0.9975).contains(&b.min_gamma), "{}", b.min_gamma);
    assert!(gamma_budget_check(0.99, 300).unwrap().pass);
}

#[test]
fn eta_step_is_exact() {
    let mut p = 0.8;
    for _ in 0..50 {
        let a = clip_action(p, p + 0.1, 5e-4);
        assert!((a - p).abs() <= 5e-4);
        assert!((a - p) > 5e-4 - 1e-15);
        p = a;
    }
}
