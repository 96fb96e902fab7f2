use lfrl_core::nn::{grad_check, log1m_tanh_sq, Mlp, Policy};
use lfrl_core::ppo::{surrogate, value_loss_grad};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random_obs(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn policy(rng: &mut ChaCha8Rng) -> Policy {
    let mut p = Policy::init(5, &[8, 6], (0.4, 1.05), (-5.0, 1.0), -0.5, rng).unwrap();
    // Larger output weights so that every parameter carries signal.
    let last = p.net.weights.len() - 1;
    p.net.weights[last].iter_mut().for_each(|w| *w *= 20.0);
    p
}

#[test]
fn log_prob_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pol = policy(&mut rng);
    let obs = random_obs(&mut rng, 5, 12);
    let u: Vec<f64> = (0..12).map(|_| rng.random_range(-1.5..1.5)).collect();
    let w: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = pol.log_prob_batch(&obs, &u).unwrap();
    assert!(b.log_std.iter().all(|s| *s > -5.0 && *s < 1.0));
    let g = pol.logp_weighted_grad(&b, &w).unwrap().to_flat();
    let theta = pol.net.to_flat();
    let loss = |p: &[f64]| {
        let mut q = pol.clone();
        q.net.set_flat(p).unwrap();
        let lp = q.log_prob_batch(&obs, &u).unwrap().logp;
        lp.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
    };
    let r = grad_check(loss, &theta, &g, 100, H, &mut rng).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let old = policy(&mut rng);
    let obs = random_obs(&mut rng, 5, 16);
    let u: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let logp_old = old.log_prob_batch(&obs, &u).unwrap().logp;
    let adv: Vec<f64> = (0..16).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut new = old.clone();
    new.net.weights[0].iter_mut().for_each(|w| *w += 0.02 * rng.sample::<f64, _>(StandardNormal));
    let b = new.log_prob_batch(&obs, &u).unwrap();
    let eps = 0.2;
    // Keep clear of the clip kinks so central differences are smooth.
    for (n, o) in b.logp.iter().zip(&logp_old) {
        let r = (n - o).exp();
        assert!((r - 0.8).abs() > 1e-3 && (r - 1.2).abs() > 1e-3, "ratio {r} near a kink");
    }
    let (_, dobj, _) = surrogate(&b.logp, &logp_old, &adv, eps);
    let g = new.logp_weighted_grad(&b, &dobj).unwrap().to_flat();
    let loss = |p: &[f64]| {
        let mut q = new.clone();
        q.net.set_flat(p).unwrap();
        let lp = q.log_prob_batch(&obs, &u).unwrap().logp;
        surrogate(&lp, &logp_old, &adv, eps).0
    };
    let r = grad_check(loss, &new.net.to_flat(), &g, 100, H, &mut rng).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn value_mse_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Mlp::init(&[5, 8, 6, 1], 1.0, &mut rng).unwrap();
    let obs = random_obs(&mut rng, 5, 20);
    let ret: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
    let (_, g) = value_loss_grad(&net, &obs, &ret).unwrap();
    let loss = |p: &[f64]| {
        let mut q = net.clone();
        q.set_flat(p).unwrap();
        value_loss_grad(&q, &obs, &ret).unwrap().0
    };
    let r = grad_check(loss, &net.to_flat(), &g.to_flat(), 100, H, &mut rng).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn squashed_density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pol = policy(&mut rng);
    for k in 0..5 {
        let obs: Vec<f64> = (0..5).map(|i| ((i + k) as f64 * 0.37).sin()).collect();
        // Integrate over u with the change of variables a = squash(u).
        let d = pol.dist(&obs).unwrap();
        let s = d.log_std.exp();
        let (lo, hi) = (d.mean - 12.0 * s, d.mean + 12.0 * s);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let u = lo + i as f64 * h;
            let jac = 0.5 * (pol.a_max - pol.a_min) * log1m_tanh_sq(u).exp();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * pol.log_prob_u(&d, u).exp() * jac * h;
        }
        assert!((total - 1.0).abs() < 1e-6, "mass {total}");
    }
}
