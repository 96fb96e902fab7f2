use lfrl_core::sysid::{identify_rom, stlsq, FeatureLibrary, IdentifyOptions, RomModel, Trajectory};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const A: [[f64; 4]; 4] = [
    [0.9, 0.0, 0.1, 0.0],
    [0.0, 0.8, 0.0, 0.15],
    [0.2, 0.0, 0.7, 0.0],
    [0.0, 0.0, 0.1, 0.85],
];
const B: [f64; 4] = [0.5, 0.0, 0.3, 0.0];

fn linear_trajectories(noise: f64, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..8)
        .map(|_| {
            let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut t = Trajectory { states: vec![], controls: vec![] };
            for _ in 0..250 {
                let u: f64 = rng.random_range(-1.0..1.0);
                let obs: Vec<f64> = x.iter().map(|v| v + noise * rng.sample::<f64, _>(StandardNormal)).collect();
                t.states.push(obs);
                t.controls.push(vec![u]);
                x = (0..4).map(|i| (0..4).map(|j| A[i][j] * x[j]).sum::<f64>() + B[i] * u).collect();
            }
            t
        })
        .collect()
}

fn true_coeff(feature: usize, state: usize) -> f64 {
    match feature {
        0 => 0.0,
        1..=4 => A[state][feature - 1],
        _ => B[state],
    }
}

fn fit(noise: f64) -> RomModel {
    let opts = IdentifyOptions {
        subsample_factor: 1,
        dt_record: 1.0,
        ..Default::default()
    };
    identify_rom(&linear_trajectories(noise, 3), &["a", "b", "c", "d"], &["u"], &opts).unwrap().0
}

#[test]
fn noise_free_linear_system_is_recovered_exactly() {
    let rom = fit(0.0);
    let eff = rom.effective_coefficients();
    assert_eq!(eff.shape(), (6, 4));
    for s in 0..4 {
        for f in 0..6 {
            let truth = true_coeff(f, s);
            assert_eq!(rom.coeffs[(f, s)] != 0.0, truth != 0.0, "pattern at feature {f}, state {s}");
            assert!((eff[(f, s)] - truth).abs() < 1e-6, "coefficient ({f},{s}) = {}", eff[(f, s)]);
        }
    }
}

#[test]
fn noisy_linear_system_is_recovered_approximately() {
    let rom = fit(1e-3);
    let eff = rom.effective_coefficients();
    for s in 0..4 {
        for f in 0..6 {
            assert!((eff[(f, s)] - true_coeff(f, s)).abs() < 1e-2, "({f},{s}) = {}", eff[(f, s)]);
        }
    }
}

fn design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_threshold_is_least_squares(seed in 0u64..1000, p in 2usize..8) {
        let th = design(40, p, seed);
        let y = design(40, 2, seed + 1);
        let r = stlsq(&th, &y, 0.0, 10).unwrap();
        let normal = (th.transpose() * &th).try_inverse().unwrap() * th.transpose() * &y;
        prop_assert!((r.coeffs - normal).abs().max() < 1e-9);
    }

    #[test]
    fn survivors_exceed_threshold(seed in 0u64..1000, thr in 0.01f64..0.5) {
        let th = design(50, 6, seed);
        let y = design(50, 3, seed + 7);
        let r = stlsq(&th, &y, thr, 10).unwrap();
        prop_assert!(r.coeffs.iter().all(|c| *c == 0.0 || c.abs() >= thr));
    }

    #[test]
    fn model_text_round_trips(seed in 0u64..1000) {
        let lib = FeatureLibrary::anonymous(2, true, 3, 1).unwrap();
        let c = design(lib.n_features(), 3, seed) * 0.1;
        let rom = RomModel::unscaled(c, lib, 25.0, 0.02).unwrap();
        let text = rom.to_text();
        let back = RomModel::load(text.as_bytes(), "m").unwrap();
        prop_assert_eq!(back.to_text(), text);
        let x = [0.1, -0.2, 0.3];
        prop_assert_eq!(back.step(&x, &[0.7]).unwrap(), rom.step(&x, &[0.7]).unwrap());
    }
}
