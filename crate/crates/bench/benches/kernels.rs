use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lfrl_core::nn::Mlp;
use lfrl_core::plant::{plant_step, trim, PlantConfig};
use lfrl_core::ppo::gae_segment;
use lfrl_core::sysid::{stlsq, FeatureLibrary};
use lfrl_core::RomModel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::init(&[13, 64, 64, 1], 1.0, &mut rng).unwrap();
    let x = uniform(&mut rng, 13, 2400);
    c.bench_function("mlp_forward_2400", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    let (y, cache) = net.forward(&x).unwrap();
    let up = DMatrix::from_element(y.nrows(), y.ncols(), 1.0);
    c.bench_function("mlp_backward_2400", |b| b.iter(|| net.backward(black_box(&cache), &up).unwrap()));
}

fn rom_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lib = FeatureLibrary::anonymous(1, true, 10, 1).unwrap();
    let coeffs = uniform(&mut rng, lib.n_features(), 10) * 0.05;
    let rom = RomModel::unscaled(coeffs, lib, 25.0, 0.0).unwrap();
    let x = vec![0.1; 10];
    c.bench_function("rom_step", |b| b.iter(|| rom.step(black_box(&x), &[0.8]).unwrap()));
}

fn plant(c: &mut Criterion) {
    let cfg = PlantConfig::default();
    let s = trim(0.8, &cfg).unwrap();
    c.bench_function("plant_step_0.5s", |b| b.iter(|| plant_step(black_box(&s), &cfg, cfg.dt_plant).unwrap()));
}

fn gae(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..0.0)).collect();
    let v: Vec<f64> = (0..301).map(|_| rng.random_range(-5.0..5.0)).collect();
    c.bench_function("gae_300", |b| b.iter(|| gae_segment(black_box(&r), &v, false, 0.99, 0.95)));
}

fn sparse_regression(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let theta = uniform(&mut rng, 3000, 12);
    let y = uniform(&mut rng, 3000, 10);
    c.bench_function("stlsq_3000x12", |b| b.iter(|| stlsq(black_box(&theta), &y, 0.02, 10).unwrap()));
}

criterion_group!(benches, mlp, rom_step, plant, gae, sparse_regression);
criterion_main!(benches);
