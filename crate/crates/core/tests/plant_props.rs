use lfrl_core::plant::{plant_step, trim, ControlledPlant, PlantConfig};

/// Linear setpoint ramp from `from` to `to` over `seconds`, then returns the
/// final state and the largest core-outlet excursion seen along the way.
fn ramp(from: f64, to: f64, seconds: f64, cfg: &PlantConfig) -> (f64, f64, f64) {
    let mut p = ControlledPlant::at_trim(from, cfg).unwrap();
    let n = (seconds / cfg.dt_plant).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 1..=n {
        let sp = from + (to - from) * k as f64 / n as f64;
        p.advance(sp, cfg.dt_plant).unwrap();
        worst = worst.max((p.state.t_core_out - cfg.t_core_out_nom).abs());
    }
    (p.state.power, p.state.t_core_out, worst)
}

#[test]
fn pid_ramp_reaches_half_power() {
    let cfg = PlantConfig::default();
    let (power, t_out, worst) = ramp(1.0, 0.5, 1000.0, &cfg);
    assert!((power - 0.5).abs() <= 0.02, "power {power}");
    assert!((t_out - cfg.t_core_out_nom).abs() < 0.05, "t_core_out {t_out}");
    assert!(worst < 0.05, "outlet excursion {worst}");
}

#[test]
fn trim_points_are_fixed_points_of_the_step() {
    let cfg = PlantConfig::default();
    for p in [0.5, 0.75, 1.0] {
        let s = trim(p, &cfg).unwrap();
        let next = plant_step(&s, &cfg, cfg.dt_plant).unwrap();
        for (a, b) in s.to_array().iter().zip(next.to_array()) {
            assert!((a - b).abs() < 1e-8, "power {p}: {a} vs {b}");
        }
    }
}

#[test]
fn secondary_outlet_rises_with_power() {
    let cfg = PlantConfig::default();
    let temps: Vec<f64> = (0..=10).map(|i| trim(0.5 + 0.05 * i as f64, &cfg).unwrap().t_hx_s_out).collect();
    assert!(temps.windows(2).all(|w| w[1] >= w[0]), "{temps:?}");
}
