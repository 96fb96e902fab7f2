//! Sparse identification of a discrete-time reduced-order model
//! `x_{t+1} = Ξᵀ θ(x_t, a_t)` by sequentially thresholded least squares.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::plant::{PlantState, TrajectoryRow};

/// Default subsampling factor between recorded rows and model steps.
pub const SUBSAMPLE_FACTOR: usize = 5;

/// Plant variables making up the reduced-order state, in model order.
pub const ROM_STATE_NAMES: [&str; 10] = [
    "precursor",
    "t_core_out",
    "t_core_in",
    "t_hx_s_out",
    "t_hx_s_in",
    "mdot_p",
    "mdot_s",
    "p_core_out",
    "q_hx",
    "q_sg",
];

const FORMAT_TAG: &str = "lfrl-rom 1";

/// Sampled states and controls of one transient. `controls[k]` is applied
/// between `states[k]` and `states[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Reduced-order view of a recorded plant trajectory, with the power
    /// setpoint as the single control.
    pub fn from_plant_rows(rows: &[TrajectoryRow]) -> Self {
        Trajectory {
            states: rows.iter().map(|r| rom_state(&r.state)).collect(),
            controls: rows.iter().map(|r| vec![r.setpoint]).collect(),
        }
    }
}

/// Reduced-order state vector of a plant state.
pub fn rom_state(s: &PlantState) -> Vec<f64> {
    ROM_STATE_NAMES
        .iter()
        .map(|n| s.get(n).expect("reduced state names are plant fields"))
        .collect()
}

/// Keep rows `0, factor, 2 factor, ...`.
pub fn subsample<T: Clone>(rows: &[T], factor: usize) -> Result<Vec<T>> {
    if factor == 0 {
        return Err(Error::contract("subsample factor must be >= 1"));
    }
    if rows.is_empty() {
        return Err(Error::contract("cannot subsample an empty trajectory"));
    }
    Ok(rows.iter().step_by(factor).cloned().collect())
}

fn subsample_trajectory(t: &Trajectory, factor: usize) -> Result<Trajectory> {
    Ok(Trajectory {
        states: subsample(&t.states, factor)?,
        controls: subsample(&t.controls, factor)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLibrary {
    pub degree: usize,
    pub include_control: bool,
    pub n_state: usize,
    pub n_control: usize,
    pub column_names: Vec<String>,
}

impl FeatureLibrary {
    pub fn new(
        degree: usize,
        include_control: bool,
        state_names: &[&str],
        control_names: &[&str],
    ) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::contract(format!("library degree must be 1 or 2, got {degree}")));
        }
        if state_names.is_empty() {
            return Err(Error::contract("library needs at least one state"));
        }
        let mut names = vec!["1".to_string()];
        names.extend(state_names.iter().map(|s| s.to_string()));
        if degree == 2 {
            for i in 0..state_names.len() {
                for j in i..state_names.len() {
                    names.push(format!("{}*{}", state_names[i], state_names[j]));
                }
            }
        }
        if include_control {
            names.extend(control_names.iter().map(|s| s.to_string()));
        }
        Ok(FeatureLibrary {
            degree,
            include_control,
            n_state: state_names.len(),
            n_control: if include_control { control_names.len() } else { 0 },
            column_names: names,
        })
    }

    /// Library with anonymous column names `x0..`, `u0..`.
    pub fn anonymous(degree: usize, include_control: bool, n_state: usize, n_control: usize) -> Result<Self> {
        let xs: Vec<String> = (0..n_state).map(|i| format!("x{i}")).collect();
        let us: Vec<String> = (0..n_control).map(|i| format!("u{i}")).collect();
        let xr: Vec<&str> = xs.iter().map(String::as_str).collect();
        let ur: Vec<&str> = us.iter().map(String::as_str).collect();
        Self::new(degree, include_control, &xr, &ur)
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len()
    }

    /// Write the feature row of `(x, a)` into `out`, which must hold
    /// `n_features()` entries.
    pub fn features_into(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        let mut k = 1;
        for &v in x {
            out[k] = v;
            k += 1;
        }
        if self.degree == 2 {
            for i in 0..x.len() {
                for j in i..x.len() {
                    out[k] = x[i] * x[j];
                    k += 1;
                }
            }
        }
        if self.include_control {
            for &v in &a[..self.n_control] {
                out[k] = v;
                k += 1;
            }
        }
    }

    pub fn features(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features()];
        self.features_into(x, a, &mut out);
        out
    }
}

/// One-step regression pairs pooled from several trajectories. Pairs never
/// straddle a trajectory boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SysIdDataset {
    pub snapshots: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub controls: DMatrix<f64>,
    /// Row index at which each trajectory's pairs start.
    pub boundaries: Vec<usize>,
}

impl SysIdDataset {
    pub fn from_trajectories(trajs: &[Trajectory]) -> Result<Self> {
        let first = trajs
            .iter()
            .find(|t| !t.is_empty())
            .ok_or_else(|| Error::contract("no trajectory data"))?;
        let dx = first.states[0].len();
        let du = first.controls.first().map_or(0, Vec::len);
        let n: usize = trajs.iter().map(|t| t.len().saturating_sub(1)).sum();
        let mut snapshots = DMatrix::zeros(n, dx);
        let mut targets = DMatrix::zeros(n, dx);
        let mut controls = DMatrix::zeros(n, du);
        let mut boundaries = Vec::with_capacity(trajs.len());
        let mut r = 0;
        for (ti, t) in trajs.iter().enumerate() {
            if t.controls.len() != t.states.len() {
                return Err(Error::contract(format!(
                    "trajectory {ti}: {} states but {} controls",
                    t.states.len(),
                    t.controls.len()
                )));
            }
            boundaries.push(r);
            for k in 0..t.len().saturating_sub(1) {
                if t.states[k].len() != dx || t.states[k + 1].len() != dx || t.controls[k].len() != du {
                    return Err(Error::contract(format!("trajectory {ti} row {k}: inconsistent width")));
                }
                for j in 0..dx {
                    snapshots[(r, j)] = t.states[k][j];
                    targets[(r, j)] = t.states[k + 1][j];
                }
                for j in 0..du {
                    controls[(r, j)] = t.controls[k][j];
                }
                r += 1;
            }
        }
        Ok(SysIdDataset {
            snapshots,
            targets,
            controls,
            boundaries,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.snapshots.nrows()
    }
}

/// Feature matrix Θ, one row per snapshot.
pub fn build_library(dataset: &SysIdDataset, library: &FeatureLibrary) -> Result<DMatrix<f64>> {
    let n = dataset.n_rows();
    if n == 0 {
        return Err(Error::contract("cannot build a library from an empty dataset"));
    }
    if dataset.snapshots.ncols() != library.n_state
        || (library.include_control && dataset.controls.ncols() < library.n_control)
    {
        return Err(Error::contract("dataset width does not match library"));
    }
    let nf = library.n_features();
    let mut theta = DMatrix::zeros(n, nf);
    let mut row = vec![0.0; nf];
    for i in 0..n {
        let x: Vec<f64> = dataset.snapshots.row(i).iter().copied().collect();
        let a: Vec<f64> = dataset.controls.row(i).iter().copied().collect();
        library.features_into(&x, &a, &mut row);
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite feature at row {i}, column `{}`",
                    library.column_names[j]
                )));
            }
            theta[(i, j)] = *v;
        }
    }
    Ok(theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlsqResult {
    pub coeffs: DMatrix<f64>,
    pub iterations: usize,
    /// Some least-squares solve had a rank-deficient design and fell back to
    /// the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Minimum-norm least squares; the flag reports rank deficiency.
fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), false);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    let deficient = svd.singular_values.iter().any(|&s| s <= tol);
    let x = svd
        .solve(b, tol)
        .expect("both singular-vector sets were computed");
    (x, deficient)
}

/// Sequentially thresholded least squares. Each target column is solved,
/// coefficients with magnitude below `threshold` are zeroed, and the
/// surviving support is re-solved until it stops changing.
pub fn stlsq(
    theta: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    threshold: f64,
    max_iters: usize,
) -> Result<StlsqResult> {
    let (n, p) = theta.shape();
    if n < p {
        return Err(Error::contract(format!("stlsq needs rows >= columns, got {n} < {p}")));
    }
    if !(threshold >= 0.0) || max_iters == 0 {
        return Err(Error::contract("stlsq needs threshold >= 0 and max_iters >= 1"));
    }
    if targets.nrows() != n {
        return Err(Error::contract("stlsq: target rows differ from library rows"));
    }
    let d = targets.ncols();
    let mut coeffs = DMatrix::zeros(p, d);
    let mut rank_deficient = false;
    let mut iterations = 0;
    for j in 0..d {
        let y = targets.column(j).into_owned();
        let mut support: Vec<usize> = (0..p).collect();
        let mut c = DVector::zeros(p);
        for it in 1..=max_iters {
            iterations = iterations.max(it);
            let sub = theta.select_columns(support.iter());
            let (sol, def) = lstsq(&sub, &y);
            rank_deficient |= def;
            c.fill(0.0);
            for (k, &col) in support.iter().enumerate() {
                c[col] = sol[k];
            }
            let kept: Vec<usize> = support.iter().copied().filter(|&i| c[i].abs() >= threshold).collect();
            if kept.len() == support.len() {
                break;
            }
            for &i in &support {
                if c[i].abs() < threshold {
                    c[i] = 0.0;
                }
            }
            support = kept;
            if support.is_empty() {
                break;
            }
        }
        coeffs.set_column(j, &c);
    }
    Ok(StlsqResult {
        coeffs,
        iterations,
        rank_deficient,
    })
}

/// Identified discrete-time model.
///
/// `coeffs` live in standardized space: library columns other than the
/// constant are z-scored with `feature_mean`/`feature_scale`, and targets
/// with `target_mean`/`target_scale`. The sparsity threshold applies there.
#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    pub coeffs: DMatrix<f64>,
    pub library: FeatureLibrary,
    pub dt_rom: f64,
    pub state_names: Vec<String>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_scale: Vec<f64>,
    pub threshold: f64,
    effective: DMatrix<f64>,
}

impl RomModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        coeffs: DMatrix<f64>,
        library: FeatureLibrary,
        dt_rom: f64,
        state_names: Vec<String>,
        feature_mean: Vec<f64>,
        feature_scale: Vec<f64>,
        target_mean: Vec<f64>,
        target_scale: Vec<f64>,
        threshold: f64,
    ) -> Result<Self> {
        let nf = library.n_features();
        let dx = library.n_state;
        if coeffs.shape() != (nf, dx)
            || feature_mean.len() != nf - 1
            || feature_scale.len() != nf - 1
            || target_mean.len() != dx
            || target_scale.len() != dx
            || state_names.len() != dx
        {
            return Err(Error::contract("model dimensions are inconsistent"));
        }
        if feature_scale.iter().chain(&target_scale).any(|s| !(*s > 0.0)) {
            return Err(Error::contract("model scales must be positive"));
        }
        let mut rom = RomModel {
            coeffs,
            library,
            dt_rom,
            state_names,
            feature_mean,
            feature_scale,
            target_mean,
            target_scale,
            threshold,
            effective: DMatrix::zeros(0, 0),
        };
        rom.effective = rom.compute_effective();
        Ok(rom)
    }

    /// Model whose coefficients act directly on raw features.
    pub fn unscaled(coeffs: DMatrix<f64>, library: FeatureLibrary, dt_rom: f64, threshold: f64) -> Result<Self> {
        let nf = library.n_features();
        let dx = library.n_state;
        let names = library.column_names[1..=dx].to_vec();
        Self::new(
            coeffs,
            library,
            dt_rom,
            names,
            vec![0.0; nf - 1],
            vec![1.0; nf - 1],
            vec![0.0; dx],
            vec![1.0; dx],
            threshold,
        )
    }

    fn compute_effective(&self) -> DMatrix<f64> {
        let (nf, dx) = self.coeffs.shape();
        let mut e = DMatrix::zeros(nf, dx);
        for j in 0..dx {
            let ys = self.target_scale[j];
            let mut c0 = self.coeffs[(0, j)];
            for i in 1..nf {
                let w = self.coeffs[(i, j)] / self.feature_scale[i - 1];
                e[(i, j)] = ys * w;
                c0 -= w * self.feature_mean[i - 1];
            }
            e[(0, j)] = ys * c0 + self.target_mean[j];
        }
        e
    }

    /// Coefficients acting on raw (unstandardized) features.
    pub fn effective_coefficients(&self) -> &DMatrix<f64> {
        &self.effective
    }

    pub fn n_state(&self) -> usize {
        self.library.n_state
    }

    /// One model step. Errors when the result leaves the finite range.
    pub fn step(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_state()];
        self.step_into(x, a, &mut out)?;
        Ok(out)
    }

    pub fn step_into(&self, x: &[f64], a: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n_state() || a.len() < self.library.n_control {
            return Err(Error::contract("model step: input dimension mismatch"));
        }
        let nf = self.library.n_features();
        let mut phi = [0.0; 128];
        let phi: &mut [f64] = if nf <= 128 { &mut phi[..nf] } else { return self.step_slow(x, a, out) };
        self.library.features_into(x, a, phi);
        for (j, o) in out.iter_mut().enumerate() {
            let col = self.effective.column(j);
            let mut acc = 0.0;
            for i in 0..nf {
                acc += col[i] * phi[i];
            }
            if !acc.is_finite() {
                return Err(Error::Diverged(format!("model state `{}` left the finite range", self.state_names[j])));
            }
            *o = acc;
        }
        Ok(())
    }

    fn step_slow(&self, x: &[f64], a: &[f64], out: &mut [f64]) -> Result<()> {
        let phi = DVector::from_vec(self.library.features(x, a));
        let y = self.effective.tr_mul(&phi);
        for (j, o) in out.iter_mut().enumerate() {
            if !y[j].is_finite() {
                return Err(Error::Diverged(format!("model state `{}` left the finite range", self.state_names[j])));
            }
            *o = y[j];
        }
        Ok(())
    }

    /// Largest eigenvalue magnitude of the linear state map, or `None` for
    /// nonlinear libraries.
    pub fn spectral_radius(&self) -> Option<f64> {
        if self.library.degree != 1 {
            return None;
        }
        let dx = self.n_state();
        let a = DMatrix::from_fn(dx, dx, |i, j| self.effective[(j + 1, i)]);
        Some(a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let nums = |v: &[f64]| v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{FORMAT_TAG}");
        let _ = writeln!(s, "degree {}", self.library.degree);
        let _ = writeln!(s, "include_control {}", u8::from(self.library.include_control));
        let _ = writeln!(s, "columns {}", self.library.column_names.join(" "));
        let _ = writeln!(s, "n_control {}", self.library.n_control);
        let _ = writeln!(s, "dt_rom {}", fmt17(self.dt_rom));
        let _ = writeln!(s, "threshold {}", fmt17(self.threshold));
        let _ = writeln!(s, "state_names {}", self.state_names.join(" "));
        let _ = writeln!(s, "feature_mean {}", nums(&self.feature_mean));
        let _ = writeln!(s, "feature_scale {}", nums(&self.feature_scale));
        let _ = writeln!(s, "target_mean {}", nums(&self.target_mean));
        let _ = writeln!(s, "target_scale {}", nums(&self.target_scale));
        let (r, c) = self.coeffs.shape();
        let _ = writeln!(s, "coeffs {r} {c}");
        for i in 0..r {
            let row: Vec<f64> = self.coeffs.row(i).iter().copied().collect();
            let _ = writeln!(s, "{}", nums(&row));
        }
        s
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().enumerate().map(|(i, l)| (i + 1, l.as_str()));
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (ln, line) = it
                .next()
                .ok_or_else(|| Error::parse(path, lines.len(), format!("missing `{key}`")))?;
            if key.is_empty() {
                return Ok((ln, line.to_string()));
            }
            let rest = line
                .strip_prefix(key)
                .filter(|r| r.is_empty() || r.starts_with(' '))
                .ok_or_else(|| Error::parse(path, ln, format!("expected `{key}`")))?;
            Ok((ln, rest.trim().to_string()))
        };
        let (ln, tag) = next("")?;
        if tag.trim() != FORMAT_TAG {
            return Err(Error::parse(path, ln, "unsupported model format"));
        }
        let int = |(ln, v): (usize, String)| -> Result<usize> {
            v.parse().map_err(|_| Error::parse(path, ln, format!("bad integer `{v}`")))
        };
        let float = |(ln, v): (usize, String)| -> Result<f64> {
            v.parse().map_err(|_| Error::parse(path, ln, format!("bad number `{v}`")))
        };
        let floats = |(ln, v): (usize, String)| -> Result<Vec<f64>> {
            v.split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::parse(path, ln, format!("bad number `{t}`"))))
                .collect()
        };
        let degree = int(next("degree")?)?;
        let include_control = int(next("include_control")?)? != 0;
        let (cl, cols) = next("columns")?;
        let column_names: Vec<String> = cols.split_whitespace().map(str::to_string).collect();
        let n_control = int(next("n_control")?)?;
        let dt_rom = float(next("dt_rom")?)?;
        let threshold = float(next("threshold")?)?;
        let state_names: Vec<String> = next("state_names")?.1.split_whitespace().map(str::to_string).collect();
        let feature_mean = floats(next("feature_mean")?)?;
        let feature_scale = floats(next("feature_scale")?)?;
        let target_mean = floats(next("target_mean")?)?;
        let target_scale = floats(next("target_scale")?)?;
        let (hl, shape) = next("coeffs")?;
        let dims: Vec<usize> = shape.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        if dims.len() != 2 {
            return Err(Error::parse(path, hl, "bad coefficient shape"));
        }
        let mut coeffs = DMatrix::zeros(dims[0], dims[1]);
        for i in 0..dims[0] {
            let (ln, line) = next("")?;
            let row = floats((ln, line))?;
            if row.len() != dims[1] {
                return Err(Error::parse(path, ln, "coefficient row has wrong length"));
            }
            for (j, v) in row.into_iter().enumerate() {
                coeffs[(i, j)] = v;
            }
        }
        let snames: Vec<&str> = state_names.iter().map(String::as_str).collect();
        let unames: Vec<&str> = column_names
            .iter()
            .rev()
            .take(n_control)
            .rev()
            .map(String::as_str)
            .collect();
        let library = FeatureLibrary::new(degree, include_control, &snames, &unames)?;
        if library.column_names != column_names {
            return Err(Error::parse(path, cl, "library columns do not match state names"));
        }
        RomModel::new(
            coeffs,
            library,
            dt_rom,
            state_names,
            feature_mean,
            feature_scale,
            target_mean,
            target_scale,
            threshold,
        )
    }
}

/// 17 significant digits in scientific notation.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Standalone model step.
pub fn rom_step(rom: &RomModel, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    rom.step(x, a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyOptions {
    pub degree: usize,
    pub include_control: bool,
    pub threshold: f64,
    pub max_iters: usize,
    pub holdout_fraction: f64,
    pub subsample_factor: usize,
    /// Interval between recorded rows (s).
    pub dt_record: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions {
            degree: 1,
            include_control: true,
            threshold: 0.02,
            max_iters: 10,
            holdout_fraction: 0.1,
            subsample_factor: SUBSAMPLE_FACTOR,
            dt_record: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub state_names: Vec<String>,
    /// One-step coefficient of determination per state on held-out data.
    pub holdout_r2: Vec<f64>,
    /// Free-running rollout RMSE per state on held-out trajectories.
    pub rollout_rmse: Vec<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
    pub nonzero: usize,
    pub iterations: usize,
    pub rank_deficient: bool,
    /// Some holdout R² is negative.
    pub negative_r2: bool,
    /// A holdout rollout diverged.
    pub rollout_diverged: bool,
    /// Largest eigenvalue magnitude of the state-to-state map, for linear
    /// libraries. Above 1 the free-running model is unstable.
    pub spectral_radius: Option<f64>,
}

impl std::fmt::Display for FitReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "trajectories: {} train, {} holdout; nonzero coefficients: {}; stlsq iterations: {}",
            self.n_train, self.n_holdout, self.nonzero, self.iterations
        )?;
        writeln!(f, "{:<12} {:>12} {:>12}", "state", "holdout_r2", "rollout_rmse")?;
        for (i, n) in self.state_names.iter().enumerate() {
            writeln!(f, "{:<12} {:>12.6} {:>12.3e}", n, self.holdout_r2[i], self.rollout_rmse[i])?;
        }
        if let Some(r) = self.spectral_radius {
            writeln!(f, "spectral radius: {r:.6}")?;
        }
        if self.rank_deficient {
            writeln!(f, "warning: rank-deficient support, minimum-norm solution used")?;
        }
        if self.negative_r2 {
            writeln!(f, "warning: negative holdout R²")?;
        }
        if self.rollout_diverged {
            writeln!(f, "warning: holdout rollout diverged")?;
        }
        Ok(())
    }
}

fn column_stats(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows() as f64;
    let mut mean = Vec::with_capacity(m.ncols());
    let mut scale = Vec::with_capacity(m.ncols());
    for c in m.column_iter() {
        let mu = c.sum() / n;
        let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let sd = var.sqrt();
        mean.push(mu);
        scale.push(if sd > 1e-12 * mu.abs().max(1.0) { sd } else { 1.0 });
    }
    (mean, scale)
}

/// Subsample, split off the last `holdout_fraction` of trajectories, fit by
/// STLSQ on standardized features and targets, and score on the holdout.
pub fn identify_rom(
    trajectories: &[Trajectory],
    state_names: &[&str],
    control_names: &[&str],
    opts: &IdentifyOptions,
) -> Result<(RomModel, FitReport)> {
    if trajectories.len() < 2 {
        return Err(Error::contract("identification needs at least two trajectories"));
    }
    if !(0.0..1.0).contains(&opts.holdout_fraction) {
        return Err(Error::contract("holdout fraction must lie in [0, 1)"));
    }
    let library = FeatureLibrary::new(opts.degree, opts.include_control, state_names, control_names)?;
    let sub: Vec<Trajectory> = trajectories
        .iter()
        .map(|t| subsample_trajectory(t, opts.subsample_factor))
        .collect::<Result<_>>()?;
    let n_hold = ((sub.len() as f64 * opts.holdout_fraction).round() as usize)
        .max(usize::from(opts.holdout_fraction > 0.0))
        .min(sub.len() - 1);
    let (train, hold) = sub.split_at(sub.len() - n_hold);

    let data = SysIdDataset::from_trajectories(train)?;
    let theta = build_library(&data, &library)?;
    let raw_feats = theta.columns(1, theta.ncols() - 1).into_owned();
    let (f_mean, f_scale) = column_stats(&raw_feats);
    let (t_mean, t_scale) = column_stats(&data.targets);
    let mut z = theta.clone();
    for j in 1..z.ncols() {
        let (m, s) = (f_mean[j - 1], f_scale[j - 1]);
        z.column_mut(j).apply(|v| *v = (*v - m) / s);
    }
    let mut yz = data.targets.clone();
    for j in 0..yz.ncols() {
        let (m, s) = (t_mean[j], t_scale[j]);
        yz.column_mut(j).apply(|v| *v = (*v - m) / s);
    }
    let fit = stlsq(&z, &yz, opts.threshold, opts.max_iters)?;
    if fit.rank_deficient {
        warn!("identification: rank-deficient support, minimum-norm solution used");
    }
    let rom = RomModel::new(
        fit.coeffs,
        library,
        opts.dt_record * opts.subsample_factor as f64,
        state_names.iter().map(|s| s.to_string()).collect(),
        f_mean,
        f_scale,
        t_mean,
        t_scale,
        opts.threshold,
    )?;

    let dx = state_names.len();
    let mut holdout_r2 = vec![f64::NAN; dx];
    let mut rollout_rmse = vec![f64::NAN; dx];
    let mut rollout_diverged = false;
    if !hold.is_empty() {
        let hd = SysIdDataset::from_trajectories(hold)?;
        let mut sse = vec![0.0; dx];
        let mut mean = vec![0.0; dx];
        let n = hd.n_rows() as f64;
        for i in 0..hd.n_rows() {
            for j in 0..dx {
                mean[j] += hd.targets[(i, j)] / n;
            }
        }
        let mut sst = vec![0.0; dx];
        for i in 0..hd.n_rows() {
            let x: Vec<f64> = hd.snapshots.row(i).iter().copied().collect();
            let a: Vec<f64> = hd.controls.row(i).iter().copied().collect();
            let y = rom.step(&x, &a)?;
            for j in 0..dx {
                let t = hd.targets[(i, j)];
                sse[j] += (y[j] - t).powi(2);
                sst[j] += (t - mean[j]).powi(2);
            }
        }
        for j in 0..dx {
            holdout_r2[j] = if sst[j] > 0.0 { 1.0 - sse[j] / sst[j] } else if sse[j] == 0.0 { 1.0 } else { f64::NEG_INFINITY };
        }
        let mut acc = vec![0.0; dx];
        let mut count = 0usize;
        'traj: for t in hold {
            let mut x = t.states[0].clone();
            for k in 0..t.len() - 1 {
                match rom.step(&x, &t.controls[k]) {
                    Ok(nx) => x = nx,
                    Err(_) => {
                        rollout_diverged = true;
                        continue 'traj;
                    }
                }
                for j in 0..dx {
                    acc[j] += (x[j] - t.states[k + 1][j]).powi(2);
                }
                count += 1;
            }
        }
        if count > 0 {
            rollout_rmse = acc.iter().map(|s| (s / count as f64).sqrt()).collect();
        }
        if rollout_rmse.iter().any(|v| !v.is_finite()) {
            rollout_diverged = true;
        }
    }
    let report = FitReport {
        state_names: rom.state_names.clone(),
        negative_r2: holdout_r2.iter().any(|r| *r < 0.0),
        holdout_r2,
        rollout_rmse,
        n_train: train.len(),
        n_holdout: hold.len(),
        nonzero: rom.coeffs.iter().filter(|v| **v != 0.0).count(),
        iterations: fit.iterations,
        rank_deficient: fit.rank_deficient,
        rollout_diverged,
        spectral_radius: rom.spectral_radius(),
    };
    Ok((rom, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_keeps_every_fifth_row() {
        let rows: Vec<usize> = (0..11).collect();
        assert_eq!(subsample(&rows, 5).unwrap(), vec![0, 5, 10]);
        assert_eq!(subsample(&rows, 1).unwrap(), rows);
        assert_eq!(subsample(&vec![0u8; 11250], 5).unwrap().len(), 2250);
        assert!(subsample::<u8>(&[], 5).is_err());
        assert!(subsample(&rows, 0).is_err());
    }

    fn dataset(x: &[&[f64]], a: &[&[f64]]) -> SysIdDataset {
        let n = x.len();
        SysIdDataset {
            snapshots: DMatrix::from_fn(n, x[0].len(), |i, j| x[i][j]),
            targets: DMatrix::from_fn(n, x[0].len(), |i, j| x[i][j]),
            controls: DMatrix::from_fn(n, a.first().map_or(0, |r| r.len()), |i, j| a[i][j]),
            boundaries: vec![0],
        }
    }

    #[test]
    fn library_rows() {
        let lib = FeatureLibrary::anonymous(1, true, 1, 1).unwrap();
        let th = build_library(&dataset(&[&[2.0]], &[&[3.0]]), &lib).unwrap();
        assert_eq!(th.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);

        let lib = FeatureLibrary::anonymous(2, false, 2, 0).unwrap();
        let th = build_library(&dataset(&[&[1.0, 2.0]], &[&[]]), &lib).unwrap();
        assert_eq!(th.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 2.0, 1.0, 2.0, 4.0]);
        assert_eq!(lib.column_names, ["1", "x0", "x1", "x0*x0", "x0*x1", "x1*x1"]);
    }

    #[test]
    fn library_rejects_empty_and_non_finite() {
        let lib = FeatureLibrary::anonymous(1, true, 1, 1).unwrap();
        let empty = SysIdDataset {
            snapshots: DMatrix::zeros(0, 1),
            targets: DMatrix::zeros(0, 1),
            controls: DMatrix::zeros(0, 1),
            boundaries: vec![],
        };
        assert!(matches!(build_library(&empty, &lib), Err(Error::Contract(_))));
        let err = build_library(&dataset(&[&[f64::NAN]], &[&[1.0]]), &lib).unwrap_err();
        assert!(err.to_string().contains("row 0") && err.to_string().contains("x0"), "{err}");
    }

    fn scalar_system() -> (DMatrix<f64>, DMatrix<f64>) {
        let mut x = vec![1.0];
        let mut a = Vec::new();
        for k in 0..200 {
            let u = (0.37 * k as f64).sin() + 0.5 * (1.3 * k as f64).cos();
            a.push(u);
            x.push(0.9 * x[k] + 0.1 * u);
        }
        let theta = DMatrix::from_fn(200, 3, |i, j| [1.0, x[i], a[i]][j]);
        let y = DMatrix::from_fn(200, 1, |i, _| x[i + 1]);
        (theta, y)
    }

    #[test]
    fn stlsq_recovers_scalar_system() {
        let (theta, y) = scalar_system();
        let r = stlsq(&theta, &y, 0.05, 10).unwrap();
        assert_eq!(r.coeffs[(0, 0)], 0.0);
        assert!((r.coeffs[(1, 0)] - 0.9).abs() < 1e-10);
        assert!((r.coeffs[(2, 0)] - 0.1).abs() < 1e-10);
    }

    #[test]
    fn stlsq_without_threshold_is_least_squares() {
        let (theta, y) = scalar_system();
        let r = stlsq(&theta, &y, 0.0, 10).unwrap();
        let normal = (theta.transpose() * &theta)
            .lu()
            .solve(&(theta.transpose() * &y))
            .unwrap();
        assert!((r.coeffs.clone() - normal).amax() < 1e-9);
    }

    #[test]
    fn stlsq_zero_targets_give_zero() {
        let (theta, _) = scalar_system();
        let r = stlsq(&theta, &DMatrix::zeros(200, 2), 0.01, 10).unwrap();
        assert!(r.coeffs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stlsq_flags_rank_deficiency() {
        let theta = DMatrix::from_fn(10, 2, |i, _| i as f64);
        let y = DMatrix::from_fn(10, 1, |i, _| 2.0 * i as f64);
        let r = stlsq(&theta, &y, 0.0, 3).unwrap();
        assert!(r.rank_deficient);
        assert!((r.coeffs[(0, 0)] - 1.0).abs() < 1e-9 && (r.coeffs[(1, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stlsq_rejects_wide_design() {
        assert!(stlsq(&DMatrix::zeros(2, 3), &DMatrix::zeros(2, 1), 0.1, 1).is_err());
    }

    #[test]
    fn rom_step_arithmetic() {
        let lib = FeatureLibrary::anonymous(1, true, 1, 1).unwrap();
        let rom = RomModel::unscaled(DMatrix::from_column_slice(3, 1, &[0.0, 0.9, 0.1]), lib, 25.0, 0.05).unwrap();
        assert!((rom.step(&[1.0], &[1.0]).unwrap()[0] - 1.0).abs() < 1e-15);

        let lib = FeatureLibrary::anonymous(1, false, 3, 0).unwrap();
        let mut xi = DMatrix::zeros(4, 3);
        for j in 0..3 {
            xi[(j + 1, j)] = 1.0;
        }
        let rom = RomModel::unscaled(xi, lib, 25.0, 0.0).unwrap();
        assert_eq!(rom.step(&[0.3, -2.0, 7.5], &[]).unwrap(), vec![0.3, -2.0, 7.5]);
    }

    #[test]
    fn rom_step_reports_divergence() {
        let lib = FeatureLibrary::anonymous(1, false, 1, 0).unwrap();
        let rom = RomModel::unscaled(DMatrix::from_column_slice(2, 1, &[0.0, 1e300]), lib, 25.0, 0.0).unwrap();
        assert!(matches!(rom.step(&[1e300], &[]), Err(Error::Diverged(_))));
    }

    #[test]
    fn identify_needs_two_trajectories() {
        let t = Trajectory { states: vec![vec![1.0]; 5], controls: vec![vec![0.0]; 5] };
        assert!(identify_rom(&[t], &["x"], &["u"], &IdentifyOptions::default()).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let lib = FeatureLibrary::new(2, true, &["a", "b"], &["u"]).unwrap();
        let coeffs = DMatrix::from_fn(7, 2, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let rom = RomModel::new(
            coeffs,
            lib,
            25.0,
            vec!["a".into(), "b".into()],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![-1.0, 1e-17],
            vec![0.7, 0.9],
            0.02,
        )
        .unwrap();
        let text = rom.to_text();
        let back = RomModel::load(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, rom);
        assert_eq!(back.to_text(), text);
    }
}
