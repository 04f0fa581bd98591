//! Seeded datasets for the collision, anomaly, cross-collision, noise and cost curves.
//!
//! Each figure is a [`Table`] with empirical means, standard errors over
//! trials, and closed-form theory columns. Trials run in parallel; every trial
//! derives its own seeds from `(seed, trial)`, so output is byte-identical for
//! a fixed seed regardless of thread count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{
    collision_anomaly, collision_count, cross_anomaly, cross_collision_count, execution_time,
    expected_anomaly_noisy, expected_collisions_noisy, expected_collisions_quantum, expected_collisions_uniform,
    expected_cross_qq, expected_cross_qu, expected_cross_uu, normalized_anomaly, shot_budget, UniformMode,
};
use crate::distribution::{haar_random_state, measurement_distribution, NoiseModel, MAX_STATE_QUBITS};
use crate::error::{Error, Result};
use crate::rng::mix_seed;
use crate::sampling::{build_sampler, draw, draw_noisy, Sampler};
use crate::volume::csv_error;

pub const FIGURES: [u8; 6] = [1, 2, 3, 4, 5, 6];

/// `round(2^{8 + k/2})` for `k = 0..=14`: 2^8 to 2^15, two points per octave.
pub fn default_shots_grid() -> Vec<u64> {
    (0..=14).map(|k| (8.0 + f64::from(k) / 2.0).exp2().round() as u64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub figure: u8,
    pub n_qubits: u32,
    pub shots_grid: Vec<u64>,
    pub alpha_grid: Vec<f64>,
    /// Widths for the cost figure.
    pub qubit_grid: Vec<u32>,
    pub trials: u32,
    pub seed: u64,
    pub rep_rate: f64,
    pub parallel_factor: u64,
}

impl ExperimentSpec {
    pub fn new(figure: u8, seed: u64) -> Self {
        let alpha_grid = if figure == 6 {
            vec![1.0, 0.5, 0.1, 0.01, 0.002]
        } else {
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        };
        Self {
            figure,
            n_qubits: 16,
            shots_grid: default_shots_grid(),
            alpha_grid,
            qubit_grid: (4..=60).collect(),
            trials: 20,
            seed,
            rep_rate: 1e6,
            parallel_factor: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !FIGURES.contains(&self.figure) {
            return Err(Error::domain(format!("unknown figure {}", self.figure)));
        }
        if self.trials == 0 {
            return Err(Error::domain("trials must be at least 1"));
        }
        if self.figure == 6 {
            if self.qubit_grid.is_empty() || self.qubit_grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::domain("qubit grid must be non-empty and strictly increasing"));
            }
            if self.alpha_grid.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
                return Err(Error::domain("cost alphas must lie in (0, 1]"));
            }
            return Ok(());
        }
        if self.n_qubits == 0 || self.n_qubits > MAX_STATE_QUBITS {
            return Err(Error::domain(format!(
                "experiments simulate 1 to {MAX_STATE_QUBITS} qubits, got {}",
                self.n_qubits
            )));
        }
        if self.shots_grid.is_empty() || self.shots_grid[0] == 0 || self.shots_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("shots grid must be positive and strictly increasing"));
        }
        if self.figure == 5 && self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::domain("alphas must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A CSV table: header plus rows of pre-formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column `name` parsed as numbers.
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column(name)?;
        self.rows.iter().map(|r| r[j].parse().ok()).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header).map_err(csv_error)?;
        for row in &self.rows {
            out.write_record(row).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `trial(t)` for every trial in parallel; result `[t][k]` is metric vector `k`.
fn run_trials<F>(spec: &ExperimentSpec, trial: F) -> Result<Vec<Vec<Vec<f64>>>>
where
    F: Fn(u64) -> Result<Vec<Vec<f64>>> + Sync,
{
    (0..u64::from(spec.trials))
        .into_par_iter()
        .map(|t| trial(mix_seed(spec.seed, t)))
        .collect()
}

/// Column `(point, metric)` across trials.
fn across(trials: &[Vec<Vec<f64>>], point: usize, metric: usize) -> Vec<f64> {
    trials.iter().map(|t| t[point][metric]).collect()
}

fn haar_sampler(n_qubits: u32, seed: u64) -> Result<Sampler> {
    Ok(build_sampler(&measurement_distribution(&haar_random_state(n_qubits, seed)?)))
}

/// Dispatches on `spec.figure`.
pub fn run_figure(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    match spec.figure {
        1 => figure1(spec),
        2 => figure2(spec),
        3 => figure3(spec),
        4 => figure4(spec),
        5 => figure5(spec),
        _ => figure6(spec),
    }
}

/// Per trial: one Haar state; per grid point: `R` and `Delta` for that state and for uniform draws.
fn collision_trials(spec: &ExperimentSpec) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = spec.n_qubits;
    let dim = 1u64 << n;
    let uniform = Sampler::uniform(n)?;
    run_trials(spec, |seed| {
        let quantum = haar_sampler(n, mix_seed(seed, 0))?;
        spec.shots_grid
            .iter()
            .map(|&shots| {
                let rq = collision_count(&draw(&quantum, shots, mix_seed(seed, 2 * shots)));
                let ru = collision_count(&draw(&uniform, shots, mix_seed(seed, 2 * shots + 1)));
                Ok(vec![
                    rq as f64,
                    ru as f64,
                    collision_anomaly(rq, shots, dim)?.anomaly,
                    collision_anomaly(ru, shots, dim)?.anomaly,
                ])
            })
            .collect()
    })
}

/// Mean collision counts vs `N` for Haar-random states and the uniform distribution.
pub fn figure1(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let dim = 1u64 << spec.n_qubits;
    let trials = collision_trials(spec)?;
    let mut table = Table::new(&[
        "shots",
        "mean_r_quantum",
        "se_r_quantum",
        "mean_r_uniform",
        "se_r_uniform",
        "theory_quantum",
        "theory_uniform",
    ]);
    for (i, &shots) in spec.shots_grid.iter().enumerate() {
        let (mq, sq) = mean_se(&across(&trials, i, 0));
        let (mu, su) = mean_se(&across(&trials, i, 1));
        table.push(vec![
            shots.to_string(),
            num(mq),
            num(sq),
            num(mu),
            num(su),
            num(expected_collisions_quantum(dim, shots)),
            num(expected_collisions_uniform(dim, shots, UniformMode::Exact)),
        ]);
    }
    Ok(table)
}

/// Mean collision anomaly vs `N`.
///
/// Theory columns are the anomaly of the exact expectations: 1 for Haar states
/// and a small offset from 0 for uniform sampling (the baseline is the large-`D` form).
pub fn figure2(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let dim = 1u64 << spec.n_qubits;
    let trials = collision_trials(spec)?;
    let mut table = Table::new(&[
        "shots",
        "mean_delta_quantum",
        "se_delta_quantum",
        "mean_delta_uniform",
        "se_delta_uniform",
        "theory_quantum",
        "theory_uniform",
    ]);
    for (i, &shots) in spec.shots_grid.iter().enumerate() {
        let (mq, sq) = mean_se(&across(&trials, i, 2));
        let (mu, su) = mean_se(&across(&trials, i, 3));
        let baseline = expected_collisions_uniform(dim, shots, UniformMode::Asymptotic);
        let target = expected_collisions_quantum(dim, shots);
        let exact_uniform = expected_collisions_uniform(dim, shots, UniformMode::Exact);
        table.push(vec![
            shots.to_string(),
            num(mq),
            num(sq),
            num(mu),
            num(su),
            num(1.0),
            num(normalized_anomaly(exact_uniform, baseline, target)?),
        ]);
    }
    Ok(table)
}

/// Per trial: states `psi`, `psi'`; per grid point, cross-collisions for
/// same state, two uniform sets, state vs uniform, and different states.
fn cross_trials(spec: &ExperimentSpec) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = spec.n_qubits;
    let dim = 1u64 << n;
    let uniform = Sampler::uniform(n)?;
    run_trials(spec, |seed| {
        let psi = haar_sampler(n, mix_seed(seed, 0))?;
        let other = haar_sampler(n, mix_seed(seed, 1))?;
        spec.shots_grid
            .iter()
            .map(|&shots| {
                let s = |k: u64| mix_seed(seed, 8 * shots + k);
                let a = draw(&psi, shots, s(0));
                let b = draw(&psi, shots, s(1));
                let b_other = draw(&other, shots, s(2));
                let u1 = draw(&uniform, shots, s(3));
                let u2 = draw(&uniform, shots, s(4));
                let counts = [
                    cross_collision_count(&a, &b)?,
                    cross_collision_count(&u1, &u2)?,
                    cross_collision_count(&a, &u2)?,
                    cross_collision_count(&a, &b_other)?,
                ];
                let mut row: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                for c in counts {
                    row.push(cross_anomaly(c, shots, shots, dim)?.anomaly);
                }
                Ok(row)
            })
            .collect()
    })
}

const CROSS_CASES: [&str; 4] = ["qq", "uu", "qu", "qq_diff"];

/// Mean cross-collision counts vs `N_A = N_B = N`.
///
/// `qq_diff` pairs two independent Haar states and has no closed form.
pub fn figure3(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let dim = 1u64 << spec.n_qubits;
    let trials = cross_trials(spec)?;
    let mut header = vec!["shots".to_string()];
    for case in CROSS_CASES {
        header.push(format!("mean_rx_{case}"));
        header.push(format!("se_rx_{case}"));
    }
    header.extend(["theory_qq", "theory_uu", "theory_qu"].map(String::from));
    let mut table = Table { header, rows: Vec::new() };
    for (i, &shots) in spec.shots_grid.iter().enumerate() {
        let mut row = vec![shots.to_string()];
        for k in 0..CROSS_CASES.len() {
            let (m, s) = mean_se(&across(&trials, i, k));
            row.extend([num(m), num(s)]);
        }
        row.extend([
            num(expected_cross_qq(dim, shots, shots)),
            num(expected_cross_uu(dim, shots, shots)),
            num(expected_cross_qu(dim, shots, shots)),
        ]);
        table.push(row);
    }
    Ok(table)
}

/// Mean cross-collision anomaly vs `N`, including two different Haar states.
pub fn figure4(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let dim = 1u64 << spec.n_qubits;
    let trials = cross_trials(spec)?;
    let mut header = vec!["shots".to_string()];
    for case in CROSS_CASES {
        header.push(format!("mean_dx_{case}"));
        header.push(format!("se_dx_{case}"));
    }
    header.extend(["theory_qq", "theory_uu", "theory_qu"].map(String::from));
    let mut table = Table { header, rows: Vec::new() };
    for (i, &shots) in spec.shots_grid.iter().enumerate() {
        let mut row = vec![shots.to_string()];
        for k in 0..CROSS_CASES.len() {
            let (m, s) = mean_se(&across(&trials, i, CROSS_CASES.len() + k));
            row.extend([num(m), num(s)]);
        }
        let uu = expected_cross_uu(dim, shots, shots);
        let qq = expected_cross_qq(dim, shots, shots);
        let qu = expected_cross_qu(dim, shots, shots);
        row.extend([num(1.0), num(0.0), num(normalized_anomaly(qu, uu, qq)?)]);
        table.push(row);
    }
    Ok(table)
}

/// Collisions and anomaly of depolarized Haar states over the alpha and `N` grids.
pub fn figure5(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let n = spec.n_qubits;
    let dim = 1u64 << n;
    let alphas: Vec<NoiseModel> = spec.alpha_grid.iter().map(|&a| NoiseModel::new(a)).collect::<Result<_>>()?;
    let trials = run_trials(spec, |seed| {
        let psi = haar_sampler(n, mix_seed(seed, 0))?;
        let mut points = Vec::new();
        for (ai, &noise) in alphas.iter().enumerate() {
            for &shots in &spec.shots_grid {
                let set = draw_noisy(&psi, noise, shots, mix_seed(seed, (shots << 8) | ai as u64));
                let r = collision_count(&set);
                points.push(vec![r as f64, collision_anomaly(r, shots, dim)?.anomaly]);
            }
        }
        Ok(points)
    })?;
    let mut table = Table::new(&[
        "alpha",
        "shots",
        "mean_r",
        "se_r",
        "theory_r",
        "mean_delta",
        "se_delta",
        "theory_delta",
        "alpha_squared",
    ]);
    let mut point = 0;
    for &noise in &alphas {
        for &shots in &spec.shots_grid {
            let (mr, sr) = mean_se(&across(&trials, point, 0));
            let (md, sd) = mean_se(&across(&trials, point, 1));
            point += 1;
            table.push(vec![
                num(noise.alpha()),
                shots.to_string(),
                num(mr),
                num(sr),
                num(expected_collisions_noisy(dim, shots, noise)),
                num(md),
                num(sd),
                num(expected_anomaly_noisy(dim, shots, noise)?),
                num(noise.alpha() * noise.alpha()),
            ]);
        }
    }
    Ok(table)
}

/// Shot budget and sampling time vs `n` for each alpha.
pub fn figure6(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let mut table = Table::new(&["n_qubits", "alpha", "shots", "seconds", "days"]);
    for &alpha in &spec.alpha_grid {
        for &n in &spec.qubit_grid {
            let shots = shot_budget(n, alpha)?;
            let cost = execution_time(shots, spec.rep_rate, spec.parallel_factor)?;
            table.push(vec![
                n.to_string(),
                num(alpha),
                shots.to_string(),
                num(cost.seconds),
                num(cost.seconds / 86_400.0),
            ]);
        }
    }
    Ok(table)
}

/// Writes `figure<k>.csv` into `dir` for each spec and returns the paths.
pub fn write_figures(dir: &Path, specs: &[ExperimentSpec]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    specs
        .iter()
        .map(|spec| {
            let table = run_figure(spec)?;
            let path = dir.join(format!("figure{}.csv", spec.figure));
            let file = fs::File::create(&path)?;
            table.write_csv(std::io::BufWriter::new(file))?;
            Ok(path)
        })
        .collect()
}
