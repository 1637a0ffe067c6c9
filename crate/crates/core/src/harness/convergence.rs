//! The main convergence sweep: Hartree once, Bogoliubov kernels once, exact `N`-body per `N`.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::fit::{fit_rate, RateFit};
use crate::bogoliubov::{e2_correction, evolve_pair, BogoliubovPair};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Wavefunction};
use crate::hartree::{evolve_hartree, HartreeTrajectory};
use crate::linalg::{self, CMatrix};
use crate::nbody::{
    evolve_nbody_streaming, factorized_state, hs_distance, nbody_energy, reduce_marginal, trace_distance,
    MarginalDensity, NBodyState,
};

/// One CSV row: errors and diagnostics for one `(N, t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    #[serde(rename = "N")]
    pub particles: usize,
    pub t: f64,
    /// `Tr|γ¹_{N,t} - |φ_t⟩⟨φ_t||`.
    pub trace_err: f64,
    pub hs_err: f64,
    pub e2_norm: f64,
    /// `‖γ¹_{N,t} - |φ_t⟩⟨φ_t| - E₂‖` in Hilbert–Schmidt norm.
    pub e_minus_e2_norm: f64,
    /// `|⟨H_N⟩_t - ⟨H_N⟩_0| / max(1, |⟨H_N⟩_0|)`.
    pub energy_drift: f64,
    pub sym_defect: f64,
    /// Fraction of the one-particle momentum distribution with `|k| > k_max/2`.
    pub boundary_mass: f64,
    /// Second-marginal trace distance when enabled.
    pub trace_err_2: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub crate_version: String,
    pub target: String,
    pub floating_point: String,
    pub primary_fit: Option<RateFit>,
    pub secondary_fit: Option<RateFit>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub records: Vec<RunRecord>,
    /// Fit of `trace_err` against `N` at the final time.
    pub primary_fit: Option<RateFit>,
    /// Same fit at half the horizon, when that time is sampled.
    pub secondary_fit: Option<RateFit>,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Fraction of `Σ_k ⟨e_k, γ e_k⟩` carried by modes with `|k| > k_max/2`.
pub fn boundary_mass(gamma: &MarginalDensity) -> f64 {
    let grid = &gamma.grid;
    let m = grid.points();
    let freqs = grid.frequencies();
    let k_max = freqs.iter().fold(0.0f64, |a, k| a.max(k.abs()));
    let positions = grid.positions();
    let (mut tail, mut total) = (0.0, 0.0);
    for &k in freqs {
        let e: Vec<Complex64> = positions.iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        let mut occ = Complex64::new(0.0, 0.0);
        for x in 0..m {
            for y in 0..m {
                occ += e[x].conj() * gamma.matrix[(x, y)] * e[y];
            }
        }
        let occ = occ.re.max(0.0);
        total += occ;
        if k.abs() > 0.5 * k_max {
            tail += occ;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

struct Background {
    trajectory: HartreeTrajectory,
    pairs: Vec<BogoliubovPair>,
}

impl Background {
    fn pair_at(&self, t: f64) -> Option<&BogoliubovPair> {
        self.pairs.iter().find(|p| (p.time - t).abs() <= 1e-9 * self.trajectory.dt.max(1.0))
    }
}

fn failed_row(n: usize, t: f64, msg: &str) -> RunRecord {
    RunRecord {
        particles: n,
        t,
        trace_err: f64::NAN,
        hs_err: f64::NAN,
        e2_norm: f64::NAN,
        e_minus_e2_norm: f64::NAN,
        energy_drift: f64::NAN,
        sym_defect: f64::NAN,
        boundary_mass: f64::NAN,
        trace_err_2: None,
        status: format!("error: {msg}"),
    }
}

fn sample_record(
    state: &NBodyState,
    config: &ExperimentConfig,
    background: &Background,
    phi0: &Wavefunction,
    e0: f64,
) -> Result<RunRecord> {
    let n = state.particles;
    let t = state.time;
    let phi_t = background.trajectory.state_at(t)?;
    let gamma = reduce_marginal(state, 1)?;
    let pure = MarginalDensity::pure(&phi_t);
    let pair = background
        .pair_at(t)
        .ok_or_else(|| Error::Samples(format!("no Bogoliubov sample at t = {t}")))?;
    let e2 = e2_correction(pair, phi0, &phi_t, n as u64)?;
    let dx = state.grid.spacing();
    let residual: CMatrix = &gamma.matrix - &pure.matrix - &e2.matrix;
    let energy = nbody_energy(state, &config.potential)?;
    let trace_err_2 = if config.second_marginal {
        Some(trace_distance(&reduce_marginal(state, 2)?, &MarginalDensity::pure_pair(&phi_t))?)
    } else {
        None
    };
    Ok(RunRecord {
        particles: n,
        t,
        trace_err: trace_distance(&gamma, &pure)?,
        hs_err: hs_distance(&gamma, &pure)?,
        e2_norm: e2.l2_norm(),
        e_minus_e2_norm: linalg::frobenius(&residual) * dx,
        energy_drift: (energy - e0).abs() / e0.abs().max(1.0),
        sym_defect: state.symmetry_defect()?,
        boundary_mass: boundary_mass(&gamma),
        trace_err_2,
        status: "ok".into(),
    })
}

fn run_particles(
    n: usize,
    config: &ExperimentConfig,
    background: &Background,
    phi0: &Wavefunction,
    rows: &mut Vec<RunRecord>,
) -> Result<()> {
    let psi0 = factorized_state(phi0, n, config.memory_budget as u128)?;
    let e0 = nbody_energy(&psi0, &config.potential)?;
    evolve_nbody_streaming(&psi0, &config.potential, config.t_end, config.dt, Some(config.sample_stride), |s| {
        rows.push(sample_record(s, config, background, phi0, e0)?);
        Ok(())
    })?;
    Ok(())
}

fn fit_at(records: &[RunRecord], t: f64) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.status == "ok" && (r.t - t).abs() < 1e-9)
        .map(|r| (r.particles as f64, r.trace_err))
        .collect();
    fit_rate(&pts).ok()
}

/// Execute the sweep and persist `convergence.csv` and `manifest.json` in `config.output`.
///
/// Failures of a single `N` are recorded as marked rows; configuration errors abort before
/// any computation.
pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceRun> {
    config.validate()?;
    let grid: GridSpec = config.grid.build()?;
    let phi0 = config.initial.build(&grid)?;
    let trajectory = evolve_hartree(&phi0, &config.potential, config.t_end, config.dt, 1)?;
    let pairs = evolve_pair(&trajectory, config.t_end, config.dt, config.sample_stride)?;
    let background = Background { trajectory, pairs };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &n in &config.particles {
        let mut rows = Vec::new();
        match run_particles(n, config, &background, &phi0, &mut rows) {
            Ok(()) => records.extend(rows),
            Err(e) => {
                let t = rows.last().map_or(0.0, |r| r.t);
                records.extend(rows);
                records.push(failed_row(n, t, &e.to_string()));
                failures.push(format!("N = {n}: {e}"));
            }
        }
    }

    let t_final = background.trajectory.last().time;
    let primary_fit = fit_at(&records, t_final);
    let secondary_fit = fit_at(&records, 0.5 * t_final);
    let manifest = Manifest {
        config_hash: config.hash(),
        config: config.clone(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        floating_point: "IEEE 754 binary64, round to nearest even, single-threaded, no fused reassociation".into(),
        primary_fit,
        secondary_fit,
        failures,
    };
    let (csv_path, manifest_path) = write_outputs(&config.output, &records, &manifest)?;
    Ok(ConvergenceRun { records, primary_fit, secondary_fit, csv_path, manifest_path })
}

fn write_outputs(dir: &Path, records: &[RunRecord], manifest: &Manifest) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("convergence.csv");
    write_csv(&csv_path, records)?;
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(manifest)?)?;
    Ok((csv_path, manifest_path))
}

/// Write serialisable rows as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
