//! Drivers behind the CLI subcommands that are not full sweeps.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::convergence::write_csv;
use crate::bogoliubov::{e2_correction, evolve_pair};
use crate::combinatorics::{a_coeffs, d_n, krasikov_check, weighted_sum};
use crate::error::{Error, Result};
use crate::hartree::{evolve_hartree, h1_norm, hartree_energy};

#[derive(Debug, Clone, Serialize)]
struct HartreeRow {
    t: f64,
    x: f64,
    re: f64,
    im: f64,
    density: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HartreeSummary {
    pub samples: usize,
    pub final_norm: f64,
    pub energy_drift: f64,
    pub final_h1_norm: f64,
    pub csv: PathBuf,
}

/// Evolve `φ` and write `hartree.csv` with one row per grid point and sample.
pub fn run_hartree(config: &ExperimentConfig) -> Result<HartreeSummary> {
    config.validate()?;
    let grid = config.grid.build()?;
    let phi0 = config.initial.build(&grid)?;
    let traj = evolve_hartree(&phi0, &config.potential, config.t_end, config.dt, config.sample_stride)?;
    let positions = grid.positions();
    let rows: Vec<HartreeRow> = traj
        .samples
        .iter()
        .flat_map(|s| {
            positions.iter().zip(&s.amplitudes).map(move |(&x, z)| HartreeRow {
                t: s.time,
                x,
                re: z.re,
                im: z.im,
                density: z.norm_sqr(),
            })
        })
        .collect();
    fs::create_dir_all(&config.output)?;
    let csv = config.output.join("hartree.csv");
    write_csv(&csv, &rows)?;
    let e0 = hartree_energy(traj.first(), &config.potential)?;
    let e1 = hartree_energy(traj.last(), &config.potential)?;
    Ok(HartreeSummary {
        samples: traj.samples.len(),
        final_norm: traj.last().norm(),
        energy_drift: (e1 - e0).abs() / e0.abs().max(1.0),
        final_h1_norm: h1_norm(traj.last()),
        csv,
    })
}

#[derive(Debug, Clone, Serialize)]
struct BogoliubovRow {
    #[serde(rename = "N")]
    particles: usize,
    t: f64,
    e2_norm: f64,
    n_times_e2_norm: f64,
    g2_norm_sqr: f64,
    commutator_defect: f64,
    pairing_defect: f64,
}

/// Kernel run on the main grid; writes `bogoliubov.csv` with `E₂` norms for every `N` in
/// the config and the symplectic defects.
pub fn run_bogoliubov(config: &ExperimentConfig) -> Result<PathBuf> {
    config.validate()?;
    let grid = config.grid.build()?;
    let phi0 = config.initial.build(&grid)?;
    let traj = evolve_hartree(&phi0, &config.potential, config.t_end, config.dt, 1)?;
    let pairs = evolve_pair(&traj, config.t_end, config.dt, config.sample_stride)?;
    let mut rows = Vec::new();
    for pair in &pairs {
        let phi_t = traj.state_at(pair.time)?;
        let defects = pair.symplectic_defects();
        for &n in &config.particles {
            let e2 = e2_correction(pair, &phi0, &phi_t, n as u64)?;
            rows.push(BogoliubovRow {
                particles: n,
                t: pair.time,
                e2_norm: e2.l2_norm(),
                n_times_e2_norm: n as f64 * e2.l2_norm(),
                g2_norm_sqr: pair.g2_norm_sqr(),
                commutator_defect: defects.commutator,
                pairing_defect: defects.pairing,
            });
        }
    }
    fs::create_dir_all(&config.output)?;
    let csv = config.output.join("bogoliubov.csv");
    write_csv(&csv, &rows)?;
    Ok(csv)
}

#[derive(Debug, Clone, Serialize)]
struct LaguerreRow {
    m: u64,
    a_m: f64,
    ln_abs_a_m: f64,
    sign: f64,
    krasikov_ln_bound: Option<f64>,
    krasikov_ln_value: Option<f64>,
    krasikov_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LaguerreSummary {
    pub particles: u64,
    pub d_n: f64,
    pub sum_sq: f64,
    pub weighted: f64,
    pub scaled_weighted: f64,
    pub csv: PathBuf,
}

/// Coefficient table `A_m`, `m < N`, with the Krasikov comparison; writes `laguerre.csv`.
pub fn run_laguerre(particles: u64, output: &std::path::Path) -> Result<LaguerreSummary> {
    if particles == 0 {
        return Err(Error::config("laguerre table needs N ≥ 1"));
    }
    let table = a_coeffs(particles)?;
    let rows = table
        .coefficients
        .iter()
        .enumerate()
        .map(|(m, a)| {
            let k = if m >= 1 { Some(krasikov_check(particles, m as u64)?) } else { None };
            Ok(LaguerreRow {
                m: m as u64,
                a_m: a.value(),
                ln_abs_a_m: a.ln_abs,
                sign: a.sign,
                krasikov_ln_bound: k.as_ref().map(|k| k.ln_bound),
                krasikov_ln_value: k.as_ref().map(|k| k.ln_value),
                krasikov_ok: k.as_ref().map(|k| k.ok),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(output)?;
    let csv = output.join("laguerre.csv");
    write_csv(&csv, &rows)?;
    let w = weighted_sum(particles)?;
    Ok(LaguerreSummary {
        particles,
        d_n: d_n(particles)?,
        sum_sq: table.sum_sq,
        weighted: w.value,
        scaled_weighted: w.scaled,
        csv,
    })
}
