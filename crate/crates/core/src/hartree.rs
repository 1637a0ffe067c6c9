//! Nonlinear Hartree equation `i∂φ = -Δφ + (V ∗ |φ|²)φ` by Strang splitting.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{periodic_convolve_real, GridSpec, PotentialSpec, Wavefunction};

/// Time-ordered Hartree samples, all on one grid.
#[derive(Debug, Clone)]
pub struct HartreeTrajectory {
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    pub dt: f64,
    pub samples: Vec<Wavefunction>,
}

impl HartreeTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &Wavefunction {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    pub fn first(&self) -> &Wavefunction {
        &self.samples[0]
    }

    /// State at time `t`: the stored sample when one exists (to within `1e-9·dt`), otherwise
    /// linear interpolation between the bracketing samples.
    pub fn state_at(&self, t: f64) -> Result<Wavefunction> {
        let first = self.samples[0].time;
        let last = self.last().time;
        let tol = 1e-9 * self.dt.max(f64::MIN_POSITIVE);
        if t < first - tol || t > last + tol {
            return Err(Error::config(format!(
                "time {t} outside trajectory range [{first}, {last}]"
            )));
        }
        let idx = self.samples.partition_point(|s| s.time < t - tol);
        let idx = idx.min(self.samples.len() - 1);
        let hit = &self.samples[idx];
        if (hit.time - t).abs() <= tol {
            return Ok(hit.clone());
        }
        let (a, b) = (&self.samples[idx - 1], hit);
        let w = (t - a.time) / (b.time - a.time);
        let amps = a
            .amplitudes
            .iter()
            .zip(&b.amplitudes)
            .map(|(x, y)| x * (1.0 - w) + y * w)
            .collect();
        Wavefunction::new(self.grid.clone(), amps, t)
    }
}

/// Mean-field potential `(V ∗ |φ|²)(x)` from pre-sampled `V`.
pub fn mean_field_potential(phi: &Wavefunction, v_samples: &[f64]) -> Result<Vec<f64>> {
    let density: Vec<f64> = phi.amplitudes.iter().map(|z| z.norm_sqr()).collect();
    periodic_convolve_real(v_samples, &density, &phi.grid)
}

/// Number of steps covering `[0, t_end]` with step at most `dt`, and the exact step used.
pub(crate) fn step_count(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::config(format!("time step must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::config(format!("time horizon must be non-negative, got {t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    if steps == 0 {
        return Ok((0, dt));
    }
    Ok((steps, t_end / steps as f64))
}

/// One Strang step: half kinetic, nonlinear phase from the intermediate density, half kinetic.
fn strang_step(amps: &mut [Complex64], grid: &GridSpec, half_phases: &[Complex64], v: &[f64], dt: f64) -> Result<()> {
    kinetic_with(amps, grid, half_phases);
    let density: Vec<f64> = amps.iter().map(|z| z.norm_sqr()).collect();
    let u_eff = periodic_convolve_real(v, &density, grid)?;
    for (z, u) in amps.iter_mut().zip(&u_eff) {
        *z *= Complex64::from_polar(1.0, -u * dt);
    }
    kinetic_with(amps, grid, half_phases);
    Ok(())
}

fn kinetic_with(amps: &mut [Complex64], grid: &GridSpec, phases: &[Complex64]) {
    grid.fft_forward(amps);
    amps.iter_mut().zip(phases).for_each(|(z, p)| *z *= p);
    grid.fft_inverse(amps);
}

/// Evolve `φ0` to time `t_end`, recording every `sample_stride` steps plus the endpoints.
///
/// The step is shrunk (never enlarged) so that an integer number of steps lands on `t_end`.
pub fn evolve_hartree(
    phi0: &Wavefunction,
    potential: &PotentialSpec,
    t_end: f64,
    dt: f64,
    sample_stride: usize,
) -> Result<HartreeTrajectory> {
    if (phi0.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::config(format!(
            "initial Hartree state must be normalised, |φ|² = {}",
            phi0.norm_sqr()
        )));
    }
    if sample_stride == 0 {
        return Err(Error::config("sample stride must be at least 1"));
    }
    let (steps, dt) = step_count(t_end, dt)?;
    let grid = phi0.grid.clone();
    let v = potential.sample(&grid)?;
    let half = grid.kinetic_phases(dt / 2.0);
    let t0 = phi0.time;
    let mut amps = phi0.amplitudes.clone();
    let mut samples = vec![phi0.clone()];
    for n in 1..=steps {
        strang_step(&mut amps, &grid, &half, &v, dt)?;
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numerical(format!("non-finite Hartree amplitudes at step {n}")));
        }
        if n % sample_stride == 0 || n == steps {
            samples.push(Wavefunction::new(grid.clone(), amps.clone(), t0 + n as f64 * dt)?);
        }
    }
    Ok(HartreeTrajectory { grid, potential: potential.clone(), dt, samples })
}

/// `E[φ] = ⟨φ, -Δφ⟩ + ½ ∬ V(x-y)|φ(x)|²|φ(y)|²`.
pub fn hartree_energy(phi: &Wavefunction, potential: &PotentialSpec) -> Result<f64> {
    let grid = &phi.grid;
    let mut hat = phi.amplitudes.clone();
    grid.fft_forward(&mut hat);
    // Parseval: Σ|φ|²dx = (dx/M) Σ|φ̂|².
    let scale = grid.spacing() / grid.points() as f64;
    let kinetic: f64 = hat
        .iter()
        .zip(grid.frequencies())
        .map(|(z, k)| k * k * z.norm_sqr())
        .sum::<f64>()
        * scale;
    let v = potential.sample(grid)?;
    let u = mean_field_potential(phi, &v)?;
    let interaction: f64 = phi
        .amplitudes
        .iter()
        .zip(&u)
        .map(|(z, u)| z.norm_sqr() * u)
        .sum::<f64>()
        * grid.spacing()
        * 0.5;
    Ok(kinetic + interaction)
}

/// Discrete `H¹` norm `(Σ (1 + k²)|φ̂_k|² dx/M)^{1/2}`, recorded as a diagnostic.
pub fn h1_norm(phi: &Wavefunction) -> f64 {
    let grid = &phi.grid;
    let mut hat = phi.amplitudes.clone();
    grid.fft_forward(&mut hat);
    let scale = grid.spacing() / grid.points() as f64;
    (hat.iter()
        .zip(grid.frequencies())
        .map(|(z, k)| (1.0 + k * k) * z.norm_sqr())
        .sum::<f64>()
        * scale)
        .sqrt()
}
