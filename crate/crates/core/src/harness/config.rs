//! Experiment configuration, validated before any computation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PotentialSpec, Wavefunction};
use crate::nbody::DEFAULT_MEMORY_BUDGET;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    pub length: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        GridSpec::new(self.points, self.length)
    }
}

/// Initial one-body state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// Normalised periodic Gaussian; `center` defaults to `L/2`.
    Gaussian {
        #[serde(default)]
        center: Option<f64>,
        width: f64,
        #[serde(default)]
        momentum: f64,
    },
    /// `e^{i k x}/√L` for Fourier mode `mode`.
    PlaneWave { mode: i64 },
}

impl InitialState {
    pub fn build(&self, grid: &GridSpec) -> Result<Wavefunction> {
        match *self {
            InitialState::Gaussian { center, width, momentum } => {
                Wavefunction::gaussian(grid, center.unwrap_or(grid.length() / 2.0), width, momentum)
            }
            InitialState::PlaneWave { mode } => Wavefunction::plane_wave(grid, mode),
        }
    }
}

/// Lattice and schedule for the truncated Fock-space checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockConfig {
    pub modes: usize,
    pub length: f64,
    /// Pair potential on the lattice; weaker than the main default so that the truncated
    /// dynamics stays well below the cutoff.
    pub potential: PotentialSpec,
    /// Cutoff `n_max`; the cutoff sweep repeats selected checks at `cutoff + cutoff_step`.
    pub cutoff: usize,
    pub cutoff_step: usize,
    /// Step of the exponential midpoint integrator.
    pub dt: f64,
    /// Step of the Hartree and kernel solvers on the lattice.
    pub kernel_dt: f64,
    /// Mean-field parameters for the residual ratios.
    pub residual_particles: Vec<f64>,
    pub residual_time: f64,
    /// Mean-field parameters for the number-moment sweep and bound probe.
    pub moment_particles: Vec<f64>,
    pub moment_time: f64,
    /// Times of the kernel-vs-Fock comparisons.
    pub check_times: Vec<f64>,
    pub probe_trials: usize,
    pub probe_moment: u32,
}

impl Default for FockConfig {
    fn default() -> Self {
        FockConfig {
            modes: 4,
            length: 4.0,
            potential: PotentialSpec::Gaussian { amplitude: 0.5, width: 1.0 },
            cutoff: 16,
            cutoff_step: 2,
            dt: 5e-3,
            kernel_dt: 1e-3,
            residual_particles: vec![8.0, 16.0, 32.0],
            residual_time: 0.5,
            moment_particles: vec![8.0, 16.0, 32.0, 64.0],
            moment_time: 1.0,
            check_times: vec![0.25, 0.5, 1.0],
            probe_trials: 8,
            probe_moment: 1,
        }
    }
}

/// Thresholds used by the validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest admissible top-two-sector mass before a check becomes inconclusive.
    pub leakage: f64,
    /// Relative tolerance of `|ΣΣ|G₂|²dx² - ⟨𝒩⟩| ≤ tol·(1 + value)`.
    pub number_identity: f64,
    /// Entrywise tolerance of the kernel-vs-Fock `G₂` comparison, relative to `1 + max|G₂|`.
    pub kernel_agreement: f64,
    pub residual_ratio: [f64; 2],
    pub parity: f64,
    /// Admissible max/min ratio of the number moment across the `N` sweep.
    pub moment_spread: f64,
    pub a0_relative: f64,
    pub weighted_sum_spread: f64,
    pub fock_coefficients: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            leakage: 1e-6,
            number_identity: 1e-4,
            kernel_agreement: 1e-4,
            residual_ratio: [1.6, 2.4],
            parity: 1e-10,
            moment_spread: 3.0,
            a0_relative: 1e-12,
            weighted_sum_spread: 10.0,
            fock_coefficients: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub potential: PotentialSpec,
    pub initial: InitialState,
    pub particles: Vec<usize>,
    pub t_end: f64,
    pub dt: f64,
    /// Steps between recorded samples.
    pub sample_stride: usize,
    /// Largest number of complex amplitudes an `N`-body state may hold.
    pub memory_budget: u64,
    /// Also record second-marginal distances.
    pub second_marginal: bool,
    pub fock: FockConfig,
    pub tolerances: Tolerances,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridConfig { points: 16, length: 16.0 },
            potential: PotentialSpec::Gaussian { amplitude: 1.0, width: 1.0 },
            initial: InitialState::Gaussian { center: None, width: 1.0, momentum: 0.0 },
            particles: vec![2, 3, 4, 5, 6],
            t_end: 1.0,
            dt: 1e-3,
            sample_stride: 100,
            memory_budget: DEFAULT_MEMORY_BUDGET as u64,
            second_marginal: false,
            fock: FockConfig::default(),
            tolerances: Tolerances::default(),
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Check every precondition that does not require running a solver.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        self.potential.validate()?;
        self.initial.build(&grid)?;
        positive("t_end", self.t_end)?;
        positive("dt", self.dt)?;
        if self.sample_stride == 0 {
            return Err(Error::config("sample_stride must be at least 1"));
        }
        if self.particles.is_empty() {
            return Err(Error::config("particles must list at least one N"));
        }
        for &n in &self.particles {
            if n < 2 {
                return Err(Error::config(format!("particle numbers must be at least 2, got {n}")));
            }
            let required = (grid.points() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
            if required > self.memory_budget as u128 {
                return Err(Error::Capacity {
                    what: format!("N-body grid for N = {n}"),
                    required,
                    budget: self.memory_budget as u128,
                });
            }
        }
        if self.second_marginal && self.particles.iter().any(|&n| n < 3) {
            return Err(Error::config("second-marginal distances need N ≥ 3"));
        }
        let f = &self.fock;
        GridSpec::new(f.modes, f.length)?;
        f.potential.validate()?;
        positive("fock.dt", f.dt)?;
        positive("fock.kernel_dt", f.kernel_dt)?;
        positive("fock.residual_time", f.residual_time)?;
        positive("fock.moment_time", f.moment_time)?;
        if f.cutoff < 4 {
            return Err(Error::config("fock.cutoff must be at least 4"));
        }
        if f.cutoff_step == 0 {
            return Err(Error::config("fock.cutoff_step must be at least 1"));
        }
        if f.residual_particles.len() < 2 || f.moment_particles.is_empty() {
            return Err(Error::config("fock sweeps need at least two residual N and one moment N"));
        }
        for &n in f.residual_particles.iter().chain(&f.moment_particles) {
            positive("fock mean-field parameter", n)?;
        }
        if f.check_times.is_empty() {
            return Err(Error::config("fock.check_times must not be empty"));
        }
        for &t in &f.check_times {
            positive("fock check time", t)?;
        }
        if f.probe_trials == 0 {
            return Err(Error::config("fock.probe_trials must be at least 1"));
        }
        let tol = &self.tolerances;
        if !(tol.residual_ratio[0] < tol.residual_ratio[1]) {
            return Err(Error::config("tolerances.residual_ratio must be an increasing pair"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The Fock lattice; the initial state uses the same family as the main grid.
    pub fn fock_grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.fock.modes, self.fock.length)
    }
}
