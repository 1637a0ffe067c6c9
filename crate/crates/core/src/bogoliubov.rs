//! Kernels of the quadratic fluctuation dynamics on a Hartree background and the `O(1/N)`
//! correction `E₂` to the one-particle marginal.
//!
//! With `U₂†(t) a_x U₂(t) = ∫ G₁(t,x,y) a_y + G₂(t,x,y) a_y† dy`, matching coefficients in
//! the Heisenberg equation gives
//!
//! ```text
//! i∂G₁ = (-Δ_x + U)G₁ + K₁G₁ + K₂ conj(G₂)
//! i∂G₂ = (-Δ_x + U)G₂ + K₁G₂ + K₂ conj(G₁)
//! ```
//!
//! with `U = V ∗ |φ|²`, `K₁(x,y) = V(x-y) φ(x) conj(φ(y))`, `K₂(x,y) = V(x-y) φ(x) φ(y)` and
//! kernel products weighted by `dx`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PotentialSpec, Wavefunction};
use crate::hartree::{mean_field_potential, step_count, HartreeTrajectory};
use crate::linalg::{self, CMatrix};

/// `G₁`, `G₂` as `M × M` matrices indexed `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovPair {
    pub grid: GridSpec,
    pub g1: CMatrix,
    pub g2: CMatrix,
    pub time: f64,
}

/// Coefficients of the coupled kernel equations for one Hartree state.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingKernels {
    pub k1: CMatrix,
    pub k2: CMatrix,
    pub mean_field: Vec<f64>,
}

impl CouplingKernels {
    pub fn new(phi: &Wavefunction, v_samples: &[f64]) -> Result<Self> {
        let m = phi.grid.points();
        if v_samples.len() != m {
            return Err(Error::shape("potential samples do not match the grid"));
        }
        let p = &phi.amplitudes;
        let v = |x: usize, y: usize| v_samples[(x + m - y) % m];
        Ok(CouplingKernels {
            k1: CMatrix::from_fn(m, m, |x, y| p[x] * p[y].conj() * v(x, y)),
            k2: CMatrix::from_fn(m, m, |x, y| p[x] * p[y] * v(x, y)),
            mean_field: mean_field_potential(phi, v_samples)?,
        })
    }
}

/// `‖(G₁G₁† - G₂G₂†)dx² - I‖_F` and `‖(G₁G₂ᵀ - G₂G₁ᵀ)dx²‖_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticDefects {
    pub commutator: f64,
    pub pairing: f64,
}

/// `ΣΣ|G₂|² dx²`, optionally compared with an independent `⟨𝒩⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2NormCheck {
    pub value: f64,
    pub relative_discrepancy: Option<f64>,
}

impl BogoliubovPair {
    /// `G₁ = δ` (that is `I/dx`), `G₂ = 0`.
    pub fn init(grid: &GridSpec) -> Self {
        let m = grid.points();
        BogoliubovPair {
            grid: grid.clone(),
            g1: CMatrix::identity(m, m) * Complex64::new(1.0 / grid.spacing(), 0.0),
            g2: CMatrix::zeros(m, m),
            time: 0.0,
        }
    }

    pub fn symplectic_defects(&self) -> SymplecticDefects {
        let m = self.grid.points();
        let w = Complex64::new(self.grid.spacing().powi(2), 0.0);
        let comm = (&self.g1 * self.g1.adjoint() - &self.g2 * self.g2.adjoint()) * w - CMatrix::identity(m, m);
        let pair = (&self.g1 * self.g2.transpose() - &self.g2 * self.g1.transpose()) * w;
        SymplecticDefects { commutator: linalg::frobenius(&comm), pairing: linalg::frobenius(&pair) }
    }

    pub fn g2_norm_sqr(&self) -> f64 {
        self.g2.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.spacing().powi(2)
    }

    pub fn g2_norm_check(&self, number_expectation: Option<f64>) -> G2NormCheck {
        let value = self.g2_norm_sqr();
        G2NormCheck {
            value,
            relative_discrepancy: number_expectation.map(|n| (value - n).abs() / n.abs().max(f64::MIN_POSITIVE)),
        }
    }

    /// The one-particle wavefunction of `U₂† a_x U₂ Ω`, i.e. row `x` of `G₂`.
    pub fn annihilated_vacuum(&self, x: usize) -> Result<Wavefunction> {
        if x >= self.grid.points() {
            return Err(Error::config(format!("site {x} outside the grid")));
        }
        Wavefunction::new(self.grid.clone(), self.g2.row(x).iter().copied().collect(), self.time)
    }

    fn is_finite(&self) -> bool {
        self.g1.iter().chain(self.g2.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn propagate_columns(grid: &GridSpec, g: &mut CMatrix, dt: f64) {
    // Column-major storage: each column is one contiguous function of x.
    grid.propagate_kinetic_in_place(g.as_mut_slice(), dt);
}

/// Right-hand side `-i(A G₁ + B conj(G₂), A G₂ + B conj(G₁))`.
fn coupling_rhs(a: &CMatrix, b: &CMatrix, g1: &CMatrix, g2: &CMatrix) -> (CMatrix, CMatrix) {
    let minus_i = Complex64::new(0.0, -1.0);
    (
        (a * g1 + b * g2.map(|z| z.conj())) * minus_i,
        (a * g2 + b * g1.map(|z| z.conj())) * minus_i,
    )
}

/// One Strang step: half kinetic along `x`, an RK4 step of the mean-field and pairing terms
/// with kernels frozen at `phi_mid`, half kinetic.
pub fn step_pair(pair: &BogoliubovPair, phi_mid: &Wavefunction, potential: &PotentialSpec, dt: f64) -> Result<BogoliubovPair> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("time step must be positive, got {dt}")));
    }
    if phi_mid.grid != pair.grid {
        return Err(Error::shape("Hartree state and kernels live on different grids"));
    }
    let grid = &pair.grid;
    let v = potential.sample(grid)?;
    let kernels = CouplingKernels::new(phi_mid, &v)?;
    let dx = Complex64::new(grid.spacing(), 0.0);
    let a = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        kernels.mean_field.len(),
        kernels.mean_field.iter().map(|u| Complex64::new(*u, 0.0)),
    )) + &kernels.k1 * dx;
    let b = &kernels.k2 * dx;

    let mut g1 = pair.g1.clone();
    let mut g2 = pair.g2.clone();
    propagate_columns(grid, &mut g1, dt / 2.0);
    propagate_columns(grid, &mut g2, dt / 2.0);

    let h = Complex64::new(dt, 0.0);
    let half = Complex64::new(dt / 2.0, 0.0);
    let (k1a, k1b) = coupling_rhs(&a, &b, &g1, &g2);
    let (k2a, k2b) = coupling_rhs(&a, &b, &(&g1 + &k1a * half), &(&g2 + &k1b * half));
    let (k3a, k3b) = coupling_rhs(&a, &b, &(&g1 + &k2a * half), &(&g2 + &k2b * half));
    let (k4a, k4b) = coupling_rhs(&a, &b, &(&g1 + &k3a * h), &(&g2 + &k3b * h));
    let sixth = Complex64::new(dt / 6.0, 0.0);
    g1 += (k1a + (k2a + k3a) * Complex64::new(2.0, 0.0) + k4a) * sixth;
    g2 += (k1b + (k2b + k3b) * Complex64::new(2.0, 0.0) + k4b) * sixth;

    propagate_columns(grid, &mut g1, dt / 2.0);
    propagate_columns(grid, &mut g2, dt / 2.0);
    let next = BogoliubovPair { grid: grid.clone(), g1, g2, time: pair.time + dt };
    if !next.is_finite() {
        return Err(Error::numerical(format!("non-finite Bogoliubov kernels at t = {}", next.time)));
    }
    Ok(next)
}

/// Kernels from `t = 0` to `t_end` on a stored Hartree trajectory, sampled every
/// `sample_stride` steps and at the final time. Midpoint states come from
/// [`HartreeTrajectory::state_at`].
pub fn evolve_pair(trajectory: &HartreeTrajectory, t_end: f64, dt: f64, sample_stride: usize) -> Result<Vec<BogoliubovPair>> {
    if sample_stride == 0 {
        return Err(Error::config("sample stride must be at least 1"));
    }
    let (steps, dt) = step_count(t_end, dt)?;
    let t0 = trajectory.first().time;
    let mut pair = BogoliubovPair::init(&trajectory.grid);
    pair.time = t0;
    let mut samples = vec![pair.clone()];
    for n in 1..=steps {
        let t_mid = t0 + (n as f64 - 0.5) * dt;
        let phi_mid = trajectory.state_at(t_mid)?;
        pair = step_pair(&pair, &phi_mid, &trajectory.potential, dt)?;
        pair.time = t0 + n as f64 * dt;
        if n % sample_stride == 0 || n == steps {
            samples.push(pair.clone());
        }
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2Correction {
    pub grid: GridSpec,
    pub matrix: CMatrix,
    pub particles: u64,
    pub time: f64,
}

impl E2Correction {
    /// `(ΣΣ|E₂|²)^{1/2} dx`.
    pub fn l2_norm(&self) -> f64 {
        linalg::frobenius(&self.matrix) * self.grid.spacing()
    }
}

/// `E₂(x,y) = (N-1)/N² ⟨G₂(y,·), G₂(x,·)⟩ - (N-2)/N² conj(w(y)) w(x)
///            - conj(φ_t(y)) w(x)/N - φ_t(x) conj(w(y))/N`
/// with `w(x) = Σ_z G₂(x,z) conj(φ₀(z)) dx`.
pub fn e2_correction(pair: &BogoliubovPair, phi0: &Wavefunction, phi_t: &Wavefunction, particles: u64) -> Result<E2Correction> {
    if particles < 2 {
        return Err(Error::config("E₂ needs N ≥ 2"));
    }
    if phi0.grid != pair.grid || phi_t.grid != pair.grid {
        return Err(Error::shape("E₂ inputs live on different grids"));
    }
    let grid = &pair.grid;
    let m = grid.points();
    let dx = grid.spacing();
    let n = particles as f64;
    let g2 = &pair.g2;
    let w: Vec<Complex64> = (0..m)
        .map(|x| (0..m).map(|z| g2[(x, z)] * phi0.amplitudes[z].conj()).sum::<Complex64>() * dx)
        .collect();
    let gram = g2 * g2.adjoint() * Complex64::new(dx, 0.0);
    let pt = &phi_t.amplitudes;
    let matrix = CMatrix::from_fn(m, m, |x, y| {
        gram[(x, y)] * ((n - 1.0) / (n * n)) - w[y].conj() * w[x] * ((n - 2.0) / (n * n))
            - pt[y].conj() * w[x] / n
            - pt[x] * w[y].conj() / n
    });
    Ok(E2Correction { grid: grid.clone(), matrix, particles, time: pair.time })
}
