//! Periodic 1D grid, spectral kinetic propagation, FFT convolution and potential sampling.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic grid on `[0, L)` with `M` points.
///
/// Frequencies are stored in FFT order, `2π·j/L` for `j = 0, 1, …, M/2 - 1, -M/2, …, -1`
/// (the Nyquist mode is negative for even `M`).
#[derive(Clone)]
pub struct GridSpec {
    points: usize,
    length: f64,
    spacing: f64,
    frequencies: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("points", &self.points)
            .field("length", &self.length)
            .field("spacing", &self.spacing)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && self.length == other.length
    }
}

impl GridSpec {
    pub fn new(points: usize, length: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::config(format!("grid needs at least 2 points, got {points}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::config(format!("grid length must be positive, got {length}")));
        }
        let spacing = length / points as f64;
        let half = points as i64 / 2;
        let frequencies = (0..points as i64)
            .map(|j| {
                let n = if j < points as i64 - half { j } else { j - points as i64 };
                2.0 * PI * n as f64 / length
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(GridSpec {
            points,
            length,
            spacing,
            frequencies,
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.points).map(|j| j as f64 * self.spacing).collect()
    }

    /// Unnormalised forward DFT in place; `buf.len()` must be a multiple of `M`.
    pub fn fft_forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse DFT in place, normalised so that `inverse(forward(f)) == f`.
    pub fn fft_inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.points as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }

    pub(crate) fn fft_plans(&self) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        (self.forward.clone(), self.inverse.clone())
    }

    /// Fourier multipliers `e^{-i k² dt}` of the free propagator.
    pub fn kinetic_phases(&self, dt: f64) -> Vec<Complex64> {
        self.frequencies
            .iter()
            .map(|k| Complex64::from_polar(1.0, -k * k * dt))
            .collect()
    }

    /// Position-space matrix of `-Δ` consistent with the spectral kinetic step.
    ///
    /// `D = F⁻¹ diag(k²) F` is real and symmetric; entry `(x, y)` couples site `y` to site `x`.
    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let m = self.points;
        let mut column = vec![Complex64::new(0.0, 0.0); m];
        column[0] = Complex64::new(1.0, 0.0);
        self.fft_forward(&mut column);
        for (c, k) in column.iter_mut().zip(&self.frequencies) {
            *c *= k * k;
        }
        self.fft_inverse(&mut column);
        // D is circulant: D[x, y] = d[(x - y) mod m].
        DMatrix::from_fn(m, m, |x, y| column[(x + m - y) % m].re)
    }

    /// Apply `e^{-i dt (-Δ)}` to a line of `M` amplitudes in place.
    pub fn propagate_kinetic_in_place(&self, amps: &mut [Complex64], dt: f64) {
        if dt == 0.0 {
            return;
        }
        let phases = self.kinetic_phases(dt);
        for line in amps.chunks_mut(self.points) {
            self.fft_forward(line);
            line.iter_mut().zip(&phases).for_each(|(z, p)| *z *= p);
            self.fft_inverse(line);
        }
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.points {
            return Err(Error::shape(format!(
                "{what} has length {len}, grid has {} points",
                self.points
            )));
        }
        Ok(())
    }
}

/// Complex amplitudes on a grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    pub grid: GridSpec,
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl Wavefunction {
    pub fn new(grid: GridSpec, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        grid.check_len(amplitudes.len(), "wavefunction")?;
        Ok(Wavefunction { grid, amplitudes, time })
    }

    /// Normalised periodic Gaussian `exp(-(x - c)²/(2σ²) + i k₀ x)` summed over images.
    pub fn gaussian(grid: &GridSpec, center: f64, width: f64, momentum: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::config("gaussian width must be positive"));
        }
        let l = grid.length();
        let amps = grid
            .positions()
            .into_iter()
            .map(|x| {
                (-8..=8)
                    .map(|n| {
                        let y = x + n as f64 * l;
                        let d = y - center;
                        Complex64::from_polar((-d * d / (2.0 * width * width)).exp(), momentum * y)
                    })
                    .sum()
            })
            .collect();
        let mut psi = Wavefunction::new(grid.clone(), amps, 0.0)?;
        psi.normalize()?;
        Ok(psi)
    }

    /// Normalised plane wave `e^{i k x}/√L` for the `n`-th Fourier mode.
    pub fn plane_wave(grid: &GridSpec, mode: i64) -> Result<Self> {
        let k = 2.0 * PI * mode as f64 / grid.length();
        let norm = 1.0 / grid.length().sqrt();
        let amps = grid.positions().into_iter().map(|x| Complex64::from_polar(norm, k * x)).collect();
        Wavefunction::new(grid.clone(), amps, 0.0)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.spacing()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::numerical("cannot normalise a zero or non-finite state"));
        }
        self.amplitudes.iter_mut().for_each(|z| *z /= n);
        Ok(())
    }

    /// `⟨self, other⟩ = Σ conj(self)·other·dx`.
    pub fn inner(&self, other: &Wavefunction) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.grid.spacing()
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `sup_j |self_j - other_j|`.
    pub fn sup_distance(&self, other: &Wavefunction) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Free propagation `e^{-i dt (-Δ)} ψ`; exact in Fourier space.
pub fn apply_kinetic_propagator(psi: &Wavefunction, dt: f64) -> Result<Wavefunction> {
    if !psi.is_finite() || !dt.is_finite() {
        return Err(Error::numerical("non-finite input to kinetic propagator"));
    }
    let mut out = psi.clone();
    psi.grid.propagate_kinetic_in_place(&mut out.amplitudes, dt);
    out.time += dt;
    Ok(out)
}

/// Circular convolution `(f ∗ g)_i = Σ_j f_j g_{i-j} dx`, computed by FFT.
pub fn periodic_convolve(f: &[Complex64], g: &[Complex64], grid: &GridSpec) -> Result<Vec<Complex64>> {
    grid.check_len(f.len(), "first convolution operand")?;
    grid.check_len(g.len(), "second convolution operand")?;
    let mut fh = f.to_vec();
    let mut gh = g.to_vec();
    grid.fft_forward(&mut fh);
    grid.fft_forward(&mut gh);
    fh.iter_mut().zip(&gh).for_each(|(a, b)| *a *= b);
    grid.fft_inverse(&mut fh);
    let dx = grid.spacing();
    fh.iter_mut().for_each(|z| *z *= dx);
    Ok(fh)
}

/// Real-valued convolution used for `V ∗ |φ|²`.
pub fn periodic_convolve_real(f: &[f64], g: &[f64], grid: &GridSpec) -> Result<Vec<f64>> {
    let fc: Vec<Complex64> = f.iter().map(|&x| x.into()).collect();
    let gc: Vec<Complex64> = g.iter().map(|&x| x.into()).collect();
    Ok(periodic_convolve(&fc, &gc, grid)?.into_iter().map(|z| z.re).collect())
}

/// Pair potential `V`, evaluated at the minimal-image displacement on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    /// `A·exp(-d²/(2σ²))`.
    Gaussian { amplitude: f64, width: f64 },
    /// `A·Σ_{h=1}^{H} cos(2π h x / L)`.
    Cosine { amplitude: f64, harmonics: u32 },
    /// `A/√(d² + ε²)`.
    SoftCoulomb { amplitude: f64, softening: f64 },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PotentialSpec::Zero => true,
            PotentialSpec::Gaussian { amplitude, width } => {
                amplitude.is_finite() && width.is_finite() && width > 0.0
            }
            PotentialSpec::Cosine { amplitude, .. } => amplitude.is_finite(),
            PotentialSpec::SoftCoulomb { amplitude, softening } => {
                amplitude.is_finite() && softening.is_finite() && softening > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid potential parameters: {self:?}")))
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            PotentialSpec::Zero => true,
            PotentialSpec::Gaussian { amplitude, .. }
            | PotentialSpec::Cosine { amplitude, .. }
            | PotentialSpec::SoftCoulomb { amplitude, .. } => amplitude == 0.0,
        }
    }

    /// `V` at displacements `j·dx`, `j = 0..M`.
    ///
    /// The displacement index is folded to `min(j, M - j)` before evaluation, so
    /// `samples[j] == samples[M - j]` holds bit for bit.
    pub fn sample(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        self.validate()?;
        let m = grid.points();
        let dx = grid.spacing();
        let l = grid.length();
        Ok((0..m)
            .map(|j| {
                let d = j.min(m - j) as f64 * dx;
                match *self {
                    PotentialSpec::Zero => 0.0,
                    PotentialSpec::Gaussian { amplitude, width } => {
                        amplitude * (-d * d / (2.0 * width * width)).exp()
                    }
                    PotentialSpec::Cosine { amplitude, harmonics } => {
                        amplitude
                            * (1..=harmonics)
                                .map(|h| (2.0 * PI * h as f64 * d / l).cos())
                                .sum::<f64>()
                    }
                    PotentialSpec::SoftCoulomb { amplitude, softening } => {
                        amplitude / (d * d + softening * softening).sqrt()
                    }
                }
            })
            .collect())
    }

    /// Dense `V(x - y)` matrix on the grid.
    pub fn pair_matrix(&self, grid: &GridSpec) -> Result<DMatrix<f64>> {
        let samples = self.sample(grid)?;
        let m = grid.points();
        Ok(DMatrix::from_fn(m, m, |x, y| samples[(x + m - y) % m]))
    }
}
