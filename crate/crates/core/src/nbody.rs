//! Exact `N`-body propagation on the tensor grid, marginals, distances and the BBGKY residual.
//!
//! Amplitudes are stored as a flat row-major array over `M^N` points with particle 1 as the
//! most significant index. The Hamiltonian is
//! `H_N = Σ_j -Δ_j + (1/N) Σ_{i<j} V(x_i - x_j)`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::Fft;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PotentialSpec, Wavefunction};
use crate::hartree::step_count;
use crate::linalg::{self, CMatrix};

/// Default cap on the number of complex amplitudes (`2^28`, i.e. `M = 16`, `N = 7`).
pub const DEFAULT_MEMORY_BUDGET: u128 = 1 << 28;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct NBodyState {
    pub grid: GridSpec,
    pub particles: usize,
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

/// Reduced density matrix of order `k`, an `M^k × M^k` kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDensity {
    pub grid: GridSpec,
    pub order: usize,
    pub matrix: CMatrix,
}

fn tensor_len(m: usize, n: usize, budget: u128) -> Result<usize> {
    let required = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::Capacity {
            what: format!("N = {n} particles on M = {m} points"),
            required,
            budget,
        });
    }
    Ok(required as usize)
}

impl NBodyState {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// `Σ|ψ|² dx^N`.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.volume_element()
    }

    pub fn volume_element(&self) -> f64 {
        self.grid.spacing().powi(self.particles as i32)
    }

    fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `‖ψ∘σ - ψ‖` for the transposition `σ` swapping particles `i` and `j`.
    pub fn transposition_defect(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.particles;
        if i >= n || j >= n {
            return Err(Error::config(format!("particle index out of range for N = {n}")));
        }
        if i == j {
            return Ok(0.0);
        }
        let m = self.grid.points();
        let (si, sj) = (m.pow((n - 1 - i) as u32), m.pow((n - 1 - j) as u32));
        let sum: f64 = (0..self.len())
            .map(|idx| {
                let (di, dj) = ((idx / si) % m, (idx / sj) % m);
                let swapped = idx - di * si - dj * sj + dj * si + di * sj;
                (self.amplitudes[swapped] - self.amplitudes[idx]).norm_sqr()
            })
            .sum();
        Ok((sum * self.volume_element()).sqrt())
    }

    /// Largest transposition defect over adjacent pairs and the outermost pair.
    pub fn symmetry_defect(&self) -> Result<f64> {
        let n = self.particles;
        let mut worst: f64 = 0.0;
        for i in 0..n.saturating_sub(1) {
            worst = worst.max(self.transposition_defect(i, i + 1)?);
        }
        if n > 2 {
            worst = worst.max(self.transposition_defect(0, n - 1)?);
        }
        Ok(worst)
    }
}

/// `ψ(x_1, …, x_N) = Π φ(x_j)`.
pub fn factorized_state(phi: &Wavefunction, particles: usize, budget: u128) -> Result<NBodyState> {
    if particles == 0 {
        return Err(Error::config("particle count must be at least 1"));
    }
    if (phi.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::config("one-body state must be normalised"));
    }
    let m = phi.grid.points();
    let len = tensor_len(m, particles, budget)?;
    let mut amps = Vec::with_capacity(len);
    amps.push(Complex64::new(1.0, 0.0));
    for _ in 0..particles {
        let prev = std::mem::take(&mut amps);
        amps = Vec::with_capacity(prev.len() * m);
        for a in &prev {
            amps.extend(phi.amplitudes.iter().map(|p| a * p));
        }
    }
    Ok(NBodyState { grid: phi.grid.clone(), particles, amplitudes: amps, time: phi.time })
}

/// Diagonal of the interaction, `(1/N) Σ_{i<j} V(x_i - x_j)`, on the flat index.
///
/// The result is invariant under any permutation of the particle axes.
pub fn interaction_diagonal(grid: &GridSpec, particles: usize, v: &[f64]) -> Vec<f64> {
    let m = grid.points();
    let scale = 1.0 / particles as f64;
    // Built one particle at a time: `pair` holds the pair sum over the prefix and
    // `cross[idx * m + d]` the interaction of that prefix with a next particle at `d`.
    let mut pair = vec![0.0];
    let mut cross = vec![0.0; m];
    for level in 0..particles {
        let last = level + 1 == particles;
        let next_pair: Vec<f64> = (0..pair.len() * m).map(|j| pair[j / m] + cross[j]).collect();
        if !last {
            let mut next_cross = Vec::with_capacity(next_pair.len() * m);
            for j in 0..next_pair.len() {
                let (idx, e) = (j / m, j % m);
                let base = &cross[idx * m..(idx + 1) * m];
                next_cross.extend(base.iter().enumerate().map(|(d, c)| c + v[(e + m - d) % m]));
            }
            cross = next_cross;
        }
        pair = next_pair;
    }
    pair.iter_mut().for_each(|w| *w *= scale);
    pair
}

/// `dst[c * rows + r] = src[r * cols + c]`.
///
/// Square tiles are staged through a small buffer so that both the reads and the writes are
/// contiguous runs, which keeps power-of-two strides from thrashing a single cache set.
fn transpose_into(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 32;
    let mut tile = [ZERO; TILE * TILE];
    for r0 in (0..rows).step_by(TILE) {
        let h = TILE.min(rows - r0);
        for c0 in (0..cols).step_by(TILE) {
            let w = TILE.min(cols - c0);
            for i in 0..h {
                let row = &src[(r0 + i) * cols + c0..(r0 + i) * cols + c0 + w];
                for (j, z) in row.iter().enumerate() {
                    tile[j * TILE + i] = *z;
                }
            }
            for j in 0..w {
                dst[(c0 + j) * rows + r0..(c0 + j) * rows + r0 + h].copy_from_slice(&tile[j * TILE..j * TILE + h]);
            }
        }
    }
}

/// Split-step engine. A kinetic step propagates the trailing `c = ⌈N/2⌉` axes in
/// cache-resident cubes of `M^c` amplitudes, transposes the tensor from `(M^{N-c}, M^c)` to
/// `(M^c, M^{N-c})` and propagates the remaining axes the same way, fusing the interaction
/// phase into the second pass. Inside a cube every axis is made contiguous in turn by rotating
/// the cube with a small transpose, and the cube is left in its rotated order.
///
/// The axis order therefore rotates with every kinetic step. Both the kinetic operator and the
/// interaction diagonal are symmetric under axis permutations, so the rotation only has to be
/// undone when the state is read out.
struct TensorPropagator {
    m: usize,
    n: usize,
    trail_axes: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    fft_scratch: Vec<Complex64>,
    rotate: Vec<Complex64>,
    /// `layout[p]` is the particle stored at axis position `p` (0 = most significant).
    layout: Vec<usize>,
    data: Vec<Complex64>,
    spare: Vec<Complex64>,
}

impl TensorPropagator {
    fn new(state: &NBodyState) -> Self {
        let grid = &state.grid;
        let (forward, inverse) = grid.fft_plans();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let trail_axes = state.particles.div_ceil(2);
        let cube = grid.points().pow(trail_axes as u32);
        TensorPropagator {
            m: grid.points(),
            n: state.particles,
            trail_axes,
            forward,
            inverse,
            fft_scratch: vec![ZERO; scratch_len],
            rotate: vec![ZERO; cube],
            layout: (0..state.particles).collect(),
            data: state.amplitudes.clone(),
            spare: Vec::new(),
        }
    }

    /// Copy sharing the FFT plans, for synchronising samples.
    fn fork(&self) -> Self {
        TensorPropagator {
            m: self.m,
            n: self.n,
            trail_axes: self.trail_axes,
            forward: self.forward.clone(),
            inverse: self.inverse.clone(),
            fft_scratch: self.fft_scratch.clone(),
            rotate: self.rotate.clone(),
            layout: self.layout.clone(),
            data: self.data.clone(),
            spare: Vec::new(),
        }
    }

    fn lines(&mut self, buf: &mut [Complex64], phases: &[Complex64]) {
        self.forward.process_with_scratch(buf, &mut self.fft_scratch);
        for line in buf.chunks_mut(self.m) {
            line.iter_mut().zip(phases).for_each(|(z, p)| *z *= p);
        }
        self.inverse.process_with_scratch(buf, &mut self.fft_scratch);
    }

    /// Propagate along all `axes` axes of a cube of `M^axes` amplitudes, in place.
    ///
    /// Each of the `axes - 1` rotations moves the contiguous axis to the front, so the cube
    /// comes back with its axis order rotated right by `axes - 1`.
    fn cube(&mut self, cube: &mut [Complex64], axes: usize, phases: &[Complex64]) {
        let m = self.m;
        let rows = cube.len() / m;
        self.lines(cube, phases);
        if axes == 1 {
            return;
        }
        let mut buf = std::mem::take(&mut self.rotate);
        let buf_slice = &mut buf[..cube.len()];
        for r in 0..axes - 1 {
            if r % 2 == 0 {
                transpose_into(cube, buf_slice, rows, m);
                self.lines(buf_slice, phases);
            } else {
                transpose_into(buf_slice, cube, rows, m);
                self.lines(cube, phases);
            }
        }
        if (axes - 1) % 2 == 1 {
            cube.copy_from_slice(buf_slice);
        }
        self.rotate = buf;
    }

    fn cube_pass(&mut self, axes: usize, phases: &[Complex64], diag: Option<&[Complex64]>) {
        let size = self.m.pow(axes as u32);
        let mut data = std::mem::take(&mut self.data);
        for (b, chunk) in data.chunks_mut(size).enumerate() {
            self.cube(chunk, axes, phases);
            if let Some(d) = diag {
                chunk.iter_mut().zip(&d[b * size..(b + 1) * size]).for_each(|(z, p)| *z *= p);
            }
        }
        self.data = data;
        let n = self.n;
        self.layout[n - axes..].rotate_right(axes - 1);
    }

    /// `e^{-iτ Σ_j(-Δ_j)}`, optionally followed by multiplication with `diag`.
    fn kinetic(&mut self, grid: &GridSpec, tau: f64, diag: Option<&[Complex64]>) {
        let m = self.m;
        let phases: Vec<Complex64> = grid
            .kinetic_phases(tau)
            .into_iter()
            .map(|p| p / m as f64)
            .collect();
        let lead_axes = self.n - self.trail_axes;
        if lead_axes == 0 {
            self.cube_pass(self.trail_axes, &phases, diag);
            return;
        }
        self.cube_pass(self.trail_axes, &phases, None);
        let cols = m.pow(self.trail_axes as u32);
        let rows = self.data.len() / cols;
        self.spare.resize(self.data.len(), ZERO);
        transpose_into(&self.data, &mut self.spare, rows, cols);
        std::mem::swap(&mut self.data, &mut self.spare);
        self.layout.rotate_left(lead_axes);
        self.cube_pass(lead_axes, &phases, diag);
    }

    /// The amplitudes in canonical particle order.
    fn canonical(&self) -> Vec<Complex64> {
        if self.layout.iter().enumerate().all(|(p, &a)| p == a) {
            return self.data.clone();
        }
        let (m, n) = (self.m, self.n);
        let mut stride_of = vec![0usize; n];
        for (p, &a) in self.layout.iter().enumerate() {
            stride_of[a] = m.pow((n - 1 - p) as u32);
        }
        let mut out = vec![ZERO; self.data.len()];
        let mut digits = vec![0usize; n];
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut rest = idx;
            for d in digits.iter_mut().rev() {
                *d = rest % m;
                rest /= m;
            }
            let src: usize = digits.iter().zip(&stride_of).map(|(d, s)| d * s).sum();
            *slot = self.data[src];
        }
        out
    }
}

fn any_non_finite(data: &[Complex64]) -> bool {
    data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
}

/// Final state and optional samples of an `N`-body run.
#[derive(Debug, Clone)]
pub struct NBodyEvolution {
    pub final_state: NBodyState,
    /// States every `sample_stride` steps, including `t = 0` and the final time.
    pub samples: Vec<NBodyState>,
}

/// Strang splitting for `H_N`: half kinetic, interaction phase, half kinetic.
///
/// Adjacent half kinetic steps are fused; samples synchronise a copy of the state.
pub fn evolve_nbody(
    psi: &NBodyState,
    potential: &PotentialSpec,
    t_end: f64,
    dt: f64,
    sample_stride: Option<usize>,
) -> Result<NBodyEvolution> {
    let mut samples = Vec::new();
    let final_state = evolve_nbody_streaming(psi, potential, t_end, dt, sample_stride, |s| {
        samples.push(s.clone());
        Ok(())
    })?;
    Ok(NBodyEvolution { final_state, samples })
}

/// As [`evolve_nbody`], handing each sample (including `t = 0` and the final time) to
/// `on_sample` instead of storing it.
pub fn evolve_nbody_streaming(
    psi: &NBodyState,
    potential: &PotentialSpec,
    t_end: f64,
    dt: f64,
    sample_stride: Option<usize>,
    mut on_sample: impl FnMut(&NBodyState) -> Result<()>,
) -> Result<NBodyState> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("time step must be positive, got {dt}")));
    }
    if sample_stride == Some(0) {
        return Err(Error::config("sample stride must be at least 1"));
    }
    if !psi.is_finite() {
        return Err(Error::numerical("non-finite initial amplitudes"));
    }
    if (psi.norm_sqr() - 1.0).abs() > 1e-8 {
        return Err(Error::config(format!("N-body state must be normalised, got {}", psi.norm_sqr())));
    }
    let (steps, dt) = step_count(t_end, dt)?;
    if sample_stride.is_some() {
        on_sample(psi)?;
    }
    if steps == 0 {
        return Ok(psi.clone());
    }
    let v = potential.sample(&psi.grid)?;
    let phase: Vec<Complex64> = interaction_diagonal(&psi.grid, psi.particles, &v)
        .into_iter()
        .map(|w| Complex64::from_polar(1.0, -w * dt))
        .collect();
    let grid = &psi.grid;
    let mut engine = TensorPropagator::new(psi);
    let make_state = |amps: Vec<Complex64>, t: f64| NBodyState {
        grid: grid.clone(),
        particles: psi.particles,
        amplitudes: amps,
        time: t,
    };

    engine.kinetic(grid, dt / 2.0, Some(&phase));
    for step in 1..steps {
        if let Some(stride) = sample_stride {
            if step % stride == 0 {
                let mut probe = engine.fork();
                probe.kinetic(grid, dt / 2.0, None);
                let sample = make_state(probe.canonical(), psi.time + step as f64 * dt);
                drop(probe);
                on_sample(&sample)?;
            }
        }
        engine.kinetic(grid, dt, Some(&phase));
        if step % 64 == 0 && any_non_finite(&engine.data) {
            return Err(Error::numerical(format!("non-finite N-body amplitudes at step {step}")));
        }
    }
    engine.kinetic(grid, dt / 2.0, None);
    if any_non_finite(&engine.data) {
        return Err(Error::numerical("non-finite N-body amplitudes at final step"));
    }
    let final_state = make_state(engine.canonical(), psi.time + steps as f64 * dt);
    drop(engine);
    if sample_stride.is_some() {
        on_sample(&final_state)?;
    }
    Ok(final_state)
}

/// `⟨ψ, H_N ψ⟩`, with the kinetic part evaluated through the one-particle marginal
/// (exact for symmetric states).
pub fn nbody_energy(psi: &NBodyState, potential: &PotentialSpec) -> Result<f64> {
    let grid = &psi.grid;
    let v = potential.sample(grid)?;
    let w = interaction_diagonal(grid, psi.particles, &v);
    let potential_energy: f64 = psi
        .amplitudes
        .iter()
        .zip(&w)
        .map(|(z, w)| z.norm_sqr() * w)
        .sum::<f64>()
        * psi.volume_element();
    let gamma = marginal_unchecked(psi, 1);
    let d = linalg::from_real(&grid.laplacian_matrix());
    let kinetic = (d * &gamma.matrix).trace().re * grid.spacing() * psi.particles as f64;
    Ok(kinetic + potential_energy)
}

fn marginal_unchecked(psi: &NBodyState, k: usize) -> MarginalDensity {
    let m = psi.grid.points();
    let rows = m.pow(k as u32);
    let cols = psi.len() / rows;
    let weight = psi.grid.spacing().powi((psi.particles - k) as i32);
    let a = &psi.amplitudes;
    let mut matrix = CMatrix::zeros(rows, rows);
    for x in 0..rows {
        let rx = &a[x * cols..(x + 1) * cols];
        for y in x..rows {
            let ry = &a[y * cols..(y + 1) * cols];
            let s: Complex64 = rx.iter().zip(ry).map(|(p, q)| p * q.conj()).sum::<Complex64>() * weight;
            matrix[(x, y)] = s;
            matrix[(y, x)] = s.conj();
        }
    }
    MarginalDensity { grid: psi.grid.clone(), order: k, matrix }
}

/// `γ^{(k)}(X; X') = Σ ψ(X, rest) conj(ψ(X', rest)) dx^{N-k}` for `k ∈ {1, 2}`, `k < N`.
pub fn reduce_marginal(psi: &NBodyState, k: usize) -> Result<MarginalDensity> {
    if !(k == 1 || k == 2) {
        return Err(Error::config(format!("marginal order must be 1 or 2, got {k}")));
    }
    if k >= psi.particles {
        return Err(Error::config(format!(
            "marginal order {k} requires more than {k} particles, state has {}",
            psi.particles
        )));
    }
    Ok(marginal_unchecked(psi, k))
}

impl MarginalDensity {
    /// `|φ⟩⟨φ|` as a first-order marginal.
    pub fn pure(phi: &Wavefunction) -> Self {
        let m = phi.grid.points();
        let a = &phi.amplitudes;
        MarginalDensity {
            grid: phi.grid.clone(),
            order: 1,
            matrix: CMatrix::from_fn(m, m, |x, y| a[x] * a[y].conj()),
        }
    }

    /// `|φ⟩⟨φ|^{⊗2}` as a second-order marginal.
    pub fn pure_pair(phi: &Wavefunction) -> Self {
        let m = phi.grid.points();
        let a = &phi.amplitudes;
        MarginalDensity {
            grid: phi.grid.clone(),
            order: 2,
            matrix: CMatrix::from_fn(m * m, m * m, |r, c| {
                a[r / m] * a[r % m] * (a[c / m] * a[c % m]).conj()
            }),
        }
    }

    pub fn weight(&self) -> f64 {
        self.grid.spacing().powi(self.order as i32)
    }

    /// `Tr γ · dx^k`.
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re * self.weight()
    }

    /// Eigenvalues of the operator, i.e. of `matrix · dx^k`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let w = self.weight();
        linalg::hermitian_eigenvalues(&self.matrix).into_iter().map(|l| l * w).collect()
    }

    /// Partial trace over the second particle of a second-order marginal.
    pub fn partial_trace(&self) -> Result<MarginalDensity> {
        if self.order != 2 {
            return Err(Error::config("partial trace needs a second-order marginal"));
        }
        let m = self.grid.points();
        let dx = self.grid.spacing();
        let matrix = CMatrix::from_fn(m, m, |x, y| {
            (0..m).map(|z| self.matrix[(x * m + z, y * m + z)]).sum::<Complex64>() * dx
        });
        Ok(MarginalDensity { grid: self.grid.clone(), order: 1, matrix })
    }

    fn difference(&self, other: &MarginalDensity) -> Result<CMatrix> {
        if self.grid != other.grid || self.order != other.order {
            return Err(Error::shape("marginals live on different grids or orders"));
        }
        Ok(&self.matrix - &other.matrix)
    }
}

/// `Tr|γ - ρ|` of the operators (no factor ½).
pub fn trace_distance(gamma: &MarginalDensity, rho: &MarginalDensity) -> Result<f64> {
    let diff = gamma.difference(rho)?;
    Ok(linalg::trace_norm(&diff) * gamma.weight())
}

/// Hilbert–Schmidt norm of `γ - ρ`.
pub fn hs_distance(gamma: &MarginalDensity, rho: &MarginalDensity) -> Result<f64> {
    let diff = gamma.difference(rho)?;
    Ok(linalg::frobenius(&diff) * gamma.weight())
}

/// Hilbert–Schmidt norm of the residual of the first BBGKY equation at the middle sample,
/// `i∂γ¹ - [-Δ, γ¹] - (N-1)/N · Tr₂[V(x₁ - x₂), γ²]`,
/// with the time derivative taken by central differences.
pub fn bbgky_residual(samples: &[NBodyState], potential: &PotentialSpec) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::Samples(format!("BBGKY residual needs 3 samples, got {}", samples.len())));
    }
    let mid = samples.len() / 2;
    let (prev, cur, next) = (&samples[mid - 1], &samples[mid], &samples[mid + 1]);
    let h = cur.time - prev.time;
    if !(h > 0.0) || ((next.time - cur.time) - h).abs() > 1e-9 * h {
        return Err(Error::Samples("samples must be uniformly spaced in time".into()));
    }
    let grid = &cur.grid;
    let m = grid.points();
    let dx = grid.spacing();
    let n = cur.particles;
    let g_prev = marginal_unchecked(prev, 1).matrix;
    let g_next = marginal_unchecked(next, 1).matrix;
    let gamma = marginal_unchecked(cur, 1).matrix;
    let d = linalg::from_real(&grid.laplacian_matrix());
    let i = Complex64::new(0.0, 1.0);
    let mut residual = (g_next - g_prev) * (i / (2.0 * h)) - (&d * &gamma - &gamma * &d);
    if n >= 2 {
        let v = potential.sample(grid)?;
        let g2 = marginal_unchecked(cur, 2).matrix;
        let coupling = (n - 1) as f64 / n as f64;
        for x in 0..m {
            for y in 0..m {
                let t: Complex64 = (0..m)
                    .map(|z| {
                        let dv = v[(x + m - z) % m] - v[(y + m - z) % m];
                        g2[(x * m + z, y * m + z)] * dv
                    })
                    .sum::<Complex64>()
                    * dx;
                residual[(x, y)] -= t * coupling;
            }
        }
    }
    Ok(linalg::frobenius(&residual) * dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::apply_kinetic_propagator;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(m: usize, l: f64) -> GridSpec {
        GridSpec::new(m, l).unwrap()
    }

    fn phi(g: &GridSpec) -> Wavefunction {
        Wavefunction::gaussian(g, g.length() / 2.0, 1.0, 0.4).unwrap()
    }

    fn gaussian_v() -> PotentialSpec {
        PotentialSpec::Gaussian { amplitude: 1.0, width: 1.0 }
    }

    #[test]
    fn factorized_small_cases() {
        let g = grid(8, 8.0);
        let p = phi(&g);
        let one = factorized_state(&p, 1, DEFAULT_MEMORY_BUDGET).unwrap();
        assert_eq!(one.amplitudes, p.amplitudes);
        let two = factorized_state(&p, 2, DEFAULT_MEMORY_BUDGET).unwrap();
        for x in 0..8 {
            for y in 0..8 {
                assert!((two.amplitudes[x * 8 + y] - p.amplitudes[x] * p.amplitudes[y]).norm() < 1e-15);
            }
        }
        // Schmidt rank 1: the coefficient matrix has a single nonzero singular value.
        let a = CMatrix::from_fn(8, 8, |x, y| two.amplitudes[x * 8 + y]);
        let sv = a.singular_values();
        assert!(sv.iter().filter(|&&s| s > 1e-12 * sv[0]).count() == 1);
        let three = factorized_state(&p, 3, DEFAULT_MEMORY_BUDGET).unwrap();
        assert!((three.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(three.symmetry_defect().unwrap() < 1e-15);
    }

    #[test]
    fn capacity_error_before_allocation() {
        let g = grid(16, 16.0);
        let err = factorized_state(&phi(&g), 8, DEFAULT_MEMORY_BUDGET).unwrap_err();
        assert!(matches!(err, Error::Capacity { required, .. } if required == 1u128 << 32));
        assert!(factorized_state(&phi(&g), 3, 4095).is_err());
    }

    #[test]
    fn free_evolution_stays_factorized() {
        let g = grid(8, 8.0);
        let p = phi(&g);
        for n in 1..=4 {
            let psi = factorized_state(&p, n, DEFAULT_MEMORY_BUDGET).unwrap();
            let out = evolve_nbody(&psi, &PotentialSpec::Zero, 0.37, 1e-2, None).unwrap();
            let free = apply_kinetic_propagator(&p, 0.37).unwrap();
            let expect = factorized_state(&Wavefunction { time: 0.0, ..free }, n, DEFAULT_MEMORY_BUDGET).unwrap();
            let err = out
                .final_state
                .amplitudes
                .iter()
                .zip(&expect.amplitudes)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10, "N={n}: {err}");
        }
    }

    #[test]
    fn interaction_diagonal_matches_direct_sum() {
        let g = grid(5, 5.0);
        let v: Vec<f64> = (0..5).map(|j| 1.0 + j as f64 * 0.37).collect();
        let w = interaction_diagonal(&g, 4, &v);
        for (idx, got) in w.iter().enumerate() {
            let d: Vec<usize> = (0..4).map(|p| (idx / 5usize.pow(3 - p)) % 5).collect();
            let mut sum = 0.0;
            for i in 0..4 {
                for j in i + 1..4 {
                    sum += v[(d[i] + 5 - d[j]) % 5];
                }
            }
            assert!((got - sum / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn free_evolution_on_larger_and_odd_grids() {
        for (m, n) in [(16, 4), (6, 3), (16, 5)] {
            let g = grid(m, m as f64);
            let p = phi(&g);
            let psi = factorized_state(&p, n, DEFAULT_MEMORY_BUDGET).unwrap();
            let out = evolve_nbody(&psi, &PotentialSpec::Zero, 0.05, 1e-2, None).unwrap();
            let free = apply_kinetic_propagator(&p, 0.05).unwrap();
            let expect = factorized_state(&Wavefunction { time: 0.0, ..free }, n, DEFAULT_MEMORY_BUDGET).unwrap();
            let err = out
                .final_state
                .amplitudes
                .iter()
                .zip(&expect.amplitudes)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10, "M={m} N={n}: {err}");
        }
    }

    #[test]
    fn norm_and_symmetry_preserved() {
        let g = grid(8, 8.0);
        for n in [2, 3, 5] {
            let psi = factorized_state(&phi(&g), n, DEFAULT_MEMORY_BUDGET).unwrap();
            let out = evolve_nbody(&psi, &gaussian_v(), 1.0, 1e-3, None).unwrap();
            assert!((out.final_state.norm_sqr().sqrt() - 1.0).abs() <= 1e-10);
            assert!(out.final_state.symmetry_defect().unwrap() <= 1e-9);
        }
    }

    #[test]
    fn asymmetric_product_states_evolve_axis_by_axis() {
        for m in [4, 6] {
            asymmetric_product_case(m);
        }
    }

    fn asymmetric_product_case(m: usize) {
        // A non-symmetric product state under V = 0 must evolve axis by axis.
        let g = grid(m, 4.0);
        let phis: Vec<Wavefunction> = (0..3)
            .map(|j| Wavefunction::gaussian(&g, 1.0 + j as f64, 0.7, j as f64 * 0.9).unwrap())
            .collect();
        let build = |ps: &[Wavefunction]| {
            let mut amps = vec![Complex64::new(1.0, 0.0)];
            for p in ps {
                amps = amps.iter().flat_map(|a| p.amplitudes.iter().map(move |b| a * b)).collect();
            }
            NBodyState { grid: g.clone(), particles: ps.len(), amplitudes: amps, time: 0.0 }
        };
        let psi = build(&phis);
        for steps in [1usize, 2, 3, 4, 7] {
            let t = 0.05 * steps as f64;
            let out = evolve_nbody(&psi, &PotentialSpec::Zero, t, 0.05, None).unwrap();
            let evolved: Vec<Wavefunction> =
                phis.iter().map(|p| apply_kinetic_propagator(p, t).unwrap()).collect();
            let expect = build(&evolved);
            for (a, b) in out.final_state.amplitudes.iter().zip(&expect.amplitudes) {
                assert!((a - b).norm() < 1e-12, "steps={steps}");
            }
        }
    }

    /// Dense `H_N` on the full tensor space, built entry by entry.
    fn dense_hamiltonian(g: &GridSpec, n: usize, v: &PotentialSpec) -> DMatrix<f64> {
        let m = g.points();
        let len = m.pow(n as u32);
        let d = g.laplacian_matrix();
        let vs = v.sample(g).unwrap();
        let digits = |idx: usize| -> Vec<usize> {
            (0..n).map(|p| (idx / m.pow((n - 1 - p) as u32)) % m).collect()
        };
        DMatrix::from_fn(len, len, |r, c| {
            let (dr, dc) = (digits(r), digits(c));
            let differ: Vec<usize> = (0..n).filter(|&p| dr[p] != dc[p]).collect();
            let mut h = 0.0;
            match differ.len() {
                0 => {
                    for p in 0..n {
                        h += d[(dr[p], dr[p])];
                    }
                    for i in 0..n {
                        for j in i + 1..n {
                            h += vs[(dr[i] + m - dr[j]) % m] / n as f64;
                        }
                    }
                }
                1 => h += d[(dr[differ[0]], dc[differ[0]])],
                _ => {}
            }
            h
        })
    }

    #[test]
    fn two_body_matches_dense_exponential() {
        let g = grid(8, 8.0);
        let v = PotentialSpec::Gaussian { amplitude: 2.0, width: 1.0 };
        let psi = factorized_state(&phi(&g), 2, DEFAULT_MEMORY_BUDGET).unwrap();
        let t = 0.5;
        let out = evolve_nbody(&psi, &v, t, 1e-3, None).unwrap();
        let eig = SymmetricEigen::new(dense_hamiltonian(&g, 2, &v));
        let q = linalg::from_real(&eig.eigenvectors);
        let phase = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * t)));
        let u = &q * phase * q.adjoint();
        let v0 = nalgebra::DVector::from_vec(psi.amplitudes.clone());
        let exact = u * v0;
        let err = exact
            .iter()
            .zip(&out.final_state.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "dense-oracle error {err}");
    }

    #[test]
    fn marginal_of_factorized_state_is_pure() {
        let g = grid(8, 8.0);
        let p = phi(&g);
        let psi = factorized_state(&p, 3, DEFAULT_MEMORY_BUDGET).unwrap();
        let gamma = reduce_marginal(&psi, 1).unwrap();
        let pure = MarginalDensity::pure(&p);
        assert!((&gamma.matrix - &pure.matrix).camax() < 1e-12);
        assert!((gamma.trace() - 1.0).abs() < 1e-10);
        assert!(reduce_marginal(&psi, 3).is_err());
        assert!(reduce_marginal(&psi, 0).is_err());
    }

    #[test]
    fn two_body_marginal_matches_index_loop() {
        let g = grid(4, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let amps: Vec<Complex64> = (0..16)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut psi = NBodyState { grid: g.clone(), particles: 2, amplitudes: amps, time: 0.0 };
        let n = psi.norm_sqr().sqrt();
        psi.amplitudes.iter_mut().for_each(|z| *z /= n);
        let gamma = reduce_marginal(&psi, 1).unwrap();
        let dx = g.spacing();
        for x in 0..4 {
            for y in 0..4 {
                let mut s = Complex64::new(0.0, 0.0);
                for z in 0..4 {
                    s += psi.amplitudes[x * 4 + z] * psi.amplitudes[y * 4 + z].conj() * dx;
                }
                assert!((gamma.matrix[(x, y)] - s).norm() < 1e-14);
            }
        }
        assert!(gamma.eigenvalues().iter().all(|&l| l >= -1e-10));
    }

    #[test]
    fn second_marginal_partial_trace_is_first() {
        let g = grid(6, 6.0);
        let psi = factorized_state(&phi(&g), 3, DEFAULT_MEMORY_BUDGET).unwrap();
        let out = evolve_nbody(&psi, &gaussian_v(), 0.4, 1e-2, None).unwrap().final_state;
        let g1 = reduce_marginal(&out, 1).unwrap();
        let g2 = reduce_marginal(&out, 2).unwrap();
        assert!((&g2.partial_trace().unwrap().matrix - &g1.matrix).camax() < 1e-10);
        assert!((g2.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn distances_on_simple_pairs() {
        let g = grid(8, 8.0);
        let a = Wavefunction::plane_wave(&g, 1).unwrap();
        let b = Wavefunction::plane_wave(&g, 2).unwrap();
        let (pa, pb) = (MarginalDensity::pure(&a), MarginalDensity::pure(&b));
        assert_eq!(trace_distance(&pa, &pa).unwrap(), 0.0);
        assert!((trace_distance(&pa, &pb).unwrap() - 2.0).abs() < 1e-10);
        assert!((hs_distance(&pa, &pb).unwrap() - 2f64.sqrt()).abs() < 1e-10);
        let other = MarginalDensity::pure(&Wavefunction::plane_wave(&grid(8, 4.0), 1).unwrap());
        assert!(matches!(trace_distance(&pa, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn bbgky_needs_three_uniform_samples() {
        let g = grid(4, 4.0);
        let psi = factorized_state(&phi(&g), 2, DEFAULT_MEMORY_BUDGET).unwrap();
        assert!(matches!(bbgky_residual(&[psi.clone(), psi.clone()], &gaussian_v()), Err(Error::Samples(_))));
        let mut b = psi.clone();
        b.time = 0.1;
        let mut c = psi.clone();
        c.time = 0.3;
        assert!(bbgky_residual(&[psi, b, c], &gaussian_v()).is_err());
    }

    #[test]
    fn bbgky_vanishes_on_stationary_states() {
        let g = grid(8, 8.0);
        let flat = Wavefunction::plane_wave(&g, 0).unwrap();
        for n in [1, 2] {
            let psi = factorized_state(&flat, n, DEFAULT_MEMORY_BUDGET).unwrap();
            let run = evolve_nbody(&psi, &PotentialSpec::Zero, 0.2, 0.01, Some(10)).unwrap();
            assert!(bbgky_residual(&run.samples, &PotentialSpec::Zero).unwrap() <= 1e-8);
        }
    }

    fn bbgky_at(psi: &NBodyState, v: &PotentialSpec, dt: f64, stride: usize) -> f64 {
        let t = 2.0 * stride as f64 * dt;
        let run = evolve_nbody(psi, v, t, dt, Some(stride)).unwrap();
        bbgky_residual(&run.samples, v).unwrap()
    }

    #[test]
    fn bbgky_free_residual_is_second_order() {
        let g = grid(8, 8.0);
        let psi = factorized_state(&phi(&g), 2, DEFAULT_MEMORY_BUDGET).unwrap();
        let r1 = bbgky_at(&psi, &PotentialSpec::Zero, 0.02, 2);
        let r2 = bbgky_at(&psi, &PotentialSpec::Zero, 0.01, 2);
        assert!((r1 / r2 - 4.0).abs() < 0.4, "ratio {}", r1 / r2);
    }

    #[test]
    fn energy_is_conserved_to_step_accuracy() {
        let g = grid(8, 8.0);
        let psi = factorized_state(&phi(&g), 3, DEFAULT_MEMORY_BUDGET).unwrap();
        let v = gaussian_v();
        let e0 = nbody_energy(&psi, &v).unwrap();
        let drift = |dt: f64| {
            let out = evolve_nbody(&psi, &v, 0.5, dt, None).unwrap();
            (nbody_energy(&out.final_state, &v).unwrap() - e0).abs()
        };
        let (a, b) = (drift(0.02), drift(0.01));
        assert!(a < 1e-3 * e0.abs());
        assert!((a / b).log2() > 1.7, "drift ratio {}", a / b);
    }
}
