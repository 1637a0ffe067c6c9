//! Time-ordered propagation by midpoint exponentials, the residual `R_y`, and empirical
//! operator-bound ratios.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprs::CsMat;

use super::generators::{GeneratorSet, Parts, Skeleton};
use super::operators::{matvec, matvec_into};
use super::FockVector;
use crate::error::{Error, Result};
use crate::hartree::{step_count, HartreeTrajectory};
use crate::linalg::CMatrix;

const KRYLOV_MAX: usize = 48;
const KRYLOV_TOL: f64 = 1e-13;
const MAX_SPLITS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// `H₂ + H₃ + H₄`, generating `U(t;s)`.
    Full,
    /// `H₂`, generating `U₂(t;s)`.
    Quadratic,
}

impl Dynamics {
    fn parts(self) -> Parts {
        match self {
            Dynamics::Full => Parts::FULL,
            Dynamics::Quadratic => Parts::QUADRATIC,
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `exp(-iτT)e₁` for a real symmetric tridiagonal `T`.
fn tridiagonal_exp(alpha: &[f64], beta: &[f64], tau: f64) -> Vec<Complex64> {
    let s = alpha.len();
    let mut t = DMatrix::zeros(s, s);
    for i in 0..s {
        t[(i, i)] = alpha[i];
        if i + 1 < s {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    (0..s)
        .map(|i| {
            (0..s)
                .map(|k| {
                    let q = eig.eigenvectors[(0, k)] * eig.eigenvectors[(i, k)];
                    Complex64::from_polar(q, -tau * eig.eigenvalues[k])
                })
                .sum()
        })
        .collect()
}

/// One Lanczos attempt; `None` when the Krylov space is exhausted before convergence.
fn lanczos(a: &CsMat<Complex64>, v: &[Complex64], tau: f64) -> Option<Vec<Complex64>> {
    let beta0 = norm(v);
    let kmax = KRYLOV_MAX.min(v.len());
    let mut basis: Vec<Vec<Complex64>> = vec![v.iter().map(|z| z / beta0).collect()];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut w = vec![Complex64::new(0.0, 0.0); v.len()];
    let mut previous: Option<Vec<Complex64>> = None;
    for k in 0..kmax {
        matvec_into(a, &basis[k], &mut w);
        let ak = dot(&basis[k], &w).re;
        alpha.push(ak);
        // two passes of full reorthogonalisation
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let bk = norm(&w);
        let exhausted = bk <= 1e-14 * (ak.abs() + beta.last().copied().unwrap_or(0.0)).max(1.0);
        let check = exhausted || k + 1 == kmax || (k + 1) % 4 == 0;
        if check {
            let y = tridiagonal_exp(&alpha, &beta, tau);
            let converged = exhausted
                || previous.as_ref().is_some_and(|p| {
                    let diff: f64 = y
                        .iter()
                        .enumerate()
                        .map(|(i, yi)| (yi - p.get(i).copied().unwrap_or_default()).norm_sqr())
                        .sum();
                    diff.sqrt() <= KRYLOV_TOL && (bk * y[k].norm()) <= KRYLOV_TOL
                });
            if converged {
                let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
                for (q, yi) in basis.iter().zip(&y) {
                    let c = yi * beta0;
                    out.iter_mut().zip(q).for_each(|(o, x)| *o += c * x);
                }
                return Some(out);
            }
            previous = Some(y);
        }
        if k + 1 < kmax {
            basis.push(w.iter().map(|z| z / bk).collect());
            beta.push(bk);
        }
    }
    None
}

/// `exp(-iτA)v` for Hermitian `A` by Lanczos with full reorthogonalisation; the step is
/// halved recursively when the Krylov series does not converge.
pub fn expm_action(a: &CsMat<Complex64>, v: &[Complex64], tau: f64) -> Result<Vec<Complex64>> {
    if v.len() != a.cols() {
        return Err(Error::shape("vector length does not match the operator"));
    }
    if tau == 0.0 || norm(v) == 0.0 {
        return Ok(v.to_vec());
    }
    fn go(a: &CsMat<Complex64>, v: &[Complex64], tau: f64, depth: u32) -> Result<Vec<Complex64>> {
        if let Some(out) = lanczos(a, v, tau) {
            return Ok(out);
        }
        if depth == MAX_SPLITS {
            return Err(Error::numerical(format!(
                "Krylov exponential did not converge: dimension {}, step {tau:e}, {} halvings",
                v.len(),
                depth
            )));
        }
        let half = go(a, v, tau / 2.0, depth + 1)?;
        go(a, &half, tau / 2.0, depth + 1)
    }
    let out = go(a, v, tau, 0)?;
    if !out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::numerical("non-finite Krylov exponential"));
    }
    Ok(out)
}

/// A propagated state with the largest top-two-sector mass seen along the way.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub state: FockVector,
    pub max_leakage: f64,
    pub steps: usize,
}

fn check_trajectory(gens: &GeneratorSet, traj: &HartreeTrajectory, t_end: f64) -> Result<()> {
    if traj.grid != gens.grid {
        return Err(Error::shape("Hartree trajectory and Fock lattice use different grids"));
    }
    if traj.last().time + 1e-9 * traj.dt < t_end {
        return Err(Error::config(format!(
            "Hartree trajectory ends at {} before {t_end}",
            traj.last().time
        )));
    }
    Ok(())
}

/// `U(t_end; 0)ψ₀` (or `U₂`) by exponential midpoint steps: each step uses the generator
/// assembled from the Hartree state at the step midpoint.
pub fn propagate(
    psi0: &FockVector,
    gens: &GeneratorSet,
    which: Dynamics,
    traj: &HartreeTrajectory,
    t_end: f64,
    dt: f64,
) -> Result<Propagation> {
    let (steps, h) = step_count(t_end, dt)?;
    check_trajectory(gens, traj, t_end)?;
    let mut skeleton = gens.skeleton(which.parts());
    let mut psi = psi0.coefficients.clone();
    let mut max_leakage = psi0.leakage();
    for n in 0..steps {
        let phi = traj.state_at((n as f64 + 0.5) * h)?;
        let a = skeleton.assemble(gens, &phi)?;
        psi = expm_action(a, &psi, h)?;
        let v = FockVector::new(&psi0.space, psi)?;
        max_leakage = max_leakage.max(v.leakage());
        psi = v.coefficients;
    }
    Ok(Propagation { state: FockVector::new(&psi0.space, psi)?, max_leakage, steps })
}

/// `U(t_end; 0)†` applied to each vector, reusing one assembly per step.
pub fn propagate_adjoint(
    states: &[FockVector],
    gens: &GeneratorSet,
    which: Dynamics,
    traj: &HartreeTrajectory,
    t_end: f64,
    dt: f64,
) -> Result<Vec<Propagation>> {
    let (steps, h) = step_count(t_end, dt)?;
    check_trajectory(gens, traj, t_end)?;
    let mut skeleton: Skeleton = gens.skeleton(which.parts());
    let mut out: Vec<Propagation> = states
        .iter()
        .map(|s| Propagation { state: s.clone(), max_leakage: s.leakage(), steps })
        .collect();
    for n in (0..steps).rev() {
        let phi = traj.state_at((n as f64 + 0.5) * h)?;
        let a = skeleton.assemble(gens, &phi)?;
        for p in &mut out {
            p.state.coefficients = expm_action(a, &p.state.coefficients, -h)?;
            p.max_leakage = p.max_leakage.max(p.state.leakage());
        }
    }
    Ok(out)
}

/// `U(t)Ω` and the pulled-back site annihilators `U†(t) c_y U(t)Ω` for every site `y`.
#[derive(Debug, Clone)]
pub struct HeisenbergVacuum {
    pub forward: Propagation,
    pub sites: Vec<Propagation>,
}

impl HeisenbergVacuum {
    /// Largest top-two-sector mass over all propagations involved.
    pub fn leakage(&self) -> f64 {
        self.sites.iter().map(|p| p.max_leakage).fold(self.forward.max_leakage, f64::max)
    }

    /// `G₂(x, z) = (U₂† c_x U₂Ω)_{e_z} / dx`, read off the one-particle sector.
    pub fn pair_kernel(&self, dx: f64) -> CMatrix {
        let space = &self.forward.state.space;
        let m = space.modes();
        CMatrix::from_fn(m, m, |x, z| {
            let mut occ = vec![0u16; m];
            occ[z] = 1;
            let i = space.index_of(&occ).expect("one-particle states lie below any cutoff ≥ 1");
            self.sites[x].state.coefficients[i] / dx
        })
    }
}

pub fn heisenberg_vacuum(
    gens: &GeneratorSet,
    which: Dynamics,
    traj: &HartreeTrajectory,
    t: f64,
    dt: f64,
) -> Result<HeisenbergVacuum> {
    let space = &gens.space;
    let forward = propagate(&FockVector::vacuum(space), gens, which, traj, t, dt)?;
    let lowered: Vec<FockVector> = (0..space.modes())
        .map(|y| {
            let mut e = vec![Complex64::new(0.0, 0.0); space.modes()];
            e[y] = Complex64::new(1.0, 0.0);
            let a = super::ladder(space, &e, 1.0, super::Ladder::Annihilate)?;
            FockVector::new(space, matvec(&a, &forward.state.coefficients))
        })
        .collect::<Result<_>>()?;
    let sites = propagate_adjoint(&lowered, gens, which, traj, t, dt)?;
    Ok(HeisenbergVacuum { forward, sites })
}

/// `R_yΩ = U†a_yUΩ - U₂†a_yU₂Ω` for every site, with the moments
/// `Σ_y dx ‖(𝒩+1)^{j/2} R_yΩ‖²` for `j = 0, 1, 2`.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub time: f64,
    pub sites: Vec<FockVector>,
    pub aggregates: [f64; 3],
    /// Largest top-two-sector mass over all propagations involved.
    pub leakage: f64,
    pub reliable: bool,
}

pub fn residual_r(
    gens: &GeneratorSet,
    traj: &HartreeTrajectory,
    t: f64,
    dt: f64,
    leakage_threshold: f64,
) -> Result<ResidualField> {
    let dx = gens.grid.spacing();
    let full = heisenberg_vacuum(gens, Dynamics::Full, traj, t, dt)?;
    let quadratic = heisenberg_vacuum(gens, Dynamics::Quadratic, traj, t, dt)?;
    let leakage = full.leakage().max(quadratic.leakage());
    let sites: Vec<FockVector> = full
        .sites
        .iter()
        .zip(&quadratic.sites)
        .map(|(u, u2)| {
            let mut r = u.state.sub(&u2.state);
            r.scale(Complex64::new(1.0 / dx.sqrt(), 0.0));
            r
        })
        .collect();
    let mut aggregates = [0.0; 3];
    for r in &sites {
        for (n, w) in r.sector_norms().iter().enumerate() {
            for (j, agg) in aggregates.iter_mut().enumerate() {
                *agg += dx * (n as f64 + 1.0).powi(j as i32) * w;
            }
        }
    }
    if !aggregates.iter().all(|a| a.is_finite()) {
        return Err(Error::numerical("non-finite residual"));
    }
    Ok(ResidualField { time: t, sites, aggregates, leakage, reliable: leakage <= leakage_threshold })
}

/// Largest ratios over the trials for one value of `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRatios {
    pub particles: f64,
    /// `‖𝒩^j(H₂-H₀)ψ‖ / ‖(𝒩+2)^{j+1}ψ‖`.
    pub quadratic: f64,
    /// `√N ‖𝒩^j H₃ψ‖ / ‖(𝒩+1)^{j+3/2}ψ‖`.
    pub cubic: f64,
    /// `N ‖𝒩^j H₄ψ‖ / ‖𝒩^{j+2}ψ‖`.
    pub quartic: f64,
    /// `‖𝒩^j H₄ψ‖ / ‖𝒩^{j+2}ψ‖` without the `N` factor.
    pub quartic_unscaled: f64,
}

#[derive(Debug, Clone)]
pub struct BoundProbeReport {
    pub moment: u32,
    pub trials: usize,
    pub rows: Vec<BoundRatios>,
    /// Every ratio finite and, after scaling, independent of `N` to relative `1e-8`.
    pub uniform: bool,
}

/// Empirical operator-bound ratios on random vectors supported in sectors `≤ n_max - 2`
/// (where no generator reaches the cutoff), for each `N` in `particles`.
pub fn generator_bound_probe(
    gens: &GeneratorSet,
    phi: &crate::grid::Wavefunction,
    moment: u32,
    trials: usize,
    seed: u64,
    particles: &[f64],
) -> Result<BoundProbeReport> {
    let space = &gens.space;
    if space.cutoff() < 3 {
        return Err(Error::config("bound probe needs n_max ≥ 3"));
    }
    if trials == 0 || particles.is_empty() {
        return Err(Error::config("bound probe needs at least one trial and one N"));
    }
    let support = space.sector(space.cutoff() - 2).end;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<FockVector> = (0..trials)
        .map(|_| {
            let mut v = FockVector::zero(space);
            for z in &mut v.coefficients[..support] {
                *z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            let n = v.norm();
            v.scale(Complex64::new(1.0 / n, 0.0));
            v
        })
        .collect();
    let j = moment as f64;
    let mut h2 = gens.skeleton(Parts::MEAN_FIELD | Parts::PAIRING);
    let mut h3 = gens.skeleton(Parts::CUBIC);
    let mut h4 = gens.skeleton(Parts::QUARTIC);
    let mut rows = Vec::new();
    for &n in particles {
        let g = gens.with_particles(n)?;
        let (a2, a3, a4) = (
            h2.assemble(&g, phi)?.clone(),
            h3.assemble(&g, phi)?.clone(),
            h4.assemble(&g, phi)?.clone(),
        );
        let mut row = BoundRatios { particles: n, quadratic: 0.0, cubic: 0.0, quartic: 0.0, quartic_unscaled: 0.0 };
        for v in &vectors {
            let apply = |a: &CsMat<Complex64>| -> Result<f64> {
                let out = FockVector::new(space, matvec(a, &v.coefficients))?;
                Ok(out.weighted(|k| (k as f64).powf(j)).norm())
            };
            let q = apply(&a2)? / v.weighted(|k| (k as f64 + 2.0).powf(j + 1.0)).norm();
            let c = n.sqrt() * apply(&a3)? / v.weighted(|k| (k as f64 + 1.0).powf(j + 1.5)).norm();
            let r4 = apply(&a4)? / v.weighted(|k| (k as f64).powf(j + 2.0)).norm();
            row.quadratic = row.quadratic.max(q);
            row.cubic = row.cubic.max(c);
            row.quartic_unscaled = row.quartic_unscaled.max(r4);
            row.quartic = row.quartic.max(n * r4);
        }
        rows.push(row);
    }
    let spread = |f: fn(&BoundRatios) -> f64| {
        let vals: Vec<f64> = rows.iter().map(f).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        vals.iter().all(|x| x.is_finite()) && hi <= lo * (1.0 + 1e-8)
    };
    let uniform = spread(|r| r.quadratic) && spread(|r| r.cubic) && spread(|r| r.quartic);
    Ok(BoundProbeReport { moment, trials, rows, uniform })
}
