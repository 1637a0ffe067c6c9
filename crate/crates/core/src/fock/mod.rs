//! Truncated Fock space over the sites of a small periodic lattice.
//!
//! Site operators `c_x`, `c_x†` obey `[c_x, c_y†] = δ_xy`; the continuum operators are
//! `a_x = c_x/√dx`, so `a(f) = √dx Σ conj(f(x)) c_x` and `a†(f) = √dx Σ f(x) c_x†`. Creation
//! beyond the cutoff `n_max` is dropped, which makes every operator exact on states whose
//! occupation stays below the cutoff.

mod dynamics;
mod generators;
mod operators;

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use dynamics::{
    expm_action, generator_bound_probe, heisenberg_vacuum, propagate, propagate_adjoint, residual_r, BoundProbeReport,
    BoundRatios, Dynamics, HeisenbergVacuum, Propagation, ResidualField,
};
pub use generators::{GeneratorSet, Parts, Skeleton};
pub use operators::{
    coherent_state, factorized_state, ladder, theta_reconstruct, weyl_apply, Ladder, WeylResult,
};

/// Default cap on the basis dimension.
pub const DEFAULT_DIMENSION_BUDGET: usize = 1 << 20;

/// Occupation basis with `Σ n_i ≤ n_max`, graded by total occupation and lexicographic
/// within a grade.
#[derive(Debug, Clone)]
pub struct LatticeFockSpace {
    modes: usize,
    cutoff: usize,
    states: Vec<Vec<u16>>,
    totals: Vec<usize>,
    sector_offsets: Vec<usize>,
    index: HashMap<Vec<u16>, usize>,
}

/// `Σ_{n ≤ n_max} C(n+m-1, m-1) = C(n_max + m, m)`.
pub fn basis_dimension(modes: usize, cutoff: usize) -> u128 {
    let mut d: u128 = 1;
    for i in 1..=modes as u128 {
        d = d.saturating_mul(cutoff as u128 + i) / i;
    }
    d
}

/// Enumerate the truncated basis; fails with a capacity error when `D` exceeds `budget`.
pub fn build_basis(modes: usize, cutoff: usize, budget: usize) -> Result<Arc<LatticeFockSpace>> {
    if modes == 0 {
        return Err(Error::config("Fock space needs at least one mode"));
    }
    if cutoff >= u16::MAX as usize {
        return Err(Error::config(format!("cutoff {cutoff} too large")));
    }
    let dim = basis_dimension(modes, cutoff);
    if dim > budget as u128 {
        return Err(Error::Capacity {
            what: format!("Fock basis (m={modes}, n_max={cutoff})"),
            required: dim,
            budget: budget as u128,
        });
    }
    let mut states = Vec::with_capacity(dim as usize);
    let mut totals = Vec::with_capacity(dim as usize);
    let mut sector_offsets = Vec::with_capacity(cutoff + 2);
    for total in 0..=cutoff {
        sector_offsets.push(states.len());
        let mut occ = vec![0u16; modes];
        grade(&mut occ, 0, total, &mut states);
        totals.resize(states.len(), total);
    }
    sector_offsets.push(states.len());
    let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    Ok(Arc::new(LatticeFockSpace { modes, cutoff, states, totals, sector_offsets, index }))
}

fn grade(occ: &mut [u16], site: usize, remaining: usize, out: &mut Vec<Vec<u16>>) {
    if site + 1 == occ.len() {
        occ[site] = remaining as u16;
        out.push(occ.to_vec());
        return;
    }
    for n in 0..=remaining {
        occ[site] = n as u16;
        grade(occ, site + 1, remaining - n, out);
    }
    occ[site] = 0;
}

impl LatticeFockSpace {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    pub fn occupation(&self, index: usize) -> &[u16] {
        &self.states[index]
    }

    pub fn index_of(&self, occupation: &[u16]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// Total occupation of basis state `index`.
    pub fn total(&self, index: usize) -> usize {
        self.totals[index]
    }

    /// Basis index range of sector `n`.
    pub fn sector(&self, n: usize) -> std::ops::Range<usize> {
        self.sector_offsets[n]..self.sector_offsets[n + 1]
    }

    /// Apply a product of site operators, rightmost first. `(site, true)` is `c†`.
    /// Returns the target index and matrix element, or `None` when the result vanishes or
    /// leaves the truncated space.
    pub(crate) fn apply_monomial(&self, index: usize, ops: &[(usize, bool)]) -> Option<(usize, f64)> {
        let mut occ = self.states[index].clone();
        let mut total = self.totals[index];
        let mut amp = 1.0;
        for &(site, create) in ops.iter().rev() {
            if create {
                if total == self.cutoff {
                    return None;
                }
                occ[site] += 1;
                total += 1;
                amp *= (occ[site] as f64).sqrt();
            } else {
                if occ[site] == 0 {
                    return None;
                }
                amp *= (occ[site] as f64).sqrt();
                occ[site] -= 1;
                total -= 1;
            }
        }
        Some((self.index[&occ], amp))
    }
}

/// Coefficient vector over a [`LatticeFockSpace`].
#[derive(Debug, Clone)]
pub struct FockVector {
    pub space: Arc<LatticeFockSpace>,
    pub coefficients: Vec<Complex64>,
}

impl FockVector {
    pub fn zero(space: &Arc<LatticeFockSpace>) -> Self {
        FockVector { space: space.clone(), coefficients: vec![Complex64::new(0.0, 0.0); space.dimension()] }
    }

    pub fn vacuum(space: &Arc<LatticeFockSpace>) -> Self {
        let mut v = Self::zero(space);
        v.coefficients[0] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn new(space: &Arc<LatticeFockSpace>, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != space.dimension() {
            return Err(Error::shape(format!(
                "{} coefficients for a basis of dimension {}",
                coefficients.len(),
                space.dimension()
            )));
        }
        Ok(FockVector { space: space.clone(), coefficients })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn inner(&self, other: &FockVector) -> Complex64 {
        self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Squared norm of each sector `0..=n_max`.
    pub fn sector_norms(&self) -> Vec<f64> {
        (0..=self.space.cutoff)
            .map(|n| self.coefficients[self.space.sector(n)].iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// Squared norm in the two highest sectors (the fraction, for unit vectors).
    pub fn leakage(&self) -> f64 {
        self.sector_norms().iter().rev().take(2).sum()
    }

    /// Squared norm of the odd sectors.
    pub fn odd_mass(&self) -> f64 {
        self.sector_norms().iter().skip(1).step_by(2).sum()
    }

    /// Multiply sector `n` by `w(n)`.
    pub fn weighted(&self, w: impl Fn(usize) -> f64) -> FockVector {
        let coefficients = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, z)| z * w(self.space.total(i)))
            .collect();
        FockVector { space: self.space.clone(), coefficients }
    }

    pub fn sub(&self, other: &FockVector) -> FockVector {
        let coefficients = self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a - b).collect();
        FockVector { space: self.space.clone(), coefficients }
    }

    pub fn scale(&mut self, s: Complex64) {
        self.coefficients.iter_mut().for_each(|z| *z *= s);
    }
}

/// `Σ_n n^j ‖ψ⁽ⁿ⁾‖²`.
pub fn number_functional(psi: &FockVector, j: u32) -> f64 {
    psi.sector_norms().iter().enumerate().map(|(n, w)| (n as f64).powi(j as i32) * w).sum()
}
