//! Fluctuation generators on the lattice as sparse matrices with a fixed pattern.
//!
//! In site operators, with `D` the matrix of `-Δ`, `U = V ∗ |φ|²` and `s = √dx/√N`:
//!
//! ```text
//! H₀  = Σ D_ab c_a†c_b
//! L+M = Σ (δ_ab U(a) + dx V(a-b) φ(a) conj(φ(b))) c_a†c_b
//! B†  = ½ dx Σ V(a-b) φ(a)φ(b) c_a†c_b†,   B = (B†)†
//! H₃  = s Σ V(x-y) (φ(y) c_x†c_y†c_x + conj(φ(y)) c_x†c_y c_x)
//! H₄  = (1/2N) Σ V(x-y) c_x†c_y†c_y c_x
//! ```
//!
//! `H₂ = H₀ + L + M + B + B†`. Each [`Skeleton`] stores, per term, the CSR positions and
//! occupation factors it contributes to, so re-assembly for a new `φ` only rescales numbers.

use std::ops::BitOr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use sprs::CsMat;

use super::LatticeFockSpace;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PotentialSpec, Wavefunction};
use crate::hartree::mean_field_potential;

/// Selection of generator pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parts(u8);

impl Parts {
    pub const KINETIC: Parts = Parts(1);
    /// `L + M`.
    pub const MEAN_FIELD: Parts = Parts(2);
    /// `B + B†`.
    pub const PAIRING: Parts = Parts(4);
    pub const CUBIC: Parts = Parts(8);
    pub const QUARTIC: Parts = Parts(16);
    pub const QUADRATIC: Parts = Parts(1 | 2 | 4);
    pub const FULL: Parts = Parts(31);

    pub fn contains(self, other: Parts) -> bool {
        self.0 & other.0 == other.0
    }

    fn intersects(self, other: Parts) -> bool {
        self.0 & other.0 != 0
    }
}

impl BitOr for Parts {
    type Output = Parts;
    fn bitor(self, rhs: Parts) -> Parts {
        Parts(self.0 | rhs.0)
    }
}

#[derive(Debug, Clone, Copy)]
enum Term {
    Hop(usize, usize),
    PairCreate(usize, usize),
    PairAnnihilate(usize, usize),
    CubicCreate(usize, usize),
    CubicAnnihilate(usize, usize),
    Quartic(usize, usize),
}

impl Term {
    fn ops(self) -> Vec<(usize, bool)> {
        match self {
            Term::Hop(a, b) => vec![(a, true), (b, false)],
            Term::PairCreate(a, b) => vec![(a, true), (b, true)],
            Term::PairAnnihilate(a, b) => vec![(b, false), (a, false)],
            Term::CubicCreate(x, y) => vec![(x, true), (y, true), (x, false)],
            Term::CubicAnnihilate(x, y) => vec![(x, true), (y, false), (x, false)],
            Term::Quartic(x, y) => vec![(x, true), (y, true), (y, false), (x, false)],
        }
    }
}

/// Lattice data shared by all generator skeletons.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    pub space: Arc<LatticeFockSpace>,
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    /// Mean-field parameter `N`.
    pub particles: f64,
    v: Vec<f64>,
    laplacian: DMatrix<f64>,
}

impl GeneratorSet {
    pub fn new(space: &Arc<LatticeFockSpace>, grid: &GridSpec, potential: &PotentialSpec, particles: f64) -> Result<Self> {
        if grid.points() != space.modes() {
            return Err(Error::shape(format!("grid has {} points, Fock space has {} modes", grid.points(), space.modes())));
        }
        if !(particles > 0.0) || !particles.is_finite() {
            return Err(Error::config(format!("mean-field parameter must be positive, got {particles}")));
        }
        Ok(GeneratorSet {
            space: space.clone(),
            grid: grid.clone(),
            potential: potential.clone(),
            particles,
            v: potential.sample(grid)?,
            laplacian: grid.laplacian_matrix(),
        })
    }

    pub fn with_particles(&self, particles: f64) -> Result<Self> {
        Self::new(&self.space, &self.grid, &self.potential, particles)
    }

    pub fn potential_samples(&self) -> &[f64] {
        &self.v
    }

    fn pair_potential(&self, x: usize, y: usize) -> f64 {
        let m = self.grid.points();
        self.v[(x + m - y) % m]
    }

    /// Fixed sparsity pattern for the selected pieces.
    pub fn skeleton(&self, parts: Parts) -> Skeleton {
        let m = self.space.modes();
        let mut terms = Vec::new();
        for a in 0..m {
            for b in 0..m {
                if parts.intersects(Parts::KINETIC | Parts::MEAN_FIELD) {
                    terms.push(Term::Hop(a, b));
                }
                if parts.contains(Parts::PAIRING) {
                    terms.push(Term::PairCreate(a, b));
                    terms.push(Term::PairAnnihilate(a, b));
                }
                if parts.contains(Parts::CUBIC) {
                    terms.push(Term::CubicCreate(a, b));
                    terms.push(Term::CubicAnnihilate(a, b));
                }
                if parts.contains(Parts::QUARTIC) {
                    terms.push(Term::Quartic(a, b));
                }
            }
        }
        let d = self.space.dimension();
        let mut hits: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(terms.len());
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); d];
        for term in &terms {
            let ops = term.ops();
            let mut list = Vec::new();
            for j in 0..d {
                if let Some((i, amp)) = self.space.apply_monomial(j, &ops) {
                    rows[i].push(j);
                    list.push((i, j, amp));
                }
            }
            hits.push(list);
        }
        let mut indptr = Vec::with_capacity(d + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        let entries = hits
            .into_iter()
            .map(|list| {
                list.into_iter()
                    .map(|(i, j, amp)| {
                        let row = &indices[indptr[i]..indptr[i + 1]];
                        (indptr[i] + row.binary_search(&j).expect("pattern holds every hit"), amp)
                    })
                    .collect()
            })
            .collect();
        let data = vec![Complex64::new(0.0, 0.0); indices.len()];
        Skeleton { parts, terms, entries, matrix: CsMat::new((d, d), indptr, indices, data) }
    }

    fn coefficient(&self, term: Term, parts: Parts, phi: &[Complex64], mean_field: &[f64]) -> Complex64 {
        let dx = self.grid.spacing();
        let zero = Complex64::new(0.0, 0.0);
        match term {
            Term::Hop(a, b) => {
                let mut c = zero;
                if parts.contains(Parts::KINETIC) {
                    c += self.laplacian[(a, b)];
                }
                if parts.contains(Parts::MEAN_FIELD) {
                    if a == b {
                        c += mean_field[a];
                    }
                    c += dx * self.pair_potential(a, b) * phi[a] * phi[b].conj();
                }
                c
            }
            Term::PairCreate(a, b) => 0.5 * dx * self.pair_potential(a, b) * phi[a] * phi[b],
            Term::PairAnnihilate(a, b) => 0.5 * dx * self.pair_potential(a, b) * (phi[a] * phi[b]).conj(),
            Term::CubicCreate(x, y) => (dx / self.particles).sqrt() * self.pair_potential(x, y) * phi[y],
            Term::CubicAnnihilate(x, y) => (dx / self.particles).sqrt() * self.pair_potential(x, y) * phi[y].conj(),
            Term::Quartic(x, y) => Complex64::new(self.pair_potential(x, y) / (2.0 * self.particles), 0.0),
        }
    }
}

/// Sparse generator with a fixed pattern, re-assembled for each Hartree state.
#[derive(Debug, Clone)]
pub struct Skeleton {
    parts: Parts,
    terms: Vec<Term>,
    entries: Vec<Vec<(usize, f64)>>,
    matrix: CsMat<Complex64>,
}

impl Skeleton {
    pub fn parts(&self) -> Parts {
        self.parts
    }

    pub fn matrix(&self) -> &CsMat<Complex64> {
        &self.matrix
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Fill in the coefficients for the Hartree state `phi` and mean-field parameter of `gens`.
    pub fn assemble(&mut self, gens: &GeneratorSet, phi: &Wavefunction) -> Result<&CsMat<Complex64>> {
        if phi.grid != gens.grid {
            return Err(Error::shape("Hartree state lives on a different grid"));
        }
        let mean_field = if self.parts.contains(Parts::MEAN_FIELD) {
            mean_field_potential(phi, &gens.v)?
        } else {
            Vec::new()
        };
        let data = self.matrix.data_mut();
        data.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (term, entries) in self.terms.iter().zip(&self.entries) {
            let c = gens.coefficient(*term, self.parts, &phi.amplitudes, &mean_field);
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for &(pos, amp) in entries {
                data[pos] += c * amp;
            }
        }
        Ok(&self.matrix)
    }
}
