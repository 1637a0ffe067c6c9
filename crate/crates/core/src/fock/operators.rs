//! Ladder operators, Weyl operators and coherent-state constructions.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use sprs::{CsMat, TriMat};

use super::{FockVector, LatticeFockSpace};
use crate::combinatorics::ln_d_n;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create,
    Annihilate,
}

/// Matrix of `a†(f)` or `a(f)` in the graded basis; `dx` is the lattice quadrature weight.
pub fn ladder(space: &LatticeFockSpace, f: &[Complex64], dx: f64, kind: Ladder) -> Result<CsMat<Complex64>> {
    if f.len() != space.modes() {
        return Err(Error::shape(format!("mode function has {} entries, space has {} modes", f.len(), space.modes())));
    }
    let d = space.dimension();
    let mut tri = TriMat::new((d, d));
    let w = dx.sqrt();
    for j in 0..d {
        for (site, &fx) in f.iter().enumerate() {
            if fx == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (coef, create) = match kind {
                Ladder::Create => (fx * w, true),
                Ladder::Annihilate => (fx.conj() * w, false),
            };
            if let Some((i, amp)) = space.apply_monomial(j, &[(site, create)]) {
                tri.add_triplet(i, j, coef * amp);
            }
        }
    }
    Ok(tri.to_csr())
}

/// `y = A x` for a CSR matrix.
pub(crate) fn matvec(a: &CsMat<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); a.rows()];
    matvec_into(a, x, &mut y);
    y
}

pub(crate) fn matvec_into(a: &CsMat<Complex64>, x: &[Complex64], y: &mut [Complex64]) {
    let indptr = a.indptr();
    let indptr = indptr.raw_storage();
    let (indices, data) = (a.indices(), a.data());
    for (row, out) in y.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in indptr[row]..indptr[row + 1] {
            acc += data[k] * x[indices[k]];
        }
        *out = acc;
    }
}

/// `Σ_k A^k x / k!`, stopping once a term vanishes (ladder operators are nilpotent on the
/// truncated space).
fn nilpotent_exp(a: &CsMat<Complex64>, x: &[Complex64], max_terms: usize) -> Vec<Complex64> {
    let mut sum = x.to_vec();
    let mut term = x.to_vec();
    for k in 1..=max_terms {
        term = matvec(a, &term);
        let inv = 1.0 / k as f64;
        term.iter_mut().for_each(|z| *z *= inv);
        if term.iter().all(|z| z.norm_sqr() == 0.0) {
            break;
        }
        sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
    }
    sum
}

/// Outcome of a Weyl application.
#[derive(Debug, Clone)]
pub struct WeylResult {
    pub state: FockVector,
    /// Squared norm of the result in the two highest sectors.
    pub leakage: f64,
    /// `false` when `leakage` exceeds the threshold passed to [`weyl_apply`].
    pub reliable: bool,
}

/// `W(f)ψ = e^{-‖f‖²/2} exp(a†(f)) exp(-a(f)) ψ`.
///
/// Both exponential series terminate on the truncated space, so every sector of the result
/// is the exact projection of `W(f)ψ` up to roundoff; mass pushed above the cutoff is lost
/// and shows up as a norm deficit.
pub fn weyl_apply(f: &[Complex64], dx: f64, psi: &FockVector, leakage_threshold: f64) -> Result<WeylResult> {
    let space = &psi.space;
    let norm_f: f64 = f.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
    let create = ladder(space, f, dx, Ladder::Create)?;
    let minus_f: Vec<Complex64> = f.iter().map(|z| -z).collect();
    let annihilate = ladder(space, &minus_f, dx, Ladder::Annihilate)?;
    let terms = space.cutoff() + 1;
    let lowered = nilpotent_exp(&annihilate, &psi.coefficients, terms);
    let mut raised = nilpotent_exp(&create, &lowered, terms);
    let scale = (-0.5 * norm_f).exp();
    raised.iter_mut().for_each(|z| *z *= scale);
    let state = FockVector::new(space, raised)?;
    if !state.is_finite() {
        return Err(Error::numerical("non-finite Weyl application"));
    }
    let leakage = state.leakage();
    Ok(WeylResult { state, leakage, reliable: leakage <= leakage_threshold })
}

/// Coherent state `W(f)Ω`.
pub fn coherent_state(space: &Arc<LatticeFockSpace>, f: &[Complex64], dx: f64) -> Result<WeylResult> {
    weyl_apply(f, dx, &FockVector::vacuum(space), f64::INFINITY)
}

/// `(a†(φ))^N Ω / √(N!)`.
pub fn factorized_state(space: &Arc<LatticeFockSpace>, phi: &[Complex64], dx: f64, n: usize) -> Result<FockVector> {
    if n > space.cutoff() {
        return Err(Error::config(format!("{n} particles exceed the cutoff {}", space.cutoff())));
    }
    let create = ladder(space, phi, dx, Ladder::Create)?;
    let mut v = FockVector::vacuum(space).coefficients;
    for k in 1..=n {
        v = matvec(&create, &v);
        let inv = 1.0 / (k as f64).sqrt();
        v.iter_mut().for_each(|z| *z *= inv);
    }
    FockVector::new(space, v)
}

/// `d_N (1/Q) Σ_q e^{iθ_q N} W(e^{-iθ_q}√N φ)Ω` with `θ_q = 2πq/Q`.
pub fn theta_reconstruct(
    space: &Arc<LatticeFockSpace>,
    phi: &[Complex64],
    dx: f64,
    n: usize,
    quadrature: usize,
) -> Result<FockVector> {
    let cutoff = space.cutoff();
    if n > cutoff {
        return Err(Error::config(format!("N = {n} exceeds the cutoff {cutoff}")));
    }
    if quadrature < 2 * cutoff + 1 {
        return Err(Error::config(format!(
            "{quadrature} quadrature points, need at least {}",
            2 * cutoff + 1
        )));
    }
    let scale = ln_d_n(n as u64)?.exp() / quadrature as f64;
    let root = (n as f64).sqrt();
    let mut acc = FockVector::zero(space);
    for q in 0..quadrature {
        let theta = 2.0 * PI * q as f64 / quadrature as f64;
        let rot = Complex64::from_polar(root, -theta);
        let f: Vec<Complex64> = phi.iter().map(|z| z * rot).collect();
        let w = coherent_state(space, &f, dx)?.state;
        let phase = Complex64::from_polar(scale, theta * n as f64);
        acc.coefficients.iter_mut().zip(&w.coefficients).for_each(|(a, b)| *a += phase * b);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_basis, number_functional};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dense(a: &CsMat<Complex64>) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(a.rows(), a.cols());
        for (v, (i, j)) in a.iter() {
            m[(i, j)] += *v;
        }
        m
    }

    fn mode() -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b)), 3)
    }

    #[test]
    fn ladder_on_vacuum() {
        let space = build_basis(3, 4, 1000).unwrap();
        let dx = 0.7;
        let f = vec![c(1.0, 0.5), c(-0.3, 0.0), c(0.0, 2.0)];
        let omega = FockVector::vacuum(&space);
        let a = ladder(&space, &f, dx, Ladder::Annihilate).unwrap();
        assert!(matvec(&a, &omega.coefficients).iter().all(|z| z.norm() == 0.0));
        let ad = ladder(&space, &f, dx, Ladder::Create).unwrap();
        let one = FockVector::new(&space, matvec(&ad, &omega.coefficients)).unwrap();
        let norm_f = (f.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
        assert!((one.norm() - norm_f).abs() < 1e-14);
        // amplitude on site x is √dx f(x)
        for (x, fx) in f.iter().enumerate() {
            let mut occ = vec![0u16; 3];
            occ[x] = 1;
            let i = space.index_of(&occ).unwrap();
            assert!((one.coefficients[i] - fx * dx.sqrt()).norm() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn canonical_commutator_below_cutoff(f in mode(), g in mode(), dx in 0.1f64..2.0) {
            let space = build_basis(3, 4, 1000).unwrap();
            let a = dense(&ladder(&space, &f, dx, Ladder::Annihilate).unwrap());
            let ad = dense(&ladder(&space, &g, dx, Ladder::Create).unwrap());
            let comm = &a * &ad - &ad * &a;
            let inner: Complex64 = f.iter().zip(&g).map(|(x, y)| x.conj() * y).sum::<Complex64>() * dx;
            let safe = space.sector(space.cutoff()).start;
            for i in 0..space.dimension() {
                for j in 0..safe {
                    let expected = if i == j { inner } else { c(0.0, 0.0) };
                    prop_assert!((comm[(i, j)] - expected).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn weyl_preserves_norm_below_cutoff(f in mode(), seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let space = build_basis(3, 24, 1 << 16).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut psi = FockVector::zero(&space);
            for i in 0..space.sector(3).end {
                psi.coefficients[i] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            let n0 = psi.norm();
            psi.scale(c(1.0 / n0, 0.0));
            let f: Vec<_> = f.iter().map(|z| z * 0.5).collect();
            let out = weyl_apply(&f, 1.0, &psi, 1e-6).unwrap();
            prop_assert!(out.reliable);
            prop_assert!((out.state.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn weyl_zero_is_identity() {
        let space = build_basis(2, 3, 100).unwrap();
        let psi = FockVector::new(&space, (0..space.dimension()).map(|i| c(i as f64, 1.0)).collect()).unwrap();
        let out = weyl_apply(&[c(0.0, 0.0); 2], 0.5, &psi, 1e-6).unwrap();
        for (a, b) in out.state.coefficients.iter().zip(&psi.coefficients) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_mode_coherent_expansion() {
        let space = build_basis(1, 20, 100).unwrap();
        let n = 2.0f64;
        let out = coherent_state(&space, &[c(n.sqrt(), 0.0)], 1.0).unwrap();
        let mut ln_fact = 0.0;
        for k in 0..=20usize {
            if k > 0 {
                ln_fact += (k as f64).ln();
            }
            let oracle = (-n / 2.0 + 0.5 * k as f64 * n.ln() - 0.5 * ln_fact).exp();
            assert!((out.state.coefficients[k] - c(oracle, 0.0)).norm() < 1e-10, "sector {k}");
        }
        assert!((number_functional(&out.state, 1) - n).abs() < 1e-8);
    }

    #[test]
    fn coherent_number_mean_on_lattice() {
        let space = build_basis(2, 30, 1 << 12).unwrap();
        let f = vec![c(0.6, 0.2), c(-0.4, 0.9)];
        let dx = 0.8;
        let out = coherent_state(&space, &f, dx).unwrap();
        let norm_f = f.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
        assert!((number_functional(&out.state, 1) - norm_f).abs() < 1e-10);
        assert!((out.state.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theta_reconstruction_recovers_product_states() {
        let space = build_basis(1, 6, 100).unwrap();
        let phi = [c(1.0, 0.0)];
        let recon = theta_reconstruct(&space, &phi, 1.0, 2, 16).unwrap();
        let direct = factorized_state(&space, &phi, 1.0, 2).unwrap();
        assert!(recon.sub(&direct).norm() < 1e-10);
        let sectors = recon.sector_norms();
        let outside: f64 = sectors.iter().enumerate().filter(|(n, _)| *n != 2).map(|(_, w)| w).sum();
        assert!(outside.sqrt() < 1e-10);

        let lattice = build_basis(3, 4, 1000).unwrap();
        let dx = 0.5;
        let raw = [c(1.0, 0.3), c(0.2, -0.5), c(-0.7, 0.1)];
        let nrm = (raw.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
        let phi: Vec<_> = raw.iter().map(|z| z / nrm).collect();
        let one = theta_reconstruct(&lattice, &phi, dx, 1, 9).unwrap();
        let ad = ladder(&lattice, &phi, dx, Ladder::Create).unwrap();
        let oracle = matvec(&ad, &FockVector::vacuum(&lattice).coefficients);
        let err: f64 = one.coefficients.iter().zip(&oracle).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(err.sqrt() < 1e-10);
        assert!(theta_reconstruct(&lattice, &phi, dx, 1, 8).is_err());
        assert!(theta_reconstruct(&lattice, &phi, dx, 5, 20).is_err());
    }
}
