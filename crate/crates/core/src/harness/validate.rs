//! Cross-oracle validation on the Fock lattice: kernels vs Fock propagation, the residual
//! `1/N` law, parity, number moments, generator bounds and the combinatorial identities.

use num_complex::Complex64;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::bogoliubov::{evolve_pair, BogoliubovPair};
use crate::combinatorics::{a_coeffs, d_n, krasikov_check, weighted_sum};
use crate::error::Result;
use crate::fock::{
    build_basis, generator_bound_probe, heisenberg_vacuum, number_functional, propagate, residual_r,
    weyl_apply, Dynamics, FockVector, GeneratorSet, DEFAULT_DIMENSION_BUDGET,
};
use crate::grid::GridSpec;
use crate::hartree::{evolve_hartree, HartreeTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// A diagnostic (truncation leakage, cutoff sweep) prevents a verdict.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportItem {
    pub id: String,
    pub name: String,
    pub status: CheckStatus,
    pub measured: Vec<Measurement>,
    pub threshold: String,
    pub note: String,
}

impl ReportItem {
    pub fn value(&self, label: &str) -> Option<f64> {
        self.measured.iter().find(|m| m.label == label).map(|m| m.value)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub config_hash: String,
    pub items: Vec<ReportItem>,
    pub status: CheckStatus,
}

impl ValidationReport {
    /// `0` pass, `1` any failure, `2` otherwise inconclusive.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            CheckStatus::Pass => 0,
            CheckStatus::Fail => 1,
            CheckStatus::Inconclusive => 2,
        }
    }

    pub fn item(&self, id: &str) -> Option<&ReportItem> {
        self.items.iter().find(|i| i.id == id)
    }
}

struct Builder {
    measured: Vec<Measurement>,
}

impl Builder {
    fn new() -> Self {
        Builder { measured: Vec::new() }
    }

    fn push(&mut self, label: impl Into<String>, value: f64) {
        self.measured.push(Measurement { label: label.into(), value });
    }
}

fn item(id: &str, name: &str, threshold: String, run: impl FnOnce(&mut Builder) -> Result<(CheckStatus, String)>) -> ReportItem {
    let mut b = Builder::new();
    let (status, note) = match run(&mut b) {
        Ok(v) => v,
        Err(e) => (CheckStatus::Fail, format!("computation failed: {e}")),
    };
    ReportItem { id: id.into(), name: name.into(), status, measured: b.measured, threshold, note }
}

/// `max|a - b| / (1 + max|b|)`.
fn relative_entry_error(a: &crate::linalg::CMatrix, b: &crate::linalg::CMatrix) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max) / (1.0 + scale)
}

struct Lattice {
    grid: GridSpec,
    trajectory: HartreeTrajectory,
    pairs: Vec<BogoliubovPair>,
}

impl Lattice {
    fn pair_at(&self, t: f64) -> Option<&BogoliubovPair> {
        self.pairs.iter().find(|p| (p.time - t).abs() <= 1e-9)
    }
}

/// Samples of `U₂(t)Ω` and `G₂` from the Fock engine at one cutoff.
struct QuadraticSample {
    time: f64,
    number: f64,
    odd_mass: f64,
    leakage: f64,
    kernel: crate::linalg::CMatrix,
}

fn quadratic_samples(config: &ExperimentConfig, lattice: &Lattice, cutoff: usize) -> Result<Vec<QuadraticSample>> {
    let space = build_basis(config.fock.modes, cutoff, DEFAULT_DIMENSION_BUDGET)?;
    let n = config.fock.residual_particles[0];
    let gens = GeneratorSet::new(&space, &lattice.grid, &config.fock.potential, n)?;
    config
        .fock
        .check_times
        .iter()
        .map(|&t| {
            let h = heisenberg_vacuum(&gens, Dynamics::Quadratic, &lattice.trajectory, t, config.fock.dt)?;
            Ok(QuadraticSample {
                time: t,
                number: number_functional(&h.forward.state, 1),
                odd_mass: h.forward.state.odd_mass(),
                leakage: h.leakage(),
                kernel: h.pair_kernel(lattice.grid.spacing()),
            })
        })
        .collect()
}

/// Run the cross-oracle report on the Fock lattice of `config`.
pub fn cross_validate(config: &ExperimentConfig) -> Result<ValidationReport> {
    config.validate()?;
    let tol = &config.tolerances;
    let f = &config.fock;
    let grid = config.fock_grid()?;
    let phi0 = config.initial.build(&grid)?;
    let horizon = f
        .check_times
        .iter()
        .chain([&f.residual_time, &f.moment_time])
        .fold(0.0f64, |a, &b| a.max(b));
    let trajectory = evolve_hartree(&phi0, &config.fock.potential, horizon, f.kernel_dt, 1)?;
    let pairs = evolve_pair(&trajectory, horizon, f.kernel_dt, 1)?;
    let lattice = Lattice { grid: grid.clone(), trajectory, pairs };

    let base = quadratic_samples(config, &lattice, f.cutoff);
    let swept = quadratic_samples(config, &lattice, f.cutoff + f.cutoff_step);
    let mut items = Vec::new();

    items.push(item(
        "a",
        "pair kernel G2: kernel solver vs Fock propagation",
        format!("max|ΔG2|/(1+max|G2|) ≤ {:e}; leakage ≤ {:e}", tol.kernel_agreement, tol.leakage),
        |b| {
            let (base, swept) = (shared(&base)?, shared(&swept)?);
            let mut worst: f64 = 0.0;
            let (mut sweep, mut leak): (f64, f64) = (0.0, 0.0);
            for (s, s2) in base.iter().zip(swept) {
                let pair = lattice.pair_at(s.time).ok_or_else(|| crate::Error::Samples(format!("no kernel at t = {}", s.time)))?;
                let err = relative_entry_error(&s.kernel, &pair.g2);
                b.push(format!("error t={}", s.time), err);
                worst = worst.max(err);
                sweep = sweep.max(relative_entry_error(&s.kernel, &s2.kernel));
                leak = leak.max(s.leakage);
            }
            b.push("cutoff sweep disagreement", sweep);
            b.push("leakage", leak);
            Ok(verdict(worst <= tol.kernel_agreement, leak, sweep, tol.leakage, tol.kernel_agreement))
        },
    ));

    items.push(item(
        "b",
        "number identity ΣΣ|G2|²dx² = ⟨U2Ω, 𝒩 U2Ω⟩",
        format!("|Δ| ≤ {:e}·(1 + value); leakage ≤ {:e}", tol.number_identity, tol.leakage),
        |b| {
            let (base, swept) = (shared(&base)?, shared(&swept)?);
            let (mut ok, mut sweep, mut leak) = (true, 0.0f64, 0.0f64);
            for (s, s2) in base.iter().zip(swept) {
                let pair = lattice.pair_at(s.time).ok_or_else(|| crate::Error::Samples(format!("no kernel at t = {}", s.time)))?;
                let kernel = pair.g2_norm_sqr();
                let diff = (kernel - s.number).abs();
                b.push(format!("kernel t={}", s.time), kernel);
                b.push(format!("fock t={}", s.time), s.number);
                b.push(format!("difference t={}", s.time), diff);
                ok &= diff <= tol.number_identity * (1.0 + kernel);
                sweep = sweep.max((s.number - s2.number).abs() / (1.0 + s.number));
                leak = leak.max(s.leakage);
            }
            b.push("cutoff sweep disagreement", sweep);
            b.push("leakage", leak);
            Ok(verdict(ok, leak, sweep, tol.leakage, tol.number_identity))
        },
    ));

    items.push(item(
        "c",
        "residual R_y: Σ_y dx‖R_yΩ‖² ratio under N → 2N",
        format!("ratio in [{}, {}]; leakage ≤ {:e}", tol.residual_ratio[0], tol.residual_ratio[1], tol.leakage),
        |b| {
            let space = build_basis(f.modes, f.cutoff, DEFAULT_DIMENSION_BUDGET)?;
            let mut aggregates = Vec::new();
            let mut leak: f64 = 0.0;
            for &n in &f.residual_particles {
                let gens = GeneratorSet::new(&space, &grid, &config.fock.potential, n)?;
                let r = residual_r(&gens, &lattice.trajectory, f.residual_time, f.dt, tol.leakage)?;
                for (j, a) in r.aggregates.iter().enumerate() {
                    b.push(format!("N={n} j={j}"), *a);
                }
                aggregates.push((n, r.aggregates[0]));
                leak = leak.max(r.leakage);
            }
            b.push("leakage", leak);
            if aggregates.iter().all(|&(_, a)| a == 0.0) {
                return Ok((CheckStatus::Pass, "residual vanishes identically".into()));
            }
            let mut ok = true;
            for w in aggregates.windows(2) {
                let ratio = w[0].1 / w[1].1;
                b.push(format!("ratio N={}→{}", w[0].0, w[1].0), ratio);
                ok &= ratio >= tol.residual_ratio[0] && ratio <= tol.residual_ratio[1];
            }
            Ok(verdict(ok, leak, 0.0, tol.leakage, f64::INFINITY))
        },
    ));

    items.push(item(
        "d",
        "parity of U2(t)Ω",
        format!("odd-sector mass ≤ {:e}", tol.parity),
        |b| {
            let base = shared(&base)?;
            let worst = base.iter().map(|s| s.odd_mass).fold(0.0, f64::max);
            b.push("max odd mass", worst);
            Ok(if worst <= tol.parity { (CheckStatus::Pass, String::new()) } else { (CheckStatus::Fail, String::new()) })
        },
    ));

    items.push(item(
        "e",
        "combinatorics: A_0, unitarity, weighted sum, Krasikov, Fock coefficients",
        format!(
            "A_0 d_N = 1 to {:e}; Σ|A_m|² ≤ 1; √N Σ|A_m|²/(m+1) spread ≤ {}; Krasikov strict; Fock match ≤ {:e}",
            tol.a0_relative, tol.weighted_sum_spread, tol.fock_coefficients
        ),
        |b| combinatorics_checks(config, b),
    ));

    items.push(item(
        "f",
        "number moments of U(t)Ω uniform in N",
        format!("max/min over N ≤ {}; leakage ≤ {:e}", tol.moment_spread, tol.leakage),
        |b| {
            let space = build_basis(f.modes, f.cutoff, DEFAULT_DIMENSION_BUDGET)?;
            let mut moments = [Vec::new(), Vec::new()];
            let mut leak: f64 = 0.0;
            for &n in &f.moment_particles {
                let gens = GeneratorSet::new(&space, &grid, &config.fock.potential, n)?;
                let p = propagate(&FockVector::vacuum(&space), &gens, Dynamics::Full, &lattice.trajectory, f.moment_time, f.dt)?;
                for (j, list) in moments.iter_mut().enumerate() {
                    let value = number_functional(&p.state, j as u32 + 1);
                    b.push(format!("N={n} j={}", j + 1), value);
                    list.push(value);
                }
                leak = leak.max(p.max_leakage);
            }
            let quadratic = GeneratorSet::new(&space, &grid, &config.fock.potential, f.moment_particles[0])?;
            let p2 = propagate(&FockVector::vacuum(&space), &quadratic, Dynamics::Quadratic, &lattice.trajectory, f.moment_time, f.dt)?;
            b.push("quadratic j=1", number_functional(&p2.state, 1));
            b.push("quadratic j=2", number_functional(&p2.state, 2));
            leak = leak.max(p2.max_leakage);
            let mut ok = true;
            for (j, list) in moments.iter().enumerate() {
                let (lo, hi) = list.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
                let spread = if hi == 0.0 { 1.0 } else { hi / lo };
                b.push(format!("spread j={}", j + 1), spread);
                ok &= spread.is_finite() && spread <= tol.moment_spread;
            }
            b.push("leakage", leak);
            Ok(verdict(ok, leak, 0.0, tol.leakage, f64::INFINITY))
        },
    ));

    items.push(item(
        "g",
        "generator bound ratios uniform in N",
        "scaled ratios finite and N-independent to 1e-8".into(),
        |b| {
            let space = build_basis(f.modes, f.cutoff.min(12), DEFAULT_DIMENSION_BUDGET)?;
            let gens = GeneratorSet::new(&space, &grid, &config.fock.potential, f.moment_particles[0])?;
            let report = generator_bound_probe(&gens, &phi0, f.probe_moment, f.probe_trials, config.seed, &f.moment_particles)?;
            for r in &report.rows {
                b.push(format!("N={} H2-H0", r.particles), r.quadratic);
                b.push(format!("N={} H3", r.particles), r.cubic);
                b.push(format!("N={} H4", r.particles), r.quartic);
            }
            Ok(if report.uniform { (CheckStatus::Pass, String::new()) } else { (CheckStatus::Fail, String::new()) })
        },
    ));

    let status = if items.iter().any(|i| i.status == CheckStatus::Fail) {
        CheckStatus::Fail
    } else if items.iter().any(|i| i.status == CheckStatus::Inconclusive) {
        CheckStatus::Inconclusive
    } else {
        CheckStatus::Pass
    };
    Ok(ValidationReport { config_hash: config.hash(), items, status })
}

fn verdict(ok: bool, leakage: f64, sweep: f64, leak_tol: f64, sweep_tol: f64) -> (CheckStatus, String) {
    if leakage > leak_tol {
        (CheckStatus::Inconclusive, format!("truncation leakage {leakage:e} above {leak_tol:e}"))
    } else if sweep > sweep_tol {
        (CheckStatus::Inconclusive, format!("cutoff sweep disagreement {sweep:e} above {sweep_tol:e}"))
    } else if ok {
        (CheckStatus::Pass, String::new())
    } else {
        (CheckStatus::Fail, String::new())
    }
}

/// The `N` values of the combinatorial checks: every `N` in `4..=1024`.
pub(crate) fn combinatorics_range() -> impl Iterator<Item = u64> {
    4..=1024
}

fn combinatorics_checks(config: &ExperimentConfig, b: &mut Builder) -> Result<(CheckStatus, String)> {
    let tol = &config.tolerances;
    let (mut a0_err, mut max_sum_sq): (f64, f64) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for n in combinatorics_range() {
        let table = a_coeffs(n)?;
        a0_err = a0_err.max((table.coefficients[0].value() * d_n(n)? - 1.0).abs());
        max_sum_sq = max_sum_sq.max(table.sum_sq);
        let s = weighted_sum(n)?.scaled;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let mut krasikov_ok = true;
    let mut krasikov_worst = f64::NEG_INFINITY;
    for n in (2..=10).map(|k| 1u64 << k) {
        for m in 1..n {
            let k = krasikov_check(n, m)?;
            krasikov_ok &= k.ok;
            krasikov_worst = krasikov_worst.max(k.ln_value - k.ln_bound);
        }
    }
    let fock_err = fock_coefficient_error(6, 60)?;
    b.push("max |A_0 d_N - 1|", a0_err);
    b.push("max Σ|A_m|²", max_sum_sq);
    b.push("weighted sum spread", hi / lo);
    b.push("max ln(|L|/bound)", krasikov_worst);
    b.push("Fock |A_m| error (N=6)", fock_err);
    let ok = a0_err <= tol.a0_relative
        && max_sum_sq <= 1.0 + 1e-12
        && hi / lo <= tol.weighted_sum_spread
        && krasikov_ok
        && fock_err <= tol.fock_coefficients;
    Ok(if ok { (CheckStatus::Pass, String::new()) } else { (CheckStatus::Fail, String::new()) })
}

/// `max_m ||A_m| - |⟨m|W(√N)†|N-1⟩||` on a single mode with cutoff `cutoff`.
pub fn fock_coefficient_error(n: u64, cutoff: usize) -> Result<f64> {
    let space = build_basis(1, cutoff, DEFAULT_DIMENSION_BUDGET)?;
    let mut psi = FockVector::zero(&space);
    psi.coefficients[n as usize - 1] = Complex64::new(1.0, 0.0);
    let shifted = weyl_apply(&[Complex64::new(-(n as f64).sqrt(), 0.0)], 1.0, &psi, 1e-12)?;
    let table = a_coeffs(n)?;
    Ok(table
        .values()
        .iter()
        .enumerate()
        .map(|(m, a)| (a.abs() - shifted.state.coefficients[m].norm()).abs())
        .fold(0.0, f64::max))
}


fn shared<T>(r: &Result<T>) -> Result<&T> {
    r.as_ref().map_err(|e| crate::Error::Numerical(e.to_string()))
}
