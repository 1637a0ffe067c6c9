//! `d_N`, the coherent-state overlap coefficients `A_m`, associated Laguerre polynomials and
//! the Krasikov envelope, all evaluated in the log domain.
//!
//! `A_m = e^{-N/2} N^{(N-m-1)/2} √(m!/(N-1)!) L_m^{(N-m-1)}(N)` is the `m`-particle component
//! of the Weyl-displaced factorized state; `d_N = √(N!) / (N^{N/2} e^{-N/2})`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A real number stored as `sign · e^{ln_abs}`; zero has `sign = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogValue {
    pub ln_abs: f64,
    pub sign: f64,
}

impl LogValue {
    pub fn value(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }
}

/// `ln n!`: exact summation for small `n`, Stirling series beyond.
fn ln_factorial(n: u64) -> f64 {
    if n < 32 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `ln d_N = ½ ln N! - (N/2) ln N + N/2`.
///
/// Written as `¼ ln(2πN) + ½ r(N)` with the Stirling remainder `r`, which avoids cancelling
/// two terms of size `N ln N`.
pub fn ln_d_n(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::config("d_N needs N ≥ 1"));
    }
    let nf = n as f64;
    if n <= 20 {
        return Ok(0.5 * ln_factorial(n) - 0.5 * nf * nf.ln() + 0.5 * nf);
    }
    let inv = 1.0 / nf;
    let inv2 = inv * inv;
    // ln N! - (N ln N - N + ½ ln 2πN)
    let remainder = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    Ok(0.25 * (2.0 * std::f64::consts::PI * nf).ln() + 0.5 * remainder)
}

pub fn d_n(n: u64) -> Result<f64> {
    ln_d_n(n).map(f64::exp)
}

/// `L_n^{(α)}(x)` by the three-term recurrence
/// `(k+1) L_{k+1} = (2k+1+α-x) L_k - (k+α) L_{k-1}`, renormalised to stay in range.
pub fn laguerre_log(n: u64, alpha: f64, x: f64) -> LogValue {
    const BIG: f64 = 1e150;
    let mut prev = 1.0;
    let mut cur = 1.0 + alpha - x;
    let mut ln_scale = 0.0;
    if n == 0 {
        return LogValue { ln_abs: 0.0, sign: 1.0 };
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        let size = cur.abs().max(prev.abs());
        if size > BIG || (size < 1.0 / BIG && size > 0.0) {
            prev /= size;
            cur /= size;
            ln_scale += size.ln();
        }
    }
    if cur == 0.0 {
        LogValue { ln_abs: f64::NEG_INFINITY, sign: 0.0 }
    } else {
        LogValue { ln_abs: cur.abs().ln() + ln_scale, sign: cur.signum() }
    }
}

pub fn laguerre(n: u64, alpha: f64, x: f64) -> f64 {
    laguerre_log(n, alpha, x).value()
}

/// `A_m` for `0 ≤ m < N`, via
/// `ln|A_m| = -ln d_N - (m/2) ln N + ½ ln m! + ln|L_m^{(N-m-1)}(N)|`.
pub fn a_coefficient(n: u64, m: u64) -> Result<LogValue> {
    if n == 0 || m >= n {
        return Err(Error::config(format!("A_m needs 0 ≤ m < N, got m = {m}, N = {n}")));
    }
    let nf = n as f64;
    let lag = laguerre_log(m, (n - m - 1) as f64, nf);
    Ok(LogValue {
        ln_abs: -ln_d_n(n)? - 0.5 * m as f64 * nf.ln() + 0.5 * ln_factorial(m) + lag.ln_abs,
        sign: lag.sign,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub particles: u64,
    pub coefficients: Vec<LogValue>,
    /// `Σ_{m<N} |A_m|²`.
    pub sum_sq: f64,
    /// `Σ_{m<N} |A_m|² / (m+1)`.
    pub weighted: f64,
}

impl CoefficientTable {
    pub fn values(&self) -> Vec<f64> {
        self.coefficients.iter().map(LogValue::value).collect()
    }
}

pub fn a_coeffs(n: u64) -> Result<CoefficientTable> {
    if n == 0 {
        return Err(Error::config("coefficient table needs N ≥ 1"));
    }
    let coefficients = (0..n).map(|m| a_coefficient(n, m)).collect::<Result<Vec<_>>>()?;
    let sq: Vec<f64> = coefficients.iter().map(|c| (2.0 * c.ln_abs).exp()).collect();
    let sum_sq = sq.iter().sum();
    let weighted = sq.iter().enumerate().map(|(m, s)| s / (m + 1) as f64).sum();
    Ok(CoefficientTable { particles: n, coefficients, sum_sq, weighted })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KrasikovCheck {
    pub ln_bound: f64,
    pub ln_value: f64,
    pub bound: f64,
    pub value: f64,
    pub ok: bool,
}

/// Krasikov's envelope for `L_n^{(α)}(x)` inside `q² < x < s²`, in logs:
/// `½ ln(Γ(n+α+1)/Γ(n+1)) + ½ ln(x(s²-q²)/r(x)) + x/2 - (α+1)/2 · ln x`
/// with `s, q = √(n+α+1) ± √n` and `r(x) = (x - q²)(s² - x)`.
pub fn krasikov_ln_bound(n: u64, alpha: f64, x: f64) -> Result<f64> {
    let root_top = (n as f64 + alpha + 1.0).sqrt();
    let root_n = (n as f64).sqrt();
    let (s2, q2) = ((root_top + root_n).powi(2), (root_top - root_n).powi(2));
    if !(x > q2 && x < s2) {
        return Err(Error::config(format!("x = {x} lies outside the window ({q2}, {s2})")));
    }
    let r = (x - q2) * (s2 - x);
    Ok(0.5 * (ln_gamma(n as f64 + alpha + 1.0) - ln_gamma(n as f64 + 1.0))
        + 0.5 * (x * (s2 - q2) / r).ln()
        + 0.5 * x
        - 0.5 * (alpha + 1.0) * x.ln())
}

/// The bound at `n = m`, `α = N - m - 1`, `x = N` against `|L_m^{(N-m-1)}(N)|`.
pub fn krasikov_check(n: u64, m: u64) -> Result<KrasikovCheck> {
    if m == 0 || m >= n {
        return Err(Error::config(format!("Krasikov check needs 1 ≤ m ≤ N-1, got m = {m}, N = {n}")));
    }
    let alpha = (n - m - 1) as f64;
    let ln_bound = krasikov_ln_bound(m, alpha, n as f64)?;
    let ln_value = laguerre_log(m, alpha, n as f64).ln_abs;
    Ok(KrasikovCheck {
        ln_bound,
        ln_value,
        bound: ln_bound.exp(),
        value: ln_value.exp(),
        ok: ln_value < ln_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedSum {
    /// `Σ_{m<N} |A_m|² / (m+1)`.
    pub value: f64,
    /// Unitarity bound on the `m ≥ N` tail, `(1/N)(1 - Σ_{m<N}|A_m|²)`.
    pub tail_bound: f64,
    /// `√N · value`.
    pub scaled: f64,
}

pub fn weighted_sum(n: u64) -> Result<WeightedSum> {
    let table = a_coeffs(n)?;
    Ok(WeightedSum {
        value: table.weighted,
        tail_bound: (1.0 - table.sum_sq).max(0.0) / n as f64,
        scaled: (n as f64).sqrt() * table.weighted,
    })
}
