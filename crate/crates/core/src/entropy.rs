//! Entropy primitives and Poisson photon statistics.
//!
//! All entropies are in bits. Internally terms are accumulated in nats and
//! scaled once, with the convention `0 * log 0 = 0`.

use std::f64::consts::LN_2;

use crate::error::{ensure, Result};

#[inline]
fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Binary Shannon entropy `H(x)` in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    ensure((0.0..=1.0).contains(&x), || format!("binary_entropy needs x in [0,1], got {x}"))?;
    Ok(-(xlnx(x) + xlnx(1.0 - x)) / LN_2)
}

/// `varphi(x, y) = -x log x - y log y + (x+y) log(x+y)` in nats, no validation.
#[inline]
pub(crate) fn varphi_nats(x: f64, y: f64) -> f64 {
    xlnx(x + y) - xlnx(x) - xlnx(y)
}

/// `varphi(x, y)` in bits, the unnormalized two-outcome entropy.
pub fn varphi(x: f64, y: f64) -> Result<f64> {
    ensure(x >= 0.0 && y >= 0.0, || format!("varphi needs x, y >= 0, got ({x}, {y})"))?;
    Ok(varphi_nats(x, y) / LN_2)
}

#[inline]
fn ln_poisson(mu: f64, n: u32) -> f64 {
    let mut lf = 0.0;
    for k in 2..=n {
        lf += (k as f64).ln();
    }
    n as f64 * mu.ln() - mu - lf
}

/// Poisson probability `e^{-mu} mu^n / n!`, evaluated in log space.
pub fn poisson_pmf(n: u32, mu: f64) -> Result<f64> {
    ensure(mu >= 0.0 && mu.is_finite(), || format!("mean photon number must be finite and >= 0, got {mu}"))?;
    if mu == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    Ok(ln_poisson(mu, n).exp())
}

/// Probability that a pulse train carries more than `n_th` photons.
///
/// Summed upward from `n_th + 1` with the term recurrence, so the result keeps
/// full relative precision deep in the tail.
pub fn e_src(mu: f64, n_th: u32) -> Result<f64> {
    ensure(mu >= 0.0 && mu.is_finite(), || format!("mean photon number must be finite and >= 0, got {mu}"))?;
    if mu == 0.0 {
        return Ok(0.0);
    }
    let mut n = n_th + 1;
    let mut term = ln_poisson(mu, n).exp();
    let mut sum = 0.0;
    let mut comp = 0.0;
    loop {
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        n += 1;
        term *= mu / n as f64;
        if n as f64 > mu && term <= sum * 1e-18 {
            break;
        }
    }
    Ok(sum.min(1.0))
}
