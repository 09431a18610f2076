//! Detection statistics of a pulse train after the fiber: gains, dark-count
//! error terms and bit error rate, for threshold (yes-no) and
//! photon-number-resolving detectors.
//!
//! Sums over the delay `r` are evaluated term by term in log space.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub const MAX_TRAIN_LENGTH: usize = 1024;
pub const MAX_MEAN_PHOTON_NUMBER: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Detection efficiency of Bob's detectors.
    pub eta_d: f64,
    /// Dark-count probability per detector per gate.
    pub p_d: f64,
    /// Error-correction inefficiency.
    pub f: f64,
    /// Error rate of vacuum (dark) counts.
    pub e_0: f64,
    /// Fiber loss in dB/km.
    pub alpha_f: f64,
    /// Misalignment error probability.
    #[serde(rename = "E_d")]
    pub e_d: f64,
    /// Alice-Bob distance in km.
    #[serde(rename = "distance_km")]
    pub distance: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self { eta_d: 0.4, p_d: 1e-7, f: 1.15, e_0: 0.5, alpha_f: 0.2, e_d: 0.015, distance: 0.0 }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    ensure((0.0..=1.0).contains(&v), || format!("{name} must be in [0, 1], got {v}"))
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        unit("eta_d", self.eta_d)?;
        unit("p_d", self.p_d)?;
        unit("e_0", self.e_0)?;
        unit("E_d", self.e_d)?;
        ensure(self.f >= 1.0 && self.f.is_finite(), || format!("f must be >= 1, got {}", self.f))?;
        ensure(self.alpha_f >= 0.0 && self.alpha_f.is_finite(), || {
            format!("alpha_f must be >= 0, got {}", self.alpha_f)
        })?;
        ensure(self.distance >= 0.0 && self.distance.is_finite(), || {
            format!("distance must be >= 0, got {}", self.distance)
        })
    }

    pub fn at_distance(&self, distance: f64) -> Self {
        Self { distance, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    #[serde(rename = "L")]
    pub l: usize,
    pub mu: f64,
    pub n_th: usize,
}

impl ProtocolParams {
    pub fn new(l: usize, mu: f64, n_th: usize) -> Result<Self> {
        let p = Self { l, mu, n_th };
        p.validate()?;
        Ok(p)
    }

    /// `mu = 0` is accepted so that a dark source can be reported as a zero rate.
    pub fn validate(&self) -> Result<()> {
        ensure((2..=MAX_TRAIN_LENGTH).contains(&self.l), || {
            format!("L must be in [2, {MAX_TRAIN_LENGTH}], got {}", self.l)
        })?;
        ensure((0.0..=MAX_MEAN_PHOTON_NUMBER).contains(&self.mu), || {
            format!("mu must be in [0, {MAX_MEAN_PHOTON_NUMBER}], got {}", self.mu)
        })?;
        ensure(self.n_th >= 1 && self.n_th <= self.l / 2, || {
            format!("n_th must be in [1, L/2] = [1, {}], got {}", self.l / 2, self.n_th)
        })
    }
}

/// Counting rate, bit error rate and tagged fraction of one train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateObservables {
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub e_src: f64,
}

/// Overall transmittance `eta_d * 10^(-alpha_f * d / 10)`.
pub fn transmittance(cp: &ChannelParams) -> f64 {
    cp.eta_d * 10f64.powf(-cp.alpha_f * cp.distance / 10.0)
}

fn check(pp: &ProtocolParams, eta: f64, p_d: f64) {
    debug_assert!(pp.l >= 2 && pp.mu >= 0.0);
    debug_assert!((0.0..=1.0).contains(&eta) && (0.0..=1.0).contains(&p_d));
}

/// `sum_r (L-r)/(L-1) * exp(ln_term(r))`, skipping terms whose log is -inf.
fn delay_sum(l: usize, ln_term: impl Fn(usize) -> f64) -> f64 {
    let ln_norm = ((l - 1) as f64).ln();
    let mut s = 0.0;
    for r in 1..l {
        let lt = ln_term(r);
        if lt > f64::NEG_INFINITY {
            s += (((l - r) as f64).ln() - ln_norm + lt).exp();
        }
    }
    s
}

/// Probability that exactly the signal cell at the interfering slot clicks
/// and nothing else in the overlap window does.
pub fn gain_yesno(pp: &ProtocolParams, eta: f64, p_d: f64) -> f64 {
    check(pp, eta, p_d);
    let l = pp.l;
    let x = eta * pp.mu / l as f64;
    let ln_dark_free = (-p_d).ln_1p();
    let click = -(ln_dark_free - x).exp_m1();
    if click <= 0.0 {
        return 0.0;
    }
    let ln_click = click.ln();
    delay_sum(l, |r| {
        let k = (2 * (l - r) - 1) as f64;
        k * ln_dark_free - x * (l - r - 1) as f64 + ln_click
    })
}

/// Rate of single clicks caused by a dark count in the wrong detector.
pub fn dark_error_yesno(pp: &ProtocolParams, eta: f64, p_d: f64) -> f64 {
    check(pp, eta, p_d);
    if p_d == 0.0 {
        return 0.0;
    }
    let l = pp.l;
    let x = eta * pp.mu / l as f64;
    let ln_dark_free = (-p_d).ln_1p();
    let ln_pd = p_d.ln();
    delay_sum(l, |r| {
        let k = (2 * (l - r) - 1) as f64;
        ln_pd + k * ln_dark_free - x * (l - r) as f64
    })
}

/// Total single-click probability of the yes-no model: the signal-cell gain
/// plus the wrong-detector dark term.
pub fn total_gain_yesno(pp: &ProtocolParams, eta: f64, p_d: f64) -> f64 {
    gain_yesno(pp, eta, p_d) + dark_error_yesno(pp, eta, p_d)
}

pub fn gain_pnr(pp: &ProtocolParams, eta: f64, p_d: f64) -> f64 {
    check(pp, eta, p_d);
    let l = pp.l;
    let x = eta * pp.mu / l as f64;
    let signal = x + 2.0 * p_d;
    if signal <= 0.0 {
        return 0.0;
    }
    let ln_dark_free = (-p_d).ln_1p();
    let ln_signal = signal.ln();
    delay_sum(l, |r| {
        let k = (2 * (l - r) - 1) as f64;
        k * ln_dark_free - x * (l - r) as f64 + ln_signal
    })
}

pub fn dark_error_pnr(pp: &ProtocolParams, eta: f64, p_d: f64) -> f64 {
    check(pp, eta, p_d);
    if p_d == 0.0 {
        return 0.0;
    }
    let l = pp.l;
    let x = eta * pp.mu / l as f64;
    let ln_dark_free = (-p_d).ln_1p();
    let ln_pd = p_d.ln();
    delay_sum(l, |r| {
        let k = (2 * (l - r) - 1) as f64;
        ln_pd + k * ln_dark_free - x * (l - r) as f64
    })
}

/// Bit error rate `[e_0 * 2T + E_d * (Q - 2T)] / Q`.
pub fn error_rate(q: f64, t: f64, e_d: f64, e_0: f64) -> Result<f64> {
    if q.is_nan() || q <= 0.0 {
        return Err(Error::Degenerate(format!("error rate needs Q > 0, got {q}")));
    }
    ensure(t >= 0.0, || format!("dark error term must be >= 0, got {t}"))?;
    if 2.0 * t > q {
        return Err(Error::Degenerate(format!("dark counts 2T = {:e} exceed Q = {q:e}", 2.0 * t)));
    }
    Ok((e_0 * 2.0 * t + e_d * (q - 2.0 * t)) / q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorModel {
    YesNo,
    Pnr,
}

/// Analytic `(Q, E, e_src)` for the given detector model.
pub fn observables(cp: &ChannelParams, pp: &ProtocolParams, model: DetectorModel) -> Result<RateObservables> {
    cp.validate()?;
    pp.validate()?;
    let eta = transmittance(cp);
    let (q, t) = match model {
        DetectorModel::YesNo => (gain_yesno(pp, eta, cp.p_d), dark_error_yesno(pp, eta, cp.p_d)),
        DetectorModel::Pnr => (gain_pnr(pp, eta, cp.p_d), dark_error_pnr(pp, eta, cp.p_d)),
    };
    let e = error_rate(q, t, cp.e_d, cp.e_0)?;
    let e_src = crate::entropy::e_src(pp.mu, pp.n_th as u32)?;
    Ok(RateObservables { q, e, e_src })
}
