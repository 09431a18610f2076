//! Leakage bounds and secret-key rates.
//!
//! All rates here are per pulse train (`LR`) unless named `r`, which is per
//! pulse (`LR / L`).

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, DetectorModel, ProtocolParams, RateObservables};
use crate::entropy::{binary_entropy, e_src};
use crate::error::{ensure, Error, Result};

/// Why a report carries a zero rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroRateFlag {
    /// Tagged multi-photon emissions account for every count.
    TaggedDominated,
    /// Dark counts alone exceed the modeled gain.
    DarkDominated,
    /// Error correction costs more than the privacy-amplified key.
    NegativeRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    #[serde(rename = "LR")]
    pub lr: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub gamma_opt: f64,
    pub alpha_used: f64,
    pub alpha_min: f64,
    pub iae_bound: f64,
    pub ibe_bound: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    pub phi: f64,
    pub observables: Option<RateObservables>,
    pub flag: Option<ZeroRateFlag>,
}

impl KeyRateReport {
    fn zero(flag: ZeroRateFlag, phi: f64, observables: Option<RateObservables>) -> Self {
        Self {
            lr: 0.0,
            r: 0.0,
            gamma_opt: 1.0,
            alpha_used: 1.0,
            alpha_min: 1.0,
            iae_bound: 0.0,
            ibe_bound: 0.0,
            r1: 0.0,
            r2: 0.0,
            phi,
            observables,
            flag: Some(flag),
        }
    }
}

fn check_obs(obs: &RateObservables, phi_val: f64, f: f64) -> Result<()> {
    ensure((0.0..=1.0).contains(&obs.q), || format!("Q must be in [0, 1], got {}", obs.q))?;
    ensure((0.0..=1.0).contains(&obs.e), || format!("E must be in [0, 1], got {}", obs.e))?;
    ensure((0.0..=1.0).contains(&obs.e_src), || format!("e_src must be in [0, 1], got {}", obs.e_src))?;
    ensure((0.0..=1.0).contains(&phi_val), || format!("phi must be in [0, 1], got {phi_val}"))?;
    ensure(f.is_finite() && f >= 0.0, || format!("f must be finite and >= 0, got {f}"))
}

/// Lower bound on the odd-count fraction, `max(0, 1 - 2EQ/(Q - e_src))`.
pub fn alpha_min(q: f64, e: f64, e_src: f64) -> Result<f64> {
    if q.is_nan() || q <= e_src {
        return Err(Error::TaggedDominated { gain: q, e_src });
    }
    Ok((1.0 - 2.0 * e * q / (q - e_src)).clamp(0.0, 1.0))
}

/// Upper bounds on Eve's information about Alice's (`iae`) and Bob's (`ibe`)
/// raw key, per train.
pub fn leakage_bounds(q: f64, e_src: f64, phi_val: f64, alpha: f64) -> Result<(f64, f64)> {
    ensure((0.0..=1.0).contains(&alpha), || format!("alpha must be in [0, 1], got {alpha}"))?;
    let beta = 1.0 - alpha;
    let untagged = q - e_src;
    Ok((alpha * untagged * phi_val + beta * untagged + e_src, alpha * untagged + e_src))
}

struct Terms {
    untagged: f64,
    one_minus_phi: f64,
    ec: f64,
}

impl Terms {
    fn r1(&self, a: f64) -> f64 {
        a * self.untagged * self.one_minus_phi - self.ec
    }
    fn r2(&self, a: f64) -> f64 {
        (1.0 - a) * self.untagged - self.ec
    }
    /// `(intercept, slope)` of `gamma -> gamma*max(R1,0) + (1-gamma)*max(R2,0)`.
    fn line(&self, a: f64) -> (f64, f64) {
        let p1 = self.r1(a).max(0.0);
        let p2 = self.r2(a).max(0.0);
        (p2, p1 - p2)
    }
}

/// Solves `max_gamma min_alpha [gamma max(R1,0) + (1-gamma) max(R2,0)]` over
/// `alpha in [alpha_min, 1]`, `gamma in [0, 1]` exactly.
///
/// For fixed gamma the objective is convex piecewise-affine in alpha, so its
/// minimum sits at an endpoint or a zero of R1 or R2; none of these depend on
/// gamma. The outer function is then the lower envelope of finitely many
/// lines, maximized at 0, 1 or a pairwise crossing. Ties prefer larger gamma.
pub fn keyrate_maxmin(obs: &RateObservables, pp: &ProtocolParams, f: f64, phi_val: f64) -> Result<KeyRateReport> {
    check_obs(obs, phi_val, f)?;
    let am = alpha_min(obs.q, obs.e, obs.e_src)?;
    let t = Terms {
        untagged: obs.q - obs.e_src,
        one_minus_phi: 1.0 - phi_val,
        ec: f * obs.q * binary_entropy(obs.e.min(1.0))?,
    };

    let mut alphas = vec![am, 1.0];
    if t.untagged * t.one_minus_phi > 0.0 {
        alphas.push(t.ec / (t.untagged * t.one_minus_phi));
    }
    alphas.push(1.0 - t.ec / t.untagged);
    alphas.retain(|a| (am..=1.0).contains(a));
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let lines: Vec<(f64, f64)> = alphas.iter().map(|&a| t.line(a)).collect();

    let envelope = |g: f64| -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, (c, s)) in lines.iter().enumerate() {
            let v = c + s * g;
            if v < best.0 {
                best = (v, i);
            }
        }
        best
    };
    let mut gammas = vec![1.0, 0.0];
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let ds = lines[i].1 - lines[j].1;
            if ds != 0.0 {
                let g = (lines[j].0 - lines[i].0) / ds;
                if g > 0.0 && g < 1.0 {
                    gammas.push(g);
                }
            }
        }
    }
    let tol = 1e-12 * obs.q;
    let mut best_val = f64::NEG_INFINITY;
    for &g in &gammas {
        best_val = best_val.max(envelope(g).0);
    }
    let gamma_opt =
        gammas.iter().copied().filter(|&g| envelope(g).0 >= best_val - tol).fold(f64::NEG_INFINITY, f64::max);
    let (val, idx) = envelope(gamma_opt);
    let alpha_used = alphas[idx];
    let lr = val.max(0.0);
    let (iae, ibe) = leakage_bounds(obs.q, obs.e_src, phi_val, alpha_used)?;
    Ok(KeyRateReport {
        lr,
        r: lr / pp.l as f64,
        gamma_opt,
        alpha_used,
        alpha_min: am,
        iae_bound: iae,
        ibe_bound: ibe,
        r1: t.r1(alpha_used),
        r2: t.r2(alpha_used),
        phi: phi_val,
        observables: Some(*obs),
        flag: if lr > 0.0 { None } else { Some(ZeroRateFlag::NegativeRate) },
    })
}

/// Closed form `[(1-2E)Q - e_src](1-phi) - fQH(E)`, clamped at zero.
pub fn keyrate_simplified(obs: &RateObservables, f: f64, phi_val: f64) -> Result<f64> {
    check_obs(obs, phi_val, f)?;
    let lr = ((1.0 - 2.0 * obs.e) * obs.q - obs.e_src) * (1.0 - phi_val) - f * obs.q * binary_entropy(obs.e)?;
    Ok(lr.max(0.0))
}

/// Photon-number-resolving baseline `(Q - e_src)(1-phi) - fQH(E)`, clamped at zero.
pub fn keyrate_pnr(obs: &RateObservables, f: f64, phi_val: f64) -> Result<f64> {
    check_obs(obs, phi_val, f)?;
    let lr = (obs.q - obs.e_src) * (1.0 - phi_val) - f * obs.q * binary_entropy(obs.e)?;
    Ok(lr.max(0.0))
}

fn pnr_report(obs: &RateObservables, pp: &ProtocolParams, f: f64, phi_val: f64) -> Result<KeyRateReport> {
    if obs.q.is_nan() || obs.q <= obs.e_src {
        return Err(Error::TaggedDominated { gain: obs.q, e_src: obs.e_src });
    }
    let lr = keyrate_pnr(obs, f, phi_val)?;
    let (iae, ibe) = leakage_bounds(obs.q, obs.e_src, phi_val, 1.0)?;
    let raw = (obs.q - obs.e_src) * (1.0 - phi_val) - f * obs.q * binary_entropy(obs.e)?;
    Ok(KeyRateReport {
        lr,
        r: lr / pp.l as f64,
        gamma_opt: 1.0,
        alpha_used: 1.0,
        alpha_min: 1.0,
        iae_bound: iae,
        ibe_bound: ibe,
        r1: raw,
        r2: -f * obs.q * binary_entropy(obs.e)?,
        phi: phi_val,
        observables: Some(*obs),
        flag: if lr > 0.0 { None } else { Some(ZeroRateFlag::NegativeRate) },
    })
}

/// Full pipeline from channel and protocol parameters to a key-rate report.
///
/// Regimes with no positive rate (tagged counts dominate, dark counts exceed
/// the gain, negative rate) yield a zero report carrying the reason.
pub fn rate_report(
    cp: &ChannelParams,
    pp: &ProtocolParams,
    model: DetectorModel,
    phi_val: f64,
) -> Result<KeyRateReport> {
    cp.validate()?;
    pp.validate()?;
    let eta = channel::transmittance(cp);
    let (q, t) = match model {
        DetectorModel::YesNo => (channel::gain_yesno(pp, eta, cp.p_d), channel::dark_error_yesno(pp, eta, cp.p_d)),
        DetectorModel::Pnr => (channel::gain_pnr(pp, eta, cp.p_d), channel::dark_error_pnr(pp, eta, cp.p_d)),
    };
    let es = e_src(pp.mu, pp.n_th as u32)?;
    // With no signal photons every count is a dark count.
    if pp.mu == 0.0 || q.is_nan() || q <= es {
        return Ok(KeyRateReport::zero(ZeroRateFlag::TaggedDominated, phi_val, None));
    }
    let e = match channel::error_rate(q, t, cp.e_d, cp.e_0) {
        Ok(e) => e,
        Err(Error::Degenerate(_)) => return Ok(KeyRateReport::zero(ZeroRateFlag::DarkDominated, phi_val, None)),
        Err(err) => return Err(err),
    };
    let obs = RateObservables { q, e, e_src: es };
    match model {
        DetectorModel::YesNo => keyrate_maxmin(&obs, pp, cp.f, phi_val),
        DetectorModel::Pnr => pnr_report(&obs, pp, cp.f, phi_val),
    }
}
