//! Search over `(L, n_th, mu)` for the largest per-pulse key rate, and
//! distance sweeps comparing both detector models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, DetectorModel, ProtocolParams};
use crate::error::{ensure, Result};
use crate::keyrate::{rate_report, KeyRateReport};
use crate::phi::PhiCache;

const PRESCAN_POINTS: usize = 32;
const GOLDEN_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum NthRule {
    /// Every threshold in `[1, L/2]`.
    Full,
    /// A single threshold, skipped for trains too short to admit it.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    #[serde(rename = "L_min")]
    pub l_min: usize,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub n_th: NthRule,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { l_min: 16, l_max: 160, mu_min: 0.01, mu_max: 20.0, n_th: NthRule::Full }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        ensure(self.l_min >= 2 && self.l_min <= self.l_max, || {
            format!("L range [{}, {}] is empty or below 2", self.l_min, self.l_max)
        })?;
        ensure(self.l_max <= crate::channel::MAX_TRAIN_LENGTH, || {
            format!("L_max {} above {}", self.l_max, crate::channel::MAX_TRAIN_LENGTH)
        })?;
        ensure(self.mu_min > 0.0 && self.mu_min < self.mu_max, || {
            format!("mu range ({}, {}] is empty", self.mu_min, self.mu_max)
        })?;
        ensure(self.mu_max <= crate::channel::MAX_MEAN_PHOTON_NUMBER, || {
            format!("mu_max {} above {}", self.mu_max, crate::channel::MAX_MEAN_PHOTON_NUMBER)
        })?;
        if let NthRule::Fixed(n) = self.n_th {
            ensure(n >= 1 && n <= self.l_max / 2, || format!("fixed n_th {n} is outside [1, L_max/2]"))?;
        }
        Ok(())
    }

    fn thresholds(&self, l: usize) -> std::ops::RangeInclusive<usize> {
        match self.n_th {
            NthRule::Full => 1..=l / 2,
            NthRule::Fixed(n) if n <= l / 2 => n..=n,
            #[allow(clippy::reversed_empty_ranges)]
            NthRule::Fixed(_) => 1..=0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub params: ProtocolParams,
    pub report: KeyRateReport,
}

fn rate_at(cp: &ChannelParams, l: usize, n_th: usize, mu: f64, phi: f64) -> f64 {
    let pp = ProtocolParams { l, mu, n_th };
    rate_report(cp, &pp, DetectorModel::YesNo, phi).map(|r| r.r).unwrap_or(0.0)
}

/// Golden-section maximization of `f` on `[a, b]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > rel_tol * (a.abs() + b.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Best `mu` for a fixed cell: geometric prescan, then golden section inside
/// the bracket around the best prescan point.
fn best_mu(cp: &ChannelParams, space: &SearchSpace, l: usize, n_th: usize, phi: f64) -> (f64, f64) {
    let ratio = (space.mu_max / space.mu_min).powf(1.0 / (PRESCAN_POINTS - 1) as f64);
    let grid: Vec<f64> = (0..PRESCAN_POINTS)
        .map(|i| if i + 1 == PRESCAN_POINTS { space.mu_max } else { space.mu_min * ratio.powi(i as i32) })
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&mu| rate_at(cp, l, n_th, mu, phi)).collect();
    let mut best = 0;
    for i in 1..vals.len() {
        if vals[i] > vals[best] {
            best = i;
        }
    }
    if vals[best] <= 0.0 {
        return (grid[0], 0.0);
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mu, r) = golden_section_max(|mu| rate_at(cp, l, n_th, mu, phi), lo, hi, GOLDEN_REL_TOL);
    if r >= vals[best] {
        (mu, r)
    } else {
        (grid[best], vals[best])
    }
}

/// Maximizes the per-pulse yes-no key rate over the search space.
///
/// Ties go to the smallest `L`, then the smallest `n_th`; the result does not
/// depend on the number of worker threads.
pub fn optimize_protocol(cp: &ChannelParams, space: &SearchSpace, cache: &PhiCache) -> Result<Optimum> {
    cp.validate()?;
    space.validate()?;
    let per_l: Vec<Option<(usize, usize, f64, f64)>> = (space.l_min..=space.l_max)
        .into_par_iter()
        .map(|l| -> Result<Option<(usize, usize, f64, f64)>> {
            let mut best: Option<(usize, usize, f64, f64)> = None;
            for n_th in space.thresholds(l) {
                let phi = cache.get(n_th, l)?;
                let (mu, r) = best_mu(cp, space, l, n_th, phi);
                if r > 0.0 && best.is_none_or(|b| r > b.3) {
                    best = Some((l, n_th, mu, r));
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for cand in per_l.into_iter().flatten() {
        if best.is_none_or(|b| cand.3 > b.3) {
            best = Some(cand);
        }
    }
    let (l, n_th, mu) = match best {
        Some((l, n, mu, _)) => (l, n, mu),
        None => {
            let l = space.l_min;
            let n = match space.n_th {
                NthRule::Fixed(n) if n <= l / 2 => n,
                _ => 1,
            };
            (l, n, space.mu_max)
        }
    };
    let params = ProtocolParams { l, mu, n_th };
    let report = rate_report(cp, &params, DetectorModel::YesNo, cache.get(n_th, l)?)?;
    Ok(Optimum { params, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub distance: f64,
    pub params: ProtocolParams,
    pub report_yesno: KeyRateReport,
    pub report_pnr: KeyRateReport,
    /// `1 - R_yesno / R_pnr`; absent unless both rates are positive.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMode {
    Optimize(SearchSpace),
    Fixed(ProtocolParams),
}

/// One sweep point: parameters chosen for the yes-no model (optimized or
/// fixed) and applied unchanged to the PNR baseline.
pub fn sweep_point(cp_base: &ChannelParams, distance: f64, mode: &SweepMode, cache: &PhiCache) -> Result<SweepPoint> {
    let cp = cp_base.at_distance(distance);
    let (params, report_yesno) = match mode {
        SweepMode::Optimize(space) => {
            let o = optimize_protocol(&cp, space, cache)?;
            (o.params, o.report)
        }
        SweepMode::Fixed(pp) => {
            let phi = cache.get(pp.n_th, pp.l)?;
            (*pp, rate_report(&cp, pp, DetectorModel::YesNo, phi)?)
        }
    };
    let report_pnr = rate_report(&cp, &params, DetectorModel::Pnr, report_yesno.phi)?;
    let gap = (report_yesno.r > 0.0 && report_pnr.r > 0.0).then(|| 1.0 - report_yesno.r / report_pnr.r);
    Ok(SweepPoint { distance, params, report_yesno, report_pnr, gap })
}

/// Sweep over ascending distances; output order follows `distances`.
pub fn distance_sweep(
    cp_base: &ChannelParams,
    distances: &[f64],
    mode: &SweepMode,
    cache: &PhiCache,
) -> Result<Vec<SweepPoint>> {
    ensure(distances.windows(2).all(|w| w[0] <= w[1]), || "distances must be sorted ascending".into())?;
    distances.par_iter().map(|&d| sweep_point(cp_base, d, mode, cache)).collect()
}

/// Distances `dmin, dmin + step, ...` up to `dmax` inclusive (within 1e-9 of a step).
pub fn distance_grid(dmin: f64, dmax: f64, step: f64) -> Result<Vec<f64>> {
    ensure(step > 0.0 && step.is_finite(), || format!("step must be positive, got {step}"))?;
    ensure(dmin >= 0.0 && dmin.is_finite() && dmax.is_finite(), || "distances must be finite and >= 0".into())?;
    if dmax < dmin {
        return Ok(Vec::new());
    }
    let n = ((dmax - dmin) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| dmin + i as f64 * step).collect())
}
