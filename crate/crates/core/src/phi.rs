//! The leakage bound `phi(N, L)`: a concave maximization over the probability
//! simplex, with a grid-enumeration cross-check.
//!
//! The objective
//!
//! ```text
//! f(x) = sum_{k=1}^{N} varphi((L-k) x_k, k x_{k+1}) / (L-1)
//! ```
//!
//! is concave and positively 1-homogeneous, so its Hessian at `x` is singular
//! exactly along `x`. The solver takes damped Newton steps in the tangent
//! space of the simplex and uses that null vector to reduce each step to two
//! tridiagonal solves.

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Projected-gradient norm below which a point is accepted as stationary.
pub const CERTIFICATE_TOL: f64 = 1e-10;

const MAX_NEWTON_ITERS: usize = 500;

/// Weights `x_1..x_{N+1}` on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexPoint {
    weights: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        ensure(!weights.is_empty(), || "simplex point needs at least one weight".into())?;
        ensure(weights.iter().all(|w| w.is_finite() && *w >= 0.0), || {
            "simplex weights must be finite and nonnegative".into()
        })?;
        let s: f64 = weights.iter().sum();
        ensure((s - 1.0).abs() <= 1e-12, || format!("simplex weights sum to {s}, not 1"))?;
        Ok(Self { weights })
    }

    pub fn uniform(dim: usize) -> Self {
        Self { weights: vec![1.0 / dim as f64; dim] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiResult {
    /// Maximum objective value in bits.
    pub value: f64,
    pub argmax: SimplexPoint,
    /// Newton iterations summed over all starts.
    pub iterations: usize,
    /// Norm of the simplex-projected gradient step at `argmax`.
    pub certificate: f64,
}

fn check_domain(n: usize, l: usize) -> Result<()> {
    if l < 2 || n < 1 || n > l / 2 {
        return Err(Error::Domain(format!("phi needs 1 <= N <= L/2 and L >= 2, got N={n}, L={l}")));
    }
    Ok(())
}

#[inline]
fn kernel_nats(u: f64, v: f64) -> f64 {
    let a = if u > 0.0 && v > 0.0 { u * (v / u).ln_1p() } else { 0.0 };
    let b = if u > 0.0 && v > 0.0 { v * (u / v).ln_1p() } else { 0.0 };
    a + b
}

fn objective_nats(l: usize, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 1..x.len() {
        let u = (l - k) as f64 * x[k - 1];
        let v = k as f64 * x[k];
        s += kernel_nats(u, v);
    }
    s / (l - 1) as f64
}

/// The objective in bits at an arbitrary point of the simplex (no maximization).
pub fn phi_objective(n: usize, l: usize, x: &SimplexPoint) -> Result<f64> {
    check_domain(n, l)?;
    ensure(x.dim() == n + 1, || format!("expected {} weights, got {}", n + 1, x.dim()))?;
    Ok(objective_nats(l, x.weights()) / LN_2)
}

/// Gradient and the negated Hessian (diagonal, superdiagonal) in nats.
fn derivatives(l: usize, x: &[f64], g: &mut [f64], diag: &mut [f64], off: &mut [f64]) {
    let scale = 1.0 / (l - 1) as f64;
    g.iter_mut().for_each(|v| *v = 0.0);
    diag.iter_mut().for_each(|v| *v = 0.0);
    for k in 1..x.len() {
        let (p, q) = (k - 1, k);
        let a = (l - k) as f64;
        let b = k as f64;
        let u = a * x[p];
        let v = b * x[q];
        let w = u + v;
        g[p] += scale * a * (v / u).ln_1p();
        g[q] += scale * b * (u / v).ln_1p();
        diag[p] += scale * a * (a / u) * (v / w);
        diag[q] += scale * b * (b / v) * (u / w);
        off[p] = -scale * a * (b / w);
    }
}

/// Solves the symmetric tridiagonal system in place (Thomas algorithm).
fn thomas(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    c[0] = if n > 1 { off[0] / d } else { 0.0 };
    rhs[0] /= d;
    for i in 1..n {
        d = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / d;
        }
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut s = y.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, v) in s.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (i + 1) as f64;
        if *v - t > 0.0 {
            tau = t;
        }
    }
    y.iter().map(|v| (v - tau).max(0.0)).collect()
}

fn certificate(l: usize, x: &[f64]) -> f64 {
    let m = x.len();
    let (mut g, mut diag, mut off) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    derivatives(l, x, &mut g, &mut diag, &mut off);
    let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + gi / LN_2).collect();
    let p = project_simplex(&y);
    p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Damped Newton ascent from a strictly interior start.
fn newton(l: usize, mut x: Vec<f64>) -> (Vec<f64>, usize) {
    let m = x.len();
    if m == 1 {
        return (vec![1.0], 0);
    }
    let (mut g, mut diag, mut off) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut d = vec![0.0; m];
    let mut trial = vec![0.0; m];
    let mut fx = objective_nats(l, &x);
    let mut iters = 0;
    while iters < MAX_NEWTON_ITERS {
        iters += 1;
        derivatives(l, &x, &mut g, &mut diag, &mut off);
        let nu: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
        for i in 0..m {
            d[i] = g[i] - nu;
        }
        // Drop the pivot row/column with the largest weight; the two remaining
        // blocks are positive definite.
        let piv = x.iter().enumerate().fold(0, |best, (i, v)| if *v > x[best] { i } else { best });
        d[piv] = 0.0;
        thomas(&diag[..piv], &off[..piv.saturating_sub(1)], &mut d[..piv]);
        if piv + 1 < m {
            thomas(&diag[piv + 1..], &off[piv + 1..m - 1], &mut d[piv + 1..]);
        }
        let shift: f64 = d.iter().sum();
        for i in 0..m {
            d[i] -= shift * x[i];
        }
        let dec: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let rel = x.iter().zip(&d).fold(0.0f64, |acc, (xi, di)| acc.max(di.abs() / xi));
        if !dec.is_finite() || dec < -1e-20 || rel < 1e-13 {
            break;
        }
        let mut t_max: f64 = 1.0;
        for i in 0..m {
            if d[i] < 0.0 {
                t_max = t_max.min(0.99 * x[i] / -d[i]);
            }
        }
        let mut t = t_max;
        let mut accepted = false;
        if dec > 1e-20 {
            for _ in 0..60 {
                for i in 0..m {
                    trial[i] = x[i] + t * d[i];
                }
                let ft = objective_nats(l, &trial);
                if ft >= fx + 1e-4 * t * dec {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            // Objective changes are below rounding; the quadratic model is exact enough.
            if dec > 1e-14 {
                break;
            }
            for i in 0..m {
                trial[i] = x[i] + t_max * d[i];
            }
        }
        let s: f64 = trial.iter().sum();
        for i in 0..m {
            x[i] = trial[i] / s;
        }
        fx = objective_nats(l, &x);
    }
    (x, iters)
}

fn finish(l: usize, x: Vec<f64>, iterations: usize) -> PhiResult {
    let value = objective_nats(l, &x) / LN_2;
    let certificate = certificate(l, &x);
    PhiResult { value, argmax: SimplexPoint { weights: x }, iterations, certificate }
}

/// Single solve from the uniform point.
pub fn phi_single_start(n: usize, l: usize) -> Result<PhiResult> {
    check_domain(n, l)?;
    let (x, it) = newton(l, vec![1.0 / (n + 1) as f64; n + 1]);
    Ok(finish(l, x, it))
}

/// `phi(N, L)` with multi-start: the uniform point plus one start biased
/// towards each vertex. The reported optimum is the best value; ties within
/// 1e-12 go to the earliest start.
pub fn phi(n: usize, l: usize) -> Result<PhiResult> {
    check_domain(n, l)?;
    let dim = n + 1;
    let starts: Vec<Vec<f64>> = std::iter::once(vec![1.0 / dim as f64; dim])
        .chain((0..dim).map(|j| (0..dim).map(|i| 0.5 / dim as f64 + if i == j { 0.5 } else { 0.0 }).collect()))
        .collect();
    let runs: Vec<PhiResult> = starts
        .into_par_iter()
        .map(|x0| {
            let (x, it) = newton(l, x0);
            finish(l, x, it)
        })
        .collect();
    let total: usize = runs.iter().map(|r| r.iterations).sum();
    let mut best = runs[0].clone();
    for r in &runs[1..] {
        if r.value > best.value + 1e-12 {
            best = r.clone();
        }
    }
    if best.certificate > CERTIFICATE_TOL {
        return Err(Error::NotConverged(format!(
            "phi({n},{l}) stationarity certificate {:e} above {CERTIFICATE_TOL:e}",
            best.certificate
        )));
    }
    best.iterations = total;
    Ok(best)
}

/// Default cap on enumerated grid points for [`phi_bruteforce`].
pub const BRUTEFORCE_POINT_BUDGET: u128 = 200_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

fn xlog2x(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

fn term_bits(l: usize, k: usize, xk: f64, xk1: f64) -> f64 {
    let x = (l - k) as f64 * xk;
    let y = k as f64 * xk1;
    -xlog2x(x) - xlog2x(y) + xlog2x(x + y)
}

/// Maximum of the objective over the grid `{i / M}` of the simplex, with
/// `M = 1 / grid_resolution`. A lower bound on `phi(N, L)`.
pub fn phi_bruteforce(n: usize, l: usize, grid_resolution: f64) -> Result<f64> {
    phi_bruteforce_with_budget(n, l, grid_resolution, BRUTEFORCE_POINT_BUDGET)
}

pub fn phi_bruteforce_with_budget(n: usize, l: usize, grid_resolution: f64, budget: u128) -> Result<f64> {
    check_domain(n, l)?;
    ensure(grid_resolution > 0.0 && grid_resolution <= 1.0, || {
        format!("grid resolution must be in (0, 1], got {grid_resolution}")
    })?;
    let m_f = (1.0 / grid_resolution).round();
    ensure((m_f * grid_resolution - 1.0).abs() < 1e-9, || {
        format!("grid resolution {grid_resolution} does not divide 1")
    })?;
    let m = m_f as usize;
    let points = binomial((m + n) as u128, n as u128);
    if points > budget {
        return Err(Error::Limit(format!("grid has {points} points, budget is {budget}")));
    }
    let mf = m as f64;
    let side = m + 1;
    let tables: Option<Vec<Vec<f64>>> = if n * side * side <= 20_000_000 {
        Some(
            (1..=n)
                .map(|k| {
                    let mut t = vec![0.0; side * side];
                    for i in 0..side {
                        for j in 0..side - i {
                            t[i * side + j] = term_bits(l, k, i as f64 / mf, j as f64 / mf);
                        }
                    }
                    t
                })
                .collect(),
        )
    } else {
        None
    };
    let term = |k: usize, i: usize, j: usize| -> f64 {
        match &tables {
            Some(t) => t[k - 1][i * side + j],
            None => term_bits(l, k, i as f64 / mf, j as f64 / mf),
        }
    };

    // Depth-first over compositions; `idx[k]` is the grid count of x_{k+1}.
    fn walk(
        depth: usize,
        n: usize,
        remaining: usize,
        prev: usize,
        acc: f64,
        term: &dyn Fn(usize, usize, usize) -> f64,
        best: &mut f64,
    ) {
        if depth == n {
            let v = acc + term(n, prev, remaining);
            if v > *best {
                *best = v;
            }
            return;
        }
        for i in 0..=remaining {
            walk(depth + 1, n, remaining - i, i, acc + term(depth, prev, i), term, best);
        }
    }

    let mut best = f64::NEG_INFINITY;
    for i0 in 0..=m {
        walk(1, n, m - i0, i0, 0.0, &term, &mut best);
    }
    Ok(best / (l - 1) as f64)
}

/// Memo of `phi(N, L)` values shared across a parameter scan.
#[derive(Debug, Default)]
pub struct PhiCache {
    map: RwLock<HashMap<(usize, usize), f64>>,
}

impl PhiCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cached value; a miss solves from the uniform start and falls back to
    /// the multi-start solver when the stationarity certificate fails.
    pub fn get(&self, n: usize, l: usize) -> Result<f64> {
        if let Some(v) = self.map.read().expect("phi cache poisoned").get(&(n, l)) {
            return Ok(*v);
        }
        let r = phi_single_start(n, l)?;
        let v = if r.certificate <= CERTIFICATE_TOL { r.value } else { phi(n, l)?.value };
        self.map.write().expect("phi cache poisoned").insert((n, l), v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("phi cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
