use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub const MAX_PHOTONS: usize = 6;
pub const MAX_BINS: usize = 8;

const NORM_TOL: f64 = 1e-10;

/// Sparse photon-number amplitudes over a fixed set of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    modes: usize,
    amps: BTreeMap<Vec<u8>, Complex64>,
}

impl FockState {
    pub fn new(modes: usize, terms: impl IntoIterator<Item = (Vec<u8>, Complex64)>) -> Result<Self> {
        let mut amps = BTreeMap::new();
        for (occ, c) in terms {
            ensure(occ.len() == modes, || format!("occupation vector has {} modes, expected {modes}", occ.len()))?;
            *amps.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        let s = Self { modes, amps };
        ensure((s.norm_sqr() - 1.0).abs() <= NORM_TOL, || format!("state norm {} is not 1", s.norm_sqr()))?;
        Ok(s)
    }

    /// `n` photons in a single input bin (0-based).
    pub fn single_bin(bins: usize, bin: usize, n: u8) -> Result<Self> {
        ensure(bin < bins, || format!("bin {bin} out of range for {bins} bins"))?;
        let mut occ = vec![0; bins];
        occ[bin] = n;
        Self::new(bins, [(occ, Complex64::new(1.0, 0.0))])
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, &Complex64)> {
        self.amps.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|c| c.norm_sqr()).sum()
    }

    /// Largest photon number of any term.
    pub fn max_photons(&self) -> usize {
        self.amps.keys().map(|o| o.iter().map(|&n| n as usize).sum()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
}

/// Output mode of detector `det` at time slot `slot` (1-based).
pub fn output_mode(slot: usize, det: Detector) -> usize {
    2 * (slot - 1) + if det == Detector::D1 { 0 } else { 1 }
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

/// Pushes every input photon through the delay interferometer:
/// `a_t^dag -> (d_{t+r}^dag + e_{t+r}^dag + d_t^dag - e_t^dag) / 2`, where
/// `d` feeds detector D1 and `e` feeds D2. Output modes cover slots `1..=L+r`.
pub fn evolve(state: &FockState, r: usize) -> Result<FockState> {
    let l = state.modes;
    if l > MAX_BINS || state.max_photons() > MAX_PHOTONS {
        return Err(Error::Limit(format!(
            "oracle supports at most {MAX_BINS} bins and {MAX_PHOTONS} photons, got {l} bins and {} photons",
            state.max_photons()
        )));
    }
    ensure(r >= 1 && r < l, || format!("delay must be in [1, {}], got {r}", l - 1))?;
    let out_modes = 2 * (l + r);
    let half = 0.5;
    let mut out: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
    for (occ, amp) in &state.amps {
        let norm: f64 = occ.iter().map(|&n| factorial(n)).product::<f64>().sqrt();
        let mut poly: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
        poly.insert(vec![0; out_modes], amp / norm);
        for (t, &n_t) in occ.iter().enumerate() {
            let s = t + 1;
            let targets = [
                (output_mode(s + r, Detector::D1), half),
                (output_mode(s + r, Detector::D2), half),
                (output_mode(s, Detector::D1), half),
                (output_mode(s, Detector::D2), -half),
            ];
            for _ in 0..n_t {
                let mut next: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
                for (o, c) in &poly {
                    for &(m, w) in &targets {
                        let mut o2 = o.clone();
                        let k = o2[m];
                        o2[m] = k + 1;
                        *next.entry(o2).or_insert(Complex64::new(0.0, 0.0)) += c * (w * f64::from(k + 1).sqrt());
                    }
                }
                poly = next;
            }
        }
        for (o, c) in poly {
            *out.entry(o).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
    }
    out.retain(|_, c| c.norm_sqr() > 0.0);
    Ok(FockState { modes: out_modes, amps: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCount {
    pub slot: usize,
    pub detector: Detector,
    pub photons: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn of(n: usize) -> Self {
        if n % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }
}

/// Photon numbers seen by the detector cells of the overlap window.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectionPattern {
    /// Occupied cells, ordered by slot then detector.
    pub cells: Vec<CellCount>,
}

impl DetectionPattern {
    pub fn total_photons(&self) -> usize {
        self.cells.iter().map(|c| c.photons as usize).sum()
    }

    pub fn parity(&self) -> Parity {
        Parity::of(self.total_photons())
    }

    /// Exactly one clicked cell.
    pub fn valid(&self) -> bool {
        self.cells.len() == 1
    }
}

/// Probability of each photon-number pattern over the window slots
/// `r+1..=L`; photons outside the window are traced out.
pub fn pattern_distribution(state_out: &FockState, l: usize, r: usize) -> Result<Vec<(DetectionPattern, f64)>> {
    ensure(state_out.modes == 2 * (l + r), || {
        format!("state has {} modes, expected {} for L={l}, r={r}", state_out.modes, 2 * (l + r))
    })?;
    let mut dist: BTreeMap<DetectionPattern, f64> = BTreeMap::new();
    for (occ, c) in &state_out.amps {
        let mut cells = Vec::new();
        for slot in r + 1..=l {
            for det in [Detector::D1, Detector::D2] {
                let n = occ[output_mode(slot, det)];
                if n > 0 {
                    cells.push(CellCount { slot, detector: det, photons: n });
                }
            }
        }
        *dist.entry(DetectionPattern { cells }).or_insert(0.0) += c.norm_sqr();
    }
    Ok(dist.into_iter().collect())
}

/// One orthogonal ancilla branch of an attack: a single pulse of `n` photons
/// in superposition over bins, `sum_t c_t |n_t>`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackBranch {
    pub weight: f64,
    pub n: u8,
    pub amplitudes: Vec<Complex64>,
}

impl AttackBranch {
    /// Two-bin branch carrying Alice's phases: each photon in bin `t` picks
    /// up `(-1)^{k_t}`. Bins are 1-based.
    #[allow(clippy::too_many_arguments)]
    pub fn two_bin(
        l: usize,
        n: u8,
        a: usize,
        b: usize,
        c_a: Complex64,
        c_b: Complex64,
        k_a: u8,
        k_b: u8,
        weight: f64,
    ) -> Self {
        let sign = |k: u8| if (k as u32 * n as u32) % 2 == 1 { -1.0 } else { 1.0 };
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); l];
        amplitudes[a - 1] += c_a * sign(k_a);
        amplitudes[b - 1] += c_b * sign(k_b);
        Self { weight, n, amplitudes }
    }

    pub fn state(&self) -> Result<FockState> {
        let l = self.amplitudes.len();
        FockState::new(
            l,
            self.amplitudes.iter().enumerate().filter(|(_, c)| c.norm_sqr() > 0.0).map(|(t, c)| {
                let mut occ = vec![0u8; l];
                occ[t] = self.n;
                (occ, *c)
            }),
        )
    }
}

/// An announced pair `(a, a+r)` with Alice's phases on it, and the incoming
/// attack state.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBinInput {
    pub l: usize,
    pub r: usize,
    /// Earlier bin of the pair, 1-based; the interfering slot is `a + r`.
    pub a: usize,
    pub k_a: u8,
    pub k_b: u8,
    pub branches: Vec<AttackBranch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityStats {
    /// Joint probabilities of a valid count at the interfering slot.
    pub p_d1_even: f64,
    pub p_d2_even: f64,
    pub p_d1_odd: f64,
    pub p_d2_odd: f64,
    pub d1_given_even: Option<f64>,
    pub d2_given_even: Option<f64>,
    pub err_even: Option<f64>,
    pub err_odd: Option<f64>,
}

/// Exact statistics of valid counts at slot `a + r`, split by the parity of
/// the detected photon number. Bob reads D1 as 0 and D2 as 1; Alice's bit is
/// `k_a xor k_b`.
pub fn parity_conditioned_stats(input: &TwoBinInput) -> Result<ParityStats> {
    let TwoBinInput { l, r, a, k_a, k_b, ref branches } = *input;
    ensure((2..=MAX_BINS).contains(&l), || format!("L must be in [2, {MAX_BINS}], got {l}"))?;
    ensure(r >= 1 && r < l && a >= 1 && a + r <= l, || format!("pair ({a}, {}) invalid for L={l}", a + r))?;
    ensure(!branches.is_empty(), || "attack needs at least one branch".into())?;
    let wsum: f64 = branches.iter().map(|b| b.weight).sum();
    ensure(branches.iter().all(|b| b.weight >= 0.0) && (wsum - 1.0).abs() <= NORM_TOL, || {
        format!("branch weights must be nonnegative and sum to 1, got {wsum}")
    })?;
    let slot = a + r;
    let mut p = [[0.0f64; 2]; 2];
    for br in branches {
        ensure(br.amplitudes.len() == l, || "branch amplitudes must cover all bins".into())?;
        ensure(br.n >= 1, || "branch needs at least one photon".into())?;
        let out = evolve(&br.state()?, r)?;
        for (pat, prob) in pattern_distribution(&out, l, r)? {
            if pat.valid() && pat.cells[0].slot == slot {
                let par = pat.parity() as usize;
                let det = pat.cells[0].detector as usize;
                p[par][det] += br.weight * prob;
            }
        }
    }
    let odd = Parity::Odd as usize;
    let even = Parity::Even as usize;
    let s_a = ((k_a ^ k_b) & 1) as usize;
    let cond = |x: f64, tot: f64| (tot > 0.0).then(|| x / tot);
    let pe = p[even][0] + p[even][1];
    let po = p[odd][0] + p[odd][1];
    Ok(ParityStats {
        p_d1_even: p[even][0],
        p_d2_even: p[even][1],
        p_d1_odd: p[odd][0],
        p_d2_odd: p[odd][1],
        d1_given_even: cond(p[even][0], pe),
        d2_given_even: cond(p[even][1], pe),
        err_even: cond(p[even][1 - s_a], pe),
        err_odd: cond(p[odd][1 - s_a], po),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn single_photon_amplitudes() {
        let out = evolve(&FockState::single_bin(4, 1, 1).unwrap(), 2).unwrap();
        let mut seen = BTreeMap::new();
        for (occ, amp) in out.terms() {
            let m = occ.iter().position(|&n| n == 1).unwrap();
            seen.insert(m, amp.re);
        }
        assert_eq!(seen.len(), 4);
        assert_eq!(seen[&output_mode(4, Detector::D1)], 0.5);
        assert_eq!(seen[&output_mode(4, Detector::D2)], 0.5);
        assert_eq!(seen[&output_mode(2, Detector::D1)], 0.5);
        assert_eq!(seen[&output_mode(2, Detector::D2)], -0.5);
    }

    #[test]
    fn evolve_caps() {
        assert!(matches!(evolve(&FockState::single_bin(9, 0, 1).unwrap(), 1), Err(Error::Limit(_))));
        assert!(matches!(evolve(&FockState::single_bin(4, 0, 7).unwrap(), 1), Err(Error::Limit(_))));
        assert!(evolve(&FockState::single_bin(4, 0, 1).unwrap(), 4).is_err());
    }

    #[test]
    fn rejects_unnormalized_state() {
        assert!(FockState::new(2, [(vec![1, 0], c(0.9))]).is_err());
    }

    #[test]
    fn honest_single_photon_has_no_odd_errors() {
        for (k_a, k_b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let br = AttackBranch::two_bin(5, 1, 2, 4, c(s), c(s), k_a, k_b, 1.0);
            let st = parity_conditioned_stats(&TwoBinInput { l: 5, r: 2, a: 2, k_a, k_b, branches: vec![br] }).unwrap();
            assert_eq!(st.err_odd, Some(0.0));
            assert_eq!(st.p_d1_even + st.p_d2_even, 0.0);
        }
    }

    #[test]
    fn three_photons_in_one_bin_err_half() {
        let br = AttackBranch { weight: 1.0, n: 3, amplitudes: vec![c(0.0), c(1.0), c(0.0), c(0.0)] };
        let st =
            parity_conditioned_stats(&TwoBinInput { l: 4, r: 2, a: 2, k_a: 0, k_b: 1, branches: vec![br] }).unwrap();
        let total_err = (st.p_d1_odd + st.p_d1_even) / (st.p_d1_odd + st.p_d2_odd + st.p_d1_even + st.p_d2_even);
        assert!((total_err - 0.5).abs() < 1e-15);
    }
}
