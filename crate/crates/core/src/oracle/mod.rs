//! Exact Fock-state model of the receiver for small trains.
//!
//! Used to check, at desk scale, that even-photon counts carry no
//! information about Bob's bit and that single-photon attacks leak at most
//! `phi(1, L)`.

mod fock;
mod holevo;

pub use fock::{
    evolve, output_mode, parity_conditioned_stats, pattern_distribution, AttackBranch, CellCount, DetectionPattern,
    Detector, FockState, Parity, ParityStats, TwoBinInput, MAX_BINS, MAX_PHOTONS,
};
pub use holevo::{holevo_single_photon_attack, HolevoReport, PairHolevo, SinglePhotonAttack};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::phi;

fn random_unit_vector(rng: &mut ChaCha8Rng, len: usize, sparse: bool) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..len)
            .map(|_| {
                if sparse && rng.random::<f64>() < 0.5 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::from_polar(rng.random::<f64>(), std::f64::consts::TAU * rng.random::<f64>())
                }
            })
            .collect();
        let n: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityScanReport {
    pub configurations: usize,
    /// Largest `|P(D1, even) - P(D2, even)|` over all configurations.
    pub max_abs_diff: f64,
    /// Largest `|err_even - 1/2|` over configurations with even counts.
    pub max_err_even_deviation: f64,
    pub configurations_with_even_counts: usize,
}

/// Even-count symmetry over every pair `(a, a+r)` of trains with
/// `2 <= L <= max_l`, both Alice phases, and attacks built from single-pulse
/// superpositions with up to `max_n` photons: the pure two-bin states plus
/// `draws` random mixtures per configuration.
pub fn even_parity_symmetry_scan(max_n: u8, max_l: usize, draws: usize, seed: u64) -> Result<ParityScanReport> {
    ensure((1..=MAX_PHOTONS as u8).contains(&max_n), || format!("max_n must be in [1, {MAX_PHOTONS}]"))?;
    ensure((2..=MAX_BINS).contains(&max_l), || format!("max_l must be in [2, {MAX_BINS}]"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ParityScanReport {
        configurations: 0,
        max_abs_diff: 0.0,
        max_err_even_deviation: 0.0,
        configurations_with_even_counts: 0,
    };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for l in 2..=max_l {
        for r in 1..l {
            for a in 1..=l - r {
                for (k_a, k_b) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
                    let mut inputs: Vec<Vec<AttackBranch>> = (1..=max_n)
                        .map(|n| {
                            vec![AttackBranch::two_bin(
                                l,
                                n,
                                a,
                                a + r,
                                Complex64::new(s, 0.0),
                                Complex64::new(s, 0.0),
                                k_a,
                                k_b,
                                1.0,
                            )]
                        })
                        .collect();
                    for _ in 0..draws {
                        let nb = rng.random_range(1..=3usize);
                        let raw: Vec<f64> = (0..nb).map(|_| rng.random::<f64>() + 0.05).collect();
                        let tot: f64 = raw.iter().sum();
                        let sparse = rng.random::<bool>();
                        inputs.push(
                            raw.iter()
                                .map(|w| AttackBranch {
                                    weight: w / tot,
                                    n: rng.random_range(1..=max_n),
                                    amplitudes: random_unit_vector(&mut rng, l, sparse),
                                })
                                .collect(),
                        );
                    }
                    for branches in inputs {
                        let st = parity_conditioned_stats(&TwoBinInput { l, r, a, k_a, k_b, branches })?;
                        rep.configurations += 1;
                        rep.max_abs_diff = rep.max_abs_diff.max((st.p_d1_even - st.p_d2_even).abs());
                        if st.p_d1_even + st.p_d2_even > 1e-12 {
                            rep.configurations_with_even_counts += 1;
                            let e = st.err_even.unwrap_or(0.5);
                            rep.max_err_even_deviation = rep.max_err_even_deviation.max((e - 0.5).abs());
                        }
                    }
                }
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolevoAuditReport {
    #[serde(rename = "L")]
    pub l: usize,
    pub draws: usize,
    pub seed: u64,
    pub max_holevo: f64,
    pub phi_1_l: f64,
    /// `max_holevo - phi(1, L)`; nonpositive when the bound holds.
    pub max_excess: f64,
}

/// Attack that attains `phi(1, L)`: each bin keeps weight `x_1` and spreads
/// `x_2` evenly over the other bins, with `(x_1, x_2)` the maximizer.
pub fn saturating_single_photon_attack(l: usize) -> Result<SinglePhotonAttack> {
    let opt = phi::phi(1, l)?;
    let (x1, x2) = (opt.argmax.weights()[0], opt.argmax.weights()[1]);
    let scale = 1.0 / (l as f64).sqrt();
    let c = (0..l)
        .map(|i| {
            (0..l)
                .map(|j| {
                    let w = if i == j { x1 } else { x2 / (l - 1) as f64 };
                    Complex64::new(scale * w.sqrt(), 0.0)
                })
                .collect()
        })
        .collect();
    Ok(SinglePhotonAttack { c })
}

/// Random single-photon attacks (dense and sparse rows) checked against
/// `phi(1, L)`.
pub fn holevo_audit(l: usize, draws: usize, seed: u64) -> Result<HolevoAuditReport> {
    ensure((2..=MAX_BINS).contains(&l), || format!("L must be in [2, {MAX_BINS}], got {l}"))?;
    let phi_1_l = phi::phi(1, l)?.value;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (l as f64).sqrt();
    let mut max_holevo = f64::NEG_INFINITY;
    for _ in 0..draws {
        let sparse = rng.random::<bool>();
        let c =
            (0..l).map(|_| random_unit_vector(&mut rng, l, sparse).into_iter().map(|z| z * scale).collect()).collect();
        let h = holevo_single_photon_attack(&SinglePhotonAttack { c })?;
        max_holevo = max_holevo.max(h.value);
    }
    Ok(HolevoAuditReport { l, draws, seed, max_holevo, phi_1_l, max_excess: max_holevo - phi_1_l })
}
