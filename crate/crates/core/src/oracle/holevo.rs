use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

use super::fock::MAX_BINS;

/// Single-photon attack `|i> -> sum_j c_ij |1_j>|e_ij>` with orthonormal
/// ancilla labels `e_ij`. Bins are 0-based here.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePhotonAttack {
    pub c: Vec<Vec<Complex64>>,
}

impl SinglePhotonAttack {
    pub fn l(&self) -> usize {
        self.c.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairHolevo {
    pub a: usize,
    pub b: usize,
    /// Relative probability of a valid count announcing `(a, b)`.
    pub weight: f64,
    /// Holevo quantity of Alice's bit given that announcement, in bits.
    pub chi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolevoReport {
    pub value: f64,
    pub pairs: Vec<PairHolevo>,
}

fn eta(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Eigenvalues of the Hermitian matrix `[[p, q], [conj(q), s]]`.
fn eig2(p: f64, q: Complex64, s: f64) -> [f64; 2] {
    let m = 0.5 * (p + s);
    let d = (0.25 * (p - s) * (p - s) + q.norm_sqr()).sqrt();
    [(m + d).max(0.0), (m - d).max(0.0)]
}

fn rank_one(v: [Complex64; 2]) -> (f64, Complex64, f64) {
    (v[0].norm_sqr(), v[0] * v[1].conj(), v[1].norm_sqr())
}

fn block_entropy(blocks: &[(f64, Complex64, f64)], diag: &[f64], z: f64) -> f64 {
    let mut s = 0.0;
    for &(p, q, t) in blocks {
        for e in eig2(p, q, t) {
            s += eta(e / z);
        }
    }
    s + diag.iter().map(|&d| eta(d / z)).sum::<f64>()
}

/// Holevo bound on Eve's information about Alice's sifted bit, averaged over
/// announced pairs with their count probabilities.
///
/// Given the pair `(a, b)`, Eve's state for bit `s` splits into orthogonal
/// blocks: a rank-one block on `{e_aa, e_ba}` with vector `(c_aa, (-1)^s c_ba)`,
/// one on `{e_ab, e_bb}` with `(c_ab, (-1)^s c_bb)`, and diagonal terms from
/// the other rows that do not depend on `s`.
pub fn holevo_single_photon_attack(attack: &SinglePhotonAttack) -> Result<HolevoReport> {
    let l = attack.l();
    ensure((2..=MAX_BINS).contains(&l), || format!("L must be in [2, {MAX_BINS}], got {l}"))?;
    ensure(attack.c.iter().all(|row| row.len() == l), || "attack matrix must be L x L".into())?;
    let total: f64 = attack.c.iter().flatten().map(|c| c.norm_sqr()).sum();
    ensure((total - 1.0).abs() <= 1e-10, || format!("attack coefficients have total weight {total}, not 1"))?;

    let c = &attack.c;
    let mut pairs = Vec::new();
    for a in 0..l {
        for b in a + 1..l {
            let z: f64 = (0..l).map(|i| c[i][a].norm_sqr() + c[i][b].norm_sqr()).sum();
            if z <= 0.0 {
                pairs.push(PairHolevo { a: a + 1, b: b + 1, weight: 0.0, chi: 0.0 });
                continue;
            }
            let diag: Vec<f64> =
                (0..l).filter(|&i| i != a && i != b).flat_map(|i| [c[i][a].norm_sqr(), c[i][b].norm_sqr()]).collect();
            let blocks_for = |s: f64| [rank_one([c[a][a], c[b][a] * s]), rank_one([c[a][b], c[b][b] * s])];
            let b0 = blocks_for(1.0);
            let b1 = blocks_for(-1.0);
            let avg: Vec<(f64, Complex64, f64)> =
                b0.iter().zip(&b1).map(|(x, y)| (0.5 * (x.0 + y.0), 0.5 * (x.1 + y.1), 0.5 * (x.2 + y.2))).collect();
            let chi =
                block_entropy(&avg, &diag, z) - 0.5 * block_entropy(&b0, &diag, z) - 0.5 * block_entropy(&b1, &diag, z);
            pairs.push(PairHolevo { a: a + 1, b: b + 1, weight: z, chi: chi.max(0.0) });
        }
    }
    let wsum: f64 = pairs.iter().map(|p| p.weight).sum();
    let value = if wsum > 0.0 { pairs.iter().map(|p| p.weight * p.chi).sum::<f64>() / wsum } else { 0.0 };
    Ok(HolevoReport { value, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z() -> Complex64 {
        Complex64::new(0.0, 0.0)
    }

    #[test]
    fn identity_attack_leaks_nothing() {
        let l = 4;
        let s = 1.0 / (l as f64).sqrt();
        let c = (0..l).map(|i| (0..l).map(|j| if i == j { Complex64::new(s, 0.0) } else { z() }).collect()).collect();
        let h = holevo_single_photon_attack(&SinglePhotonAttack { c }).unwrap();
        assert!(h.value.abs() < 1e-15);
    }

    #[test]
    fn merged_pair_gives_one_bit() {
        // Bins 1 and 2 both routed into output bin 1.
        let l = 3;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut c = vec![vec![z(); l]; l];
        c[0][0] = Complex64::new(s, 0.0);
        c[1][0] = Complex64::new(0.0, s);
        let h = holevo_single_photon_attack(&SinglePhotonAttack { c }).unwrap();
        let p12 = h.pairs.iter().find(|p| p.a == 1 && p.b == 2).unwrap();
        assert!((p12.chi - 1.0).abs() < 1e-14);
        assert!((eig2(1.0, Complex64::new(0.0, 1.0), 1.0)[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unnormalized() {
        let c = vec![vec![Complex64::new(1.0, 0.0); 3]; 3];
        assert!(holevo_single_photon_attack(&SinglePhotonAttack { c }).is_err());
    }
}
