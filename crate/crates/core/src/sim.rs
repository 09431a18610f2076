//! Monte-Carlo simulation of sifted counts.
//!
//! Every trial draws from its own ChaCha8 stream, selected by the trial
//! index, so results do not depend on how trials are split across threads.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmittance, ChannelParams, ProtocolParams};
use crate::error::{ensure, Error, Result};
use crate::oracle::{self, AttackBranch, DetectionPattern, Detector, FockState, Parity};

const CHUNK: u64 = 1 << 14;

/// One pulse train as prepared by Alice, with Bob's delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(rename = "L")]
    pub l: usize,
    /// Per-pulse amplitude magnitude `sqrt(eta * mu / L)`.
    pub amplitude: f64,
    /// Phase bits `k_1..k_L`.
    pub phases: Vec<u8>,
    pub r: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotAmplitudes {
    pub slot: usize,
    pub d1: f64,
    pub d2: f64,
}

/// Detector amplitudes at the overlap slots `r+1..=L`:
/// `D1 = (beta_{s-r} + beta_s) / 2`, `D2 = (beta_{s-r} - beta_s) / 2`
/// with `beta_t = (-1)^{k_t} * amplitude`.
pub fn interfere_amplitudes(train: &TrainConfig) -> Result<Vec<SlotAmplitudes>> {
    ensure(train.phases.len() == train.l, || format!("expected {} phases, got {}", train.l, train.phases.len()))?;
    ensure(train.r >= 1 && train.r < train.l, || format!("delay must be in [1, {}], got {}", train.l - 1, train.r))?;
    let beta = |t: usize| if train.phases[t - 1] & 1 == 1 { -train.amplitude } else { train.amplitude };
    Ok((train.r + 1..=train.l)
        .map(|s| {
            let (x, y) = (beta(s - train.r), beta(s));
            let a = SlotAmplitudes { slot: s, d1: 0.5 * (x + y), d2: 0.5 * (x - y) };
            debug_assert!(
                ((a.d1 * a.d1 + a.d2 * a.d2) - 0.5 * (x * x + y * y)).abs() <= 1e-12 * (x * x + y * y).max(1e-300)
            );
            a
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub counts: u64,
    pub errors: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.counts += o.counts;
        self.errors += o.errors;
    }

    pub fn error_rate(&self) -> Option<f64> {
        (self.counts > 0).then(|| self.errors as f64 / self.counts as f64)
    }
}

/// Accepted counts split by the number of photons in the clicked cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParityTallies {
    pub odd: Tally,
    pub even: Tally,
    /// Clicks from dark counts alone.
    pub vacuum: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub seed: u64,
    pub trials: u64,
    pub counts: u64,
    pub errors: u64,
    #[serde(rename = "Q_hat")]
    pub q_hat: f64,
    #[serde(rename = "E_hat")]
    pub e_hat: f64,
    #[serde(rename = "stderr_Q")]
    pub stderr_q: f64,
    #[serde(rename = "stderr_E")]
    pub stderr_e: f64,
    pub parity: Option<ParityTallies>,
}

impl SimStats {
    fn from_counts(seed: u64, trials: u64, counts: u64, errors: u64, parity: Option<ParityTallies>) -> Self {
        let q_hat = counts as f64 / trials as f64;
        let e_hat = errors as f64 / counts.max(1) as f64;
        Self {
            seed,
            trials,
            counts,
            errors,
            q_hat,
            e_hat,
            stderr_q: (q_hat * (1.0 - q_hat) / trials as f64).sqrt(),
            stderr_e: (e_hat * (1.0 - e_hat) / counts.max(1) as f64).sqrt(),
            parity,
        }
    }
}

fn stream_key(seed: u64) -> <ChaCha8Rng as SeedableRng>::Seed {
    ChaCha8Rng::seed_from_u64(seed).get_seed()
}

fn trial_rng(key: &<ChaCha8Rng as SeedableRng>::Seed, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(trial);
    rng
}

fn draw_phases(rng: &mut ChaCha8Rng, l: usize, out: &mut [u64]) {
    for w in out.iter_mut().take(l.div_ceil(64)) {
        *w = rng.random();
    }
}

#[inline]
fn bit(words: &[u64], t: usize) -> u8 {
    ((words[(t - 1) / 64] >> ((t - 1) % 64)) & 1) as u8
}

/// Click probability `1 - (1 - p_d) e^{-I}` of a cell with mean photon number `I`.
fn click_probability(intensity: f64, p_d: f64) -> f64 {
    -((-p_d).ln_1p() - intensity).exp_m1()
}

fn check_trials(trials: u64) -> Result<()> {
    ensure(trials >= 1, || "trials must be >= 1".into())
}

/// Simulates `trials` coherent pulse trains through the channel and the
/// delay interferometer with threshold detectors.
///
/// A trial is accepted when exactly one detector cell in the overlap window
/// clicks. Bob's bit is 0 for D1 and 1 for D2, Alice's is `k_{s-r} xor k_s`,
/// and every accepted bit is flipped with probability `E_d`.
pub fn simulate_trains(cp: &ChannelParams, pp: &ProtocolParams, trials: u64, seed: u64) -> Result<SimStats> {
    cp.validate()?;
    pp.validate()?;
    check_trials(trials)?;
    let l = pp.l;
    let intensity = transmittance(cp) * pp.mu / l as f64;
    let p_lit = click_probability(intensity, cp.p_d);
    let p_dark = cp.p_d;
    let e_d = cp.e_d;
    let key = stream_key(seed);
    let chunks = trials.div_ceil(CHUNK);
    let (counts, errors) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut words = vec![0u64; l.div_ceil(64)];
            let (mut counts, mut errors) = (0u64, 0u64);
            for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = trial_rng(&key, trial);
                let r = rng.random_range(1..l);
                draw_phases(&mut rng, l, &mut words);
                let mut clicked: Option<(usize, Detector)> = None;
                let mut many = false;
                'slots: for s in r + 1..=l {
                    let constructive = bit(&words, s - r) == bit(&words, s);
                    for det in [Detector::D1, Detector::D2] {
                        let lit = (det == Detector::D1) == constructive;
                        let p = if lit { p_lit } else { p_dark };
                        if rng.random::<f64>() < p {
                            if clicked.is_some() {
                                many = true;
                                break 'slots;
                            }
                            clicked = Some((s, det));
                        }
                    }
                }
                if many {
                    continue;
                }
                if let Some((s, det)) = clicked {
                    counts += 1;
                    let alice = bit(&words, s - r) ^ bit(&words, s);
                    let mut bob = det as u8;
                    if rng.random::<f64>() < e_d {
                        bob ^= 1;
                    }
                    if bob != alice {
                        errors += 1;
                    }
                }
            }
            (counts, errors)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(SimStats::from_counts(seed, trials, counts, errors, None))
}

/// Where the attack places its photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BinSpec {
    /// All photons in one bin (1-based).
    SingleBin { bin: usize },
    /// One pulse in superposition over bins `a` and `b` (1-based), with
    /// probability `weight_a` on `a`; photons carry Alice's phases.
    TwoBin { a: usize, b: usize, weight_a: f64 },
    /// The honest state shape: all photons in the common mode
    /// `sum_t (-1)^{k_t} a_t^dag / sqrt(L)`.
    Uniform,
}

type Distribution = Vec<(DetectionPattern, f64)>;
type DistributionCache = Mutex<HashMap<(usize, Vec<u8>), Arc<Distribution>>>;

fn multinomial_state(l: usize, n: u8, phases: &[u8]) -> Result<FockState> {
    // (sum_t s_t a_t / sqrt(L))^n / sqrt(n!) expanded over occupation vectors.
    fn rec(t: usize, left: u8, occ: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if t + 1 == occ.len() {
            occ[t] = left;
            out.push(occ.clone());
            return;
        }
        for k in 0..=left {
            occ[t] = k;
            rec(t + 1, left - k, occ, out);
        }
    }
    let mut occs = Vec::new();
    rec(0, n, &mut vec![0; l], &mut occs);
    let fact = |k: u8| (1..=k as u32).map(f64::from).product::<f64>();
    let terms = occs.into_iter().map(|occ| {
        let sign: i32 = occ.iter().zip(phases).map(|(&k, &p)| (k as i32) * (p as i32)).sum();
        let denom: f64 = occ.iter().map(|&k| fact(k)).product();
        let amp = (fact(n) / denom).sqrt() * (l as f64).powf(-(n as f64) / 2.0);
        (occ, Complex64::new(if sign % 2 == 1 { -amp } else { amp }, 0.0))
    });
    FockState::new(l, terms)
}

fn attack_state(spec: &BinSpec, n: u8, l: usize, phases: &[u8]) -> Result<FockState> {
    match *spec {
        BinSpec::SingleBin { bin } => FockState::single_bin(l, bin - 1, n),
        BinSpec::TwoBin { a, b, weight_a } => AttackBranch::two_bin(
            l,
            n,
            a,
            b,
            Complex64::new(weight_a.sqrt(), 0.0),
            Complex64::new((1.0 - weight_a).sqrt(), 0.0),
            phases[a - 1],
            phases[b - 1],
            1.0,
        )
        .state(),
        BinSpec::Uniform => multinomial_state(l, n, phases),
    }
}

/// Phase bits that change the attack state up to a global phase.
fn relevant_phases(spec: &BinSpec, n: u8, phases: &[u8]) -> Vec<u8> {
    match *spec {
        BinSpec::SingleBin { .. } => Vec::new(),
        BinSpec::TwoBin { a, b, .. } => vec![((phases[a - 1] ^ phases[b - 1]) * n) & 1],
        BinSpec::Uniform => phases.iter().map(|p| p ^ phases[0]).collect(),
    }
}

/// Samples accepted counts produced by an `n`-photon attack state, with the
/// exact detection-pattern distribution taken from the Fock-state oracle.
///
/// Cells holding photons always click; empty window cells click with the dark
/// probability. Accepted counts are tallied by the parity of the photon
/// number in the clicked cell. Only `L`, `p_d` and `E_d` are used.
pub fn simulate_fock_attack(
    n: u8,
    spec: &BinSpec,
    cp: &ChannelParams,
    pp: &ProtocolParams,
    trials: u64,
    seed: u64,
) -> Result<SimStats> {
    cp.validate()?;
    pp.validate()?;
    check_trials(trials)?;
    let l = pp.l;
    if l > oracle::MAX_BINS || n as usize > oracle::MAX_PHOTONS || n == 0 {
        return Err(Error::Limit(format!(
            "attack simulation supports 1..={} photons and L <= {}",
            oracle::MAX_PHOTONS,
            oracle::MAX_BINS
        )));
    }
    match *spec {
        BinSpec::SingleBin { bin } => ensure((1..=l).contains(&bin), || format!("bin {bin} outside 1..={l}"))?,
        BinSpec::TwoBin { a, b, weight_a } => {
            ensure((1..=l).contains(&a) && (1..=l).contains(&b) && a != b && (0.0..=1.0).contains(&weight_a), || {
                format!("two-bin spec ({a}, {b}, {weight_a}) invalid for L={l}")
            })?
        }
        BinSpec::Uniform => {}
    }
    let cache: DistributionCache = Mutex::new(HashMap::new());
    let distribution = |r: usize, phases: &[u8]| -> Result<Arc<Distribution>> {
        let k = (r, relevant_phases(spec, n, phases));
        if let Some(d) = cache.lock().expect("cache poisoned").get(&k) {
            return Ok(d.clone());
        }
        let out = oracle::evolve(&attack_state(spec, n, l, phases)?, r)?;
        let d = Arc::new(oracle::pattern_distribution(&out, l, r)?);
        cache.lock().expect("cache poisoned").insert(k, d.clone());
        Ok(d)
    };
    let key = stream_key(seed);
    let chunks = trials.div_ceil(CHUNK);
    let tallies: Vec<ParityTallies> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<ParityTallies> {
            let mut t = ParityTallies::default();
            let mut phases = vec![0u8; l];
            for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = trial_rng(&key, trial);
                let r = rng.random_range(1..l);
                for p in phases.iter_mut() {
                    *p = rng.random::<bool>() as u8;
                }
                let dist = distribution(r, &phases)?;
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = dist.len() - 1;
                for (i, (_, p)) in dist.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let pattern = &dist[pick].0;
                let mut clicked: Vec<(usize, Detector, u8)> = Vec::new();
                for s in r + 1..=l {
                    for det in [Detector::D1, Detector::D2] {
                        let photons = pattern
                            .cells
                            .iter()
                            .find(|cc| cc.slot == s && cc.detector == det)
                            .map_or(0, |cc| cc.photons);
                        let dark = rng.random::<f64>() < cp.p_d;
                        if photons > 0 || dark {
                            clicked.push((s, det, photons));
                        }
                    }
                }
                if clicked.len() != 1 {
                    continue;
                }
                let (s, det, photons) = clicked[0];
                let alice = phases[s - r - 1] ^ phases[s - 1];
                let mut bob = det as u8;
                if rng.random::<f64>() < cp.e_d {
                    bob ^= 1;
                }
                let class = if photons == 0 {
                    &mut t.vacuum
                } else if Parity::of(photons as usize) == Parity::Odd {
                    &mut t.odd
                } else {
                    &mut t.even
                };
                class.counts += 1;
                class.errors += (bob != alice) as u64;
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let mut total = ParityTallies::default();
    for t in &tallies {
        total.odd.add(&t.odd);
        total.even.add(&t.even);
        total.vacuum.add(&t.vacuum);
    }
    let counts = total.odd.counts + total.even.counts + total.vacuum.counts;
    let errors = total.odd.errors + total.even.errors + total.vacuum.errors;
    Ok(SimStats::from_counts(seed, trials, counts, errors, Some(total)))
}
