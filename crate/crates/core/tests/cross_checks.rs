//! Library results compared against independent evaluations.

use num_complex::Complex64;
use rrdps::channel::{self, ChannelParams, DetectorModel, ProtocolParams, RateObservables};
use rrdps::entropy::e_src;
use rrdps::keyrate::keyrate_maxmin;
use rrdps::oracle::{self, evolve, pattern_distribution, Detector, FockState, Parity};
use rrdps::phi::{phi, phi_bruteforce};
use rrdps::sim::{simulate_fock_attack, simulate_trains, BinSpec};
use statrs::function::gamma::gamma_lr;

#[test]
fn tagged_fraction_matches_incomplete_gamma() {
    for &mu in &[0.05, 0.5, 1.0, 3.0, 8.89, 20.0, 45.0] {
        for n_th in [0u32, 1, 3, 5, 9, 15, 19, 40] {
            let ours = e_src(mu, n_th).unwrap();
            let reference = gamma_lr(n_th as f64 + 1.0, mu);
            if reference > 1e-12 {
                assert!((ours - reference).abs() <= 1e-10 * reference, "mu={mu} n_th={n_th}: {ours} vs {reference}");
            } else {
                assert!((0.0..=1e-12).contains(&ours));
            }
        }
    }
}

/// Direct product-form evaluation of the yes-no signal gain.
fn gain_direct(l: usize, eta: f64, mu: f64, p_d: f64) -> f64 {
    let x = eta * mu / l as f64;
    let click = 1.0 - (1.0 - p_d) * (-x).exp();
    (1..l)
        .map(|r| {
            let k = (2 * (l - r) - 1) as i32;
            (l - r) as f64 / (l - 1) as f64 * (1.0 - p_d).powi(k) * (-x * (l - r - 1) as f64).exp() * click
        })
        .sum()
}

#[test]
fn gain_matches_direct_sum() {
    for l in [2, 3, 8, 93, 160] {
        for mu in [0.1, 1.0, 8.89] {
            for d in [0.0, 50.0, 100.0] {
                let cp = ChannelParams::default().at_distance(d);
                let eta = channel::transmittance(&cp);
                let pp = ProtocolParams { l, mu, n_th: 1 };
                let ours = channel::gain_yesno(&pp, eta, cp.p_d);
                let direct = gain_direct(l, eta, mu, cp.p_d);
                // The direct form cancels in 1 - (1-p_d)e^{-x} for small x.
                assert!((ours - direct).abs() <= 1e-9 * direct, "L={l} mu={mu} d={d}");
            }
        }
    }
}

#[test]
fn maxmin_matches_grid_search() {
    let pp = ProtocolParams { l: 16, mu: 1.0, n_th: 1 };
    let cases = [(3e-3, 0.02, 1e-6, 0.6), (1e-2, 0.08, 5e-4, 0.3), (5e-4, 0.15, 1e-5, 0.1), (2e-3, 0.01, 1.5e-3, 0.5)];
    for (q, e, es, ph) in cases {
        let o = RateObservables { q, e, e_src: es };
        let exact = keyrate_maxmin(&o, &pp, 1.15, ph).unwrap();
        let ec = 1.15 * q * rrdps::entropy::binary_entropy(e).unwrap();
        let am = exact.alpha_min;
        let value = |g: f64, a: f64| {
            let r1 = a * (q - es) * (1.0 - ph) - ec;
            let r2 = (1.0 - a) * (q - es) - ec;
            g * r1.max(0.0) + (1.0 - g) * r2.max(0.0)
        };
        let mut grid = f64::NEG_INFINITY;
        for i in 0..=200 {
            let g = i as f64 / 200.0;
            let inner = (0..=2000).map(|j| value(g, am + (1.0 - am) * j as f64 / 2000.0)).fold(f64::INFINITY, f64::min);
            grid = grid.max(inner);
        }
        assert!((exact.lr - grid.max(0.0)).abs() <= 1e-3 * q, "{q} {e}: {} vs {grid}", exact.lr);
        assert!(exact.lr >= grid - 1e-15);
    }
}

#[test]
fn phi_agrees_with_simplex_grid() {
    for (n, l, res) in [(1, 3, 1e-5), (1, 6, 1e-5), (2, 5, 5e-4), (2, 9, 5e-4)] {
        let opt = phi(n, l).unwrap().value;
        let grid = phi_bruteforce(n, l, res).unwrap();
        assert!(grid <= opt + 1e-12);
        assert!(opt - grid < 1e-6, "N={n} L={l}: {opt} vs {grid}");
    }
}

#[test]
fn phi_closed_form_for_single_photon_pair() {
    // N = 1 reduces to a one-dimensional search.
    for l in [3usize, 4, 7, 20] {
        let lm = (l - 1) as f64;
        let f = |x: f64| rrdps::entropy::varphi(lm * x, 1.0 - x).unwrap() / lm;
        let mut best = 0.0f64;
        for i in 1..200_000 {
            best = best.max(f(i as f64 / 200_000.0));
        }
        let opt = phi(1, l).unwrap().value;
        assert!(opt >= best - 1e-13 && opt - best < 1e-8, "L={l}");
        assert!(opt <= rrdps::entropy::binary_entropy(1.0 / lm).unwrap());
    }
}

#[test]
fn simulator_matches_exact_single_click_probability_at_high_darks() {
    // With large p_d the wrong-detector dark term is resolvable: accepted
    // counts follow Q + T, not Q alone.
    let cp = ChannelParams { p_d: 0.02, e_d: 0.0, ..ChannelParams::default() }.at_distance(10.0);
    let pp = ProtocolParams { l: 4, mu: 0.5, n_th: 1 };
    let eta = channel::transmittance(&cp);
    let q = channel::gain_yesno(&pp, eta, cp.p_d);
    let t = channel::dark_error_yesno(&pp, eta, cp.p_d);
    let s = simulate_trains(&cp, &pp, 400_000, 11).unwrap();
    let z_total = (s.q_hat - (q + t)) / s.stderr_q;
    let z_signal_only = (s.q_hat - q) / s.stderr_q;
    assert!(z_total.abs() < 4.0, "z = {z_total}");
    assert!(z_signal_only > 10.0, "z = {z_signal_only}");
    assert!(s.e_hat > 0.0 && s.e_hat < 0.5);
}

#[test]
fn honest_observables_exact_relation_at_zero_intensity() {
    let cp = ChannelParams { p_d: 1e-3, ..ChannelParams::default() };
    let pp = ProtocolParams { l: 8, mu: 0.0, n_th: 1 };
    let eta = channel::transmittance(&cp);
    let q = channel::gain_yesno(&pp, eta, cp.p_d);
    let t = channel::dark_error_yesno(&pp, eta, cp.p_d);
    assert!((q - t).abs() <= 1e-15 * q);
    assert!(channel::observables(&cp, &pp, DetectorModel::YesNo).is_err());
}

#[test]
fn evolution_preserves_norm() {
    for l in 2..=6 {
        for r in 1..l {
            for n in 1..=4u8 {
                for bin in 0..l {
                    let out = evolve(&FockState::single_bin(l, bin, n).unwrap(), r).unwrap();
                    assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
                    let total: f64 = pattern_distribution(&out, l, r).unwrap().iter().map(|(_, p)| p).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn single_bin_photons_split_binomially() {
    // Each photon from bin t exits at slot t or t+r with probability 1/2.
    let (l, r, t) = (4usize, 1usize, 2usize);
    for n in 1..=4u8 {
        let out = evolve(&FockState::single_bin(l, t - 1, n).unwrap(), r).unwrap();
        let dist = pattern_distribution(&out, l, r).unwrap();
        let p_empty_late: f64 =
            dist.iter().filter(|(p, _)| p.cells.iter().all(|c| c.slot != t + r)).map(|(_, w)| w).sum();
        let expected = 0.5f64.powi(n as i32);
        let p_only_t: f64 = dist.iter().filter(|(p, _)| p.cells.iter().all(|c| c.slot == t)).map(|(_, w)| w).sum();
        assert!((p_empty_late - expected).abs() < 1e-12, "n={n}");
        assert!((p_only_t - expected).abs() < 1e-12, "n={n}");
    }
}

#[test]
fn fock_attack_sampling_matches_oracle() {
    // Two photons in two bins; darks off so the oracle gives exact tallies.
    let cp = ChannelParams { p_d: 0.0, e_d: 0.0, ..ChannelParams::default() };
    let pp = ProtocolParams { l: 4, mu: 1.0, n_th: 1 };
    let spec = BinSpec::TwoBin { a: 1, b: 3, weight_a: 0.5 };
    let trials = 200_000u64;
    let s = simulate_fock_attack(2, &spec, &cp, &pp, trials, 5).unwrap();
    let parity = s.parity.unwrap();

    // Exact accepted-count probability averaged over uniform r and phases.
    let mut p_valid = 0.0;
    let mut p_even = 0.0;
    for r in 1..pp.l {
        for phases in 0..16u8 {
            let k = |t: usize| (phases >> (t - 1)) & 1;
            let br = oracle::AttackBranch::two_bin(
                pp.l,
                2,
                1,
                3,
                Complex64::new(0.5f64.sqrt(), 0.0),
                Complex64::new(0.5f64.sqrt(), 0.0),
                k(1),
                k(3),
                1.0,
            );
            let out = evolve(&br.state().unwrap(), r).unwrap();
            for (pat, p) in pattern_distribution(&out, pp.l, r).unwrap() {
                if pat.valid() {
                    let w = p / (3.0 * 16.0);
                    p_valid += w;
                    if pat.parity() == Parity::Even {
                        p_even += w;
                    }
                }
            }
        }
    }
    let chi2 = |observed: u64, p: f64| {
        let expected = p * trials as f64;
        (observed as f64 - expected).powi(2) / (expected * (1.0 - p))
    };
    assert!(chi2(s.counts, p_valid) < 16.0, "counts {} vs {}", s.counts, p_valid * trials as f64);
    assert!(chi2(parity.even.counts, p_even) < 16.0);
    assert_eq!(parity.odd.counts + parity.even.counts + parity.vacuum.counts, s.counts);
}

#[test]
fn uniform_multi_bin_state_breaks_even_symmetry() {
    // The honest two-photon state spread over all bins is outside the
    // single-pulse input class: even counts then favour one detector.
    let (l, r) = (3usize, 1usize);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // (a_1 + a_2)^2 / 2 applied to vacuum, normalized.
    let st = FockState::new(
        l,
        [
            (vec![2, 0, 0], Complex64::new(0.5, 0.0)),
            (vec![1, 1, 0], Complex64::new(s, 0.0)),
            (vec![0, 2, 0], Complex64::new(0.5, 0.0)),
        ],
    )
    .unwrap();
    let out = evolve(&st, r).unwrap();
    let mut p = [0.0f64; 2];
    for (pat, w) in pattern_distribution(&out, l, r).unwrap() {
        if pat.valid() && pat.cells[0].slot == 2 && pat.parity() == Parity::Even {
            p[match pat.cells[0].detector {
                Detector::D1 => 0,
                Detector::D2 => 1,
            }] += w;
        }
    }
    assert!((p[0] - p[1]).abs() > 1e-3, "{p:?}");
}
