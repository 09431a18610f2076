//! Acceptance suite: one PASS/FAIL line per criterion, details indented below.
//! Exits nonzero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrdps::channel::{self, ChannelParams, DetectorModel, ProtocolParams, RateObservables};
use rrdps::entropy::binary_entropy;
use rrdps::keyrate::{keyrate_maxmin, keyrate_simplified, rate_report};
use rrdps::optimize::{distance_grid, optimize_protocol, sweep_point, SearchSpace, SweepMode};
use rrdps::oracle::{even_parity_symmetry_scan, holevo_audit};
use rrdps::phi::{phi, phi_bruteforce};
use rrdps::sim::simulate_trains;
use rrdps::PhiCache;

/// Rows: (E_d, mu, L, n_th, R, alpha_min).
const TABLE: [(f64, f64, usize, usize, f64, f64); 4] = [
    (0.015, 8.89, 93, 19, 4.12e-5, 0.97),
    (0.030, 6.02, 97, 15, 2.50e-5, 0.94),
    (0.060, 2.35, 96, 9, 7.52e-6, 0.87),
    (0.100, 0.54, 97, 5, 5.42e-7, 0.79),
];

const RATE_REL_TOL: f64 = 0.10;
const ALPHA_ABS_TOL: f64 = 0.01;
const OPTIMIZER_FLOOR: f64 = 0.9;
const GAP_LIMIT: f64 = 0.10;
const FORMULA_TOL: f64 = 1e-12;
const GRID_POINTS: usize = 10_000;
const PHI_TOL: f64 = 1e-6;
const MC_TRIALS: u64 = 10_000_000;
const MC_SEED: u64 = 20_240_601;
const MC_SIGMAS: f64 = 3.0;
const PARITY_TOL: f64 = 1e-12;
const HOLEVO_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, details: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }
}

fn channel_at(e_d: f64, distance: f64) -> ChannelParams {
    ChannelParams { e_d, ..ChannelParams::default() }.at_distance(distance)
}

fn reference_row_regression() -> Outcome {
    let mut o = Outcome::new();
    let cache = PhiCache::new();
    for (e_d, mu, l, n_th, r_ref, a_ref) in TABLE {
        let pp = ProtocolParams { l, mu, n_th };
        let rep = rate_report(&channel_at(e_d, 100.0), &pp, DetectorModel::YesNo, cache.get(n_th, l).unwrap()).unwrap();
        let rel = rep.r / r_ref - 1.0;
        o.check(
            rel.abs() <= RATE_REL_TOL,
            format!("E_d={e_d}: R={:.4e} vs {r_ref:.2e} ({:+.2}%, tol ±{}%)", rep.r, 100.0 * rel, 100.0 * RATE_REL_TOL),
        );
        o.check(
            (rep.alpha_min - a_ref).abs() <= ALPHA_ABS_TOL,
            format!("E_d={e_d}: alpha_min={:.4} vs {a_ref} (tol {ALPHA_ABS_TOL})", rep.alpha_min),
        );
    }
    o
}

fn optimizer_parity() -> Outcome {
    let mut o = Outcome::new();
    let cache = PhiCache::new();
    for (e_d, _, _, _, r_ref, _) in TABLE {
        let t = Instant::now();
        let best = optimize_protocol(&channel_at(e_d, 100.0), &SearchSpace::default(), &cache).unwrap();
        let rep = &best.report;
        o.check(
            rep.r >= OPTIMIZER_FLOOR * r_ref,
            format!(
                "E_d={e_d}: R={:.4e} >= {OPTIMIZER_FLOOR} x {r_ref:.2e} at L={} n_th={} mu={:.4} ({:.1} s)",
                rep.r,
                best.params.l,
                best.params.n_th,
                best.params.mu,
                t.elapsed().as_secs_f64()
            ),
        );
        o.check(rep.gamma_opt == 1.0, format!("E_d={e_d}: gamma_opt={}", rep.gamma_opt));
        o.check(
            (rep.alpha_used - rep.alpha_min).abs() <= 1e-12,
            format!("E_d={e_d}: alpha_used={:.6} alpha_min={:.6}", rep.alpha_used, rep.alpha_min),
        );
    }
    o
}

fn detector_gap() -> Outcome {
    let mut o = Outcome::new();
    let cache = PhiCache::new();
    let mode = SweepMode::Optimize(SearchSpace::default());
    let mut positive = 0;
    for d in distance_grid(0.0, 175.0, 5.0).unwrap() {
        let p = sweep_point(&channel_at(0.015, 0.0), d, &mode, &cache).unwrap();
        match p.gap {
            Some(g) => {
                positive += 1;
                o.check(
                    g < GAP_LIMIT,
                    format!(
                        "d={d:>5.1} km: gap={:.4} R_yesno={:.3e} R_pnr={:.3e} L={} n_th={}",
                        g, p.report_yesno.r, p.report_pnr.r, p.params.l, p.params.n_th
                    ),
                );
            }
            None => o.details.push(format!("skip d={d:>5.1} km: no positive rate pair")),
        }
    }
    o.check(positive > 0, format!("{positive} distances with positive rates"));
    o
}

fn formula_equivalence() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pp = ProtocolParams { l: 64, mu: 1.0, n_th: 1 };
    let (mut worst_diff, mut worst_r1) = (0.0f64, f64::INFINITY);
    for _ in 0..GRID_POINTS {
        let q = 10f64.powf(rng.random_range(-9.0..0.0));
        let e_src = q * rng.random_range(0.0..1.0);
        let obs = RateObservables { q, e: rng.random_range(0.0..=0.5), e_src };
        let phi_v = rng.random_range(0.0..=1.0);
        let f = rng.random_range(1.0..=1.5);
        let m = keyrate_maxmin(&obs, &pp, f, phi_v).unwrap();
        let s = keyrate_simplified(&obs, f, phi_v).unwrap();
        let am = 1.0 - 2.0 * obs.e * q / (q - e_src);
        let r1 = am.max(0.0) * (q - e_src) * (1.0 - phi_v) - f * q * binary_entropy(obs.e).unwrap();
        worst_diff = worst_diff.max((m.lr - s).abs());
        worst_r1 = worst_r1.min(m.lr - r1);
    }
    o.check(worst_diff <= FORMULA_TOL, format!("max |maxmin - closed form| = {worst_diff:.3e} (tol {FORMULA_TOL:e})"));
    o.check(worst_r1 >= 0.0, format!("min (LR - R1(alpha_min)) = {worst_r1:.3e} over {GRID_POINTS} points"));
    o
}

fn phi_oracle() -> Outcome {
    let mut o = Outcome::new();
    for (n, l, res) in [(1, 3, 1e-5), (1, 5, 1e-5), (1, 16, 1e-5), (2, 8, 5e-4), (2, 16, 5e-4), (3, 12, 1e-3)] {
        let t = Instant::now();
        let opt = phi(n, l).unwrap().value;
        let grid = phi_bruteforce(n, l, res).unwrap();
        o.check(
            (opt - grid).abs() <= PHI_TOL,
            format!(
                "phi({n},{l}) = {opt:.10} grid({res:e}) = {grid:.10} diff {:.2e} ({:.1} s)",
                (opt - grid).abs(),
                t.elapsed().as_secs_f64()
            ),
        );
    }
    let mut worst = f64::NEG_INFINITY;
    for l in 3..=128 {
        let slack = phi(1, l).unwrap().value - binary_entropy(1.0 / (l - 1) as f64).unwrap();
        worst = worst.max(slack);
    }
    o.check(worst <= 0.0, format!("max over L in [3,128] of phi(1,L) - H(1/(L-1)) = {worst:.3e}"));
    o
}

fn monte_carlo() -> Outcome {
    let mut o = Outcome::new();
    for l in [8usize, 16, 32] {
        for mu in [1.0, 5.0] {
            for d in [25.0, 100.0] {
                let cp = ChannelParams::default().at_distance(d);
                let pp = ProtocolParams { l, mu, n_th: 1 };
                let eta = channel::transmittance(&cp);
                let q = channel::gain_yesno(&pp, eta, cp.p_d);
                let e = channel::error_rate(q, channel::dark_error_yesno(&pp, eta, cp.p_d), cp.e_d, cp.e_0).unwrap();
                let s = simulate_trains(&cp, &pp, MC_TRIALS, MC_SEED).unwrap();
                let zq = (s.q_hat - q) / s.stderr_q;
                let ze = (s.e_hat - e) / s.stderr_e;
                o.check(
                    zq.abs() <= MC_SIGMAS && ze.abs() <= MC_SIGMAS,
                    format!("L={l:>2} mu={mu} d={d:>5.1}: zQ={zq:+.2} zE={ze:+.2} (Q={q:.4e} E={e:.4e})"),
                );
            }
        }
    }
    o
}

fn parity_structure() -> Outcome {
    let mut o = Outcome::new();
    let scan = even_parity_symmetry_scan(4, 6, 3, 1).unwrap();
    o.check(
        scan.max_abs_diff <= PARITY_TOL,
        format!("max |P(D1,even) - P(D2,even)| = {:.3e} over {} inputs", scan.max_abs_diff, scan.configurations),
    );
    o.check(
        scan.max_err_even_deviation <= PARITY_TOL,
        format!(
            "max |err_even - 1/2| = {:.3e} over {} inputs with even counts",
            scan.max_err_even_deviation, scan.configurations_with_even_counts
        ),
    );
    let audit = holevo_audit(4, 1000, 1).unwrap();
    o.check(
        audit.max_excess <= HOLEVO_TOL,
        format!("max Holevo {:.6} vs phi(1,4) {:.6} over {} draws", audit.max_holevo, audit.phi_1_l, audit.draws),
    );
    o
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).to_string_lossy().into_owned()
}

/// Stdout, stderr and any written files of one CLI run.
fn cli_run(threads: &str, args: &[String], files: &[PathBuf]) -> (i32, Vec<u8>, Vec<u8>, Vec<Vec<u8>>) {
    for f in files {
        let _ = std::fs::remove_file(f);
    }
    let out = Command::new(env!("CARGO_BIN_EXE_rrdps"))
        .env_remove("RRDPS_CACHE_DIR")
        .arg("--threads")
        .arg(threads)
        .args(args)
        .output()
        .expect("binary runs");
    let contents = files.iter().map(|f| std::fs::read(f).unwrap_or_default()).collect();
    (out.status.code().unwrap_or(-1), out.stdout, out.stderr, contents)
}

fn determinism() -> Outcome {
    let mut o = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let meta = dir.path().join("out.csv.meta.json");
    let csv_s = csv.to_string_lossy().into_owned();
    let e15 = data("ref_e15.json");
    let small = data("small_sim.json");
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let cases: Vec<(Vec<String>, Vec<PathBuf>)> = vec![
        (s(&["phi", "--N", "19", "--L", "93"]), vec![]),
        (s(&["phi", "--N", "1", "--L", "3", "--bruteforce", "--grid", "1e-4"]), vec![]),
        (s(&["rate", "--config", &e15, "--pnr"]), vec![]),
        (s(&["optimize", "--config", &e15, "--distance", "100"]), vec![]),
        (s(&["optimize", "--config", &small, "--distance", "100", "--out", &csv_s]), vec![csv.clone(), meta.clone()]),
        (s(&["sweep", "--config", &small, "--optimize", "--dmin", "0", "--dmax", "150", "--step", "50"]), vec![]),
        (
            s(&["sweep", "--config", &e15, "--fixed", "--dmin", "0", "--dmax", "175", "--out", &csv_s]),
            vec![csv.clone(), meta.clone()],
        ),
        (s(&["simulate", "--config", &small, "--trials", "1e7", "--seed", "7"]), vec![]),
        (
            s(&[
                "simulate",
                "--config",
                &small,
                "--trials",
                "1e5",
                "--attack",
                "two-bin",
                "--photons",
                "3",
                "--b",
                "4",
            ]),
            vec![],
        ),
        (s(&["oracle", "--case", "even-parity-symmetry"]), vec![]),
        (s(&["oracle", "--case", "holevo-audit", "--L", "4", "--draws", "1000"]), vec![]),
        (s(&["oracle", "--case", "single-photon", "--L", "6"]), vec![]),
        (s(&["oracle", "--case", "pattern-distribution", "--L", "4", "--n", "3", "--r", "2"]), vec![]),
    ];
    for (args, files) in cases {
        let t = Instant::now();
        let a = cli_run("1", &args, &files);
        let b = cli_run("4", &args, &files);
        let c = cli_run("4", &args, &files);
        o.check(
            a.0 == 0 && a == b && b == c,
            format!("{} (exit {}, {} bytes, {:.1} s)", args.join(" "), a.0, a.1.len(), t.elapsed().as_secs_f64()),
        );
    }
    o
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("reference-row regression at fixed parameters", reference_row_regression),
        ("optimizer parity", optimizer_parity),
        ("yes-no vs PNR gap over 0-175 km", detector_gap),
        ("max-min equals closed form", formula_equivalence),
        ("phi optimizer vs simplex grid", phi_oracle),
        ("Monte-Carlo vs analytic Q and E", monte_carlo),
        ("parity structure and Holevo audit", parity_structure),
        ("CLI determinism across thread counts", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        println!(
            "criterion {}: {} {name} ({:.1} s)",
            i + 1,
            if out.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        for d in &out.details {
            println!("    {d}");
        }
        if !out.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
