//! `rrdps` command-line tool.

mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rrdps::config::{Provenance, RunConfig};
use rrdps::keyrate::{keyrate_pnr, rate_report};
use rrdps::optimize::{distance_grid, sweep_point, SweepMode};
use rrdps::oracle::{self, FockState};
use rrdps::sim::{self, BinSpec};
use rrdps::{phi, DetectorModel, Error, KeyRateReport, PhiCache, ProtocolParams, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rrdps", version, about = "Key rates, parameter search and simulation for RRDPS QKD")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximize the phase-error entropy bound phi(N, L).
    Phi {
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "L")]
        l: usize,
        /// Also evaluate on a simplex grid.
        #[arg(long, requires = "grid")]
        bruteforce: bool,
        /// Grid spacing for --bruteforce.
        #[arg(long)]
        grid: Option<f64>,
    },
    /// Key-rate report for the protocol given in the config.
    Rate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        distance: Option<f64>,
        /// Add the photon-number-resolving baseline.
        #[arg(long)]
        pnr: bool,
    },
    /// Best (L, n_th, mu) at one distance.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        distance: f64,
        /// Also write a one-row CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance sweep written as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dmin: Option<f64>,
        #[arg(long)]
        dmax: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Optimize parameters at every distance.
        #[arg(long, conflicts_with = "fixed")]
        optimize: bool,
        /// Use the config's protocol at every distance.
        #[arg(long)]
        fixed: bool,
        /// CSV path (default: config output.csv, else stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo run of the protocol, or of a photon-number attack.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Number of trains; accepts forms like 1e7.
        #[arg(long, value_parser = parse_count)]
        trials: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        distance: Option<f64>,
        #[arg(long, value_enum)]
        attack: Option<AttackKind>,
        /// Photons per attack train.
        #[arg(long, default_value_t = 1)]
        photons: u8,
        /// Bin for single-bin attacks (1-based).
        #[arg(long, default_value_t = 1)]
        bin: usize,
        /// First bin of a two-bin attack (1-based).
        #[arg(long, default_value_t = 1)]
        a: usize,
        /// Second bin of a two-bin attack (1-based).
        #[arg(long, default_value_t = 2)]
        b: usize,
        /// Probability on bin a for two-bin attacks.
        #[arg(long, default_value_t = 0.5)]
        weight_a: f64,
    },
    /// Exact Fock-state checks on small trains.
    Oracle {
        #[arg(long, value_enum)]
        case: OracleCase,
        #[arg(long = "L")]
        l: Option<usize>,
        /// Photon number (largest photon number for the symmetry scan).
        #[arg(long)]
        n: Option<u8>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Interferometer delay for pattern-distribution.
        #[arg(long, default_value_t = 1)]
        r: usize,
        /// Occupied bin for pattern-distribution (1-based).
        #[arg(long, default_value_t = 1)]
        bin: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    SingleBin,
    TwoBin,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleCase {
    EvenParitySymmetry,
    HolevoAudit,
    SinglePhoton,
    PatternDistribution,
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if (1.0..=9.007_199_254_740_992e15).contains(&x) && x.fract() == 0.0 {
        Ok(x as u64)
    } else {
        Err(format!("count must be a positive integer, got {s}"))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Domain(_) | Error::Config(_) | Error::Limit(_) => 2,
        _ => 1,
    }
}

fn load(path: &Path, distance: Option<f64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(d) = distance {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidArgument(format!("distance must be finite and >= 0, got {d}")));
        }
        cfg.channel = cfg.channel.at_distance(d);
    }
    Ok(cfg)
}

fn protocol(cfg: &RunConfig) -> Result<ProtocolParams> {
    cfg.protocol.ok_or_else(|| Error::Config("config has no protocol section".into()))
}

#[derive(Serialize)]
struct PhiOutput {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "L")]
    l: usize,
    value: f64,
    argmax: Vec<f64>,
    iterations: usize,
    certificate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bruteforce: Option<Bruteforce>,
}

#[derive(Serialize)]
struct Bruteforce {
    grid: f64,
    value: f64,
    abs_diff: f64,
}

#[derive(Serialize)]
struct RateOutput {
    distance_km: f64,
    protocol: ProtocolParams,
    yesno: KeyRateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pnr: Option<KeyRateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<f64>,
    /// PNR formula on the yes-no observables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pnr_same_observables: Option<PnrFormula>,
}

#[derive(Serialize)]
struct PnrFormula {
    #[serde(rename = "LR")]
    lr: f64,
    #[serde(rename = "R")]
    r: f64,
}

#[derive(Serialize)]
struct SimOutput {
    distance_km: f64,
    protocol: ProtocolParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    attack: Option<AttackOutput>,
    stats: sim::SimStats,
}

#[derive(Serialize)]
struct AttackOutput {
    photons: u8,
    spec: BinSpec,
}

#[derive(Serialize)]
struct SinglePhotonOutput {
    #[serde(rename = "L")]
    l: usize,
    phi_1_l: f64,
    holevo: oracle::HolevoReport,
}

#[derive(Serialize)]
struct PatternEntry {
    pattern: oracle::DetectionPattern,
    probability: f64,
}

#[derive(Serialize)]
struct PatternOutput {
    #[serde(rename = "L")]
    l: usize,
    n: u8,
    r: usize,
    bin: usize,
    patterns: Vec<PatternEntry>,
}

fn run(cli: Cli, stop: Arc<AtomicBool>) -> Result<()> {
    match cli.command {
        Command::Phi { n, l, bruteforce, grid } => {
            let res = phi::phi(n, l)?;
            let bruteforce = match (bruteforce, grid) {
                (true, Some(g)) => {
                    let value = phi::phi_bruteforce(n, l, g)?;
                    Some(Bruteforce { grid: g, value, abs_diff: (value - res.value).abs() })
                }
                _ => None,
            };
            let out = PhiOutput {
                n,
                l,
                value: res.value,
                argmax: res.argmax.weights().to_vec(),
                iterations: res.iterations,
                certificate: res.certificate,
                bruteforce,
            };
            output::print_json(&Provenance::new(None, None), &out)
        }
        Command::Rate { config, distance, pnr } => {
            let cfg = load(&config, distance)?;
            let pp = protocol(&cfg)?;
            let phi = PhiCache::new().get(pp.n_th, pp.l)?;
            let yesno = rate_report(&cfg.channel, &pp, DetectorModel::YesNo, phi)?;
            let pnr = pnr.then(|| rate_report(&cfg.channel, &pp, DetectorModel::Pnr, phi)).transpose()?;
            let gap = pnr.as_ref().and_then(|p| (yesno.r > 0.0 && p.r > 0.0).then(|| 1.0 - yesno.r / p.r));
            let pnr_same_observables = match (&pnr, yesno.observables) {
                (Some(_), Some(o)) => {
                    let lr = keyrate_pnr(&o, cfg.channel.f, phi)?;
                    Some(PnrFormula { lr, r: lr / pp.l as f64 })
                }
                _ => None,
            };
            let out =
                RateOutput { distance_km: cfg.channel.distance, protocol: pp, yesno, pnr, gap, pnr_same_observables };
            output::print_json(&Provenance::new(Some(&cfg), None), &out)
        }
        Command::Optimize { config, distance, out } => {
            let cfg = load(&config, None)?;
            let point = sweep_point(&cfg.channel, distance, &SweepMode::Optimize(cfg.search), &PhiCache::new())?;
            let prov = Provenance::new(Some(&cfg), None);
            if let Some(path) = out.as_deref() {
                let mut sink = output::CsvSink::open(Some(path))?;
                sink.row(&point)?;
                sink.finish()?;
                output::write_csv_provenance(Some(path), &prov)?;
            }
            output::print_json(&prov, &point)
        }
        Command::Sweep { config, dmin, dmax, step, optimize, fixed, out } => {
            let cfg = load(&config, None)?;
            let s = cfg.sweep;
            let distances = distance_grid(dmin.unwrap_or(s.dmin), dmax.unwrap_or(s.dmax), step.unwrap_or(s.step))?;
            let optimize = optimize || (!fixed && s.optimize);
            let mode = if optimize { SweepMode::Optimize(cfg.search) } else { SweepMode::Fixed(protocol(&cfg)?) };
            let out = out.or_else(|| cfg.output.csv.clone());
            output::write_csv_provenance(out.as_deref(), &Provenance::new(Some(&cfg), None))?;
            match sweep::run(&cfg, &distances, &mode, out.as_deref(), &stop)? {
                sweep::Outcome::Complete => Ok(()),
                sweep::Outcome::Interrupted { done } => {
                    Err(Error::Io(format!("interrupted after {done} of {} distances", distances.len())))
                }
            }
        }
        Command::Simulate { config, trials, seed, distance, attack, photons, bin, a, b, weight_a } => {
            let cfg = load(&config, distance)?;
            let pp = protocol(&cfg)?;
            let seed = seed.unwrap_or(cfg.seed);
            let (stats, attack) = match attack {
                None => (sim::simulate_trains(&cfg.channel, &pp, trials, seed)?, None),
                Some(kind) => {
                    let spec = match kind {
                        AttackKind::SingleBin => BinSpec::SingleBin { bin },
                        AttackKind::TwoBin => BinSpec::TwoBin { a, b, weight_a },
                        AttackKind::Uniform => BinSpec::Uniform,
                    };
                    let st = sim::simulate_fock_attack(photons, &spec, &cfg.channel, &pp, trials, seed)?;
                    (st, Some(AttackOutput { photons, spec }))
                }
            };
            let out = SimOutput { distance_km: cfg.channel.distance, protocol: pp, attack, stats };
            output::print_json(&Provenance::new(Some(&cfg), Some(seed)), &out)
        }
        Command::Oracle { case, l, n, draws, seed, r, bin } => match case {
            OracleCase::EvenParitySymmetry => {
                let rep = oracle::even_parity_symmetry_scan(n.unwrap_or(4), l.unwrap_or(6), draws.unwrap_or(3), seed)?;
                output::print_json(&Provenance::new(None, Some(seed)), &rep)
            }
            OracleCase::HolevoAudit => {
                let rep = oracle::holevo_audit(l.unwrap_or(4), draws.unwrap_or(1000), seed)?;
                output::print_json(&Provenance::new(None, Some(seed)), &rep)
            }
            OracleCase::SinglePhoton => {
                let l = l.unwrap_or(4);
                let attack = oracle::saturating_single_photon_attack(l)?;
                let holevo = oracle::holevo_single_photon_attack(&attack)?;
                let out = SinglePhotonOutput { l, phi_1_l: phi::phi(1, l)?.value, holevo };
                output::print_json(&Provenance::new(None, None), &out)
            }
            OracleCase::PatternDistribution => {
                let (l, n) = (l.unwrap_or(4), n.unwrap_or(2));
                if bin == 0 || bin > l || r == 0 || r >= l {
                    return Err(Error::InvalidArgument(format!(
                        "need 1 <= bin <= L and 1 <= r < L, got bin={bin}, r={r}"
                    )));
                }
                let evolved = oracle::evolve(&FockState::single_bin(l, bin - 1, n)?, r)?;
                let patterns = oracle::pattern_distribution(&evolved, l, r)?
                    .into_iter()
                    .map(|(pattern, probability)| PatternEntry { pattern, probability })
                    .collect();
                output::print_json(&Provenance::new(None, None), &PatternOutput { l, n, r, bin, patterns })
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        let _ = ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst));
    }
    match run(cli, stop) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
