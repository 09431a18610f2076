use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use rrdps::config::RunConfig;
use rrdps::optimize::{sweep_point, SweepMode, SweepPoint};
use rrdps::{PhiCache, Result};

use crate::output::CsvSink;

pub const CACHE_ENV: &str = "RRDPS_CACHE_DIR";

/// Per-distance result store keyed by configuration hash and mode.
pub struct PointCache {
    dir: PathBuf,
}

impl PointCache {
    pub fn from_env(cfg: &RunConfig, mode: &SweepMode) -> Option<Self> {
        let root = std::env::var_os(CACHE_ENV).map(PathBuf::from).or_else(|| cfg.output.cache_dir.clone())?;
        let tag = match mode {
            SweepMode::Optimize(_) => "optimize",
            SweepMode::Fixed(_) => "fixed",
        };
        Some(Self { dir: root.join(format!("{}-{tag}", cfg.sha256())) })
    }

    fn path(&self, distance: f64) -> PathBuf {
        self.dir.join(format!("d_{distance:.6}.json"))
    }

    fn load(&self, distance: f64) -> Option<SweepPoint> {
        let text = std::fs::read_to_string(self.path(distance)).ok()?;
        serde_json::from_str::<SweepPoint>(&text).ok().filter(|p| p.distance == distance)
    }

    fn store(&self, p: &SweepPoint) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(".tmp-{}", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec(p).expect("sweep point serializes"))?;
        std::fs::rename(tmp, self.path(p.distance))?;
        Ok(())
    }
}

pub enum Outcome {
    Complete,
    Interrupted { done: usize },
}

/// Runs the distances in order, writing each row before starting the next.
/// Each point is itself parallel over train lengths.
pub fn run(
    cfg: &RunConfig,
    distances: &[f64],
    mode: &SweepMode,
    out: Option<&Path>,
    stop: &AtomicBool,
) -> Result<Outcome> {
    let phi = PhiCache::new();
    let store = PointCache::from_env(cfg, mode);
    let mut sink = CsvSink::open(out)?;
    for (i, &d) in distances.iter().enumerate() {
        if stop.load(Ordering::SeqCst) {
            sink.status(&format!("interrupted after {i} of {} distances", distances.len()))?;
            return Ok(Outcome::Interrupted { done: i });
        }
        let cached = store.as_ref().and_then(|s| s.load(d));
        let point = match cached {
            Some(p) => p,
            None => match sweep_point(&cfg.channel, d, mode, &phi) {
                Ok(p) => {
                    if let Some(s) = &store {
                        s.store(&p)?;
                    }
                    p
                }
                Err(e) => {
                    sink.status(&format!("error at distance {d}: {e}"))?;
                    return Err(e);
                }
            },
        };
        sink.row(&point)?;
    }
    sink.finish()?;
    Ok(Outcome::Complete)
}
