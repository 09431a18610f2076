use std::io::Write;
use std::path::{Path, PathBuf};

use rrdps::config::Provenance;
use rrdps::optimize::SweepPoint;
use rrdps::{Error, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 9] = ["distance_km", "Q", "E", "L", "mu", "n_th", "R_yesno", "R_pnr", "gap"];

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    provenance: &'a Provenance,
    result: &'a T,
}

/// Pretty JSON document with the provenance block, terminated by a newline.
pub fn json_string<T: Serialize>(provenance: &Provenance, result: &T) -> Result<String> {
    let env = Envelope { schema_version: SCHEMA_VERSION, provenance, result };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn print_json<T: Serialize>(provenance: &Provenance, result: &T) -> Result<()> {
    let s = json_string(provenance, result)?;
    let mut out = std::io::stdout().lock();
    out.write_all(s.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".into()
    }
}

pub fn csv_row(p: &SweepPoint) -> [String; 9] {
    let (q, e) = p.report_yesno.observables.map_or((f64::NAN, f64::NAN), |o| (o.q, o.e));
    [
        num(p.distance),
        num(q),
        num(e),
        p.params.l.to_string(),
        num(p.params.mu),
        p.params.n_th.to_string(),
        num(p.report_yesno.r),
        num(p.report_pnr.r),
        num(p.gap.unwrap_or(f64::NAN)),
    ]
}

/// CSV sink that writes each row as soon as it is produced.
pub struct CsvSink {
    writer: csv::Writer<Box<dyn Write>>,
}

impl CsvSink {
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(std::fs::File::create(p)?),
            None => Box::new(std::io::stdout()),
        };
        let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(inner);
        writer.write_record(CSV_HEADER).map_err(csv_err)?;
        writer.flush()?;
        Ok(Self { writer })
    }

    pub fn row(&mut self, p: &SweepPoint) -> Result<()> {
        self.writer.write_record(csv_row(p)).map_err(csv_err)?;
        self.writer.flush()?;
        Ok(())
    }

    /// Trailing `# status: ...` line for partial output.
    pub fn status(mut self, msg: &str) -> Result<()> {
        self.writer.flush()?;
        let mut inner = self.writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        writeln!(inner, "# status: {msg}")?;
        inner.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn meta_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Provenance for CSV output: a sidecar next to a file, a comment on stderr otherwise.
pub fn write_csv_provenance(csv: Option<&Path>, provenance: &Provenance) -> Result<()> {
    match csv {
        Some(p) => {
            let s = json_string(provenance, &serde_json::json!({ "csv": p.file_name().map(|f| f.to_string_lossy()) }))?;
            std::fs::write(meta_path(p), s)?;
        }
        None => {
            let line = serde_json::to_string(provenance).map_err(|e| Error::Io(e.to_string()))?;
            eprintln!("# provenance: {line}");
        }
    }
    Ok(())
}
