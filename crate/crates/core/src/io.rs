//! File formats: POVM, outcome statistics, reconstruction diagnostics,
//! fidelity reports and Q-function grids.
//!
//! CSV files start with `#` comment lines carrying tool version and the
//! configuration hash. Numbers are written with 17 significant digits so a
//! file read back reproduces the in-memory values exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{FidelityReport, OverlayPoint, QGrid};
use crate::config::RunConfig;
use crate::detector::{PovmMatrix, OUTCOMES};
use crate::error::{Error, Result};
use crate::reconstruction::{ReconstructionResult, Regularizer};
use crate::simulator::OutcomeStats;

pub const TOOL: &str = "pnr-tomo";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Normalisation tolerance applied to POVM files on load.
pub const POVM_FILE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            config_sha256: config.hash(),
        }
    }

    fn header(&self) -> String {
        format!(
            "# {} {} config-sha256={}\n",
            self.tool, self.version, self.config_sha256
        )
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

/// Parses comment-stripped CSV text, checking the header. Returns the data
/// rows with their 1-based line numbers.
fn csv_rows(text: &str, expected: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(Error::Schema("missing header row".into()));
    }
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema(format!(
            "header {:?}, expected {:?}",
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected.len() {
            return Err(Error::Schema(format!(
                "line {line}: {} fields, expected {}",
                rec.len(),
                expected.len()
            )));
        }
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(
    line: u64,
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    rec[idx]
        .parse()
        .map_err(|e| Error::Schema(format!("line {line}: column {name}: {e}")))
}

const POVM_HEADER: [&str; 6] = ["m", "xi0", "xi1", "xi2", "xi3", "xi4"];

pub fn povm_to_csv(povm: &PovmMatrix, prov: &Provenance) -> String {
    let mut out = prov.header();
    out.push_str(&POVM_HEADER.join(","));
    out.push('\n');
    for m in 0..=povm.truncation() {
        let _ = write!(out, "{m}");
        for n in 0..OUTCOMES {
            let _ = write!(out, ",{}", num(povm.get(n, m)));
        }
        out.push('\n');
    }
    out
}

pub fn povm_from_csv(text: &str) -> Result<PovmMatrix> {
    let rows = csv_rows(text, &POVM_HEADER)?;
    let mut values = DMatrix::zeros(OUTCOMES, rows.len());
    for (idx, (line, rec)) in rows.iter().enumerate() {
        let m: usize = field(*line, rec, 0, "m")?;
        if m != idx {
            return Err(Error::Schema(format!(
                "line {line}: expected m={idx}, found {m}"
            )));
        }
        for n in 0..OUTCOMES {
            values[(n, m)] = field(*line, rec, n + 1, POVM_HEADER[n + 1])?;
        }
    }
    PovmMatrix::from_matrix(values, POVM_FILE_TOLERANCE)
}

const STATS_HEADER: [&str; 8] = [
    "j",
    "mean_photons",
    "gated_pulses",
    "c0",
    "c1",
    "c2",
    "c3",
    "c4",
];

pub fn stats_to_csv(stats: &OutcomeStats, prov: &Provenance) -> String {
    let mut out = prov.header();
    out.push_str(&STATS_HEADER.join(","));
    out.push('\n');
    for j in 0..stats.probes() {
        let _ = write!(
            out,
            "{j},{},{}",
            num(stats.mean_photons[j]),
            stats.gated_pulses(j)
        );
        for c in stats.counts[j] {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn stats_from_csv(text: &str) -> Result<OutcomeStats> {
    let rows = csv_rows(text, &STATS_HEADER)?;
    let mut means = Vec::with_capacity(rows.len());
    let mut counts = Vec::with_capacity(rows.len());
    for (idx, (line, rec)) in rows.iter().enumerate() {
        let j: usize = field(*line, rec, 0, "j")?;
        if j != idx {
            return Err(Error::Schema(format!(
                "line {line}: expected j={idx}, found {j}"
            )));
        }
        let mean: f64 = field(*line, rec, 1, "mean_photons")?;
        let gated: u64 = field(*line, rec, 2, "gated_pulses")?;
        let mut c = [0u64; OUTCOMES];
        for n in 0..OUTCOMES {
            c[n] = field(*line, rec, n + 3, STATS_HEADER[n + 3])?;
        }
        if c.iter().sum::<u64>() != gated {
            return Err(Error::Schema(format!(
                "line {line}: counts sum to {} but gated_pulses is {gated}",
                c.iter().sum::<u64>()
            )));
        }
        means.push(mean);
        counts.push(c);
    }
    OutcomeStats::from_counts(means, counts).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(msg),
        other => Error::Schema(other.to_string()),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsProbeEntry {
    pub j: usize,
    pub mean_photons: f64,
    pub gated_pulses: u64,
    pub offered_pulses: u64,
    pub throughput: f64,
    pub counts: [u64; OUTCOMES],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsDocument {
    pub provenance: Provenance,
    pub config: serde_json::Value,
    pub probes: Vec<StatsProbeEntry>,
}

pub fn stats_to_json(stats: &OutcomeStats, config: &RunConfig) -> String {
    let throughput = stats.throughput();
    let doc = StatsDocument {
        provenance: Provenance::new(config),
        config: serde_json::to_value(config).expect("configuration serialises"),
        probes: (0..stats.probes())
            .map(|j| StatsProbeEntry {
                j,
                mean_photons: stats.mean_photons[j],
                gated_pulses: stats.gated_pulses(j),
                offered_pulses: stats.offered_pulses[j],
                throughput: throughput[j],
                counts: stats.counts[j],
            })
            .collect(),
    };
    to_json(&doc)
}

pub fn stats_from_json(text: &str) -> Result<OutcomeStats> {
    let doc: StatsDocument =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    for (idx, p) in doc.probes.iter().enumerate() {
        if p.j != idx {
            return Err(Error::Schema(format!("probe entry {idx} has j={}", p.j)));
        }
        if p.counts.iter().sum::<u64>() != p.gated_pulses {
            return Err(Error::Schema(format!(
                "probe entry {idx}: counts do not sum to gated_pulses"
            )));
        }
    }
    let stats = OutcomeStats {
        mean_photons: doc.probes.iter().map(|p| p.mean_photons).collect(),
        counts: doc.probes.iter().map(|p| p.counts).collect(),
        offered_pulses: doc.probes.iter().map(|p| p.offered_pulses).collect(),
    };
    stats.validate()?;
    Ok(stats)
}

/// Reads statistics as JSON when the extension is `.json`, CSV otherwise.
pub fn load_stats(path: &Path) -> Result<OutcomeStats> {
    let text = read_file(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        stats_from_json(&text)
    } else {
        stats_from_csv(&text)
    };
    parsed.map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn load_povm(path: &Path) -> Result<PovmMatrix> {
    povm_from_csv(&read_file(path)?).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Serialize)]
struct ReconstructionDocument<'a> {
    provenance: &'a Provenance,
    converged: bool,
    truncation: usize,
    smoothing_weight: f64,
    regularizer: Regularizer,
    objective_value: f64,
    kkt_residual: f64,
    iterations: usize,
    polished: bool,
    normalization_error: f64,
    /// `residuals[j][n]`.
    residuals: Vec<[f64; OUTCOMES]>,
}

pub fn reconstruction_to_json(
    result: &ReconstructionResult,
    converged: bool,
    prov: &Provenance,
) -> String {
    let doc = ReconstructionDocument {
        provenance: prov,
        converged,
        truncation: result.povm.truncation(),
        smoothing_weight: result.smoothing_weight,
        regularizer: result.regularizer,
        objective_value: result.objective_value,
        kkt_residual: result.kkt_residual,
        iterations: result.iterations,
        polished: result.polished,
        normalization_error: result.povm.normalization_error(),
        residuals: (0..result.residuals.ncols())
            .map(|j| std::array::from_fn(|n| result.residuals[(n, j)]))
            .collect(),
    };
    to_json(&doc)
}

#[derive(Debug, Serialize)]
struct FidelityDocument<'a> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    report: &'a FidelityReport,
}

pub fn fidelity_to_json(report: &FidelityReport, prov: &Provenance) -> String {
    to_json(&FidelityDocument {
        provenance: prov,
        report,
    })
}

pub fn fidelity_from_json(text: &str) -> Result<FidelityReport> {
    serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
}

pub fn qgrid_to_csv(grid: &QGrid, prov: &Provenance) -> String {
    let mut out = prov.header();
    out.push_str("re,im,q0,q1,q2,q3,q4\n");
    for (i, &re) in grid.axis.iter().enumerate() {
        for (k, &im) in grid.axis.iter().enumerate() {
            let _ = write!(out, "{},{}", num(re), num(im));
            for n in 0..OUTCOMES {
                let _ = write!(out, ",{}", num(grid.value(n, i, k)));
            }
            out.push('\n');
        }
    }
    out
}

pub fn overlay_to_csv(points: &[OverlayPoint], prov: &Provenance) -> String {
    let mut out = prov.header();
    out.push_str("j,mean_photons,re,im,q0,q1,q2,q3,q4\n");
    for p in points {
        let _ = write!(
            out,
            "{},{},{},{}",
            p.j,
            num(p.mean_photons),
            num(p.re),
            num(0.0)
        );
        for q in p.q {
            let _ = write!(out, ",{}", num(q));
        }
        out.push('\n');
    }
    out
}
