//! Run configuration: one TOML file with every field defaulted to the
//! calibrated detector, plus `dotted.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::Mesh;
use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::probes::ProbeLadder;
use crate::reconstruction::ReconstructionConfig;
use crate::simulator::SimulationConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub ladder: ProbeLadder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Truncation used by `theory`.
    pub theory_truncation: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            theory_truncation: 60,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub detector: DetectorParams,
    pub probes: ProbeConfig,
    pub simulation: SimulationConfig,
    pub reconstruction: ReconstructionConfig,
    pub analysis: Mesh,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses TOML text, applies overrides and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, value)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides).map_err(|e| match (e, path) {
            (Error::Config(msg), Some(p)) => Error::Config(format!("{}: {msg}", p.display())),
            (e, _) => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Parameter(msg) => Error::Config(msg),
            other => other,
        };
        self.detector
            .validate()
            .map_err(|e| wrap(e).prefixed("detector"))?;
        self.simulation
            .validate()
            .map_err(|e| wrap(e).prefixed("simulation"))?;
        self.reconstruction
            .validate()
            .map_err(|e| wrap(e).prefixed("reconstruction"))?;
        self.analysis
            .validate()
            .map_err(|e| wrap(e).prefixed("analysis"))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output directory
    /// is left out so relocated runs carry the same hash.
    pub fn hash(&self) -> String {
        let mut unplaced = self.clone();
        unplaced.output.dir = PathBuf::new();
        let canonical = serde_json::to_vec(&unplaced).expect("configuration serialises");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl Error {
    fn prefixed(self, section: &str) -> Error {
        match self {
            Error::Config(msg) => Error::Config(format!("[{section}] {msg}")),
            other => other,
        }
    }
}

/// Parses `key=value` into its parts.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not KEY=VALUE")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Sets `a.b.c = value` in a TOML table. The value is read as a TOML
/// literal, falling back to a plain string.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad key {key:?}")));
    }
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::GatingPolicy;

    #[test]
    fn empty_config_is_calibrated_default() {
        let c = RunConfig::from_toml_with_overrides("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.detector, DetectorParams::calibrated());
        assert_eq!(c.simulation.rep_rate, 9.0e4);
        assert_eq!(c.probes.ladder.means().len(), 18);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml_with_overrides(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn dotted_overrides() {
        let ov = vec![
            parse_override("simulation.gating=naive").unwrap(),
            parse_override("simulation.seed = 99").unwrap(),
            parse_override("detector.eta=[0.5,0.5,0.5,0.5]").unwrap(),
            parse_override("reconstruction.smoothing_weight=0.5").unwrap(),
            parse_override("probes.ladder=list:1,2").unwrap(),
        ];
        let c = RunConfig::from_toml_with_overrides("[simulation]\nseed = 4\n", &ov).unwrap();
        assert_eq!(c.simulation.gating, GatingPolicy::Naive);
        assert_eq!(c.simulation.seed, 99);
        assert_eq!(c.detector.eta, [0.5; 4]);
        assert_eq!(c.reconstruction.smoothing_weight, 0.5);
        assert_eq!(c.probes.ladder.means(), vec![1.0, 2.0]);
        assert_ne!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn errors_name_the_problem() {
        let e =
            RunConfig::from_toml_with_overrides("[detector]\neta = [2.0, 0.1, 0.1, 0.1]\n", &[])
                .unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("eta")), "{e}");
        let e = RunConfig::from_toml_with_overrides("[simulation]\nbogus = 1\n", &[]).unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("bogus")), "{e}");
        let e = RunConfig::from_toml_with_overrides("[simulation\n", &[]).unwrap_err();
        assert!(
            matches!(&e, Error::Config(m) if m.contains("line 1")),
            "{e}"
        );
        assert!(parse_override("novalue").is_err());
        let mut t = toml::Table::new();
        assert!(set_dotted(&mut t, "a..b", "1").is_err());
    }
}
