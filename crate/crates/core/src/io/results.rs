//! Result files and the manifest that indexes them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::NodeMetadata;
use super::tables::{write_calibration_history, write_flagged_edges, write_matrix, write_transitions, write_xi};
use crate::calibration::IterationRecord;
use crate::domain::{Dimension, FlowTriple, TransitionRecord};
use crate::error::{LfnError, Result};
use crate::shocks::ShockReport;
use crate::similarity::NuMatrices;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory.
    pub file: String,
    pub sha256: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| LfnError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Writes result files into one directory and records each in the manifest.
pub struct ResultWriter {
    dir: PathBuf,
    labels: Option<NodeMetadata>,
    manifest: Manifest,
}

impl ResultWriter {
    pub fn new(dir: &Path, config_hash: impl Into<String>, labels: Option<NodeMetadata>) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| LfnError::io(dir, e))?;
        Ok(ResultWriter {
            dir: dir.to_path_buf(),
            labels,
            manifest: Manifest {
                config_hash: config_hash.into(),
                files: Vec::new(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str, seed: Option<u64>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.manifest.files.retain(|e| e.file != name);
        self.manifest.files.push(ManifestEntry {
            file: name.to_owned(),
            sha256: file_sha256(&path)?,
            seed,
        });
        Ok(path)
    }

    fn labels(&self, dim: Dimension) -> Option<&[String]> {
        self.labels.as_ref().map(|l| l.get(dim))
    }

    /// One `{prefix}_{dimension}.csv` per dimension.
    pub fn flows(&mut self, prefix: &str, flows: &FlowTriple, seed: Option<u64>) -> Result<()> {
        for dim in Dimension::ALL {
            let name = format!("{prefix}_{dim}.csv");
            write_matrix(&self.dir.join(&name), &flows.get(dim).0, self.labels(dim))?;
            self.record(&name, seed)?;
        }
        Ok(())
    }

    pub fn nu(&mut self, nu: &NuMatrices) -> Result<()> {
        for dim in Dimension::ALL {
            let name = format!("nu_{dim}.csv");
            write_matrix(&self.dir.join(&name), nu.get(dim), self.labels(dim))?;
            self.record(&name, None)?;
        }
        Ok(())
    }

    pub fn transitions(&mut self, name: &str, log: &[TransitionRecord], seed: u64) -> Result<()> {
        write_transitions(&self.dir.join(name), log)?;
        self.record(name, Some(seed))?;
        Ok(())
    }

    pub fn xi(&mut self, name: &str, xi: &[f64], seed: u64) -> Result<()> {
        write_xi(&self.dir.join(name), xi)?;
        self.record(name, Some(seed))?;
        Ok(())
    }

    pub fn calibration_history(&mut self, history: &[IterationRecord]) -> Result<()> {
        let name = "calibration_history.csv";
        write_calibration_history(&self.dir.join(name), history)?;
        self.record(name, None)?;
        Ok(())
    }

    /// The report as JSON plus one flagged-edge CSV per dimension.
    pub fn shock_report(&mut self, report: &ShockReport) -> Result<()> {
        self.json("shock_report.json", report, None)?;
        for d in &report.dimensions {
            let name = format!("flagged_edges_{}.csv", d.dimension);
            let labels: Vec<String> = self
                .labels(d.dimension)
                .map(<[String]>::to_vec)
                .unwrap_or_default();
            write_flagged_edges(&self.dir.join(&name), &d.flagged, &labels)?;
            self.record(&name, None)?;
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T, seed: Option<u64>) -> Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value).expect("result serialises");
        fs::write(&path, text + "\n").map_err(|e| LfnError::io(&path, e))?;
        self.record(name, seed)?;
        Ok(())
    }

    /// Writes `manifest.json` and returns the manifest.
    pub fn finish(self) -> Result<Manifest> {
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        fs::write(&path, text + "\n").map_err(|e| LfnError::io(&path, e))?;
        Ok(self.manifest)
    }
}

/// Everything one simulation produced.
pub struct RunResults<'a> {
    pub seed: u64,
    pub flows: &'a FlowTriple,
    pub transitions: &'a [TransitionRecord],
    pub xi: &'a [f64],
}

/// Writes flows, transition logs and error histories of several runs, the
/// suite-mean flows, and the manifest.
pub fn write_results(
    dir: &Path,
    config_hash: &str,
    labels: Option<NodeMetadata>,
    runs: &[RunResults<'_>],
) -> Result<Manifest> {
    let mut w = ResultWriter::new(dir, config_hash, labels)?;
    for r in runs {
        w.flows(&format!("flows_seed{}", r.seed), r.flows, Some(r.seed))?;
        w.transitions(&format!("transitions_seed{}.csv", r.seed), r.transitions, r.seed)?;
        w.xi(&format!("xi_seed{}.csv", r.seed), r.xi, r.seed)?;
    }
    if !runs.is_empty() {
        let all: Vec<FlowTriple> = runs.iter().map(|r| r.flows.clone()).collect();
        w.flows("flows_mean", &FlowTriple::mean(&all)?, None)?;
    }
    w.finish()
}
