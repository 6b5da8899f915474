use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Summary of one command invocation.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 of the input bytes, hex encoded.
    pub input_digest: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub objectives: BTreeMap<String, f64>,
    pub status: String,
    pub gap: Option<f64>,
    pub node_count: Option<usize>,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(command: &str, input: &[u8]) -> Self {
        Self { command: command.into(), input_digest: digest(input), ..Self::default() }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.params.insert(key.into(), serde_json::to_value(value).expect("parameters serialize"));
        self
    }

    /// Writes `run_report.json` into `dir` and records it among the outputs.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("run_report.json");
        self.outputs.push(path.clone());
        let text = serde_json::to_string_pretty(self).expect("reports serialize");
        std::fs::write(&path, text + "\n").map_err(CliError::io(&path))?;
        Ok(path)
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seventeen significant digits, `.` as the decimal separator.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 726.8121, -1e-300, 1.0 / 3.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
