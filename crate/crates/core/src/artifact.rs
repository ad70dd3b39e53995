//! Output files. Every CSV starts with a `#` comment line carrying the
//! config hash and seed that produced it.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::Result;

/// Identifies the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed,
        }
    }

    pub fn header_line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }

    /// Parses a header produced by [`Provenance::header_line`].
    pub fn parse_header(line: &str) -> Option<Self> {
        let rest = line.strip_prefix("# ")?;
        let mut hash = None;
        let mut seed = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=')? {
                ("config_hash", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self::new(hash?, seed?))
    }
}

/// Opens `path` for CSV output and writes the provenance comment.
pub fn csv_writer(path: &Path, prov: &Provenance) -> Result<csv::Writer<File>> {
    let mut f = File::create(path)?;
    writeln!(f, "{}", prov.header_line())?;
    Ok(csv::Writer::from_writer(f))
}

/// Reader that skips the provenance comment.
pub fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?)
}
