//! Run manifests: a JSON record of what a command read, how it was invoked
//! and what it counted, written next to its outputs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub data_versions: BTreeMap<&'static str, String>,
    pub subcommand: String,
    pub args: Vec<String>,
    /// Input path -> sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub counters: BTreeMap<String, u64>,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The only field that varies between identical runs.
    pub timing: Timing,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

pub fn data_versions() -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        (
            "zh-numerals",
            pronspace::normalize::ZhNumberTable::default()
                .version()
                .to_owned(),
        ),
        (
            "g2p-rules",
            pronspace::convert::G2P_RULES_VERSION.to_owned(),
        ),
        (
            "subword-model",
            format!("v{}", pronspace::subword::MODEL_VERSION),
        ),
    ])
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Collects manifest data over the course of one command.
pub struct Recorder {
    started: Instant,
    subcommand: String,
    args: Vec<String>,
    inputs: BTreeMap<String, String>,
    counters: BTreeMap<String, u64>,
    path: Option<PathBuf>,
}

impl Recorder {
    pub fn new(subcommand: &str, args: Vec<String>) -> Self {
        Self {
            started: Instant::now(),
            subcommand: subcommand.to_owned(),
            args,
            inputs: BTreeMap::new(),
            counters: BTreeMap::new(),
            path: None,
        }
    }

    pub fn set_path(&mut self, path: Option<PathBuf>) {
        self.path = path;
    }

    /// Records the checksum of an input file.
    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        let sum = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), sum);
        Ok(())
    }

    pub fn count(&mut self, name: &str, value: u64) {
        self.counters.insert(name.to_owned(), value);
    }

    fn manifest(&self, error: Option<String>) -> RunManifest {
        RunManifest {
            tool: "pronspace",
            tool_version: TOOL_VERSION,
            data_versions: data_versions(),
            subcommand: self.subcommand.clone(),
            args: self.args.clone(),
            inputs: self.inputs.clone(),
            counters: self.counters.clone(),
            status: if error.is_none() { "ok" } else { "failed" },
            error,
            timing: Timing {
                wall_seconds: self.started.elapsed().as_secs_f64(),
            },
        }
    }

    /// Writes the manifest if a destination was configured.
    pub fn finish(&self, error: Option<String>) -> io::Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut json = serde_json::to_vec_pretty(&self.manifest(error))?;
        json.push(b'\n');
        write_atomic(path, &json)
    }
}
