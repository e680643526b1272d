//! Run manifests: written before any result, finished with the wall-clock time.
//!
//! ```text
//! # subopt run manifest
//! # version: 0.1.0
//! # argv: ["subopt","experiment","--preset","paper-linear"]
//! # started_unix: 1760000000
//! # outputs: report.csv, slopes.csv
//! model = linear
//! ...
//! # elapsed_seconds: 152.3
//! ```
//!
//! The `key = value` body is the resolved configuration; for `experiment` it is a valid
//! `--config` file. `subopt replay` re-executes the recorded argv.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::Failure;

pub const FILE_NAME: &str = "manifest.txt";

pub struct ManifestGuard {
    path: PathBuf,
    started: Instant,
}

/// Creates `dir` and writes its manifest.
pub fn write(dir: &Path, argv: &[String], body: &str, outputs: &[&str]) -> Result<ManifestGuard, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(FILE_NAME);
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let argv_json = serde_json::to_string(argv).expect("strings serialize");
    let mut text = String::new();
    text.push_str("# subopt run manifest\n");
    text.push_str(&format!("# version: {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("# argv: {argv_json}\n"));
    text.push_str(&format!("# started_unix: {started_unix}\n"));
    text.push_str(&format!("# outputs: {}\n", outputs.join(", ")));
    text.push_str(body);
    if !body.ends_with('\n') {
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    Ok(ManifestGuard { path, started: Instant::now() })
}

impl ManifestGuard {
    /// Appends the elapsed wall-clock time.
    pub fn finish(self) -> Result<(), Failure> {
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "# elapsed_seconds: {:.3}", self.started.elapsed().as_secs_f64())?;
        Ok(())
    }
}

/// The argv recorded in a manifest.
pub fn read_argv(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("# argv:"))
        .ok_or_else(|| Failure::usage(format!("{} has no recorded argv", path.display())))?;
    serde_json::from_str(line.trim()).map_err(|e| Failure::usage(format!("bad argv line in {}: {e}", path.display())))
}

/// Replaces (or appends) the value of `--out-dir`.
pub fn with_out_dir(mut argv: Vec<String>, dir: &Path) -> Vec<String> {
    let value = dir.display().to_string();
    if let Some(k) = argv.iter().position(|a| a == "--out-dir") {
        if k + 1 < argv.len() {
            argv[k + 1] = value;
            return argv;
        }
        argv.truncate(k);
    }
    if let Some(k) = argv.iter().position(|a| a.starts_with("--out-dir=")) {
        argv[k] = format!("--out-dir={value}");
        return argv;
    }
    argv.push("--out-dir".into());
    argv.push(value);
    argv
}
