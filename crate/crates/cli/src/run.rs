//! Input hashing, staged outputs and the run manifest.
//!
//! Outputs are written into a hidden staging directory next to `--out` and
//! moved into place only when the command succeeds, so a failed run leaves
//! nothing behind. `run.json` is moved last.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use sift_core::pipeline::Precision;

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix_ms: u128,
    pub wall_seconds: f64,
}

/// Everything needed to rerun a command and check that it reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub argv: Vec<String>,
    /// Working directory the relative paths in `argv` refer to.
    pub cwd: String,
    /// Effective settings after flag, config-file and default resolution.
    pub config: Value,
    pub seed: u64,
    pub threads: usize,
    pub precision: Precision,
    /// Input path (as given) → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name under the output directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub timings: Timings,
    pub version: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Core(e.into()))
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Checks `path` against the manifest stored beside it, if that manifest
/// lists the file among its outputs.
fn verify_against_sibling_manifest(path: &Path, hash: &str) -> CliResult<()> {
    let (Some(dir), Some(name)) = (path.parent(), path.file_name()) else {
        return Ok(());
    };
    let manifest = dir.join(MANIFEST_NAME);
    if !manifest.is_file() || path.file_name() == manifest.file_name() {
        return Ok(());
    }
    let m = RunManifest::load(&manifest)?;
    match m.outputs.get(&*name.to_string_lossy()) {
        Some(expected) if expected != hash => Err(CliError::HashMismatch {
            path: path.display().to_string(),
            expected: expected.clone(),
            found: hash.to_string(),
        }),
        _ => Ok(()),
    }
}

/// One command execution: its inputs, staged outputs and timing.
pub struct Run {
    out: PathBuf,
    staging: PathBuf,
    inputs: BTreeMap<String, String>,
    input_paths: Vec<PathBuf>,
    outputs: Vec<String>,
    started: Instant,
    started_unix_ms: u128,
    committed: bool,
}

impl Run {
    pub fn new(out: &Path) -> CliResult<Self> {
        let out = std::path::absolute(out).map_err(|e| CliError::io(out, e))?;
        let name = out
            .file_name()
            .ok_or_else(|| CliError::Usage(format!("--out {} has no directory name", out.display())))?;
        let parent = out.parent().unwrap_or(Path::new("/"));
        let staging = parent.join(format!(".{}.staging-{}", name.to_string_lossy(), std::process::id()));
        Ok(Run {
            out,
            staging,
            inputs: BTreeMap::new(),
            input_paths: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
            started_unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
            committed: false,
        })
    }

    /// Registers an input file: it must exist, is hashed, and is verified
    /// against a sibling `run.json` when one lists it.
    pub fn input<'p>(&mut self, path: &'p Path) -> CliResult<&'p Path> {
        if !path.is_file() {
            return Err(CliError::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
        let hash = sha256_file(path)?;
        verify_against_sibling_manifest(path, &hash)?;
        self.inputs.insert(path.display().to_string(), hash);
        self.input_paths.push(std::path::absolute(path).map_err(|e| CliError::io(path, e))?);
        Ok(path)
    }

    pub fn input_opt<'p>(&mut self, path: Option<&'p Path>) -> CliResult<Option<&'p Path>> {
        path.map(|p| self.input(p)).transpose()
    }

    /// Staging path for an output file named `name`.
    pub fn output(&mut self, name: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.staging).map_err(|e| CliError::io(&self.staging, e))?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(self.staging.join(name))
    }

    /// Moves the staged outputs under `--out` and writes the manifest.
    pub fn commit(mut self, mut manifest: RunManifest) -> CliResult<RunManifest> {
        for name in self.outputs.iter().map(String::as_str).chain([MANIFEST_NAME]) {
            let target = self.out.join(name);
            if self.input_paths.contains(&target) {
                return Err(CliError::Usage(format!(
                    "output {} would overwrite an input file",
                    target.display()
                )));
            }
        }
        manifest.inputs = self.inputs.clone();
        manifest.outputs = self
            .outputs
            .iter()
            .map(|n| Ok((n.clone(), sha256_file(&self.staging.join(n))?)))
            .collect::<CliResult<_>>()?;
        manifest.timings = Timings {
            started_unix_ms: self.started_unix_ms,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        std::fs::create_dir_all(&self.staging).map_err(|e| CliError::io(&self.staging, e))?;
        let manifest_path = self.staging.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Core(e.into()))?;
        text.push('\n');
        std::fs::write(&manifest_path, text).map_err(|e| CliError::io(&manifest_path, e))?;

        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        for name in self.outputs.iter().map(String::as_str).chain([MANIFEST_NAME]) {
            let (from, to) = (self.staging.join(name), self.out.join(name));
            std::fs::rename(&from, &to).map_err(|e| CliError::io(&to, e))?;
        }
        self.committed = true;
        let _ = std::fs::remove_dir(&self.staging);
        Ok(manifest)
    }
}

impl Drop for Run {
    fn drop(&mut self) {
        if !self.committed && self.staging.exists() {
            let _ = std::fs::remove_dir_all(&self.staging);
        }
    }
}
