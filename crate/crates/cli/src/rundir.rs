//! Run directories, emitted-file tracking and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use waveguide_nls::Result;

/// Creates `<base>/<name>`, suffixing `-2`, `-3`, ... on collision so an
/// existing run directory is never overwritten.
pub fn create_run_dir(base: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(base)?;
    let first = base.join(name);
    if try_create(&first)? {
        return Ok(first);
    }
    for k in 2.. {
        let candidate = base.join(format!("{name}-{k}"));
        if try_create(&candidate)? {
            return Ok(candidate);
        }
    }
    unreachable!("unbounded suffix search");
}

fn try_create(path: &Path) -> Result<bool> {
    match fs::create_dir(path) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(e.into()),
    }
}

/// Collects the files a command writes so they can be digested on success
/// or removed on failure.
pub struct Emitter {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    /// Writes `bytes` to `<dir>/<name>` and records the file.
    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    /// Runs `write` against `<dir>/<name>` and records the file; the file is
    /// removed again when `write` fails.
    pub fn emit_with<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&Path) -> Result<()>,
    {
        let path = self.dir.join(name);
        match write(&path) {
            Ok(()) => {
                self.files.push(path);
                Ok(())
            }
            Err(e) => {
                let _ = fs::remove_file(&path);
                Err(e)
            }
        }
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// Removes everything written so far (partial outputs of a failed run).
    pub fn remove_all(&mut self) {
        for f in self.files.drain(..) {
            let _ = fs::remove_file(f);
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    /// "ok", or the error message of an aborted run.
    pub status: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(FileDigest {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        bytes: bytes.len() as u64,
        sha256: format!("{:x}", hasher.finalize()),
    })
}

/// Writes `manifest.json` into the run directory.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// One RFC-4180 record; fields are joined with ',' and terminated by CRLF.
pub fn csv_record(fields: &[String]) -> String {
    let mut line = fields.join(",");
    line.push_str("\r\n");
    line
}

/// Shortest round-trip decimal form of a float, RFC-4180 '.' separator.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
