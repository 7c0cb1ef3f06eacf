use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub command: String,
    pub toolkit_version: String,
    pub root_seed: Option<u64>,
    pub config: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Collects outputs for one directory; every file is written atomically.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.dir.join(name);
        write_atomic(&target, contents)?;
        self.written.retain(|d| d.path != name);
        self.written.push(FileDigest {
            path: name.to_owned(),
            sha256: sha256_hex(contents),
        });
        Ok(target)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        manifest.outputs = self.written;
        manifest.finished_at = now();
        let target = self.dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&target, text.as_bytes())?;
        Ok(target)
    }
}

pub fn write_atomic(target: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(target, e))?;
    tmp.persist(target).map_err(|e| CliError::io(target, e.error))?;
    Ok(())
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
