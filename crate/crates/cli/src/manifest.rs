use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FORMAT: &str = "sta-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation, written into its output directory
/// before any work starts and rewritten when the command finishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    /// SHA-256 of the resolved config.
    pub config_hash: String,
    pub output_dir: PathBuf,
    /// Input files by role.
    pub inputs: Vec<(String, PathBuf)>,
    pub threads: usize,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// "running", "ok", or the exit code and message of a failure.
    pub status: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)
}

impl RunManifest {
    /// Creates `<root>/<command>-<hash12>-<timestamp>` and writes the manifest.
    pub fn begin(
        root: &Path,
        command: &str,
        config_path: Option<&Path>,
        seed: u64,
        config_hash: &str,
        inputs: Vec<(String, PathBuf)>,
        threads: usize,
    ) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(format!("{}: {e}", root.display())))?;
        let stamp = Utc::now().format("%Y%m%dT%H%M%S%6fZ").to_string();
        let base = format!("{command}-{}-{stamp}", &config_hash[..12]);
        let mut dir = root.join(&base);
        let mut n = 1;
        // create_dir (not _all) so two runs in the same microsecond never share a directory
        loop {
            match fs::create_dir(&dir) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    dir = root.join(format!("{base}-{n}"));
                    n += 1;
                }
                Err(e) => return Err(CliError::io(format!("{}: {e}", dir.display()))),
            }
        }
        let m = RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            command: command.into(),
            config_path: config_path.map(Path::to_path_buf),
            seed,
            config_hash: config_hash.into(),
            output_dir: dir,
            inputs,
            threads,
            started_at: now(),
            finished_at: None,
            status: "running".into(),
        };
        m.write()?;
        Ok(m)
    }

    pub fn path(&self) -> PathBuf {
        self.output_dir.join(MANIFEST_FILE)
    }

    pub fn write(&self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::io(e.to_string()))?;
        fs::write(self.path(), text + "\n").map_err(|e| CliError::io(format!("{}: {e}", self.path().display())))
    }

    pub fn finish(&mut self, outcome: &CliResult<()>) -> CliResult<()> {
        self.finished_at = Some(now());
        self.status = match outcome {
            Ok(()) => "ok".into(),
            Err(e) => format!("failed ({}): {}", e.code, e.message),
        };
        self.write()
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn begin_writes_before_work_and_names_are_unique() {
        let root = std::env::temp_dir().join(format!("sta-manifest-{}", std::process::id()));
        let hash = "0123456789abcdef".repeat(4);
        let a = RunManifest::begin(&root, "train", None, 7, &hash, vec![], 1).unwrap();
        let b = RunManifest::begin(&root, "train", None, 7, &hash, vec![], 1).unwrap();
        assert_ne!(a.output_dir, b.output_dir);
        let name = a.output_dir.file_name().unwrap().to_str().unwrap().to_string();
        assert!(name.starts_with("train-0123456789ab-"), "{name}");
        let on_disk = RunManifest::load(&a.path()).unwrap();
        assert_eq!(on_disk.status, "running");
        assert_eq!(on_disk, a);
        let mut a = a;
        a.finish(&Err(CliError::config("bad"))).unwrap();
        let on_disk = RunManifest::load(&a.path()).unwrap();
        assert!(on_disk.status.starts_with("failed (2)"));
        assert!(on_disk.finished_at.is_some());
        fs::remove_dir_all(&root).ok();
    }
}
