//! Run manifests: what a command read, wrote and was configured with.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub step: String,
    pub seconds: f64,
}

/// Everything needed to repeat a run: the command line, resolved
/// configuration and seed, and digests of every input and output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<StepTiming>,
    pub started_unix_seconds: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file's bytes; directories are digested entry by entry in
/// sorted order, so the digest of a cohort directory covers every file.
pub fn digest_path(path: &Path) -> Result<FileDigest> {
    let mut hasher = Sha256::new();
    hash_into(path, path, &mut hasher)?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
    })
}

fn hash_into(root: &Path, path: &Path, hasher: &mut Sha256) -> Result<()> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for e in entries {
            hash_into(root, &e, hasher)?;
        }
    } else {
        let rel = path.strip_prefix(root).unwrap_or(path);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update(std::fs::read(path).map_err(|e| Error::io(path, e))?);
    }
    Ok(())
}

/// Collects timings and file digests while a command runs.
#[derive(Debug)]
pub struct ManifestBuilder {
    manifest: RunManifest,
    step_start: Option<(String, Instant)>,
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(
        command: &str,
        args: Vec<String>,
        seed: u64,
        jobs: Option<usize>,
        config: &C,
    ) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        // serde_json::Value keeps object keys sorted, so this text is canonical
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        let started_unix_seconds = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(ManifestBuilder {
            manifest: RunManifest {
                tool: "spectrasep".into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                args,
                seed,
                jobs,
                config_hash,
                config,
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: Vec::new(),
                started_unix_seconds,
            },
            step_start: None,
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(digest_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(digest_path(path)?);
        Ok(())
    }

    /// Ends the running step, if any, and starts timing `name`.
    pub fn step(&mut self, name: &str) {
        self.finish_step();
        self.step_start = Some((name.to_string(), Instant::now()));
    }

    fn finish_step(&mut self) {
        if let Some((step, t)) = self.step_start.take() {
            self.manifest.timings.push(StepTiming {
                step,
                seconds: t.elapsed().as_secs_f64(),
            });
        }
    }

    pub fn finish(mut self) -> RunManifest {
        self.finish_step();
        self.manifest
    }
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn config_hash_ignores_field_order_and_tracks_values() {
        #[derive(Serialize)]
        struct A {
            x: u32,
            y: &'static str,
        }
        #[derive(Serialize)]
        struct B {
            y: &'static str,
            x: u32,
        }
        let a = ManifestBuilder::new("c", vec![], 0, None, &A { x: 1, y: "q" })
            .unwrap()
            .finish();
        let b = ManifestBuilder::new("c", vec![], 0, None, &B { y: "q", x: 1 })
            .unwrap()
            .finish();
        let c = ManifestBuilder::new("c", vec![], 0, None, &A { x: 2, y: "q" })
            .unwrap()
            .finish();
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
    }

    #[test]
    fn directory_digest_covers_contents_and_names() {
        let d = tempfile::tempdir().unwrap();
        std::fs::create_dir(d.path().join("sub")).unwrap();
        std::fs::write(d.path().join("sub/a.txt"), "1").unwrap();
        std::fs::write(d.path().join("b.txt"), "2").unwrap();
        let first = digest_path(d.path()).unwrap().sha256;
        assert_eq!(first, digest_path(d.path()).unwrap().sha256);
        std::fs::write(d.path().join("b.txt"), "3").unwrap();
        let second = digest_path(d.path()).unwrap().sha256;
        assert_ne!(first, second);
        std::fs::rename(d.path().join("b.txt"), d.path().join("c.txt")).unwrap();
        assert_ne!(second, digest_path(d.path()).unwrap().sha256);
    }

    #[test]
    fn timings_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut b =
            ManifestBuilder::new("synth", vec!["synth".into()], 7, Some(2), &serde_json::json!({"n": 3})).unwrap();
        b.step("generate");
        b.step("write");
        let m = b.finish();
        assert_eq!(
            m.timings.iter().map(|t| t.step.as_str()).collect::<Vec<_>>(),
            ["generate", "write"]
        );
        let p = dir.path().join(RUN_MANIFEST_FILE);
        m.save(&p).unwrap();
        assert_eq!(RunManifest::load(&p).unwrap(), m);
    }
}
