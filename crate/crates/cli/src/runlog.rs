//! Per-run manifest: resolved configuration, seed and content hashes of
//! every input and output. No timestamps or absolute output paths, so two
//! identical runs write identical manifests.

use std::path::{Path, PathBuf};

use facediff::data::{base_dir, DatasetManifest};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(read(path)?)))
}

/// Tree hash of a dataset: the digest of `"<sha256>  <relative path>\n"`
/// lines for the manifest and every file it references, in path order.
pub fn dataset_hash(manifest_path: &Path) -> CliResult<String> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = base_dir(manifest_path);
    let mut files: Vec<String> = manifest
        .entries
        .iter()
        .flat_map(|e| [e.motion.clone(), e.features.clone()])
        .collect();
    files.sort();
    files.dedup();
    let mut h = Sha256::new();
    h.update(format!("{}  manifest\n", sha256_file(manifest_path)?));
    for f in files {
        h.update(format!("{}  {f}\n", sha256_file(&base.join(&f))?));
    }
    Ok(hex::encode(h.finalize()))
}

/// Every regular file below `dir`, relative and sorted, skipping the run
/// manifest itself.
fn list_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| CliError::Data(format!("{}: {e}", d.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| CliError::Data(format!("{}: {e}", d.display())))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).expect("below dir").to_path_buf());
            }
        }
    }
    out.retain(|p| p != Path::new(RUN_MANIFEST));
    out.sort();
    Ok(out)
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input_file(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn input_dataset(&mut self, manifest_path: &Path) -> CliResult<()> {
        self.inputs.push(FileHash {
            path: manifest_path.display().to_string(),
            sha256: dataset_hash(manifest_path)?,
        });
        Ok(())
    }

    /// One entry for a set of files below `root`, hashed like a dataset.
    pub fn input_tree(&mut self, root: &Path, files: &[PathBuf]) -> CliResult<()> {
        let mut h = Sha256::new();
        for f in files {
            let rel = f.strip_prefix(root).unwrap_or(f).to_string_lossy().replace('\\', "/");
            h.update(format!("{}  {rel}\n", sha256_file(f)?));
        }
        self.inputs.push(FileHash {
            path: root.display().to_string(),
            sha256: hex::encode(h.finalize()),
        });
        Ok(())
    }

    /// Hash everything in `out_dir` and write the manifest there.
    pub fn finish(mut self, out_dir: &Path) -> CliResult<()> {
        for rel in list_files(out_dir)? {
            let sha256 = sha256_file(&out_dir.join(&rel))?;
            self.outputs.push(FileHash {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256,
            });
        }
        let mut text = serde_json::to_string_pretty(&self).expect("run manifest serializes");
        text.push('\n');
        let path = out_dir.join(RUN_MANIFEST);
        std::fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
