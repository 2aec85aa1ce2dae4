//! Output bookkeeping: atomic writes, per-stage manifests carrying content
//! hashes, and verification of upstream artifacts against those hashes.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use aqp_core::hash::{file_hash, sha256_hex};
use serde::{Deserialize, Serialize};

/// Command failure, split by exit code: bad input (1) or runtime fault (2).
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn payload(&self) -> serde_json::Value {
        let (kind, err) = match self {
            Failure::Validation(e) => ("validation", e),
            Failure::Runtime(e) => ("runtime", e),
        };
        serde_json::json!({ "error": kind, "message": chain_message(err) })
    }
}

/// Joins the error chain with ": ", skipping causes whose text the previous
/// link already embeds.
fn chain_message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !prev.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        prev = text;
    }
    out
}

pub type CmdResult<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn invalid(self, ctx: impl Display) -> CmdResult<T>;
    fn runtime(self, ctx: impl Display) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self, ctx: impl Display) -> CmdResult<T> {
        self.map_err(|e| Failure::Validation(e.into().context(ctx.to_string())))
    }

    fn runtime(self, ctx: impl Display) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into().context(ctx.to_string())))
    }
}

pub fn invalid<T>(msg: impl Display) -> CmdResult<T> {
    Err(Failure::Validation(anyhow::anyhow!("{msg}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    /// Role name to content hash of each upstream artifact.
    pub inputs: BTreeMap<String, String>,
    /// Path relative to the manifest's directory to content hash.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub info: serde_json::Value,
}

pub fn manifest_name(stage: &str) -> String {
    format!("{stage}.manifest.json")
}

pub fn read_manifest(dir: &Path, stage: &str) -> CmdResult<Manifest> {
    let path = dir.join(manifest_name(stage));
    let text = std::fs::read_to_string(&path).invalid(format!(
        "missing {} (run the {stage} stage first)",
        path.display()
    ))?;
    serde_json::from_str(&text).invalid(format!("malformed {}", path.display()))
}

/// Files written by one command. Everything is removed again unless
/// [`Outputs::commit`] is called, so a failed command leaves no partial
/// artifacts behind.
pub struct Outputs {
    root: PathBuf,
    written: Vec<PathBuf>,
    hashes: BTreeMap<String, String>,
    committed: bool,
}

impl Outputs {
    pub fn new(root: &Path) -> CmdResult<Self> {
        std::fs::create_dir_all(root).runtime(format!("cannot create {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            hashes: BTreeMap::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CmdResult<PathBuf> {
        let path = self.root.join(rel);
        let dir = path.parent().unwrap_or(&self.root).to_path_buf();
        std::fs::create_dir_all(&dir).runtime(format!("cannot create {}", dir.display()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).runtime("cannot create temporary file")?;
        tmp.write_all(bytes).runtime(format!("cannot write {}", path.display()))?;
        tmp.persist(&path).runtime(format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        self.hashes.insert(rel.to_owned(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CmdResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).runtime("cannot serialize output")?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Writes `<stage>.manifest.json` listing every output so far.
    pub fn write_manifest(
        &mut self,
        stage: &str,
        inputs: BTreeMap<String, String>,
        info: serde_json::Value,
    ) -> CmdResult<PathBuf> {
        let manifest = Manifest {
            stage: stage.to_owned(),
            inputs,
            outputs: self.hashes.clone(),
            info,
        };
        self.write_json(&manifest_name(stage), &manifest)
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Content hash of `path`, checked against any manifest in its directory or
/// the one above that lists it as an output.
pub fn verify_artifact(path: &Path) -> CmdResult<String> {
    let hash = file_hash(path).invalid(format!("cannot read {}", path.display()))?;
    let mut dirs = Vec::new();
    if let Some(p) = path.parent() {
        dirs.push(p.to_path_buf());
        if let Some(pp) = p.parent() {
            dirs.push(pp.to_path_buf());
        }
    }
    for dir in dirs {
        let Ok(rel) = path.strip_prefix(&dir) else { continue };
        let rel = rel.to_string_lossy().replace('\\', "/");
        let Ok(entries) = std::fs::read_dir(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir }) else {
            continue;
        };
        let mut manifests: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".manifest.json"))
            .collect();
        manifests.sort();
        for m in manifests {
            let Ok(text) = std::fs::read_to_string(&m) else { continue };
            let Ok(manifest) = serde_json::from_str::<Manifest>(&text) else { continue };
            if let Some(expected) = manifest.outputs.get(&rel) {
                if *expected != hash {
                    return invalid(format!(
                        "{} does not match the hash recorded by the {} stage; rerun that stage",
                        path.display(),
                        manifest.stage
                    ));
                }
                return Ok(hash);
            }
        }
    }
    log::warn!("{} is not listed in any manifest; hash not verified", path.display());
    Ok(hash)
}
