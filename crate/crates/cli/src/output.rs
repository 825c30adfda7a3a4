//! Input digests, atomic output files and the per-run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::failure::{internal, user, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fails with a user error if any referenced input is missing.
pub fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> CliResult<()> {
    for p in paths {
        if !p.exists() {
            return Err(user(format!("input `{}` does not exist", p.display())));
        }
    }
    Ok(())
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)
        .map_err(|e| internal(format!("cannot create `{}`: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| internal(format!("cannot create a temporary file in `{}`: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| internal(format!("cannot write `{}`: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| internal(format!("cannot move output into `{}`: {e}", path.display())))?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: Option<u64>,
    config: Value,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
    summary: &'a Map<String, Value>,
}

/// Book-keeping for one subcommand invocation.
pub struct Run {
    subcommand: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    summary: Map<String, Value>,
}

impl Run {
    pub fn new(subcommand: &'static str) -> Self {
        Run {
            subcommand,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            summary: Map::new(),
        }
    }

    /// Reads an input file and records its digest.
    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes =
            fs::read(path).map_err(|e| user(format!("cannot read `{}`: {e}", path.display())))?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path) -> CliResult<String> {
        String::from_utf8(self.read(path)?)
            .map_err(|_| user(format!("`{}` is not valid UTF-8", path.display())))
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| user(format!("cannot parse `{}`: {e}", path.display())))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        atomic_write(path, bytes)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(internal)?;
        bytes.push(b'\n');
        self.write(path, &bytes)
    }

    /// Adds a value to the manifest summary.
    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.to_string(), v);
    }

    pub fn finish(self, config: &impl Serialize, seed: Option<u64>, manifest: &Path) -> CliResult<()> {
        let m = Manifest {
            tool: "vocabdiff",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            seed,
            config: serde_json::to_value(config).map_err(internal)?,
            inputs: &self.inputs,
            outputs: &self.outputs,
            summary: &self.summary,
        };
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(internal)?;
        bytes.push(b'\n');
        atomic_write(manifest, &bytes)
    }
}

/// `<output>.manifest.json` unless overridden.
pub fn manifest_path(explicit: &Option<PathBuf>, output: Option<&Path>, subcommand: &str) -> PathBuf {
    match (explicit, output) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => {
            let mut s = out.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
        (None, None) => PathBuf::from(format!("{subcommand}.manifest.json")),
    }
}

/// Writes to standard output; a closed pipe is not an error.
pub fn print_stdout(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(internal(format!("cannot write to standard output: {e}")))
        }
        _ => Ok(()),
    }
}
