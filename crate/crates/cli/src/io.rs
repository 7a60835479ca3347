use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tsfilter_core::TsDelayModel;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            path: path.into(),
            sha256: hex(&Sha256::digest(bytes)),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one invocation: what was read, what was written, and how.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: &impl Serialize) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: serde_json::to_value(parameters).unwrap_or(serde_json::Value::Null),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: impl Into<String>, bytes: &[u8]) {
        self.inputs.push(FileDigest::of(path, bytes));
    }

    /// Writes `bytes` atomically and lists the file as an output.
    pub fn emit(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.outputs.push(FileDigest::of(path.display().to_string(), bytes));
        Ok(())
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.wall_time = self.started.map_or(0.0, |t| t.elapsed().as_secs_f64());
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

/// Write to a temporary file in the target directory, then rename over.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("cannot create directory `{}`", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("cannot create a temporary file in `{}`", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write `{}`", path.display()))?;
    Ok(())
}

pub fn read_input(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {what} file `{}`", path.display()))
}

/// Loads and validates a model; `None` selects the bundled Example 1 plant.
pub fn load_model(path: Option<&Path>, manifest: &mut RunManifest) -> Result<TsDelayModel> {
    let (label, text) = match path {
        Some(p) => {
            let bytes = read_input(p, "model")?;
            let text = String::from_utf8(bytes).with_context(|| format!("model file `{}` is not UTF-8", p.display()))?;
            (p.display().to_string(), text)
        }
        None => ("<bundled example1>".to_string(), tsfilter_core::EXAMPLE1_JSON.to_string()),
    };
    manifest.input(label.clone(), text.as_bytes());
    let model = TsDelayModel::from_json(&text).with_context(|| format!("cannot parse model `{label}`"))?;
    model
        .ensure_valid()
        .with_context(|| format!("model `{label}` failed validation"))?;
    Ok(model)
}

/// `<out>.manifest.json` next to the main output.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
