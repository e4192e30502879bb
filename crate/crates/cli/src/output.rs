//! Run manifest and the writers that tie every result file to it.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::failure::{Failure, RunResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    /// UTC time the run started, RFC 3339.
    pub created: String,
}

pub fn digest_file(path: &Path) -> RunResult<InputDigest> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path.display(), e))?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

impl Manifest {
    pub fn new(config: RunConfig) -> RunResult<Self> {
        let inputs = config.inputs().into_iter().map(digest_file).collect::<RunResult<_>>()?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed(),
            config,
            inputs,
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    pub fn load(path: &Path) -> RunResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path.display(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Input(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Fail if any recorded input has changed since the manifest was written.
    pub fn check_inputs(&self) -> RunResult {
        for recorded in &self.inputs {
            let now = digest_file(&recorded.path)?;
            if now.sha256 != recorded.sha256 {
                return Err(Failure::Input(format!(
                    "{} has changed since the manifest was written (sha256 {} != {})",
                    recorded.path.display(),
                    now.sha256,
                    recorded.sha256
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    manifest: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Output directory for one run.
pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> RunResult<Self> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir.display(), e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> RunResult {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| Failure::io(path.display(), e))
    }

    pub fn manifest(&self, manifest: &Manifest) -> RunResult {
        let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        text.push('\n');
        self.write_bytes(MANIFEST_NAME, text.as_bytes())
    }

    /// JSON object with a leading `"manifest"` field.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> RunResult {
        let mut text = serde_json::to_string_pretty(&Stamped { manifest: MANIFEST_NAME, body })
            .map_err(|e| Failure::Input(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// CSV preceded by a `# manifest=…` comment line; `fill` writes the rest.
    pub fn csv(&self, name: &str, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> RunResult {
        let path = self.path(name);
        let file = fs::File::create(&path).map_err(|e| Failure::io(path.display(), e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# manifest={MANIFEST_NAME}")
            .and_then(|_| fill(&mut w))
            .and_then(|_| w.flush())
            .map_err(|e| Failure::io(path.display(), e))
    }

    /// CSV from a header and rows of already-formatted fields.
    pub fn table(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> RunResult {
        self.csv(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(header)?;
            for row in rows {
                out.write_record(&row)?;
            }
            out.flush()
        })
    }

    /// SVG document with a manifest comment after the root element opens.
    pub fn svg(&self, name: &str, doc: &str) -> RunResult {
        let stamped = match doc.find('>') {
            Some(i) => format!("{}\n<!-- manifest: {MANIFEST_NAME} -->{}", &doc[..=i], &doc[i + 1..]),
            None => doc.to_string(),
        };
        self.write_bytes(name, stamped.as_bytes())
    }

    pub fn raw(&self, name: &str, bytes: &[u8]) -> RunResult {
        self.write_bytes(name, bytes)
    }
}

/// Format an optional number for CSV (blank when absent).
pub fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
