//! Output files, run manifests and CSV helpers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use bgrisk_core::sweep::format_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub input_file: Option<String>,
    pub input_sha256: Option<String>,
    pub tool_version: &'static str,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

/// Collects everything a command writes so a manifest can list it.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub written: Vec<PathBuf>,
    started: Instant,
}

impl Sink {
    pub fn new(out: Option<PathBuf>) -> Self {
        Sink {
            out,
            written: Vec::new(),
            started: Instant::now(),
        }
    }

    /// The main result: to `--out` when given, stdout otherwise.
    pub fn primary(&mut self, contents: &str) -> std::io::Result<()> {
        match self.out.clone() {
            Some(path) => self.file(&path, contents.as_bytes()),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(contents.as_bytes())?;
                stdout.flush()
            }
        }
    }

    pub fn file(&mut self, path: &Path, contents: &[u8]) -> std::io::Result<()> {
        write_atomic(path, contents)?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Writes `<out>.manifest.json` when output went to a file.
    pub fn finish(mut self, mut manifest: RunManifest) -> std::io::Result<()> {
        let Some(out) = self.out.clone() else {
            return Ok(());
        };
        manifest.outputs = self.written.iter().map(|p| p.display().to_string()).collect();
        manifest.wall_time_seconds = self.started.elapsed().as_secs_f64();
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        let mut name = out.into_os_string();
        name.push(".manifest.json");
        self.file(Path::new(&name), text.as_bytes())
    }
}

/// One CSV table with a fixed header.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut text = header.iter().map(|h| h.as_ref()).collect::<Vec<_>>().join(",");
        text.push('\n');
        Table { text }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub enum Cell {
    Num(f64),
    Opt(Option<f64>),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_sig(*x),
            Cell::Opt(x) => x.map(format_sig).unwrap_or_default(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }
}

pub fn text(s: impl Into<String>) -> Cell {
    Cell::Text(s.into())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serialises");
    s.push('\n');
    s
}
