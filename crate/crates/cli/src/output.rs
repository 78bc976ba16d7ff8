//! Exit-code classification and provenance-stamped artifact writing.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Usage,
    Input,
    Numerical,
    EmptyInput,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Usage => 2,
            Failure::Input => 3,
            Failure::Numerical => 4,
            Failure::EmptyInput => 5,
        }
    }
}

/// An error tagged with the exit code it should produce.
#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub trait Classify<T> {
    fn or_fail(self, kind: Failure) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn or_fail(self, kind: Failure) -> CliResult<T> {
        self.map_err(|e| CliError { kind, error: e.into() })
    }
}

pub fn fail<T>(kind: Failure, msg: impl Into<String>) -> CliResult<T> {
    Err(CliError {
        kind,
        error: anyhow::Error::msg(msg.into()),
    })
}

/// Header lines written ahead of every artifact.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn lines(&self) -> String {
        format!(
            "# pinph {VERSION}\n# config_sha256 {}\n# seed {}\n",
            self.config_hash, self.seed
        )
    }

    /// Writes the header then whatever `body` emits, in one file write.
    pub fn write<F>(&self, path: &Path, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = self.lines().into_bytes();
        body(&mut buf)?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
        tracing::info!(path = %path.display(), "wrote");
        Ok(())
    }

    pub fn write_csv<I, R>(&self, path: &Path, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        self.write(path, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })
    }
}

/// Plain text with the header rendered as SVG/XML comments.
pub fn write_svg(prov: &Provenance, path: &Path, svg: &str) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "<!--")?;
    buf.extend_from_slice(prov.lines().as_bytes());
    writeln!(buf, "-->")?;
    buf.extend_from_slice(svg.as_bytes());
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    tracing::info!(path = %path.display(), "wrote");
    Ok(())
}

/// Shortest round-trip representation, switching to exponent form for very
/// small or very large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
