//! Output helpers: deterministic CSV writing (17 significant digits for
//! every float) and the run summary printed to standard output.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use wdrocert_core::experiments::fmt_g17;

pub fn f17(v: f64) -> String {
    fmt_g17(v)
}

pub fn opt_f17(v: Option<f64>) -> String {
    match v {
        Some(x) => fmt_g17(x),
        None => fmt_g17(f64::NAN),
    }
}

/// θ vectors are a single CSV column with `;`-separated components.
pub fn theta_col(theta: &[f64]) -> String {
    theta.iter().map(|&t| fmt_g17(t)).collect::<Vec<_>>().join(";")
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 64 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    file.write_all(out.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Collects written files and one-line notes; prints a one-screen summary.
pub struct Summary {
    quiet: bool,
    lines: Vec<String>,
    files: Vec<PathBuf>,
}

impl Summary {
    pub fn new(quiet: bool) -> Self {
        Self {
            quiet,
            lines: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn wrote(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    pub fn finish(self) {
        if self.quiet {
            return;
        }
        for line in &self.lines {
            println!("{line}");
        }
        for file in &self.files {
            println!("wrote {}", file.display());
        }
    }
}
