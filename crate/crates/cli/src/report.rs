use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use chaoskit_core::Result;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass: value <= threshold, value, threshold, detail: detail.into() }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass: value >= threshold, value, threshold, detail: detail.into() }
    }

    /// Passes when `lo <= value <= hi`; `threshold` records `hi`.
    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64, detail: impl Into<String>) -> Self {
        let detail = format!("{} (range [{lo}, {hi}])", detail.into());
        Self { name: name.into(), pass: (lo..=hi).contains(&value), value, threshold: hi, detail }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<String>,
}

impl Summary {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.into(), pass: true, checks: Vec::new(), metrics: BTreeMap::new(), files: Vec::new() }
    }

    pub fn check(&mut self, c: Check) {
        self.pass &= c.pass;
        self.checks.push(c);
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Checks whose names start with `prefix` all passed (and there is at least one).
    pub fn group_passed(&self, prefix: &str) -> bool {
        let mut any = false;
        for c in self.checks.iter().filter(|c| c.name.starts_with(prefix)) {
            any = true;
            if !c.pass {
                return false;
            }
        }
        any
    }
}

/// Writes experiment artifacts into one directory and remembers their names.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates `name` and hands a buffered writer to `fill`.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<()>,
    {
        let mut w = std::io::BufWriter::new(fs::File::create(self.dir.join(name))?);
        fill(&mut w)?;
        std::io::Write::flush(&mut w)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_string(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes `summary.json` listing every artifact.
    pub fn finish(mut self, mut summary: Summary) -> Result<Summary> {
        self.written.push("summary.json".into());
        summary.files = self.written.clone();
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(self.dir.join("summary.json"), json + "\n")?;
        Ok(summary)
    }
}

/// Writes a header and rows of already formatted fields as RFC 4180 CSV.
pub fn write_table<W: std::io::Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
