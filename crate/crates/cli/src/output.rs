//! Report plumbing shared by the subcommands.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use marketpulse_core::snapstore::Store;
use marketpulse_core::timeline::{build_app_timeline, AppTimeline};
use serde::Serialize;
use serde_json::{json, Value};

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// `{"status": "ok", "value": ...}` or `{"status": "undefined", "reason": ...}`.
pub fn outcome<T: Serialize, E: std::fmt::Display>(r: Result<T, E>) -> Value {
    match r {
        Ok(v) => json!({ "status": "ok", "value": v }),
        Err(e) => json!({ "status": "undefined", "reason": e.to_string() }),
    }
}

/// Opens an existing store read-only in spirit; a missing directory is an I/O error.
pub fn open_store(path: &Path) -> Result<Store> {
    if !path.is_dir() {
        return Err(io::Error::new(io::ErrorKind::NotFound, format!("store {} does not exist", path.display())).into());
    }
    Store::open(path).with_context(|| format!("opening store {}", path.display()))
}

pub fn all_timelines(store: &Store) -> Result<Vec<AppTimeline>> {
    store.all_series().iter().map(|s| build_app_timeline(s).with_context(|| format!("timeline of {}", s.app))).collect()
}

/// Default reference day: the manifest's observation end, else the latest fetch day.
pub fn reference_day(store: &Store, explicit: Option<NaiveDate>) -> Option<NaiveDate> {
    explicit
        .or_else(|| store.manifest().map(|m| m.observation_end))
        .or_else(|| store.latest_snapshots().iter().map(|s| s.fetch_day()).max())
}

pub struct CsvOut {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl CsvOut {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self { dir, written: Vec::new() })
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    /// Writes `rows` under `header` when an output directory was given.
    pub fn table<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Hands a raw writer to a caller that formats its own CSV.
    pub fn with_file(&mut self, name: &str, f: impl FnOnce(File) -> Result<()>) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(name);
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        f(file)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }
}

pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
