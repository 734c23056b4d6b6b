//! Text formats on disk.
//!
//! * series CSV: one value per row, optional `value` header;
//! * labels CSV: `start,end` rows (half-open), optional header;
//! * dataset manifest: JSON array of `{series, labels?, code?}` with paths
//!   relative to the manifest's directory.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{AnomalyLabels, ClusterCode, DatasetEntry, LabeledDataset, Segment, TimeSeries};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Parses series CSV text. `source_name` only feeds error messages.
pub fn parse_series(text: &str, source_name: &str) -> Result<TimeSeries> {
    let mut values = Vec::new();
    let mut seen_row = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let first = !seen_row;
        seen_row = true;
        if first && line.eq_ignore_ascii_case("value") {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message: format!("cannot parse {line:?} as a number"),
        })?;
        values.push(value);
    }
    TimeSeries::new(values)
}

pub fn load_series(path: &Path) -> Result<TimeSeries> {
    parse_series(&read_text(path)?, &path.display().to_string())
}

pub fn format_series(series: &[f64]) -> String {
    let mut out = String::with_capacity(series.len() * 20 + 6);
    out.push_str("value\n");
    for v in series {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn save_series(path: &Path, series: &TimeSeries) -> Result<()> {
    write_text(path, &format_series(series))
}

pub fn parse_labels(text: &str, source_name: &str) -> Result<AnomalyLabels> {
    let mut segments = Vec::new();
    let mut seen_row = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let first = !seen_row;
        seen_row = true;
        if first && line.replace(' ', "").eq_ignore_ascii_case("start,end") {
            continue;
        }
        let parse_err = || Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message: format!("expected \"start,end\", found {line:?}"),
        };
        let (a, b) = line.split_once(',').ok_or_else(parse_err)?;
        let start: usize = a.trim().parse().map_err(|_| parse_err())?;
        let end: usize = b.trim().parse().map_err(|_| parse_err())?;
        segments.push(Segment::new(start, end));
    }
    AnomalyLabels::new(segments, None)
}

pub fn load_labels(path: &Path) -> Result<AnomalyLabels> {
    parse_labels(&read_text(path)?, &path.display().to_string())
}

pub fn format_labels(labels: &AnomalyLabels) -> String {
    let mut out = String::from("start,end\n");
    for s in labels.segments() {
        let _ = writeln!(out, "{},{}", s.start, s.end);
    }
    out
}

pub fn save_labels(path: &Path, labels: &AnomalyLabels) -> Result<()> {
    write_text(path, &format_labels(labels))
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub series: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

fn entry_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads every file listed in a manifest and checks the common-length invariant.
pub fn load_dataset(manifest: &Path) -> Result<LabeledDataset> {
    let rows: Vec<ManifestEntry> = read_json(manifest)?;
    let base = manifest.parent().unwrap_or_else(|| Path::new(""));
    let mut entries = Vec::with_capacity(rows.len());
    for row in rows {
        let series_path = base.join(&row.series);
        let series = load_series(&series_path)?;
        let labels = match &row.labels {
            Some(p) => Some(load_labels(&base.join(p))?),
            None => None,
        };
        let truth = row.code.as_deref().map(str::parse::<ClusterCode>).transpose()?;
        entries.push(DatasetEntry {
            name: row.series.with_extension("").display().to_string(),
            series,
            labels,
            truth,
        });
    }
    if entries.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: manifest lists no series",
            manifest.display()
        )));
    }
    LabeledDataset::new(entries)
}

/// Writes a dataset as one directory per truth code (or `unlabeled/`) plus
/// `manifest.json` in `dir`. Returns the manifest path.
pub fn save_dataset(dataset: &LabeledDataset, dir: &Path) -> Result<PathBuf> {
    let mut rows = Vec::with_capacity(dataset.len());
    for entry in dataset.entries() {
        let group = entry
            .truth
            .map(|c| c.to_string())
            .unwrap_or_else(|| "unlabeled".to_string());
        let stem = entry_name(Path::new(&entry.name));
        let series_rel = PathBuf::from(&group).join(format!("{stem}.csv"));
        save_series(&dir.join(&series_rel), &entry.series)?;
        let labels_rel = match &entry.labels {
            Some(labels) => {
                let rel = PathBuf::from(&group).join(format!("{stem}.labels.csv"));
                save_labels(&dir.join(&rel), labels)?;
                Some(rel)
            }
            None => None,
        };
        rows.push(ManifestEntry {
            series: series_rel,
            labels: labels_rel,
            code: entry.truth.map(|c| c.to_string()),
        });
    }
    let manifest = dir.join("manifest.json");
    write_json(&manifest, &rows)?;
    Ok(manifest)
}
