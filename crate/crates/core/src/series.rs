//! Domain types shared by every stage: series, anomaly labels, cluster codes
//! and the labeled dataset container.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled, finite, non-empty univariate series.
///
/// Timestamps are not kept; every algorithm works on index order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for TimeSeries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl<'de> Deserialize<'de> for TimeSeries {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        TimeSeries::new(values).map_err(serde::de::Error::custom)
    }
}

/// Half-open index interval `[start, end)` marking one anomalous episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }
}

/// Sorted, disjoint anomaly segments belonging to one series.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnomalyLabels {
    segments: Vec<Segment>,
}

impl AnomalyLabels {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates ordering and disjointness. `length`, when given, bounds every `end`.
    pub fn new(segments: Vec<Segment>, length: Option<usize>) -> Result<Self> {
        for (i, seg) in segments.iter().enumerate() {
            if seg.start >= seg.end {
                return Err(Error::InvalidLabels(format!(
                    "segment {i} [{}, {}) is empty",
                    seg.start, seg.end
                )));
            }
            if let Some(len) = length {
                if seg.end > len {
                    return Err(Error::InvalidLabels(format!(
                        "segment {i} [{}, {}) exceeds series length {len}",
                        seg.start, seg.end
                    )));
                }
            }
            if i > 0 && segments[i - 1].end > seg.start {
                return Err(Error::InvalidLabels(format!(
                    "segment {i} [{}, {}) overlaps or precedes its predecessor",
                    seg.start, seg.end
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn covers(&self, index: usize) -> bool {
        // segments are sorted, so a binary search finds the only candidate
        match self.segments.binary_search_by(|s| s.start.cmp(&index)) {
            Ok(_) => true,
            Err(0) => false,
            Err(pos) => self.segments[pos - 1].contains(index),
        }
    }

    pub(crate) fn check_length(&self, length: usize) -> Result<()> {
        match self.segments.last() {
            Some(last) if last.end > length => Err(Error::InvalidLabels(format!(
                "segment [{}, {}) exceeds series length {length}",
                last.start, last.end
            ))),
            _ => Ok(()),
        }
    }
}

/// Leaf identity of the three-level cluster tree.
///
/// Printed as three letters in level order: tendency, amplitude, impulse density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterCode {
    pub periodic: bool,
    pub large_amplitude: bool,
    pub dense_impulses: bool,
}

impl ClusterCode {
    pub const fn new(periodic: bool, large_amplitude: bool, dense_impulses: bool) -> Self {
        Self {
            periodic,
            large_amplitude,
            dense_impulses,
        }
    }

    /// All eight codes, FFF first and TTT last.
    pub fn all() -> [ClusterCode; 8] {
        std::array::from_fn(|i| Self::from_index(i))
    }

    /// Index with the tendency bit as the most significant bit (FFF = 0, TTT = 7).
    pub fn index(self) -> usize {
        (usize::from(self.periodic) << 2)
            | (usize::from(self.large_amplitude) << 1)
            | usize::from(self.dense_impulses)
    }

    pub fn from_index(index: usize) -> Self {
        Self::new(index & 4 != 0, index & 2 != 0, index & 1 != 0)
    }

    pub fn bits(self) -> [bool; 3] {
        [self.periodic, self.large_amplitude, self.dense_impulses]
    }

    pub fn from_bits(bits: [bool; 3]) -> Self {
        Self::new(bits[0], bits[1], bits[2])
    }
}

impl fmt::Display for ClusterCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in self.bits() {
            f.write_str(if bit { "T" } else { "F" })?;
        }
        Ok(())
    }
}

impl FromStr for ClusterCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = [false; 3];
        let mut chars = s.trim().chars();
        for bit in bits.iter_mut() {
            *bit = match chars.next() {
                Some('T') | Some('t') => true,
                Some('F') | Some('f') => false,
                _ => return Err(Error::UnknownCode(s.to_string())),
            };
        }
        if chars.next().is_some() {
            return Err(Error::UnknownCode(s.to_string()));
        }
        Ok(Self::from_bits(bits))
    }
}

impl Serialize for ClusterCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClusterCode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    /// Identifier used in reports and assignment files (usually the file stem).
    pub name: String,
    pub series: TimeSeries,
    pub labels: Option<AnomalyLabels>,
    pub truth: Option<ClusterCode>,
}

/// Series of one common length, optionally labeled with anomalies and truth codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    entries: Vec<DatasetEntry>,
    common_length: usize,
}

impl LabeledDataset {
    pub fn new(entries: Vec<DatasetEntry>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::InsufficientData("dataset has no entries".into()))?;
        let common_length = first.series.len();
        for entry in &entries {
            if entry.series.len() != common_length {
                return Err(Error::LengthMismatch {
                    first: first.name.clone(),
                    first_len: common_length,
                    second: entry.name.clone(),
                    second_len: entry.series.len(),
                });
            }
            if let Some(labels) = &entry.labels {
                labels.check_length(common_length)?;
            }
        }
        Ok(Self {
            entries,
            common_length,
        })
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<DatasetEntry> {
        self.entries
    }

    pub fn common_length(&self) -> usize {
        self.common_length
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn series(&self) -> impl Iterator<Item = &TimeSeries> {
        self.entries.iter().map(|e| &e.series)
    }

    /// Keeps the entries whose index satisfies `keep`; fails if nothing remains.
    pub fn subset(&self, mut keep: impl FnMut(usize, &DatasetEntry) -> bool) -> Result<Self> {
        let entries: Vec<_> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(i, e)| keep(*i, e))
            .map(|(_, e)| e.clone())
            .collect();
        Self::new(entries)
    }
}
