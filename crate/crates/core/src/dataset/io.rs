//! On-disk formats.
//!
//! A dataset directory holds `records.jsonl`, one [`Record`] per line, and
//! optionally a feature store: `features.bin` (little-endian `f32`,
//! row-major) described by `features.json`, which maps ids to byte offsets.
//! Records either inline their features or give the byte offset of their
//! row in the blob.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::DataPoint;
use crate::demographics::{DemographicRecord, Gender};
use crate::text::CleanReport;
use crate::{Error, Result};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const FEATURE_BLOB: &str = "features.bin";
pub const FEATURE_MANIFEST: &str = "features.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureRef {
    Inline(Vec<f32>),
    Offset { offset: u64 },
}

/// One line of `records.jsonl`. In raw datasets `report` is free text; in
/// cleaned datasets it is the space-joined interior tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub features: FeatureRef,
    pub report: String,
    pub gender: Gender,
    pub age: u32,
    pub ethnicity: String,
}

impl Record {
    pub fn demographics(&self) -> DemographicRecord {
        DemographicRecord {
            gender: self.gender,
            age: self.age,
            ethnicity: self.ethnicity.clone(),
        }
    }

    pub fn resolve_features(&self, store: Option<&FeatureStore>) -> Result<Vec<f32>> {
        match (&self.features, store) {
            (FeatureRef::Inline(v), _) => Ok(v.clone()),
            (FeatureRef::Offset { offset }, Some(s)) => s
                .at_offset(*offset)
                .map(<[f32]>::to_vec)
                .ok_or_else(|| Error::Data(format!("{}: no feature row starts at byte {offset}", self.id))),
            (FeatureRef::Offset { .. }, None) => Err(Error::Data(format!(
                "{}: references a feature offset but no {FEATURE_BLOB} is present",
                self.id
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoreManifest {
    feature_dim: usize,
    offsets: IndexMap<String, u64>,
}

/// Dense row-major feature matrix with one row per id.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    feature_dim: usize,
    values: Vec<f32>,
    ids: IndexMap<String, usize>,
}

impl FeatureStore {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            values: Vec::new(),
            ids: IndexMap::new(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.feature_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn row_bytes(&self) -> u64 {
        self.feature_dim as u64 * 4
    }

    /// Appends the row for `id` and returns its byte offset.
    pub fn push(&mut self, id: &str, row: &[f32]) -> Result<u64> {
        if self.ids.contains_key(id) {
            return Err(Error::Data(format!("duplicate feature id {id}")));
        }
        if row.len() != self.feature_dim {
            return Err(Error::Data(format!(
                "feature row has {} values, store width is {}",
                row.len(),
                self.feature_dim
            )));
        }
        self.values.extend_from_slice(row);
        let i = self.len() - 1;
        self.ids.insert(id.to_string(), i);
        Ok(i as u64 * self.row_bytes())
    }

    pub fn row(&self, i: usize) -> Option<&[f32]> {
        self.values.get(i * self.feature_dim..(i + 1) * self.feature_dim)
    }

    pub fn at_offset(&self, offset: u64) -> Option<&[f32]> {
        let width = self.row_bytes();
        if width == 0 || !offset.is_multiple_of(width) {
            return None;
        }
        self.row(usize::try_from(offset / width).ok()?)
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.ids.get(id).and_then(|&i| self.row(i))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let manifest = StoreManifest {
            feature_dim: self.feature_dim,
            offsets: self
                .ids
                .iter()
                .map(|(id, &i)| (id.clone(), i as u64 * self.row_bytes()))
                .collect(),
        };
        let mut blob = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(FEATURE_BLOB);
        fs::write(&path, blob).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(FEATURE_MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    /// Loads the store in `dir`, or `None` when there is no blob.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let blob_path = dir.join(FEATURE_BLOB);
        if !blob_path.exists() {
            return Ok(None);
        }
        let path = dir.join(FEATURE_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: StoreManifest = serde_json::from_str(&text)?;
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let width = manifest.feature_dim as u64 * 4;
        if width == 0 || !(blob.len() as u64).is_multiple_of(width) {
            return Err(Error::Data(format!(
                "{FEATURE_BLOB} has {} bytes, not a whole number of {}-wide rows",
                blob.len(),
                manifest.feature_dim
            )));
        }
        let rows = blob.len() as u64 / width;
        let mut ids = IndexMap::with_capacity(manifest.offsets.len());
        for (id, offset) in manifest.offsets {
            if offset % width != 0 || offset / width >= rows {
                return Err(Error::Data(format!("{FEATURE_MANIFEST}: bad offset {offset} for {id}")));
            }
            ids.insert(id, (offset / width) as usize);
        }
        let values = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Some(Self {
            feature_dim: manifest.feature_dim,
            values,
            ids,
        }))
    }
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes cleaned data points with features in a shared store.
pub fn write_clean_dataset(dir: &Path, points: &[DataPoint]) -> Result<()> {
    let feature_dim = points.first().map_or(0, |p| p.features.len());
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut store = FeatureStore::new(feature_dim);
    let mut records = Vec::with_capacity(points.len());
    for p in points {
        p.check(feature_dim)?;
        let offset = store.push(&p.id, &p.features)?;
        records.push(Record {
            id: p.id.clone(),
            features: FeatureRef::Offset { offset },
            report: p.report.text(),
            gender: p.demographics.gender,
            age: p.demographics.age,
            ethnicity: p.demographics.ethnicity.clone(),
        });
    }
    store.save(dir)?;
    write_records(&dir.join(RECORDS_FILE), &records)
}

/// Reads a directory produced by [`write_clean_dataset`]. Reports are taken
/// as already-cleaned token sequences and are not cleaned again.
pub fn load_clean_dataset(dir: &Path) -> Result<Vec<DataPoint>> {
    let store = FeatureStore::load(dir)?;
    let records = read_records(&dir.join(RECORDS_FILE))?;
    let mut seen = std::collections::HashSet::new();
    records
        .into_iter()
        .map(|r| {
            if !seen.insert(r.id.clone()) {
                return Err(Error::Data(format!("duplicate id {}", r.id)));
            }
            let interior = r.report.split_whitespace().map(str::to_string).collect();
            Ok(DataPoint {
                features: r.resolve_features(store.as_ref())?,
                report: CleanReport::from_interior(r.id.clone(), interior)?,
                demographics: r.demographics(),
                id: r.id,
            })
        })
        .collect()
}
