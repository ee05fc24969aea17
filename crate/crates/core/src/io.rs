//! CSV ingestion with categorical encoding, train/test splitting, and
//! result serialization.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! dataset written by [`write_dataset_csv`] reads back bit-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CureError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

/// Which columns hold the time, the event flag and the features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time_column: String,
    pub event_column: String,
    pub features: Vec<FeatureSpec>,
}

impl CsvSchema {
    /// Schema with every listed feature numeric.
    pub fn numeric(time: &str, event: &str, features: &[String]) -> Self {
        Self {
            time_column: time.into(),
            event_column: event.into(),
            features: features
                .iter()
                .map(|f| FeatureSpec {
                    name: f.clone(),
                    kind: FeatureKind::Numeric,
                })
                .collect(),
        }
    }
}

/// A feature column before encoding.
#[derive(Clone, Debug, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl RawColumn {
    fn subset(&self, rows: &[usize]) -> Self {
        match self {
            RawColumn::Numeric(v) => RawColumn::Numeric(rows.iter().map(|&i| v[i]).collect()),
            RawColumn::Categorical(v) => RawColumn::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Parsed but not yet encoded table.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    /// Parallel to the schema's feature list.
    pub columns: Vec<(String, RawColumn)>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            times: rows.iter().map(|&i| self.times[i]).collect(),
            events: rows.iter().map(|&i| self.events[i]).collect(),
            columns: self.columns.iter().map(|(n, c)| (n.clone(), c.subset(rows))).collect(),
        }
    }
}

fn parse_error(row: usize, column: &str, message: impl Into<String>) -> CureError {
    CureError::Parse {
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Reads a headed, comma-delimited table. Row numbers in errors count data
/// rows from 1.
pub fn read_raw<R: Read>(reader: R, schema: &CsvSchema) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CureError::MissingColumn(name.into()))
    };
    let time_idx = index(&schema.time_column)?;
    let event_idx = index(&schema.event_column)?;
    let feature_idx: Vec<usize> = schema.features.iter().map(|f| index(&f.name)).collect::<Result<_>>()?;

    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); schema.features.len()];
    let mut categorical: Vec<Vec<String>> = vec![Vec::new(); schema.features.len()];
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let cell = |j: usize| record.get(j).unwrap_or("").trim();
        let t: f64 = cell(time_idx)
            .parse()
            .map_err(|_| parse_error(row, &schema.time_column, format!("'{}' is not a number", cell(time_idx))))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(parse_error(row, &schema.time_column, format!("time must be finite and >= 0, got {t}")));
        }
        let e = match cell(event_idx) {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_error(row, &schema.event_column, format!("event must be 0 or 1, got '{other}'")));
            }
        };
        times.push(t);
        events.push(e);
        for (k, (spec, &j)) in schema.features.iter().zip(&feature_idx).enumerate() {
            match spec.kind {
                FeatureKind::Numeric => {
                    let v: f64 = cell(j)
                        .parse()
                        .map_err(|_| parse_error(row, &spec.name, format!("'{}' is not a number", cell(j))))?;
                    if !v.is_finite() {
                        return Err(parse_error(row, &spec.name, "value must be finite"));
                    }
                    numeric[k].push(v);
                }
                FeatureKind::Categorical => categorical[k].push(cell(j).to_string()),
            }
        }
    }
    if times.is_empty() {
        return Err(CureError::InsufficientData("file has no data rows".into()));
    }
    let columns = schema
        .features
        .iter()
        .zip(numeric.into_iter().zip(categorical))
        .map(|(spec, (num, cat))| {
            let col = match spec.kind {
                FeatureKind::Numeric => RawColumn::Numeric(num),
                FeatureKind::Categorical => RawColumn::Categorical(cat),
            };
            (spec.name.clone(), col)
        })
        .collect();
    Ok(RawTable { times, events, columns })
}

/// Column names from the header row.
pub fn read_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

pub fn read_raw_path(path: &Path, schema: &CsvSchema) -> Result<RawTable> {
    read_raw(std::fs::File::open(path)?, schema)
}

/// Dummy coding of one categorical column with the most frequent level as
/// reference. Frequency ties go to the lexicographically smallest level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub column: String,
    pub reference: String,
    /// Non-reference levels in lexicographic order, one dummy each.
    pub levels: Vec<String>,
}

impl CategoricalEncoder {
    /// Fits on `values`; a single-level column yields no dummies and a
    /// warning.
    pub fn fit(column: &str, values: &[String]) -> Result<(Self, Vec<String>)> {
        if values.is_empty() {
            return Err(CureError::InsufficientData(format!("column '{column}' is empty")));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for v in values {
            *counts.entry(v.as_str()).or_default() += 1;
        }
        // BTreeMap iterates in lexicographic order, so the first maximum wins ties
        let reference = counts
            .iter()
            .fold(None::<(&str, usize)>, |best, (&lvl, &n)| match best {
                Some((_, m)) if m >= n => best,
                _ => Some((lvl, n)),
            })
            .map(|(l, _)| l.to_string())
            .expect("nonempty");
        let levels: Vec<String> = counts.keys().filter(|&&l| l != reference).map(|l| l.to_string()).collect();
        let mut warnings = Vec::new();
        if levels.is_empty() {
            warnings.push(format!("column '{column}' has a single level '{reference}'; no dummies produced"));
        }
        Ok((
            Self {
                column: column.into(),
                reference,
                levels,
            },
            warnings,
        ))
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.levels.iter().map(|l| format!("{}={l}", self.column)).collect()
    }

    /// One 0/1 column per non-reference level. Levels not seen during
    /// fitting encode as all zeros and produce a warning.
    pub fn transform(&self, values: &[String]) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut cols = vec![vec![0.0; values.len()]; self.levels.len()];
        let mut unseen = BTreeSet::new();
        for (i, v) in values.iter().enumerate() {
            if let Ok(j) = self.levels.binary_search(v) {
                cols[j][i] = 1.0;
            } else if *v != self.reference {
                unseen.insert(v.clone());
            }
        }
        let warnings = unseen
            .into_iter()
            .map(|l| format!("column '{}': unseen level '{l}' encoded as the reference", self.column))
            .collect();
        (cols, warnings)
    }
}

/// Per-column encoders fitted on one table and applied to others.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEncoder {
    /// `None` for numeric columns.
    pub encoders: Vec<(String, Option<CategoricalEncoder>)>,
}

impl TableEncoder {
    pub fn fit(table: &RawTable) -> Result<(Self, Vec<String>)> {
        let mut warnings = Vec::new();
        let mut encoders = Vec::with_capacity(table.columns.len());
        for (name, col) in &table.columns {
            match col {
                RawColumn::Numeric(_) => encoders.push((name.clone(), None)),
                RawColumn::Categorical(v) => {
                    let (enc, w) = CategoricalEncoder::fit(name, v)?;
                    warnings.extend(w);
                    encoders.push((name.clone(), Some(enc)));
                }
            }
        }
        Ok((Self { encoders }, warnings))
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.encoders
            .iter()
            .flat_map(|(name, enc)| match enc {
                None => vec![name.clone()],
                Some(e) => e.feature_names(),
            })
            .collect()
    }

    pub fn transform(&self, table: &RawTable) -> Result<(Dataset, Vec<String>)> {
        if table.columns.len() != self.encoders.len() {
            return Err(CureError::InvalidInput("table does not match the fitted encoder".into()));
        }
        let n = table.len();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut warnings = Vec::new();
        for ((name, col), (enc_name, enc)) in table.columns.iter().zip(&self.encoders) {
            if name != enc_name {
                return Err(CureError::InvalidInput(format!("expected column '{enc_name}', found '{name}'")));
            }
            match (col, enc) {
                (RawColumn::Numeric(v), None) => columns.push(v.clone()),
                (RawColumn::Categorical(v), Some(e)) => {
                    let (cols, w) = e.transform(v);
                    columns.extend(cols);
                    warnings.extend(w);
                }
                _ => return Err(CureError::InvalidInput(format!("column '{name}' changed kind"))),
            }
        }
        let p = columns.len();
        let mut flat = Vec::with_capacity(n * p);
        for i in 0..n {
            flat.extend(columns.iter().map(|c| c[i]));
        }
        let data = Dataset::from_flat(table.times.clone(), table.events.clone(), flat, self.feature_names())?;
        Ok((data, warnings))
    }
}

/// Reads and encodes a CSV in one step, fitting the encoders on the file
/// itself.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<(Dataset, Vec<String>)> {
    let raw = read_raw_path(path, schema)?;
    let (enc, mut warnings) = TableEncoder::fit(&raw)?;
    let (data, w) = enc.transform(&raw)?;
    warnings.extend(w);
    Ok((data, warnings))
}

/// Uniform random split of `0..n` without replacement; the first part has
/// `round(n * fraction)` rows. Both index lists are sorted.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CureError::domain(fraction, "(0, 1)"));
    }
    let n_train = (n as f64 * fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(CureError::InsufficientData(format!(
            "a {fraction} split of {n} rows leaves an empty partition"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.len(), fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Train and test datasets encoded with the training split's encoder.
#[derive(Clone, Debug)]
pub struct EncodedSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub encoder: TableEncoder,
    /// Encoded columns that were constant on the training rows and dropped.
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

impl EncodedSplit {
    /// Drops columns that do not vary among the training events before `c`;
    /// such a column's latency coefficient has no information at horizon `c`.
    pub fn drop_without_event_variation(&mut self, c: f64) -> Result<()> {
        let flat = self.train.constant_among_events(c);
        if flat.is_empty() {
            return Ok(());
        }
        for &j in &flat {
            let name = self.train.feature_names()[j].clone();
            self.warnings
                .push(format!("column '{name}' does not vary among training events before {c} and was dropped"));
            self.dropped.push(name);
        }
        let keep: Vec<usize> = (0..self.train.n_features()).filter(|j| !flat.contains(j)).collect();
        self.train = self.train.select_features(&keep)?;
        self.test = self.test.select_features(&keep)?;
        Ok(())
    }
}

/// Splits a raw table, fits the categorical encoders on the training rows and
/// applies them to both parts. Columns constant on the training rows carry no
/// information and would make the fit singular, so they are dropped from both.
pub fn encode_split(table: &RawTable, fraction: f64, seed: u64) -> Result<EncodedSplit> {
    let (train_idx, test_idx) = split_indices(table.len(), fraction, seed)?;
    let (train_raw, test_raw) = (table.subset(&train_idx), table.subset(&test_idx));
    let (encoder, mut warnings) = TableEncoder::fit(&train_raw)?;
    let (train, w) = encoder.transform(&train_raw)?;
    warnings.extend(w);
    let (test, w) = encoder.transform(&test_raw)?;
    warnings.extend(w.into_iter().map(|m| format!("test split: {m}")));
    let constant = train.constant_columns();
    let dropped: Vec<String> = constant.iter().map(|&j| train.feature_names()[j].clone()).collect();
    for name in &dropped {
        warnings.push(format!("column '{name}' is constant on the training rows and was dropped"));
    }
    let keep: Vec<usize> = (0..train.n_features()).filter(|j| !constant.contains(j)).collect();
    Ok(EncodedSplit {
        train: train.select_features(&keep)?,
        test: test.select_features(&keep)?,
        encoder,
        dropped,
        warnings,
    })
}

/// Writes `time,event,<features>` with one row per subject.
pub fn write_dataset_csv<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "event".to_string()];
    header.extend(data.feature_names().iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec = vec![data.time(i).to_string(), u8::from(data.event(i)).to_string()];
        rec.extend(data.x_tilde(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes serializable rows as a headed CSV table.
pub fn write_table_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Top-level JSON document written by every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub command: String,
    pub config: serde_json::Value,
    pub estimates: serde_json::Value,
    pub intervals: serde_json::Value,
    pub diagnostics: serde_json::Value,
    pub seed: Option<u64>,
}

impl ResultDocument {
    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}
