//! Schema resolution, encoding and splitting shared by the commands, and
//! reloading of a fitted model's data from its result document.

use std::path::Path;

use fhcure::io::{
    read_header, read_raw_path, split_indices, FeatureKind, FeatureSpec, RawTable, TableEncoder,
};
use fhcure::{CsvSchema, Dataset};
use serde::{Deserialize, Serialize};

use crate::{Failure, InputArgs, SplitArgs};

pub fn schema(args: &InputArgs) -> Result<CsvSchema, Failure> {
    let features = match &args.features {
        Some(f) => f.clone(),
        None => read_header(&args.input)?
            .into_iter()
            .filter(|h| *h != args.time_col && *h != args.event_col)
            .collect(),
    };
    if let Some(c) = args.categorical.iter().find(|c| !features.contains(c)) {
        return Err(Failure::usage(format!("--categorical column '{c}' is not among the features")));
    }
    Ok(CsvSchema {
        time_column: args.time_col.clone(),
        event_column: args.event_col.clone(),
        features: features
            .into_iter()
            .map(|name| {
                let kind = if args.categorical.contains(&name) {
                    FeatureKind::Categorical
                } else {
                    FeatureKind::Numeric
                };
                FeatureSpec { name, kind }
            })
            .collect(),
    })
}

/// How the training rows were chosen; stored with the model so `evaluate`
/// can rebuild the same partition.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitRecord {
    pub fraction: f64,
    pub seed: u64,
}

pub struct Prepared {
    pub schema: CsvSchema,
    pub split: Option<SplitRecord>,
    pub train: Dataset,
    pub encoder: TableEncoder,
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

fn drop_columns(data: &Dataset, columns: &[usize], why: &str, dropped: &mut Vec<String>, warnings: &mut Vec<String>) -> Result<Dataset, Failure> {
    for &j in columns {
        let name = &data.feature_names()[j];
        warnings.push(format!("column '{name}' {why} and was dropped"));
        dropped.push(name.clone());
    }
    let keep: Vec<usize> = (0..data.n_features()).filter(|j| !columns.contains(j)).collect();
    Ok(data.select_features(&keep)?)
}

/// Reads, splits and encodes the input. With `horizon` set, columns that
/// do not vary among training events before it are dropped as well.
pub fn prepare(input: &InputArgs, split: &SplitArgs, horizon: Option<f64>) -> Result<Prepared, Failure> {
    let schema = schema(input)?;
    let raw = read_raw_path(&input.input, &schema)?;
    let record = split.split.map(|fraction| SplitRecord {
        fraction,
        seed: split.seed.unwrap_or_else(rand::random),
    });
    let train_raw = match record {
        Some(r) => raw.subset(&split_indices(raw.len(), r.fraction, r.seed)?.0),
        None => raw,
    };
    let (encoder, mut warnings) = TableEncoder::fit(&train_raw)?;
    let (mut train, w) = encoder.transform(&train_raw)?;
    warnings.extend(w);
    let mut dropped = Vec::new();
    let constant = train.constant_columns();
    train = drop_columns(&train, &constant, "is constant on the training rows", &mut dropped, &mut warnings)?;
    if let Some(c) = horizon {
        let flat = train.constant_among_events(c);
        let why = format!("does not vary among training events before {c}");
        train = drop_columns(&train, &flat, &why, &mut dropped, &mut warnings)?;
    }
    Ok(Prepared {
        schema,
        split: record,
        train,
        encoder,
        dropped,
        warnings,
    })
}

/// What `evaluate` needs to rebuild a model's training and test data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataProvenance {
    pub schema: CsvSchema,
    pub split: Option<SplitRecord>,
    pub encoder: TableEncoder,
    /// Encoded columns used by the fit, in order.
    pub features: Vec<String>,
}

/// Training and evaluation data for a stored model. Without a recorded
/// split both are the full file.
pub fn reload(path: &Path, prov: &DataProvenance) -> Result<(Dataset, Dataset), Failure> {
    let raw = read_raw_path(path, &prov.schema)?;
    let (train_raw, test_raw): (RawTable, RawTable) = match prov.split {
        Some(r) => {
            let (tr, te) = split_indices(raw.len(), r.fraction, r.seed)?;
            (raw.subset(&tr), raw.subset(&te))
        }
        None => (raw.clone(), raw),
    };
    let encode = |t: &RawTable| -> Result<Dataset, Failure> {
        let (d, _) = prov.encoder.transform(t)?;
        let idx: Vec<usize> = prov
            .features
            .iter()
            .map(|f| {
                d.feature_names()
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| Failure::data(format!("column '{f}' missing after encoding")))
            })
            .collect::<Result<_, _>>()?;
        Ok(d.select_features(&idx)?)
    };
    Ok((encode(&train_raw)?, encode(&test_raw)?))
}
