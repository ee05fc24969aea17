use serde::{Deserialize, Serialize};

use crate::error::{CureError, Result};

/// Right-censored survival data with a covariate vector per row.
///
/// Covariates are stored without the intercept; the incidence design vector
/// `(1, x̃)` is formed on demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    times: Vec<f64>,
    events: Vec<bool>,
    /// Row-major `n × p` covariate matrix.
    covariates: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        times: Vec<f64>,
        events: Vec<bool>,
        rows: Vec<Vec<f64>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let p = feature_names.len();
        if rows.len() != times.len() {
            return Err(CureError::InvalidInput(format!(
                "{} covariate rows for {} times",
                rows.len(),
                times.len()
            )));
        }
        let mut covariates = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(CureError::InvalidInput(format!(
                    "row {i} has {} covariates, expected {p}",
                    r.len()
                )));
            }
            covariates.extend_from_slice(r);
        }
        Self::from_flat(times, events, covariates, feature_names)
    }

    pub fn from_flat(
        times: Vec<f64>,
        events: Vec<bool>,
        covariates: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if times.len() != events.len() {
            return Err(CureError::InvalidInput(format!(
                "times/events length mismatch: {} vs {}",
                times.len(),
                events.len()
            )));
        }
        if covariates.len() != times.len() * feature_names.len() {
            return Err(CureError::InvalidInput("covariate matrix has wrong size".into()));
        }
        if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(CureError::InvalidInput(format!(
                "row {i}: time must be finite and >= 0, got {}",
                times[i]
            )));
        }
        if let Some(i) = covariates.iter().position(|v| !v.is_finite()) {
            let p = feature_names.len().max(1);
            return Err(CureError::InvalidInput(format!(
                "row {}: non-finite covariate",
                i / p
            )));
        }
        Ok(Self {
            times,
            events,
            covariates,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of covariates `p`, excluding the intercept.
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn event(&self, i: usize) -> bool {
        self.events[i]
    }

    /// Covariates of row `i` without the intercept.
    pub fn x_tilde(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.covariates[i * p..(i + 1) * p]
    }

    /// Design vector `(1, x̃_i)` for the incidence part.
    pub fn design(&self, i: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_features() + 1);
        x.push(1.0);
        x.extend_from_slice(self.x_tilde(i));
        x
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.x_tilde(i)[j]).collect()
    }

    /// Indices of covariate columns that never vary.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| {
                let col = self.column(j);
                col.windows(2).all(|w| w[0] == w[1])
            })
            .collect()
    }

    /// Indices of covariate columns that take a single value over the rows
    /// with an event before `c`. Their latency effect is not identified at
    /// that horizon.
    pub fn constant_among_events(&self, c: f64) -> Vec<usize> {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| self.events[i] && self.times[i] < c).collect();
        (0..self.n_features())
            .filter(|&j| rows.windows(2).all(|w| self.x_tilde(w[0])[j] == self.x_tilde(w[1])[j]))
            .collect()
    }

    /// Event times strictly below the horizon `c`.
    pub fn event_times_below(&self, c: f64) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.events)
            .filter(|(t, d)| **d && **t < c)
            .map(|(t, _)| *t)
            .collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let p = self.n_features();
        let mut covariates = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            covariates.extend_from_slice(self.x_tilde(i));
        }
        Dataset {
            times: rows.iter().map(|&i| self.times[i]).collect(),
            events: rows.iter().map(|&i| self.events[i]).collect(),
            covariates,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Keeps only the covariate columns listed in `columns`, in that order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Dataset> {
        if let Some(&j) = columns.iter().find(|&&j| j >= self.n_features()) {
            return Err(CureError::InvalidInput(format!(
                "column {j} out of range 0..{}",
                self.n_features()
            )));
        }
        let mut covariates = Vec::with_capacity(self.len() * columns.len());
        for i in 0..self.len() {
            let x = self.x_tilde(i);
            covariates.extend(columns.iter().map(|&j| x[j]));
        }
        Ok(Dataset {
            times: self.times.clone(),
            events: self.events.clone(),
            covariates,
            feature_names: columns.iter().map(|&j| self.feature_names[j].clone()).collect(),
        })
    }
}
