//! Per-time-step fit records.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One row of a fit trace: the filtered weight mean, the diagonal of the
/// filtered covariance, and the per-step marginal log-likelihood
/// approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub time_index: usize,
    pub weight_mean: DVector<f64>,
    pub weight_var: DVector<f64>,
    pub loglik: f64,
}

/// Time-ordered sequence of [`FitRecord`]s from one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    graph_count: usize,
    records: Vec<FitRecord>,
}

impl FitTrace {
    pub fn new(graph_count: usize) -> Self {
        Self {
            graph_count,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: FitRecord) -> Result<()> {
        if record.weight_mean.len() != self.graph_count
            || record.weight_var.len() != self.graph_count
        {
            return Err(Error::dims(format!(
                "trace record has {} weights, expected {}",
                record.weight_mean.len(),
                self.graph_count
            )));
        }
        if let Some(last) = self.records.last() {
            if record.time_index <= last.time_index {
                return Err(Error::invalid(format!(
                    "trace time index {} does not increase past {}",
                    record.time_index, last.time_index
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn graph_count(&self) -> usize {
        self.graph_count
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[FitRecord] {
        &self.records
    }

    pub fn logliks(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loglik).collect()
    }

    /// T x D matrix of the filtered weight means, one row per record.
    pub fn means_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.records.len(), self.graph_count, |t, k| {
            self.records[t].weight_mean[k]
        })
    }
}
