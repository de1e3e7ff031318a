use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::sim::SensorTable;

/// Named columns of equal length, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len(), "one name per column");
        if let Some(first) = columns.first() {
            assert!(columns.iter().all(|c| c.len() == first.len()), "ragged feature matrix");
        }
        Self { names, columns }
    }

    /// Selected columns of a sensor table, in the given order.
    pub fn from_table(table: &SensorTable, indices: &[usize]) -> Self {
        Self::new(
            indices.iter().map(|&i| table.columns()[i].name()).collect(),
            indices.iter().map(|&i| table.column_at(i).to_vec()).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
        }
    }
}

/// Relative range below which a feature counts as constant. Simulated
/// setpoints wobble in the last bits and would otherwise scale to [0, 1].
pub const CONSTANT_SPAN: f64 = 1e-9;

/// Per-feature min/max of the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Fits min-max statistics. Pass the training rows only.
pub fn fit_normalization(train: &FeatureMatrix) -> Result<NormalizationStats, AugmentError> {
    if train.n_rows() < 2 {
        return Err(AugmentError::Split(format!(
            "normalization needs at least 2 training rows, got {}",
            train.n_rows()
        )));
    }
    let (min, max) = train
        .columns
        .iter()
        .map(|c| {
            c.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        })
        .unzip();
    Ok(NormalizationStats {
        names: train.names.clone(),
        min,
        max,
    })
}

impl NormalizationStats {
    fn check(&self, m: &FeatureMatrix) -> Result<(), AugmentError> {
        if m.names != self.names {
            let unknown: Vec<&str> = m
                .names
                .iter()
                .filter(|n| !self.names.contains(n))
                .map(String::as_str)
                .collect();
            return Err(AugmentError::Schema(if unknown.is_empty() {
                "feature order differs from the fitted statistics".into()
            } else {
                format!("features not seen at fit time: {}", unknown.join(", "))
            }));
        }
        Ok(())
    }

    /// Range of feature `i`, or 0 when it is constant up to rounding.
    pub fn span(&self, i: usize) -> f64 {
        let span = self.max[i] - self.min[i];
        let scale = self.max[i].abs().max(self.min[i].abs());
        if span > CONSTANT_SPAN * scale {
            span
        } else {
            0.0
        }
    }

    /// `(x − min)/(max − min)`, with constant features mapped to 0.
    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, AugmentError> {
        self.check(m)?;
        let columns = m
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let span = self.span(i);
                c.iter()
                    .map(|&x| if span > 0.0 { (x - self.min[i]) / span } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(FeatureMatrix {
            names: m.names.clone(),
            columns,
        })
    }

    pub fn invert(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, AugmentError> {
        self.check(m)?;
        let columns = m
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| c.iter().map(|&x| self.invert_value(i, x)).collect())
            .collect();
        Ok(FeatureMatrix {
            names: m.names.clone(),
            columns,
        })
    }

    pub fn invert_value(&self, feature: usize, x: f64) -> f64 {
        self.min[feature] + x * self.span(feature)
    }
}
