use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MassSeries;

/// Which engine produced an anomaly field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vae,
    Ssa,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vae => "vae",
            Method::Ssa => "ssa",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Vae => "VAE",
            Method::Ssa => "SSA",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-cell anomaly series in GgC/month. Only months in `valid` take part
/// in thresholds and aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyField {
    pub method: Method,
    pub values: MassSeries,
    pub valid: Range<usize>,
}

impl AnomalyField {
    pub fn new(method: Method, values: MassSeries, valid: Range<usize>) -> Result<Self> {
        if valid.end > values.n_months() || valid.start > valid.end {
            return Err(Error::Shape(format!(
                "valid span {valid:?} does not fit {} months",
                values.n_months()
            )));
        }
        Ok(Self {
            method,
            values,
            valid,
        })
    }

    pub fn n_valid_months(&self) -> usize {
        self.valid.len()
    }

    /// Every valid (row, month) value, row-major.
    pub fn valid_samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .rows()
            .flat_map(move |row| row[self.valid.clone()].iter().copied())
    }
}
