//! Min-max scaling to [-1, 1] and stride-1 window extraction.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MassSeries;

pub const SEQUENCE_LEN: usize = 12;

/// Global extremes of the data a model was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub x_min: f64,
    pub x_max: f64,
}

impl NormParams {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::NonFinite(format!(
                "normalization bounds [{x_min}, {x_max}]"
            )));
        }
        if x_max <= x_min {
            return Err(Error::Degenerate(format!(
                "data range is empty (min {x_min}, max {x_max}); a constant field cannot be normalized"
            )));
        }
        Ok(Self { x_min, x_max })
    }

    pub fn fit(values: &[f64]) -> Result<Self> {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if values.is_empty() {
            return Err(Error::Degenerate("no values to normalize".into()));
        }
        Self::new(lo, hi)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        2.0 * (x - self.x_min) / (self.x_max - self.x_min) - 1.0
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        (y + 1.0) * 0.5 * (self.x_max - self.x_min) + self.x_min
    }
}

/// Normalized 12-month windows, one row each.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Array2<f64>,
    /// (row of the source `MassSeries`, start month) per window.
    pub provenance: Vec<(usize, usize)>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.nrows() == 0
    }

    /// Windows of every row of `mass`, at stride 1, scaled with `norm`.
    pub fn from_mass(mass: &MassSeries, norm: &NormParams) -> Result<Self> {
        let n = mass.n_months();
        if n < SEQUENCE_LEN {
            return Err(Error::TooShort {
                needed: SEQUENCE_LEN,
                actual: n,
            });
        }
        let per_row = n - SEQUENCE_LEN + 1;
        let total = per_row * mass.n_cells();
        let mut windows = Array2::zeros((total, SEQUENCE_LEN));
        let mut provenance = Vec::with_capacity(total);
        for (r, row) in mass.rows().enumerate() {
            let scaled: Vec<f64> = row.iter().map(|&v| norm.normalize(v)).collect();
            for start in 0..per_row {
                let w = r * per_row + start;
                windows
                    .row_mut(w)
                    .iter_mut()
                    .zip(&scaled[start..start + SEQUENCE_LEN])
                    .for_each(|(dst, &src)| *dst = src);
                provenance.push((r, start));
            }
        }
        Ok(Self {
            windows,
            provenance,
        })
    }
}

/// Fit min-max scaling over every value of `mass` and cut stride-1 windows.
pub fn normalize(mass: &MassSeries) -> Result<(WindowSet, NormParams)> {
    if mass.n_months() < SEQUENCE_LEN {
        return Err(Error::TooShort {
            needed: SEQUENCE_LEN,
            actual: mass.n_months(),
        });
    }
    let norm = NormParams::fit(mass.values())?;
    Ok((WindowSet::from_mass(mass, &norm)?, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::MonthCalendar;

    fn mass(rows: Vec<Vec<f64>>) -> MassSeries {
        let n = rows[0].len();
        let cells = (0..rows.len()).collect();
        MassSeries::new(cells, n, MonthCalendar::new(2000, 1), rows.concat()).unwrap()
    }

    #[test]
    fn endpoints_map_to_unit_interval() {
        let norm = NormParams::fit(&[0.0, 10.0]).unwrap();
        assert_eq!(norm.normalize(0.0), -1.0);
        assert_eq!(norm.normalize(10.0), 1.0);
    }

    #[test]
    fn constant_field_is_degenerate() {
        let m = mass(vec![vec![3.0; 24]]);
        assert!(matches!(normalize(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn round_trip() {
        let norm = NormParams::new(-37.5, 812.25).unwrap();
        for i in 0..1000 {
            let x = -37.5 + f64::from(i) * 0.85;
            assert!((norm.denormalize(norm.normalize(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn window_count_and_bounds() {
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..30).map(|t| f64::from(c * 100 + t)).collect())
            .collect();
        let m = mass(rows);
        let (ws, norm) = normalize(&m).unwrap();
        assert_eq!(ws.len(), 3 * (30 - 11));
        assert!(ws.windows.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(norm.x_min, 0.0);
        assert_eq!(norm.x_max, 229.0);
        let (r, s) = ws.provenance[20];
        assert_eq!((r, s), (1, 1));
        assert_eq!(ws.windows[[20, 0]], norm.normalize(101.0));
    }

    #[test]
    fn short_series_rejected() {
        let m = mass(vec![(0..11).map(f64::from).collect()]);
        assert!(matches!(normalize(&m), Err(Error::TooShort { .. })));
    }
}
