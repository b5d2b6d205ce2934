//! Singular spectrum analysis baseline.
//!
//! Each cell's series is embedded in an `L x (N - L + 1)` Hankel trajectory
//! matrix and decomposed by SVD. Every eigentriple is turned back into a
//! series by anti-diagonal averaging and assigned by its dominant frequency
//! to the trend (periods of at least the trend cutoff), the seasonal group
//! (the annual cycle and its harmonics) or the residual. The residual is
//! the anomaly.

mod spectrum;

use std::io::Write;

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

pub use spectrum::{dominant_frequency, padded_len, Periodogram};

use crate::anomaly::{AnomalyField, Method};
use crate::error::{Error, Result};
use crate::grid::{MassSeries, MonthCalendar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsaConfig {
    /// Embedding window length in months.
    pub window_len: usize,
    /// Components with a period of at least this many months are trend.
    pub trend_cutoff: f64,
    /// Base period of the seasonal cycle in months.
    pub seasonal_period: f64,
    /// Half-width in cycles/month of each seasonal harmonic band.
    pub seasonal_tolerance: f64,
}

impl Default for SsaConfig {
    fn default() -> Self {
        Self {
            window_len: 120,
            trend_cutoff: 120.0,
            seasonal_period: 12.0,
            seasonal_tolerance: 0.004,
        }
    }
}

impl SsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 12 {
            return Err(Error::Config(format!(
                "ssa window_len {} must be at least 12",
                self.window_len
            )));
        }
        if !(self.trend_cutoff >= 120.0) {
            return Err(Error::Config(format!(
                "ssa trend_cutoff {} must be at least 120 months",
                self.trend_cutoff
            )));
        }
        if !(self.seasonal_period >= 2.0 && self.seasonal_period.is_finite()) {
            return Err(Error::Config(format!(
                "ssa seasonal_period {} must be at least 2 months",
                self.seasonal_period
            )));
        }
        if !(self.seasonal_tolerance > 0.0 && self.seasonal_tolerance.is_finite()) {
            return Err(Error::Config("ssa seasonal_tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Checks the series is long enough for the window.
    pub fn validate_for(&self, n_months: usize) -> Result<()> {
        self.validate()?;
        if n_months < 2 * self.window_len {
            return Err(Error::Config(format!(
                "series of {n_months} months is too short for ssa window_len {}; \
                 use window_len <= {}",
                self.window_len,
                n_months / 2
            )));
        }
        Ok(())
    }

    fn harmonics(&self) -> impl Iterator<Item = f64> + '_ {
        let n = (self.seasonal_period / 2.0).floor() as usize;
        (1..=n).map(move |k| k as f64 / self.seasonal_period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Trend,
    Seasonal,
    Residual,
}

/// Band assignment for one component frequency. A component without a
/// defined frequency (all zero) is residual.
pub fn classify_frequency(frequency: Option<f64>, config: &SsaConfig) -> Group {
    let Some(f) = frequency else {
        return Group::Residual;
    };
    if f < 1.0 / config.trend_cutoff {
        Group::Trend
    } else if config
        .harmonics()
        .any(|h| (f - h).abs() < config.seasonal_tolerance)
    {
        Group::Seasonal
    } else {
        Group::Residual
    }
}

/// Trajectory matrix whose column `j` is `series[j..j + l]`.
pub fn embed(series: &[f64], l: usize) -> Result<DMatrix<f64>> {
    let n = series.len();
    if l == 0 || n < 2 * l {
        return Err(Error::TooShort {
            needed: 2 * l.max(1),
            actual: n,
        });
    }
    let k = n - l + 1;
    Ok(DMatrix::from_fn(l, k, |i, j| series[i + j]))
}

/// Singular triples sorted by non-increasing singular value.
///
/// Elementary matrices are built as `u_i (u_i^T X)` rather than from the
/// right singular vectors, so they sum to `X` to within the orthogonality
/// of `U` even when the factorization itself is slightly inaccurate.
#[derive(Debug, Clone)]
pub struct Eigentriples {
    /// Row norms of `projections`.
    pub singular_values: Vec<f64>,
    /// Left singular vectors as columns, `L x r`.
    pub u: DMatrix<f64>,
    /// Rows `u_i^T X`, equal to `sigma_i v_i^T`; `r x K`.
    pub projections: DMatrix<f64>,
}

impl Eigentriples {
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// `u_i * u_i^T * X`.
    pub fn elementary(&self, i: usize) -> DMatrix<f64> {
        self.u.column(i) * self.projections.row(i)
    }

    pub fn recompose(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.u.nrows(), self.projections.ncols());
        for i in 0..self.len() {
            m += self.elementary(i);
        }
        m
    }

    /// Diagonal average of the `i`-th elementary matrix without forming it.
    pub fn component(&self, i: usize) -> Vec<f64> {
        let (l, k) = (self.u.nrows(), self.projections.ncols());
        let n = l + k - 1;
        let mut out = vec![0.0; n];
        for r in 0..l {
            let a = self.u[(r, i)];
            for c in 0..k {
                out[r + c] += a * self.projections[(i, c)];
            }
        }
        for (t, v) in out.iter_mut().enumerate() {
            *v /= anti_diagonal_len(t, l, k) as f64;
        }
        out
    }
}

fn anti_diagonal_len(t: usize, l: usize, k: usize) -> usize {
    t.min(l - 1).min(k - 1).min(l + k - 2 - t) + 1
}

/// Full SVD of a trajectory matrix.
pub fn decompose(trajectory: &DMatrix<f64>) -> Result<Eigentriples> {
    if trajectory.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{}x{} trajectory matrix has non-finite entries",
            trajectory.nrows(),
            trajectory.ncols()
        )));
    }
    // nalgebra's default tolerance; a bare machine epsilon occasionally
    // returns a visibly inaccurate factorization.
    let svd = SVD::try_new(trajectory.clone(), true, true, 5.0 * f64::EPSILON, 0).ok_or_else(|| {
        Error::Numerical(format!(
            "SVD did not converge on a {}x{} trajectory matrix (Frobenius norm {:e})",
            trajectory.nrows(),
            trajectory.ncols(),
            trajectory.norm()
        ))
    })?;
    let u = svd.u.expect("u requested");
    let projections = u.transpose() * trajectory;
    let norms: Vec<f64> = projections.row_iter().map(|r| r.norm()).collect();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    Ok(Eigentriples {
        singular_values: order.iter().map(|&i| norms[i]).collect(),
        u: u.select_columns(&order),
        projections: projections.select_rows(&order),
    })
}

/// Anti-diagonal averaging of an `L x K` matrix into a length `L + K - 1`
/// series.
pub fn hankelize(m: &DMatrix<f64>) -> Vec<f64> {
    let (l, k) = m.shape();
    if l == 0 || k == 0 {
        return Vec::new();
    }
    let mut out = vec![0.0; l + k - 1];
    for r in 0..l {
        for c in 0..k {
            out[r + c] += m[(r, c)];
        }
    }
    for (t, v) in out.iter_mut().enumerate() {
        *v /= anti_diagonal_len(t, l, k) as f64;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigentripleInfo {
    pub singular_value: f64,
    /// Dominant frequency in cycles/month; `None` for an all-zero component.
    pub frequency: Option<f64>,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsaDecomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub eigentriples: Vec<EigentripleInfo>,
}

impl SsaDecomposition {
    /// `trend + seasonal + residual`.
    pub fn reconstructed(&self) -> Vec<f64> {
        self.trend
            .iter()
            .zip(&self.seasonal)
            .zip(&self.residual)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

/// Classify each eigentriple's component and sum the components per group.
pub fn group(triples: &Eigentriples, config: &SsaConfig) -> SsaDecomposition {
    let n = triples.u.nrows() + triples.projections.ncols() - 1;
    let mut spectrum = Periodogram::new(n);
    let mut out = SsaDecomposition {
        trend: vec![0.0; n],
        seasonal: vec![0.0; n],
        residual: vec![0.0; n],
        eigentriples: Vec::with_capacity(triples.len()),
    };
    for i in 0..triples.len() {
        let component = triples.component(i);
        let frequency = spectrum.dominant_frequency(&component);
        let group = classify_frequency(frequency, config);
        let target = match group {
            Group::Trend => &mut out.trend,
            Group::Seasonal => &mut out.seasonal,
            Group::Residual => &mut out.residual,
        };
        for (t, c) in target.iter_mut().zip(&component) {
            *t += c;
        }
        out.eigentriples.push(EigentripleInfo {
            singular_value: triples.singular_values[i],
            frequency,
            group,
        });
    }
    out
}

/// Embed, decompose and group one series.
pub fn decompose_series(series: &[f64], config: &SsaConfig) -> Result<SsaDecomposition> {
    config.validate_for(series.len())?;
    let triples = decompose(&embed(series, config.window_len)?)?;
    Ok(group(&triples, config))
}

/// Residual-group anomalies for every cell. All months are marked valid;
/// edge trimming happens downstream.
pub fn ssa_anomalies(mass: &MassSeries, config: &SsaConfig) -> Result<AnomalyField> {
    config.validate_for(mass.n_months())?;
    let mut values = Vec::with_capacity(mass.values().len());
    for (r, row) in mass.rows().enumerate() {
        let d = decompose_series(row, config).map_err(|e| tag_cell(e, mass.cells()[r]))?;
        values.extend(d.residual);
    }
    let n = mass.n_months();
    AnomalyField::new(
        Method::Ssa,
        MassSeries::new(mass.cells().to_vec(), n, mass.calendar(), values)?,
        0..n,
    )
}

fn tag_cell(e: Error, cell: usize) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("cell {cell}: {msg}")),
        Error::Numerical(msg) => Error::Numerical(format!("cell {cell}: {msg}")),
        other => other,
    }
}

/// Audit dump of one cell's decomposition:
/// `month,original,trend,seasonal,residual`.
pub fn write_decomposition_csv<W: Write>(
    out: W,
    original: &[f64],
    decomposition: &SsaDecomposition,
    calendar: MonthCalendar,
) -> Result<()> {
    if original.len() != decomposition.trend.len() {
        return Err(Error::Dimension {
            expected: decomposition.trend.len(),
            actual: original.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::format("decomposition csv", e.to_string());
    w.write_record(["month", "original", "trend", "seasonal", "residual"])
        .map_err(csv_err)?;
    for t in 0..original.len() {
        w.write_record([
            calendar.label(t),
            original[t].to_string(),
            decomposition.trend[t].to_string(),
            decomposition.seasonal[t].to_string(),
            decomposition.residual[t].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::format("decomposition csv", e.to_string()))
}

#[cfg(test)]
mod tests;
