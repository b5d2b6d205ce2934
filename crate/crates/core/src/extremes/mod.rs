//! Percentile thresholds, extreme flags and their aggregations.
//!
//! Thresholds pool every valid (cell, month) anomaly of one region, period
//! and method. In the default two-sided mode a sample is a negative extreme
//! below the 5th percentile and a positive extreme above the 95th, both
//! with strict inequalities.

mod output;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use output::{
    write_flags_csv, write_frequency_csv, write_regional_csv, write_threshold_csv,
};

use crate::anomaly::{AnomalyField, Method};
use crate::error::{Error, Result};
use crate::grid::Period;

/// Months dropped at each end of a series before thresholding.
pub const EDGE_MONTHS: usize = 12;
pub const LOWER_PERCENTILE: f64 = 5.0;
pub const UPPER_PERCENTILE: f64 = 95.0;
/// GgC to TgC.
pub const GGC_TO_TGC: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// `q_neg = |P5|`, `q_pos = P95` of the signed anomalies.
    #[default]
    TwoSided,
    /// One threshold `P95(|a|)` used on both sides.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    #[default]
    None,
    Negative,
    Positive,
}

impl Flag {
    pub fn is(self, sign: Sign) -> bool {
        matches!(
            (self, sign),
            (Flag::Negative, Sign::Negative) | (Flag::Positive, Sign::Positive)
        )
    }

    /// `-1`, `0` or `1`.
    pub fn as_i8(self) -> i8 {
        match self {
            Flag::None => 0,
            Flag::Negative => -1,
            Flag::Positive => 1,
        }
    }
}

/// Percentile `p` in `[0, 100]` of an ascending slice, interpolating
/// linearly between the order statistics at rank `p / 100 * (n - 1)`.
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Mark the first and last [`EDGE_MONTHS`] months invalid. The result is
/// the intersection with the field's current valid span, so trimming twice
/// changes nothing.
pub fn trim_edges(anoms: &AnomalyField) -> Result<AnomalyField> {
    let n = anoms.values.n_months();
    if n < 3 * EDGE_MONTHS {
        return Err(Error::TooShort {
            needed: 3 * EDGE_MONTHS,
            actual: n,
        });
    }
    let start = anoms.valid.start.max(EDGE_MONTHS);
    let end = anoms.valid.end.min(n - EDGE_MONTHS).max(start);
    AnomalyField::new(anoms.method, anoms.values.clone(), start..end)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub region: String,
    pub period: Period,
    pub method: Method,
    pub mode: ThresholdMode,
    /// Magnitude of the negative threshold in GgC.
    pub q_neg: f64,
    /// Positive threshold in GgC.
    pub q_pos: f64,
    /// Signed cutoff: anomalies strictly below are negative extremes.
    pub lower: f64,
    /// Signed cutoff: anomalies strictly above are positive extremes.
    pub upper: f64,
    pub n_samples: usize,
}

impl ThresholdSet {
    /// The single number reported per table row.
    pub fn headline(&self) -> f64 {
        self.q_neg
    }

    pub fn classify_value(&self, a: f64) -> Flag {
        if a < self.lower {
            Flag::Negative
        } else if a > self.upper {
            Flag::Positive
        } else {
            Flag::None
        }
    }
}

/// Pool the valid samples of `anoms` and derive the thresholds.
///
/// In two-sided mode the cutoffs are the signed 5th and 95th percentiles;
/// for any centred anomaly field these equal `-q_neg` and `+q_pos`.
pub fn compute_thresholds(
    anoms: &AnomalyField,
    region: &str,
    period: Period,
    mode: ThresholdMode,
) -> Result<ThresholdSet> {
    let mut pool: Vec<f64> = anoms.valid_samples().collect();
    if pool.is_empty() {
        return Err(Error::Degenerate(format!(
            "no valid anomaly samples for {region} {period} {}",
            anoms.method
        )));
    }
    if pool.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "non-finite anomaly in {region} {period} {}",
            anoms.method
        )));
    }
    let (lower, upper) = match mode {
        ThresholdMode::TwoSided => {
            pool.sort_by(f64::total_cmp);
            (
                percentile(&pool, LOWER_PERCENTILE).expect("non-empty pool"),
                percentile(&pool, UPPER_PERCENTILE).expect("non-empty pool"),
            )
        }
        ThresholdMode::Absolute => {
            let mut abs: Vec<f64> = pool.iter().map(|v| v.abs()).collect();
            abs.sort_by(f64::total_cmp);
            let q = percentile(&abs, UPPER_PERCENTILE).expect("non-empty pool");
            (-q, q)
        }
    };
    Ok(ThresholdSet {
        region: region.to_owned(),
        period,
        method: anoms.method,
        mode,
        q_neg: lower.abs(),
        q_pos: upper.abs(),
        lower,
        upper,
        n_samples: pool.len(),
    })
}

/// Flags over the valid months of each row, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagGrid {
    pub cells: Vec<usize>,
    pub valid: Range<usize>,
    pub flags: Vec<Flag>,
}

impl FlagGrid {
    pub fn n_valid_months(&self) -> usize {
        self.valid.len()
    }

    pub fn row(&self, i: usize) -> &[Flag] {
        let m = self.n_valid_months();
        &self.flags[i * m..(i + 1) * m]
    }

    pub fn count(&self, sign: Sign) -> usize {
        self.flags.iter().filter(|f| f.is(sign)).count()
    }

    /// `(row, absolute month)` of every flag of `sign`.
    pub fn positions(&self, sign: Sign) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.n_valid_months();
        self.flags
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.is(sign))
            .map(move |(k, _)| (k / m, self.valid.start + k % m))
    }
}

pub fn classify(anoms: &AnomalyField, thresholds: &ThresholdSet) -> Result<FlagGrid> {
    if anoms.method != thresholds.method {
        return Err(Error::Misaligned(format!(
            "{} anomalies classified with {} thresholds",
            anoms.method, thresholds.method
        )));
    }
    let valid = anoms.valid.clone();
    let flags = anoms
        .values
        .rows()
        .flat_map(|row| row[valid.clone()].iter().map(|&a| thresholds.classify_value(a)))
        .collect();
    Ok(FlagGrid {
        cells: anoms.values.cells().to_vec(),
        valid,
        flags,
    })
}

/// Count of `sign` flags per row, in row order.
pub fn frequency_map(flags: &FlagGrid, sign: Sign) -> Vec<u32> {
    let m = flags.n_valid_months();
    if m == 0 {
        return vec![0; flags.cells.len()];
    }
    flags
        .flags
        .chunks(m)
        .map(|row| row.iter().filter(|f| f.is(sign)).count() as u32)
        .collect()
}

/// Per valid month: number of flagged cells and the sum of their
/// anomalies in TgC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalSeries {
    pub sign: Sign,
    /// Absolute month indices covered.
    pub months: Range<usize>,
    pub count: Vec<u32>,
    pub magnitude_tgc: Vec<f64>,
}

pub fn regional_series(anoms: &AnomalyField, flags: &FlagGrid, sign: Sign) -> Result<RegionalSeries> {
    if flags.cells != anoms.values.cells() || flags.valid != anoms.valid {
        return Err(Error::Misaligned(
            "flags were not computed from this anomaly field".into(),
        ));
    }
    let m = flags.n_valid_months();
    let mut count = vec![0u32; m];
    let mut sum_ggc = vec![0.0; m];
    for (r, row) in anoms.values.rows().enumerate() {
        for (k, f) in flags.row(r).iter().enumerate() {
            if f.is(sign) {
                count[k] += 1;
                sum_ggc[k] += row[flags.valid.start + k];
            }
        }
    }
    Ok(RegionalSeries {
        sign,
        months: flags.valid.clone(),
        count,
        magnitude_tgc: sum_ggc.into_iter().map(|s| s * GGC_TO_TGC).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeTotals {
    pub negative_tgc: f64,
    pub positive_tgc: f64,
}

/// Everything derived from one anomaly field.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremesReport {
    pub thresholds: ThresholdSet,
    pub anomalies: AnomalyField,
    pub flags: FlagGrid,
    pub freq_negative: Vec<u32>,
    pub freq_positive: Vec<u32>,
    pub negative: RegionalSeries,
    pub positive: RegionalSeries,
}

impl ExtremesReport {
    pub fn frequency(&self, sign: Sign) -> &[u32] {
        match sign {
            Sign::Negative => &self.freq_negative,
            Sign::Positive => &self.freq_positive,
        }
    }

    pub fn series(&self, sign: Sign) -> &RegionalSeries {
        match sign {
            Sign::Negative => &self.negative,
            Sign::Positive => &self.positive,
        }
    }
}

/// Trim, threshold, classify and aggregate. Trimming always comes first.
pub fn extremes_report(
    anoms: &AnomalyField,
    region: &str,
    period: Period,
    mode: ThresholdMode,
) -> Result<ExtremesReport> {
    let anomalies = trim_edges(anoms)?;
    let thresholds = compute_thresholds(&anomalies, region, period, mode)?;
    let flags = classify(&anomalies, &thresholds)?;
    let negative = regional_series(&anomalies, &flags, Sign::Negative)?;
    let positive = regional_series(&anomalies, &flags, Sign::Positive)?;
    Ok(ExtremesReport {
        freq_negative: frequency_map(&flags, Sign::Negative),
        freq_positive: frequency_map(&flags, Sign::Positive),
        thresholds,
        anomalies,
        flags,
        negative,
        positive,
    })
}

pub fn cumulative_totals(report: &ExtremesReport) -> CumulativeTotals {
    CumulativeTotals {
        negative_tgc: report.negative.magnitude_tgc.iter().sum(),
        positive_tgc: report.positive.magnitude_tgc.iter().sum(),
    }
}
