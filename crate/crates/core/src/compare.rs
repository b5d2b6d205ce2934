//! Agreement between the VAE and SSA extremes of one region and period.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::anomaly::Method;
use crate::error::{Error, Result};
use crate::extremes::{cumulative_totals, CumulativeTotals, ExtremesReport, FlagGrid, Sign};
use crate::grid::Period;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub region: String,
    pub period: Period,
    /// Pearson correlation of the per-cell negative-extreme counts.
    pub correlation_negative: f64,
    pub correlation_positive: f64,
    pub jaccard_negative: f64,
    pub jaccard_positive: f64,
    /// Headline thresholds in GgC.
    pub threshold_vae: f64,
    pub threshold_ssa: f64,
    pub cumulative_vae: CumulativeTotals,
    pub cumulative_ssa: CumulativeTotals,
}

/// Pearson correlation. When either input has zero variance the
/// coefficient is undefined; identical inputs then score 1, others 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson inputs differ in length");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Jaccard index of the `sign` flag sets. Two empty sets score 1.
pub fn jaccard(a: &FlagGrid, b: &FlagGrid, sign: Sign) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.flags.iter().zip(&b.flags) {
        let (x, y) = (x.is(sign), y.is(sign));
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn as_f64(counts: &[u32]) -> Vec<f64> {
    counts.iter().map(|&c| f64::from(c)).collect()
}

pub fn compare_methods(vae: &ExtremesReport, ssa: &ExtremesReport) -> Result<AgreementStats> {
    let (tv, ts) = (&vae.thresholds, &ssa.thresholds);
    if tv.method != Method::Vae || ts.method != Method::Ssa {
        return Err(Error::Misaligned(format!(
            "expected vae and ssa reports, got {} and {}",
            tv.method, ts.method
        )));
    }
    if tv.region != ts.region || tv.period != ts.period {
        return Err(Error::Misaligned(format!(
            "reports cover {} {} and {} {}",
            tv.region, tv.period, ts.region, ts.period
        )));
    }
    if vae.flags.cells != ssa.flags.cells {
        return Err(Error::Misaligned(format!(
            "{} {}: reports cover different cells",
            tv.region, tv.period
        )));
    }
    if vae.flags.valid != ssa.flags.valid {
        return Err(Error::Misaligned(format!(
            "{} {}: valid months {:?} and {:?} differ",
            tv.region, tv.period, vae.flags.valid, ssa.flags.valid
        )));
    }
    Ok(AgreementStats {
        region: tv.region.clone(),
        period: tv.period,
        correlation_negative: pearson(&as_f64(&vae.freq_negative), &as_f64(&ssa.freq_negative)),
        correlation_positive: pearson(&as_f64(&vae.freq_positive), &as_f64(&ssa.freq_positive)),
        jaccard_negative: jaccard(&vae.flags, &ssa.flags, Sign::Negative),
        jaccard_positive: jaccard(&vae.flags, &ssa.flags, Sign::Positive),
        threshold_vae: tv.headline(),
        threshold_ssa: ts.headline(),
        cumulative_vae: cumulative_totals(vae),
        cumulative_ssa: cumulative_totals(ssa),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub region: String,
    pub period: Period,
    pub vae_ggc: f64,
    pub ssa_ggc: f64,
}

/// Thresholds side by side: `Region | Period | VAE (GgC) | SSA (GgC)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub rows: Vec<ThresholdRow>,
}

pub const TABLE_HEADER: [&str; 4] = ["Region", "Period", "VAE (GgC)", "SSA (GgC)"];

/// Rows grouped by region in order of first appearance, periods ascending
/// within each region.
pub fn threshold_table(stats: &[AgreementStats]) -> ThresholdTable {
    let mut regions: Vec<&str> = Vec::new();
    for s in stats {
        if !regions.contains(&s.region.as_str()) {
            regions.push(&s.region);
        }
    }
    let mut rows: Vec<ThresholdRow> = stats
        .iter()
        .map(|s| ThresholdRow {
            region: s.region.clone(),
            period: s.period,
            vae_ggc: s.threshold_vae,
            ssa_ggc: s.threshold_ssa,
        })
        .collect();
    rows.sort_by_key(|r| {
        let rank = regions.iter().position(|&g| g == r.region).unwrap_or(usize::MAX);
        (rank, r.period)
    });
    ThresholdTable { rows }
}

impl ThresholdTable {
    /// Pipe-separated text with thresholds rounded to whole GgC.
    pub fn to_text(&self) -> String {
        let mut out = TABLE_HEADER.join(" | ");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{} | {} | {:.0} | {:.0}\n",
                r.region,
                r.period.label(),
                r.vae_ggc,
                r.ssa_ggc
            ));
        }
        out
    }

    /// Same columns as CSV at full precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::format("threshold table csv", e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TABLE_HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.region.clone(),
                r.period.label(),
                r.vae_ggc.to_string(),
                r.ssa_ggc.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::format("threshold table csv", e.to_string()))
    }
}

/// One row per entry, in the given order.
pub fn write_agreement_csv<W: Write>(out: W, stats: &[AgreementStats]) -> Result<()> {
    let err = |e: csv::Error| Error::format("agreement csv", e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "region",
        "period",
        "correlation_negative",
        "correlation_positive",
        "jaccard_negative",
        "jaccard_positive",
        "threshold_vae_GgC",
        "threshold_ssa_GgC",
        "cumulative_negative_vae_TgC",
        "cumulative_negative_ssa_TgC",
        "cumulative_positive_vae_TgC",
        "cumulative_positive_ssa_TgC",
    ])
    .map_err(err)?;
    for s in stats {
        w.write_record([
            s.region.clone(),
            s.period.label(),
            s.correlation_negative.to_string(),
            s.correlation_positive.to_string(),
            s.jaccard_negative.to_string(),
            s.jaccard_positive.to_string(),
            s.threshold_vae.to_string(),
            s.threshold_ssa.to_string(),
            s.cumulative_vae.negative_tgc.to_string(),
            s.cumulative_ssa.negative_tgc.to_string(),
            s.cumulative_vae.positive_tgc.to_string(),
            s.cumulative_ssa.positive_tgc.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::format("agreement csv", e.to_string()))
}
