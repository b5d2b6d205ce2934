//! CSV renderings of thresholds, flags, frequency maps and regional series.

use std::io::Write;

use super::{ExtremesReport, FlagGrid, ThresholdSet};
use crate::error::{Error, Result};
use crate::grid::MonthCalendar;

fn csv_err(what: &'static str) -> impl Fn(csv::Error) -> Error {
    move |e| Error::format(what, e.to_string())
}

fn finish<W: Write>(mut w: csv::Writer<W>, what: &'static str) -> Result<()> {
    w.flush().map_err(|e| Error::format(what, e.to_string()))
}

/// `region,period,method,threshold_GgC_neg,threshold_GgC_pos`, one row per
/// set in the given order.
pub fn write_threshold_csv<W: Write>(out: W, sets: &[ThresholdSet]) -> Result<()> {
    let err = csv_err("threshold csv");
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "region",
        "period",
        "method",
        "threshold_GgC_neg",
        "threshold_GgC_pos",
    ])
    .map_err(&err)?;
    for s in sets {
        w.write_record([
            s.region.clone(),
            s.period.label(),
            s.method.to_string(),
            s.q_neg.to_string(),
            s.q_pos.to_string(),
        ])
        .map_err(&err)?;
    }
    finish(w, "threshold csv")
}

/// Wide table: `cell` then one `YYYY-MM` column per valid month holding
/// -1, 0 or 1.
pub fn write_flags_csv<W: Write>(out: W, flags: &FlagGrid, calendar: MonthCalendar) -> Result<()> {
    let err = csv_err("flags csv");
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cell".to_owned()];
    header.extend(flags.valid.clone().map(|t| calendar.label(t)));
    w.write_record(&header).map_err(&err)?;
    for (r, cell) in flags.cells.iter().enumerate() {
        let mut rec = vec![cell.to_string()];
        rec.extend(flags.row(r).iter().map(|f| f.as_i8().to_string()));
        w.write_record(&rec).map_err(&err)?;
    }
    finish(w, "flags csv")
}

/// `cell,lat,lon,negative,positive` for every cell of the region.
pub fn write_frequency_csv<W: Write>(out: W, report: &ExtremesReport, n_lon: usize) -> Result<()> {
    if n_lon == 0 {
        return Err(Error::InvalidGrid("n_lon must be positive".into()));
    }
    let err = csv_err("frequency csv");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell", "lat", "lon", "negative", "positive"])
        .map_err(&err)?;
    for (r, &cell) in report.flags.cells.iter().enumerate() {
        w.write_record([
            cell.to_string(),
            (cell / n_lon).to_string(),
            (cell % n_lon).to_string(),
            report.freq_negative[r].to_string(),
            report.freq_positive[r].to_string(),
        ])
        .map_err(&err)?;
    }
    finish(w, "frequency csv")
}

/// `month,negative_count,negative_TgC,positive_count,positive_TgC` over the
/// valid months, ascending.
pub fn write_regional_csv<W: Write>(out: W, report: &ExtremesReport) -> Result<()> {
    let err = csv_err("regional csv");
    let calendar = report.anomalies.values.calendar();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "month",
        "negative_count",
        "negative_TgC",
        "positive_count",
        "positive_TgC",
    ])
    .map_err(&err)?;
    let (neg, pos) = (&report.negative, &report.positive);
    for (k, t) in neg.months.clone().enumerate() {
        w.write_record([
            calendar.label(t),
            neg.count[k].to_string(),
            neg.magnitude_tgc[k].to_string(),
            pos.count[k].to_string(),
            pos.magnitude_tgc[k].to_string(),
        ])
        .map_err(&err)?;
    }
    finish(w, "regional csv")
}
