//! Grid file formats.
//!
//! Flat-binary: a JSON header `<name>.json` and a payload `<name>.f64` of
//! little-endian f64 values: the flux block (cell-major, then month), then
//! `cell_area` (one value per cell), then `land_frac` (one value per cell).
//!
//! CSV: a first line `# n_lat=<n> n_lon=<n>`, a header row
//! `cell,cell_area,land_frac,YYYY-MM,...` and one row per cell.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GridSeries, MonthCalendar};
use crate::error::{Error, Result};

pub const LAYOUT_CELL_MAJOR: &str = "cell-major";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridFormat {
    FlatBinary,
    Csv,
}

impl GridFormat {
    /// Guess the format from a file extension (`.csv` vs anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => GridFormat::Csv,
            _ => GridFormat::FlatBinary,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct BinaryHeader<'a> {
    n_lat: usize,
    n_lon: usize,
    n_months: usize,
    start_year: i32,
    start_month: u32,
    layout: &'a str,
}

/// Header and payload paths of a flat-binary grid named by `path`.
pub fn binary_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("f64"))
}

pub fn load_grid(path: &Path, format: GridFormat) -> Result<GridSeries> {
    match format {
        GridFormat::FlatBinary => load_binary(path),
        GridFormat::Csv => load_csv(path),
    }
}

pub fn save_grid(grid: &GridSeries, path: &Path, format: GridFormat) -> Result<()> {
    match format {
        GridFormat::FlatBinary => save_binary(grid, path),
        GridFormat::Csv => save_csv(grid, path),
    }
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn header_uint(header: &Value, field: &str) -> Result<u64> {
    match header.get(field) {
        None => Err(Error::format(field, "missing")),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::format(field, format!("expected a non-negative integer, got {v}"))),
    }
}

fn header_int(header: &Value, field: &str) -> Result<i64> {
    match header.get(field) {
        None => Err(Error::format(field, "missing")),
        Some(v) => v
            .as_i64()
            .ok_or_else(|| Error::format(field, format!("expected an integer, got {v}"))),
    }
}

fn to_usize(value: u64, field: &str) -> Result<usize> {
    usize::try_from(value).map_err(|_| Error::format(field, "value out of range"))
}

fn load_binary(path: &Path) -> Result<GridSeries> {
    let (header_path, payload_path) = binary_paths(path);
    let text = read_string(&header_path)?;
    let header: Value = serde_json::from_str(&text)
        .map_err(|e| Error::format("header", format!("not valid JSON: {e}")))?;
    if !header.is_object() {
        return Err(Error::format("header", "expected a JSON object"));
    }

    let n_lat = to_usize(header_uint(&header, "n_lat")?, "n_lat")?;
    let n_lon = to_usize(header_uint(&header, "n_lon")?, "n_lon")?;
    let n_months = to_usize(header_uint(&header, "n_months")?, "n_months")?;
    let start_year = i32::try_from(header_int(&header, "start_year")?)
        .map_err(|_| Error::format("start_year", "value out of range"))?;
    let start_month = header_uint(&header, "start_month")?;
    if !(1..=12).contains(&start_month) {
        return Err(Error::format(
            "start_month",
            format!("{start_month} is not in 1..=12"),
        ));
    }
    match header.get("layout").and_then(Value::as_str) {
        Some(LAYOUT_CELL_MAJOR) => {}
        Some(other) => {
            return Err(Error::format(
                "layout",
                format!("unsupported layout `{other}`, expected `{LAYOUT_CELL_MAJOR}`"),
            ))
        }
        None => return Err(Error::format("layout", "missing or not a string")),
    }

    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Shape(format!(
            "payload {} is {} bytes, not a whole number of f64 values",
            payload_path.display(),
            bytes.len()
        )));
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();

    let n_cells = n_lat * n_lon;
    let expected = n_cells * (n_months + 2);
    if floats.len() != expected {
        return Err(Error::Shape(format!(
            "header declares {n_lat}x{n_lon} cells x {n_months} months \
             ({expected} values with area and land fraction blocks), payload has {}",
            floats.len()
        )));
    }
    let flux_len = n_cells * n_months;
    let values = floats[..flux_len].to_vec();
    let cell_area = floats[flux_len..flux_len + n_cells].to_vec();
    let land_frac = floats[flux_len + n_cells..].to_vec();
    GridSeries::new(
        n_lat,
        n_lon,
        n_months,
        MonthCalendar::new(start_year, start_month as u32),
        values,
        cell_area,
        land_frac,
    )
}

fn save_binary(grid: &GridSeries, path: &Path) -> Result<()> {
    let (header_path, payload_path) = binary_paths(path);
    let cal = grid.calendar();
    let header = BinaryHeader {
        n_lat: grid.n_lat(),
        n_lon: grid.n_lon(),
        n_months: grid.n_months(),
        start_year: cal.start_year,
        start_month: cal.start_month,
        layout: LAYOUT_CELL_MAJOR,
    };
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    write_bytes(&header_path, text.as_bytes())?;

    let mut payload =
        Vec::with_capacity(8 * (grid.values().len() + 2 * grid.n_cells()));
    for v in grid
        .values()
        .iter()
        .chain(grid.cell_area())
        .chain(grid.land_frac())
    {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(&payload_path, &payload)
}

fn parse_preamble(line: &str) -> Result<(usize, usize)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::format("preamble", "first line must start with `#`"))?;
    let mut n_lat = None;
    let mut n_lon = None;
    for token in body.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            continue;
        };
        let parsed = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::format(key, format!("`{value}` is not a count")))
        };
        match key {
            "n_lat" => n_lat = Some(parsed()?),
            "n_lon" => n_lon = Some(parsed()?),
            _ => {}
        }
    }
    Ok((
        n_lat.ok_or_else(|| Error::format("n_lat", "missing from preamble"))?,
        n_lon.ok_or_else(|| Error::format("n_lon", "missing from preamble"))?,
    ))
}

fn parse_month_label(label: &str) -> Result<(i32, u32)> {
    let bad = || Error::format("month column", format!("`{label}` is not YYYY-MM"));
    let (y, m) = label.rsplit_once('-').ok_or_else(bad)?;
    let year = y.parse::<i32>().map_err(|_| bad())?;
    let month = m.parse::<u32>().map_err(|_| bad())?;
    if !(1..=12).contains(&month) {
        return Err(bad());
    }
    Ok((year, month))
}

fn load_csv(path: &Path) -> Result<GridSeries> {
    let text = read_string(path)?;
    let (first, rest) = text
        .split_once('\n')
        .ok_or_else(|| Error::format("preamble", "file has no data rows"))?;
    let (n_lat, n_lon) = parse_preamble(first.trim_end())?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(rest.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::format("header", e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    for (i, expected) in ["cell", "cell_area", "land_frac"].iter().enumerate() {
        if names.get(i) != Some(expected) {
            return Err(Error::format(
                *expected,
                format!("header column {i} must be `{expected}`"),
            ));
        }
    }
    let n_months = names.len() - 3;
    if n_months == 0 {
        return Err(Error::format("header", "no month columns"));
    }
    let (start_year, start_month) = parse_month_label(names[3])?;
    let calendar = MonthCalendar::new(start_year, start_month);
    for (t, label) in names[3..].iter().enumerate() {
        if *label != calendar.label(t) {
            return Err(Error::format(
                "month column",
                format!("column {} is `{label}`, expected `{}`", t + 3, calendar.label(t)),
            ));
        }
    }

    let n_cells = n_lat * n_lon;
    let mut values = Vec::with_capacity(n_cells * n_months);
    let mut cell_area = Vec::with_capacity(n_cells);
    let mut land_frac = Vec::with_capacity(n_cells);
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Shape(format!("row {row_idx}: {e}")))?;
        if record.len() != n_months + 3 {
            return Err(Error::Shape(format!(
                "row {row_idx} has {} columns, expected {}",
                record.len(),
                n_months + 3
            )));
        }
        let cell: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::format("cell", format!("row {row_idx}: `{}`", &record[0])))?;
        if cell != row_idx {
            return Err(Error::format(
                "cell",
                format!("row {row_idx} is labelled cell {cell}; rows must be in cell order"),
            ));
        }
        let num = |i: usize, field: &str| -> Result<f64> {
            record[i].trim().parse::<f64>().map_err(|_| {
                Error::format(field, format!("row {row_idx}: `{}` is not a number", &record[i]))
            })
        };
        cell_area.push(num(1, "cell_area")?);
        land_frac.push(num(2, "land_frac")?);
        for i in 3..record.len() {
            values.push(num(i, names[i])?);
        }
    }
    if cell_area.len() != n_cells {
        return Err(Error::Shape(format!(
            "preamble declares {n_lat}x{n_lon} = {n_cells} cells, file has {} rows",
            cell_area.len()
        )));
    }
    GridSeries::new(n_lat, n_lon, n_months, calendar, values, cell_area, land_frac)
}

fn save_csv(grid: &GridSeries, path: &Path) -> Result<()> {
    let mut out = format!("# n_lat={} n_lon={}\n", grid.n_lat(), grid.n_lon());
    let mut writer = csv::Writer::from_writer(Vec::new());
    let cal = grid.calendar();
    let mut header = vec!["cell".to_string(), "cell_area".into(), "land_frac".into()];
    header.extend((0..grid.n_months()).map(|t| cal.label(t)));
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    writer.write_record(&header).map_err(csv_err)?;
    for cell in 0..grid.n_cells() {
        let mut row = vec![
            cell.to_string(),
            grid.cell_area()[cell].to_string(),
            grid.land_frac()[cell].to_string(),
        ];
        row.extend(grid.cell_series(cell).iter().map(f64::to_string));
        writer.write_record(&row).map_err(csv_err)?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    write_bytes(path, out.as_bytes())
}
