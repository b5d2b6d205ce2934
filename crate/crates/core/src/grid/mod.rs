//! Gridded monthly flux fields, region masks and conversion to carbon mass.

mod calendar;
pub mod io;
pub mod synth;

pub use calendar::{days_in_month, seconds_in_month, MonthCalendar, Period};
pub use io::{load_grid, save_grid, GridFormat};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Land fraction a cell must exceed to take part in regional analysis.
pub const DEFAULT_MIN_LAND_FRAC: f64 = 0.10;

/// Grams of carbon per gigagram.
const GRAMS_PER_GG: f64 = 1e9;

/// Monthly flux field on a lat x lon grid, in gC m^-2 s^-1.
///
/// Values are stored cell-major: all months of cell 0, then cell 1, and so
/// on, with `cell = lat * n_lon + lon`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    n_lat: usize,
    n_lon: usize,
    n_months: usize,
    calendar: MonthCalendar,
    values: Vec<f64>,
    cell_area: Vec<f64>,
    land_frac: Vec<f64>,
}

impl GridSeries {
    pub fn new(
        n_lat: usize,
        n_lon: usize,
        n_months: usize,
        calendar: MonthCalendar,
        values: Vec<f64>,
        cell_area: Vec<f64>,
        land_frac: Vec<f64>,
    ) -> Result<Self> {
        let n_cells = n_lat * n_lon;
        if n_cells == 0 || n_months == 0 {
            return Err(Error::InvalidGrid(format!(
                "empty grid ({n_lat} x {n_lon} cells, {n_months} months)"
            )));
        }
        if !(1..=12).contains(&calendar.start_month) {
            return Err(Error::format(
                "start_month",
                format!("{} is not in 1..=12", calendar.start_month),
            ));
        }
        if values.len() != n_cells * n_months {
            return Err(Error::Shape(format!(
                "{n_cells} cells x {n_months} months needs {} values, got {}",
                n_cells * n_months,
                values.len()
            )));
        }
        if cell_area.len() != n_cells || land_frac.len() != n_cells {
            return Err(Error::Shape(format!(
                "expected {n_cells} cell_area and land_frac entries, got {} and {}",
                cell_area.len(),
                land_frac.len()
            )));
        }
        for (cell, (&area, &frac)) in cell_area.iter().zip(&land_frac).enumerate() {
            if !(area > 0.0 && area.is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "cell {cell}: cell_area must be positive, got {area}"
                )));
            }
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::InvalidGrid(format!(
                    "cell {cell}: land_frac must lie in [0, 1], got {frac}"
                )));
            }
            if frac > 0.0 {
                let row = &values[cell * n_months..(cell + 1) * n_months];
                if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidGrid(format!(
                        "cell {cell} (land_frac {frac}) has a non-finite value at month {t}"
                    )));
                }
            }
        }
        Ok(Self {
            n_lat,
            n_lon,
            n_months,
            calendar,
            values,
            cell_area,
            land_frac,
        })
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn n_months(&self) -> usize {
        self.n_months
    }

    pub fn calendar(&self) -> MonthCalendar {
        self.calendar
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_area(&self) -> &[f64] {
        &self.cell_area
    }

    pub fn land_frac(&self) -> &[f64] {
        &self.land_frac
    }

    /// Flux series of one cell.
    pub fn cell_series(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n_months..(cell + 1) * self.n_months]
    }

    pub fn cell_index(&self, lat: usize, lon: usize) -> usize {
        lat * self.n_lon + lon
    }
}

/// A named set of grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMask {
    pub name: String,
    pub cells: Vec<usize>,
    #[serde(default = "default_min_land_frac")]
    pub min_land_frac: f64,
}

fn default_min_land_frac() -> f64 {
    DEFAULT_MIN_LAND_FRAC
}

impl RegionMask {
    pub fn new(name: impl Into<String>, cells: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            cells,
            min_land_frac: DEFAULT_MIN_LAND_FRAC,
        }
    }

    /// Mask covering every cell of `grid`.
    pub fn whole_grid(name: impl Into<String>, grid: &GridSeries) -> Self {
        Self::new(name, (0..grid.n_cells()).collect())
    }

    pub fn validate(&self, grid: &GridSeries) -> Result<()> {
        if let Some(&bad) = self.cells.iter().find(|&&c| c >= grid.n_cells()) {
            return Err(Error::Config(format!(
                "region `{}` references cell {bad} but the grid has {} cells",
                self.name,
                grid.n_cells()
            )));
        }
        Ok(())
    }

    /// Sorted, de-duplicated cells whose land fraction exceeds the minimum.
    pub fn effective_cells(&self, grid: &GridSeries) -> Result<Vec<usize>> {
        self.validate(grid)?;
        let mut cells: Vec<usize> = self
            .cells
            .iter()
            .copied()
            .filter(|&c| grid.land_frac[c] > self.min_land_frac)
            .collect();
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() {
            return Err(Error::EmptyRegion(self.name.clone()));
        }
        Ok(cells)
    }
}

/// Per-cell monthly carbon mass (GgC/month) for a subset of grid cells.
///
/// Also used for signed anomaly fields in the same units.
#[derive(Debug, Clone, PartialEq)]
pub struct MassSeries {
    cells: Vec<usize>,
    n_months: usize,
    calendar: MonthCalendar,
    values: Vec<f64>,
}

impl MassSeries {
    pub fn new(
        cells: Vec<usize>,
        n_months: usize,
        calendar: MonthCalendar,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != cells.len() * n_months {
            return Err(Error::Shape(format!(
                "{} cells x {n_months} months needs {} values, got {}",
                cells.len(),
                cells.len() * n_months,
                values.len()
            )));
        }
        Ok(Self {
            cells,
            n_months,
            calendar,
            values,
        })
    }

    /// Grid cell index of each row.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_months(&self) -> usize {
        self.n_months
    }

    pub fn calendar(&self) -> MonthCalendar {
        self.calendar
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Series of row `i` (not grid cell index).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_months..(i + 1) * self.n_months]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_months)
    }

    /// Months `[start, end)` of every row.
    pub fn slice_months(&self, start: usize, end: usize) -> Result<MassSeries> {
        if start >= end || end > self.n_months {
            return Err(Error::Config(format!(
                "month range {start}..{end} is outside the series (0..{})",
                self.n_months
            )));
        }
        let values = self
            .rows()
            .flat_map(|row| row[start..end].iter().copied())
            .collect();
        MassSeries::new(
            self.cells.clone(),
            end - start,
            self.calendar.shifted(start),
            values,
        )
    }

    pub fn slice_period(&self, period: Period) -> Result<MassSeries> {
        self.slice_years(period.first_year, period.last_year)
    }

    /// Calendar years `first_year..=last_year`, January to December.
    pub fn slice_years(&self, first_year: i32, last_year: i32) -> Result<MassSeries> {
        let span_err = || {
            Error::Config(format!(
                "period {first_year}-{last_year} is outside the data span {}..{}",
                self.calendar.label(0),
                self.calendar.label(self.n_months - 1)
            ))
        };
        if last_year < first_year {
            return Err(span_err());
        }
        let start = self.calendar.index_of(first_year, 1).ok_or_else(span_err)?;
        let end = self
            .calendar
            .index_of(last_year + 1, 1)
            .ok_or_else(span_err)?;
        if end > self.n_months {
            return Err(span_err());
        }
        self.slice_months(start, end)
    }

    pub(crate) fn same_layout(&self, other: &MassSeries) -> bool {
        self.cells == other.cells
            && self.n_months == other.n_months
            && self.calendar == other.calendar
    }
}

/// Convert the masked cells of `grid` from flux to monthly carbon mass in GgC.
///
/// `mass = flux * area * land_frac * seconds_in_month / 1e9`, with month
/// lengths from the no-leap calendar.
pub fn flux_to_mass(grid: &GridSeries, mask: &RegionMask) -> Result<MassSeries> {
    let cells = mask.effective_cells(grid)?;
    let n_months = grid.n_months();
    let calendar = grid.calendar();
    let seconds: Vec<f64> = (0..n_months)
        .map(|t| seconds_in_month(calendar.month_of(t)))
        .collect();
    let mut values = Vec::with_capacity(cells.len() * n_months);
    for &cell in &cells {
        let scale = grid.cell_area[cell] * grid.land_frac[cell] / GRAMS_PER_GG;
        values.extend(
            grid.cell_series(cell)
                .iter()
                .zip(&seconds)
                .map(|(flux, secs)| flux * scale * secs),
        );
    }
    MassSeries::new(cells, n_months, calendar, values)
}

/// Mean over the masked cells of `mass`, per month.
pub fn regional_mean_series(mass: &MassSeries, mask: &RegionMask) -> Result<Vec<f64>> {
    let rows: Vec<usize> = mass
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, c)| mask.cells.contains(c))
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyRegion(mask.name.clone()));
    }
    let mut mean = vec![0.0; mass.n_months()];
    for &i in &rows {
        for (acc, v) in mean.iter_mut().zip(mass.row(i)) {
            *acc += v;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_grid(flux: f64, area: f64, frac: f64, n_months: usize) -> GridSeries {
        GridSeries::new(
            1,
            2,
            n_months,
            MonthCalendar::new(2000, 1),
            vec![flux; 2 * n_months],
            vec![area; 2],
            vec![frac; 2],
        )
        .unwrap()
    }

    #[test]
    fn mass_of_thirty_day_month() {
        // April has 30 days.
        let grid = GridSeries::new(
            1,
            1,
            1,
            MonthCalendar::new(2000, 4),
            vec![1e-6],
            vec![1e10],
            vec![1.0],
        )
        .unwrap();
        let mass = flux_to_mass(&grid, &RegionMask::whole_grid("r", &grid)).unwrap();
        assert!((mass.values()[0] - 25.92).abs() < 1e-12);
    }

    #[test]
    fn zero_flux_gives_zero_mass() {
        let grid = uniform_grid(0.0, 1e10, 1.0, 12);
        let mass = flux_to_mass(&grid, &RegionMask::whole_grid("r", &grid)).unwrap();
        assert!(mass.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn land_fraction_scales_linearly() {
        let full = uniform_grid(2e-6, 5e9, 1.0, 12);
        let half = uniform_grid(2e-6, 5e9, 0.5, 12);
        let a = flux_to_mass(&full, &RegionMask::whole_grid("r", &full)).unwrap();
        let b = flux_to_mass(&half, &RegionMask::whole_grid("r", &half)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x * 0.5 - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn annual_total_uses_365_days() {
        let (flux, area, frac) = (3e-6, 1.2e10, 0.8);
        let grid = uniform_grid(flux, area, frac, 12);
        let mass = flux_to_mass(&grid, &RegionMask::whole_grid("r", &grid)).unwrap();
        let total: f64 = mass.row(0).iter().sum();
        let expected = flux * area * frac * 31_536_000.0 / 1e9;
        assert!((total - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn low_land_cells_are_excluded() {
        let grid = GridSeries::new(
            1,
            3,
            12,
            MonthCalendar::new(2000, 1),
            vec![1e-6; 36],
            vec![1e10; 3],
            vec![0.05, 0.10, 0.5],
        )
        .unwrap();
        let mask = RegionMask::whole_grid("r", &grid);
        assert_eq!(mask.effective_cells(&grid).unwrap(), vec![2]);

        let ocean = RegionMask::new("ocean", vec![0, 1]);
        assert!(matches!(
            flux_to_mass(&grid, &ocean),
            Err(Error::EmptyRegion(_))
        ));
        let bad = RegionMask::new("bad", vec![7]);
        assert!(matches!(bad.validate(&grid), Err(Error::Config(_))));
    }

    #[test]
    fn grid_validation_rejects_bad_metadata() {
        let cal = MonthCalendar::new(2000, 1);
        assert!(GridSeries::new(1, 1, 2, cal, vec![0.0; 2], vec![0.0], vec![1.0]).is_err());
        assert!(GridSeries::new(1, 1, 2, cal, vec![0.0; 2], vec![1.0], vec![1.5]).is_err());
        assert!(GridSeries::new(1, 1, 2, cal, vec![f64::NAN, 0.0], vec![1.0], vec![0.5]).is_err());
        // NaN is tolerated over pure ocean.
        assert!(GridSeries::new(1, 1, 2, cal, vec![f64::NAN, 0.0], vec![1.0], vec![0.0]).is_ok());
        assert!(matches!(
            GridSeries::new(1, 1, 2, cal, vec![0.0; 3], vec![1.0], vec![1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn regional_mean_basics() {
        let cal = MonthCalendar::new(2000, 1);
        let mass = MassSeries::new(vec![0, 1], 3, cal, vec![2.0, 2.0, 2.0, 4.0, 4.0, 4.0]).unwrap();
        let both = RegionMask::new("r", vec![0, 1]);
        assert_eq!(regional_mean_series(&mass, &both).unwrap(), vec![3.0; 3]);
        let one = RegionMask::new("r", vec![1]);
        assert_eq!(regional_mean_series(&mass, &one).unwrap(), vec![4.0; 3]);
        let none = RegionMask::new("r", vec![5]);
        assert!(regional_mean_series(&mass, &none).is_err());
    }

    #[test]
    fn slice_years_selects_whole_years() {
        let cal = MonthCalendar::new(1850, 1);
        let values: Vec<f64> = (0..48).map(f64::from).collect();
        let mass = MassSeries::new(vec![0], 48, cal, values).unwrap();
        let s = mass.slice_years(1851, 1852).unwrap();
        assert_eq!(s.n_months(), 24);
        assert_eq!(s.row(0)[0], 12.0);
        assert_eq!(s.calendar(), MonthCalendar::new(1851, 1));
        assert!(mass.slice_years(1852, 1854).is_err());
        assert!(mass.slice_years(1849, 1850).is_err());
    }
}
