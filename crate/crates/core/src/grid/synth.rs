//! Synthetic GPP grids with injected suppression events.
//!
//! Each cell's flux is
//!
//! ```text
//! base + linear * y + quadratic * y^2 + annual * sin(2 pi (m - 4) / 12) + noise
//! ```
//!
//! where `y` is elapsed years and `m` the calendar month (peak in July).
//! Events then multiply the flux of one cell over a month span by `factor`
//! (0.4 is a 60% suppression). Negative results are clipped to zero.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GridSeries, MonthCalendar};
use crate::error::{Error, Result};

/// A parameter given either once for all cells or once per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCell {
    Uniform(f64),
    Cells(Vec<f64>),
}

impl PerCell {
    pub fn get(&self, cell: usize) -> f64 {
        match self {
            PerCell::Uniform(v) => *v,
            PerCell::Cells(v) => v[cell],
        }
    }

    fn check(&self, name: &str, n_cells: usize) -> Result<()> {
        match self {
            PerCell::Uniform(v) if !v.is_finite() => {
                Err(Error::Spec(format!("{name}: value {v} is not finite")))
            }
            PerCell::Cells(v) if v.len() != n_cells => Err(Error::Spec(format!(
                "{name}: expected {n_cells} per-cell values, got {}",
                v.len()
            ))),
            PerCell::Cells(v) => match v.iter().position(|x| !x.is_finite()) {
                Some(i) => Err(Error::Spec(format!("{name}[{i}]: value is not finite"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

impl From<f64> for PerCell {
    fn from(v: f64) -> Self {
        PerCell::Uniform(v)
    }
}

/// Multiplicative suppression of one cell over `months` months from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedEvent {
    pub cell: usize,
    pub start: usize,
    pub months: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_lat: usize,
    pub n_lon: usize,
    pub n_months: usize,
    pub start_year: i32,
    #[serde(default = "january")]
    pub start_month: u32,
    /// m^2
    pub cell_area: PerCell,
    pub land_frac: PerCell,
    /// gC m^-2 s^-1
    pub base: PerCell,
    /// gC m^-2 s^-1 per year
    #[serde(default = "zero")]
    pub trend_linear: PerCell,
    /// gC m^-2 s^-1 per year^2
    #[serde(default = "zero")]
    pub trend_quadratic: PerCell,
    pub annual_amplitude: PerCell,
    #[serde(default = "zero")]
    pub noise_std: PerCell,
    #[serde(default)]
    pub events: Vec<InjectedEvent>,
}

fn january() -> u32 {
    1
}

fn zero() -> PerCell {
    PerCell::Uniform(0.0)
}

/// A (cell, month) sample that was altered by an injected event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledSample {
    pub cell: usize,
    pub month: usize,
}

/// Ground truth for a synthetic grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthTruth {
    /// Injected samples, sorted by (cell, month).
    pub samples: Vec<LabeledSample>,
    /// Index into `SynthSpec::events` for each entry of `samples`.
    pub event_of: Vec<usize>,
}

impl SynthTruth {
    pub fn contains(&self, cell: usize, month: usize) -> bool {
        self.samples
            .binary_search(&LabeledSample { cell, month })
            .is_ok()
    }

    /// CSV with header `cell,month,event`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,month,event\n");
        for (s, e) in self.samples.iter().zip(&self.event_of) {
            out.push_str(&format!("{},{},{}\n", s.cell, s.month, e));
        }
        out
    }
}

impl SynthSpec {
    pub fn n_cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn validate(&self) -> Result<()> {
        let n_cells = self.n_cells();
        if n_cells == 0 || self.n_months == 0 {
            return Err(Error::Spec("grid must have at least one cell and month".into()));
        }
        if !(1..=12).contains(&self.start_month) {
            return Err(Error::Spec(format!(
                "start_month: {} is not in 1..=12",
                self.start_month
            )));
        }
        for (name, p) in [
            ("cell_area", &self.cell_area),
            ("land_frac", &self.land_frac),
            ("base", &self.base),
            ("trend_linear", &self.trend_linear),
            ("trend_quadratic", &self.trend_quadratic),
            ("annual_amplitude", &self.annual_amplitude),
            ("noise_std", &self.noise_std),
        ] {
            p.check(name, n_cells)?;
        }
        for c in 0..n_cells {
            if self.noise_std.get(c) < 0.0 {
                return Err(Error::Spec(format!("noise_std: cell {c} is negative")));
            }
        }
        for (i, ev) in self.events.iter().enumerate() {
            if ev.cell >= n_cells {
                return Err(Error::Spec(format!(
                    "events[{i}].cell: {} is not a cell of a {n_cells}-cell grid",
                    ev.cell
                )));
            }
            if ev.months == 0 || ev.start + ev.months > self.n_months {
                return Err(Error::Spec(format!(
                    "events[{i}]: span {}..{} is outside [0, {})",
                    ev.start,
                    ev.start + ev.months,
                    self.n_months
                )));
            }
            if !(ev.factor >= 0.0 && ev.factor.is_finite()) {
                return Err(Error::Spec(format!(
                    "events[{i}].factor: {} must be a non-negative number",
                    ev.factor
                )));
            }
        }
        Ok(())
    }

    /// Noise-free, event-free flux of `cell` at month index `t`.
    pub fn clean_signal(&self, cell: usize, t: usize) -> f64 {
        let years = t as f64 / 12.0;
        let month = MonthCalendar::new(self.start_year, self.start_month).month_of(t);
        self.base.get(cell)
            + self.trend_linear.get(cell) * years
            + self.trend_quadratic.get(cell) * years * years
            + self.annual_amplitude.get(cell) * (2.0 * PI * (f64::from(month) - 4.0) / 12.0).sin()
    }
}

/// Generate the grid described by `spec`; deterministic in `seed`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<(GridSeries, SynthTruth)> {
    spec.validate()?;
    let n_cells = spec.n_cells();
    let n_months = spec.n_months;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut values = Vec::with_capacity(n_cells * n_months);
    for cell in 0..n_cells {
        let sd = spec.noise_std.get(cell);
        for t in 0..n_months {
            // Draw unconditionally so the noise stream does not depend on sd.
            let eps: f64 = std_normal.sample(&mut rng);
            values.push(spec.clean_signal(cell, t) + sd * eps);
        }
    }

    let mut labeled = BTreeSet::new();
    for (i, ev) in spec.events.iter().enumerate() {
        for t in ev.start..ev.start + ev.months {
            values[ev.cell * n_months + t] *= ev.factor;
            labeled.insert((LabeledSample { cell: ev.cell, month: t }, i));
        }
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));

    let mut truth = SynthTruth::default();
    for (s, e) in labeled {
        // Overlapping events: keep the first label for a sample.
        if truth.samples.last() != Some(&s) {
            truth.samples.push(s);
            truth.event_of.push(e);
        }
    }

    let grid = GridSeries::new(
        spec.n_lat,
        spec.n_lon,
        n_months,
        MonthCalendar::new(spec.start_year, spec.start_month),
        values,
        (0..n_cells).map(|c| spec.cell_area.get(c)).collect(),
        (0..n_cells).map(|c| spec.land_frac.get(c)).collect(),
    )
    .map_err(|e| Error::Spec(format!("generated grid is invalid: {e}")))?;
    Ok((grid, truth))
}
