//! Run configuration: one JSON document per run.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use gpp_extremes::anomaly::Method;
use gpp_extremes::extremes::ThresholdMode;
use gpp_extremes::grid::synth::SynthSpec;
use gpp_extremes::grid::{GridFormat, GridSeries, Period, RegionMask};
use gpp_extremes::ssa::SsaConfig;
use gpp_extremes::vae::{SearchSpace, TrainConfig, VaeArchitecture};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub input: InputSpec,
    pub regions: Vec<RegionSpec>,
    pub periods: Vec<Period>,
    #[serde(default)]
    pub methods: MethodSelection,
    #[serde(default)]
    pub vae: VaeSettings,
    #[serde(default)]
    pub ssa: SsaConfig,
    #[serde(default)]
    pub extremes: ExtremesSettings,
    #[serde(default)]
    pub gridsearch: Option<SearchSpace>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InputSpec {
    /// A grid file; the format follows the extension unless given.
    Grid {
        path: PathBuf,
        #[serde(default)]
        format: Option<GridFormat>,
    },
    /// A synthetic grid generated from the run seed.
    Synth(SynthSpec),
}

/// A region given as explicit cells or as a lat/lon index box
/// (half-open ranges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Cells(RegionMask),
    Box {
        name: String,
        lat: [usize; 2],
        lon: [usize; 2],
        #[serde(default)]
        min_land_frac: Option<f64>,
    },
}

impl RegionSpec {
    pub fn name(&self) -> &str {
        match self {
            RegionSpec::Cells(m) => &m.name,
            RegionSpec::Box { name, .. } => name,
        }
    }

    pub fn to_mask(&self, grid: &GridSeries) -> Result<RegionMask> {
        match self {
            RegionSpec::Cells(m) => Ok(m.clone()),
            RegionSpec::Box {
                name,
                lat,
                lon,
                min_land_frac,
            } => {
                if lat[0] >= lat[1] || lon[0] >= lon[1] || lat[1] > grid.n_lat() || lon[1] > grid.n_lon()
                {
                    return Err(CliError::Config(format!(
                        "region `{name}`: box lat {lat:?} lon {lon:?} does not fit a {} x {} grid",
                        grid.n_lat(),
                        grid.n_lon()
                    )));
                }
                let cells = (lat[0]..lat[1])
                    .flat_map(|i| (lon[0]..lon[1]).map(move |j| (i, j)))
                    .map(|(i, j)| grid.cell_index(i, j))
                    .collect();
                let mut mask = RegionMask::new(name.clone(), cells);
                if let Some(m) = min_land_frac {
                    mask.min_land_frac = *m;
                }
                Ok(mask)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSelection {
    Vae,
    Ssa,
    #[default]
    Both,
}

impl MethodSelection {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::Vae => vec![Method::Vae],
            MethodSelection::Ssa => vec![Method::Ssa],
            MethodSelection::Both => vec![Method::Vae, Method::Ssa],
        }
    }

    pub fn includes(self, method: Method) -> bool {
        self.methods().contains(&method)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSettings {
    pub architecture: VaeArchitecture,
    /// `train.seed` is ignored; each model's seed derives from the run seed.
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremesSettings {
    pub mode: ThresholdMode,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
                path: path.to_owned(),
                source,
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|source| CliError::ConfigParse {
                path: PathBuf::from("<inline>"),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    /// Make relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        if let InputSpec::Grid { path, .. } = &mut self.input {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Checks that need no grid.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported; expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.regions.is_empty() {
            return Err(CliError::Config("at least one region is required".into()));
        }
        if self.periods.is_empty() {
            return Err(CliError::Config("at least one period is required".into()));
        }
        let mut names = BTreeSet::new();
        for r in &self.regions {
            let name = r.name();
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(CliError::Config(format!(
                    "region name `{name}` must be non-empty ASCII letters, digits, `_` or `-`"
                )));
            }
            if !names.insert(name) {
                return Err(CliError::Config(format!("region `{name}` is defined twice")));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.periods {
            if p.last_year < p.first_year {
                return Err(CliError::Config(format!(
                    "period {}-{} ends before it starts",
                    p.first_year, p.last_year
                )));
            }
            if !seen.insert(*p) {
                return Err(CliError::Config(format!("period {p} is listed twice")));
            }
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        self.vae.architecture.validate()?;
        self.vae.train.validate()?;
        self.ssa.validate()?;
        Ok(())
    }

    /// Checks against the loaded grid: periods inside its span and
    /// non-empty regions.
    pub fn validate_against(&self, grid: &GridSeries) -> Result<Vec<RegionMask>> {
        let cal = grid.calendar();
        for p in &self.periods {
            let start = cal.index_of(p.first_year, 1);
            let end = cal.index_of(p.last_year + 1, 1);
            match (start, end) {
                (Some(_), Some(end)) if end <= grid.n_months() => {}
                _ => {
                    return Err(CliError::Config(format!(
                        "period {p} is outside the grid span {}..{}",
                        cal.label(0),
                        cal.label(grid.n_months() - 1)
                    )))
                }
            }
        }
        self.regions
            .iter()
            .map(|r| {
                let mask = r.to_mask(grid)?;
                mask.effective_cells(grid)?;
                Ok(mask)
            })
            .collect()
    }
}

/// File-name tag of a period, e.g. `1850-1880`.
pub fn period_tag(p: Period) -> String {
    format!("{}-{}", p.first_year, p.last_year)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "input": {"grid": {"path": "g.csv"}},
        "regions": [{"name": "WNA", "cells": [0, 1]}],
        "periods": [{"first_year": 1850, "last_year": 1880}]
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.methods, MethodSelection::Both);
        assert_eq!(c.vae.architecture.latent_dim, 5);
        assert_eq!(c.ssa.window_len, 120);
        assert_eq!(c.extremes.mode, ThresholdMode::TwoSided);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn schema_version_is_checked() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(RunConfig::from_json(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"seed\"", "\"sed\"").replace(
            "\"schema_version\": 1,",
            "\"schema_version\": 1, \"sede\": 3,",
        );
        assert!(matches!(
            RunConfig::from_json(&text),
            Err(CliError::ConfigParse { .. })
        ));
    }

    #[test]
    fn box_regions_expand_row_major() {
        let grid = GridSeries::new(
            3,
            4,
            1,
            gpp_extremes::grid::MonthCalendar::new(1850, 1),
            vec![1.0; 12],
            vec![1.0; 12],
            vec![1.0; 12],
        )
        .unwrap();
        let spec: RegionSpec =
            serde_json::from_str(r#"{"name": "B", "lat": [1, 3], "lon": [2, 4]}"#).unwrap();
        assert_eq!(spec.to_mask(&grid).unwrap().cells, vec![6, 7, 10, 11]);
        let bad: RegionSpec =
            serde_json::from_str(r#"{"name": "B", "lat": [1, 4], "lon": [2, 4]}"#).unwrap();
        assert!(bad.to_mask(&grid).is_err());
    }

    #[test]
    fn duplicate_regions_and_bad_names() {
        let text = MINIMAL.replace(
            r#"[{"name": "WNA", "cells": [0, 1]}]"#,
            r#"[{"name": "WNA", "cells": [0]}, {"name": "WNA", "cells": [1]}]"#,
        );
        assert!(RunConfig::from_json(&text).is_err());
        let text = MINIMAL.replace("\"WNA\"", "\"W/NA\"");
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn tags() {
        assert_eq!(period_tag(Period::new(1850, 1880)), "1850-1880");
    }
}
