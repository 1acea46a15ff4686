//! Cartesian parameter grids over dotted config keys, run in parallel.

use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::scenario::config::{ConfigError, ScenarioConfig};
use crate::scenario::csv::export_csv;
use crate::scenario::run::{run_scenario, RunSummary};

/// One grid axis: a dotted config key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

impl std::str::FromStr for SweepAxis {
    type Err = ConfigError;

    /// `key=v1,v2,...`; each value is read as a TOML literal, falling back to a string.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, list) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("grid axis `{s}` is not of the form key=v1,v2")))?;
        let values: Vec<toml::Value> = list
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| {
                toml::from_str::<toml::Table>(&format!("v = {v}"))
                    .ok()
                    .and_then(|mut t| t.remove("v"))
                    .unwrap_or_else(|| toml::Value::String(v.to_string()))
            })
            .collect();
        if values.is_empty() {
            return Err(ConfigError::Invalid(format!("grid axis `{key}` has no values")));
        }
        Ok(Self { key: key.trim().to_string(), values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    /// `(key, value)` for every axis.
    pub assignment: Assignment,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
    pub exit_code: i32,
}

/// `(key, value)` pairs naming one grid point.
pub type Assignment = Vec<(String, String)>;

/// Every combination of axis values applied to `base`, in row-major order
/// (last axis varies fastest).
pub fn expand_grid<T>(base: &ScenarioConfig<T>, axes: &[SweepAxis]) -> Result<Vec<(Assignment, ScenarioConfig<T>)>, ConfigError>
where
    T: Scalar + Serialize + DeserializeOwned,
{
    let mut points = vec![(Vec::new(), base.clone())];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for (assignment, cfg) in &points {
            for value in &axis.values {
                let mut a: Vec<(String, String)> = assignment.clone();
                a.push((axis.key.clone(), value.to_string()));
                next.push((a, cfg.with_value(&axis.key, value.clone())?));
            }
        }
        points = next;
    }
    Ok(points)
}

/// Run the grid in parallel. With `out_dir`, each point's log is written to
/// `run_<index>.csv`.
pub fn run_sweep<T>(base: &ScenarioConfig<T>, axes: &[SweepAxis], out_dir: Option<&Path>) -> Result<Vec<SweepPoint>, ConfigError>
where
    T: Scalar + Serialize + DeserializeOwned,
{
    let grid = expand_grid(base, axes)?;
    Ok(grid
        .into_par_iter()
        .enumerate()
        .map(|(index, (assignment, cfg))| match run_scenario(&cfg) {
            Ok(run) => {
                let written = out_dir.map(|dir| export_csv(&run.log, &dir.join(format!("run_{index:03}.csv"))));
                match written {
                    Some(Err(e)) => SweepPoint { index, assignment, summary: Some(run.summary), error: Some(e.to_string()), exit_code: 1 },
                    _ => SweepPoint { index, assignment, summary: Some(run.summary), error: None, exit_code: 0 },
                }
            }
            Err(e) => SweepPoint { index, assignment, summary: None, error: Some(e.to_string()), exit_code: e.exit_code() },
        })
        .collect())
}
