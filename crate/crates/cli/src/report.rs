//! `report.json` and the output directory layout:
//! `<out>/report.json`, `<out>/series/*.csv`, `<out>/fields/*.{bin,json}`.

use std::fs;
use std::path::{Path, PathBuf};

use hjsys_core::grid::{TorusGrid, VectorGridField};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, Context, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
    /// `le`, `ge` or `eq`.
    pub relation: &'static str,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub command: String,
    pub scenario: String,
    pub warnings: Vec<String>,
    pub results: Map<String, Value>,
    /// Hard assertions; any failure makes the run exit nonzero.
    pub assertions: Vec<Assertion>,
    /// Diagnostics that are recorded but do not affect the exit status.
    pub checks: Vec<Assertion>,
}

impl Report {
    pub fn new(command: &str, scenario: &str, warnings: &[String]) -> Self {
        Self {
            command: command.into(),
            scenario: scenario.into(),
            warnings: warnings.to_vec(),
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.results.insert(key.into(), v);
    }

    fn record(
        list: &mut Vec<Assertion>,
        name: &str,
        value: f64,
        bound: f64,
        relation: &'static str,
    ) -> bool {
        let pass = match relation {
            "le" => value <= bound,
            "ge" => value >= bound,
            _ => value == bound,
        };
        list.push(Assertion {
            name: name.into(),
            pass,
            value,
            bound,
            relation,
        });
        pass
    }

    pub fn assert_le(&mut self, name: &str, value: f64, bound: f64) -> bool {
        Self::record(&mut self.assertions, name, value, bound, "le")
    }

    pub fn assert_ge(&mut self, name: &str, value: f64, bound: f64) -> bool {
        Self::record(&mut self.assertions, name, value, bound, "ge")
    }

    pub fn assert_that(&mut self, name: &str, ok: bool) -> bool {
        Self::record(
            &mut self.assertions,
            name,
            f64::from(u8::from(ok)),
            1.0,
            "eq",
        )
    }

    pub fn check_le(&mut self, name: &str, value: f64, bound: f64) -> bool {
        Self::record(&mut self.checks, name, value, bound, "le")
    }

    pub fn check_ge(&mut self, name: &str, value: f64, bound: f64) -> bool {
        Self::record(&mut self.checks, name, value, bound, "ge")
    }

    pub fn check_that(&mut self, name: &str, ok: bool) -> bool {
        Self::record(&mut self.checks, name, f64::from(u8::from(ok)), 1.0, "eq")
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn failed(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.pass).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn result(&self, key: &str) -> Option<&Value> {
        self.results.get(key)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Output directory with `series/` and `fields/` created on demand.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir })
    }

    fn sub(&self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
        Ok(p)
    }

    pub fn series(&self, name: &str, csv: &str) -> Result<PathBuf> {
        let path = self.sub("series")?.join(format!("{name}.csv"));
        fs::write(&path, csv).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn field(&self, name: &str, grid: &TorusGrid, field: &VectorGridField) -> Result<PathBuf> {
        let stem = self.sub("fields")?.join(name);
        hjsys_core::io::write_field_binary(&stem, grid, field)
            .context(|| format!("writing field {name}"))?;
        Ok(stem)
    }

    pub fn report(&self, report: &Report) -> Result<PathBuf> {
        let path = self.dir.join("report.json");
        fs::write(&path, report.to_json()).map_err(io_err(&path))?;
        Ok(path)
    }
}
