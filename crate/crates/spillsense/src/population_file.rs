//! Population dump: a CSV with one row per unit and a JSON metadata
//! companion.
//!
//! Columns are `unit,s,n,a,g,y,propensity`, one column per covariate role
//! and one per potential outcome `po_a{a}_g{g}`, left empty where the
//! outcome is undefined. `s` is 1 for the reference population and 2 for
//! the target.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spillsense_core::graph::{ExposureKind, ExposureSpec, InterferenceNetwork};
use spillsense_core::scenario::{Covariates, Population, Role, ROLE_COUNT};
use spillsense_core::simulate::{SyntheticPopulation, UnitRecord};

use crate::error::{Failure, FailureResult};
use crate::io::{csv_bytes, fmt_f64, read_bytes, read_json, write_atomic, write_json};

pub const POPULATION_FORMAT_VERSION: u32 = 1;

/// Exposure mapping as stored in metadata and accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExposureFile {
    Count { g_max: usize, clamp: bool },
    Any,
    Threshold { k: usize },
}

impl ExposureFile {
    pub fn to_spec(self) -> FailureResult<ExposureSpec> {
        Ok(match self {
            ExposureFile::Count { g_max, clamp: false } => ExposureSpec::count(g_max),
            ExposureFile::Count { g_max, clamp: true } => ExposureSpec::count_clamped(g_max),
            ExposureFile::Any => ExposureSpec::any(),
            ExposureFile::Threshold { k } => ExposureSpec::threshold(k)?,
        })
    }

    pub fn from_spec(spec: &ExposureSpec) -> Self {
        match spec.kind() {
            ExposureKind::Count => ExposureFile::Count { g_max: spec.g_max(), clamp: spec.clamps() },
            ExposureKind::Any => ExposureFile::Any,
            ExposureKind::Threshold(k) => ExposureFile::Threshold { k },
        }
    }

    /// Parses `count`, `count-clamped`, `any` or `threshold:K`; counts take
    /// the scenario's `g_max`.
    pub fn parse(text: &str, g_max: usize) -> FailureResult<Self> {
        match text {
            "count" => Ok(ExposureFile::Count { g_max, clamp: false }),
            "count-clamped" => Ok(ExposureFile::Count { g_max, clamp: true }),
            "any" => Ok(ExposureFile::Any),
            other => match other.strip_prefix("threshold:").map(str::parse::<usize>) {
                Some(Ok(k)) => Ok(ExposureFile::Threshold { k }),
                _ => Err(Failure::Usage(format!(
                    "unknown exposure `{other}`; expected count, count-clamped, any or threshold:K"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationMeta {
    pub format_version: u32,
    pub seed: u64,
    /// Scenario path as given on the command line.
    pub scenario: String,
    pub scenario_sha256: String,
    pub network: String,
    pub network_sha256: String,
    pub units: usize,
    pub directed: bool,
    pub exposure: ExposureFile,
    pub undefined_po: bool,
}

/// `pop.csv` → `pop.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn header(levels: usize) -> Vec<String> {
    let mut h: Vec<String> = ["unit", "s", "n", "a", "g", "y", "propensity"].iter().map(|s| s.to_string()).collect();
    h.extend(Role::ALL.iter().map(|r| r.name().to_string()));
    for a in 0..2 {
        for g in 0..levels {
            h.push(format!("po_a{a}_g{g}"));
        }
    }
    h
}

pub fn population_csv(pop: &SyntheticPopulation) -> FailureResult<Vec<u8>> {
    let levels = pop.levels();
    let h = header(levels);
    let h_ref: Vec<&str> = h.iter().map(String::as_str).collect();
    let rows = pop.units.iter().enumerate().map(|(i, u)| {
        let mut row = vec![
            i.to_string(),
            u.s.label().to_string(),
            u.degree.to_string(),
            u.a.to_string(),
            u.g.to_string(),
            fmt_f64(u.y),
            fmt_f64(u.propensity),
        ];
        row.extend(u.covariates.iter().map(|c| c.to_string()));
        row.extend(u.potential_outcomes.iter().map(|po| po.map(fmt_f64).unwrap_or_default()));
        row
    });
    csv_bytes(&h_ref, rows)
}

pub fn save_population(csv_path: &Path, pop: &SyntheticPopulation, meta: &PopulationMeta) -> FailureResult<()> {
    write_atomic(csv_path, &population_csv(pop)?)?;
    write_json(&meta_path(csv_path), meta)
}

fn field<T: std::str::FromStr>(path: &Path, row: usize, name: &str, text: &str) -> FailureResult<T>
where
    T::Err: std::fmt::Display,
{
    text.parse::<T>().map_err(|e| Failure::parse(path, format!("row {row}, column `{name}`: `{text}`: {e}")))
}

/// Reads unit records written by [`population_csv`] for `levels` exposure
/// levels.
pub fn parse_population(path: &Path, bytes: &[u8], levels: usize) -> FailureResult<Vec<UnitRecord>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| Failure::parse(path, e))?.clone();
    let expected = header(levels);
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Failure::parse(path, format!("expected header `{}`", expected.join(","))));
    }
    let col: HashMap<&str, usize> = expected.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let mut units = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::parse(path, e))?;
        let row = i + 1;
        let get = |name: &str| &rec[col[name]];
        let unit: usize = field(path, row, "unit", get("unit"))?;
        if unit != i {
            return Err(Failure::parse(path, format!("row {row}: unit {unit} out of order")));
        }
        let s = Population::from_label(field(path, row, "s", get("s"))?)
            .ok_or_else(|| Failure::parse(path, format!("row {row}: s must be 1 or 2")))?;
        let mut covariates: Covariates = [0; ROLE_COUNT];
        for (c, r) in covariates.iter_mut().zip(Role::ALL) {
            *c = field(path, row, r.name(), get(r.name()))?;
        }
        let mut po = Vec::with_capacity(2 * levels);
        for a in 0..2 {
            for g in 0..levels {
                let name = format!("po_a{a}_g{g}");
                let text = get(&name);
                po.push(if text.is_empty() { None } else { Some(field::<f64>(path, row, &name, text)?) });
            }
        }
        units.push(UnitRecord {
            covariates,
            s,
            degree: field(path, row, "n", get("n"))?,
            propensity: field(path, row, "propensity", get("propensity"))?,
            a: field(path, row, "a", get("a"))?,
            g: field(path, row, "g", get("g"))?,
            potential_outcomes: po,
            y: field(path, row, "y", get("y"))?,
        });
    }
    Ok(units)
}

/// Rebuilds a population from its CSV, metadata and network.
pub fn load_population(
    csv_path: &Path,
    network: InterferenceNetwork,
    meta: &PopulationMeta,
) -> FailureResult<SyntheticPopulation> {
    let exposure = meta.exposure.to_spec()?;
    let units = parse_population(csv_path, &read_bytes(csv_path)?, exposure.g_max() + 1)?;
    if units.len() != network.unit_count() || units.len() != meta.units {
        return Err(Failure::parse(
            csv_path,
            format!(
                "{} units in the file, {} in the metadata and {} in the network",
                units.len(),
                meta.units,
                network.unit_count()
            ),
        ));
    }
    Ok(SyntheticPopulation { network, exposure, units, undefined_po: meta.undefined_po, seed: meta.seed })
}

pub fn load_meta(csv_path: &Path) -> FailureResult<PopulationMeta> {
    let meta: PopulationMeta = read_json(&meta_path(csv_path))?;
    if meta.format_version != POPULATION_FORMAT_VERSION {
        return Err(Failure::parse(
            meta_path(csv_path),
            format!("format_version {} is not supported", meta.format_version),
        ));
    }
    Ok(meta)
}
