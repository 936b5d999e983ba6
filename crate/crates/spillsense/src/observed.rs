//! Observed-data CSV for external analyses.
//!
//! Required columns are `unit,a,y`. An optional `s` column (1 or 2) marks
//! the population, defaulting to the reference population, and an optional
//! `pscore_pseudo` column supplies p(A = 1 | S = 1, x_ay) per unit. A
//! sidecar JSON maps covariate columns to roles; columns mapped to `x_ay`
//! form the pseudo-propensity strata. Without a sidecar, columns named
//! after a role map to it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spillsense_core::estimate::ObservedRecord;
use spillsense_core::scenario::{Population, Role};

use crate::error::{Failure, FailureResult};
use crate::io::{read_bytes, read_json};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    /// Column name to role name.
    #[serde(default)]
    pub roles: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_max: Option<usize>,
}

/// `obs.csv` → `obs.roles.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("roles.json")
}

/// Loads the explicit sidecar, else the conventional one beside the data,
/// else an empty mapping.
pub fn load_sidecar(csv_path: &Path, explicit: Option<&Path>) -> FailureResult<Sidecar> {
    match explicit {
        Some(p) => read_json(p),
        None => {
            let p = sidecar_path(csv_path);
            if p.exists() {
                read_json(&p)
            } else {
                Ok(Sidecar::default())
            }
        }
    }
}

pub fn parse_observed(path: &Path, bytes: &[u8], sidecar: &Sidecar) -> FailureResult<Vec<ObservedRecord>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers: Vec<String> =
        reader.headers().map_err(|e| Failure::parse(path, e))?.iter().map(str::to_string).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| find(name).ok_or_else(|| Failure::parse(path, format!("missing column `{name}`")));
    let (c_a, c_y) = (required("a")?, required("y")?);
    required("unit")?;
    let c_s = find("s");
    let c_p = find("pscore_pseudo");

    let mut strata_cols = Vec::new();
    if sidecar.roles.is_empty() {
        if let Some(i) = find(Role::XAy.name()) {
            strata_cols.push(i);
        }
    } else {
        for (col, role) in &sidecar.roles {
            let r = Role::from_name(role)
                .ok_or_else(|| Failure::parse(path, format!("sidecar maps `{col}` to unknown role `{role}`")))?;
            let i = find(col).ok_or_else(|| Failure::parse(path, format!("sidecar column `{col}` is missing")))?;
            if r == Role::XAy {
                strata_cols.push(i);
            }
        }
    }

    let mut raw = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::parse(path, e))?;
        let row = k + 1;
        let bad =
            |col: &str, e: &dyn std::fmt::Display| Failure::parse(path, format!("row {row}, column `{col}`: {e}"));
        let a: u8 = rec[c_a].trim().parse().map_err(|e| bad("a", &e))?;
        if a > 1 {
            return Err(bad("a", &"treatment must be 0 or 1"));
        }
        let y: f64 = rec[c_y].trim().parse().map_err(|e| bad("y", &e))?;
        let s = match c_s {
            None => Population::Reference,
            Some(i) => {
                let label: u8 = rec[i].trim().parse().map_err(|e| bad("s", &e))?;
                Population::from_label(label).ok_or_else(|| bad("s", &"population must be 1 or 2"))?
            }
        };
        let pscore = match c_p.map(|i| rec[i].trim()) {
            None | Some("") => None,
            Some(text) => Some(text.parse::<f64>().map_err(|e| bad("pscore_pseudo", &e))?),
        };
        let key: Vec<String> = strata_cols.iter().map(|&i| rec[i].trim().to_string()).collect();
        raw.push((s, a, y, key, pscore));
    }
    let keys: BTreeSet<&Vec<String>> = raw.iter().map(|r| &r.3).collect();
    let index: BTreeMap<&Vec<String>, u64> = keys.into_iter().zip(0u64..).collect();
    Ok(raw
        .iter()
        .map(|(s, a, y, key, pscore)| ObservedRecord { s: *s, a: *a, y: *y, stratum: index[key], pscore: *pscore })
        .collect())
}

pub fn load_observed(path: &Path, sidecar: &Sidecar) -> FailureResult<Vec<ObservedRecord>> {
    parse_observed(path, &read_bytes(path)?, sidecar)
}
