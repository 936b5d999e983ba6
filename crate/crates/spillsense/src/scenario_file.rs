//! Scenario JSON.
//!
//! ```json
//! {
//!   "spec_version": 1,
//!   "g_max": 1,
//!   "blocks": { "x_ay": [0.5, 0.5] },
//!   "selection":  { "parents": [], "values": 0.6 },
//!   "propensity": { "parents": ["s", "x_ay"], "values": [[0.3, 0.7], [0.4, 0.6]] },
//!   "exposure":   { "parents": ["s"], "values": [[0.5, 0.5], [0.2, 0.8]] },
//!   "outcome":    { "parents": ["a", "g", "x_ay"], "values": [[[0, 1], [1, 2]], [[2, 3], [3, 4]]] }
//! }
//! ```
//!
//! `values` nest in the order of `parents`. Selection holds p(S = 1),
//! propensity p(A = 1), outcome y(a, g). Exposure and degree rows are
//! distributions: their innermost axis is `g` (resp. `n`) over
//! `0..=g_max` and is not listed among the parents. Population index 0 is
//! the reference population. Roles missing from `blocks` are absent
//! (a single level).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use spillsense_core::scenario::{canonical_axes, Axis, CovariateBlock, Role, ScenarioSpec, Table, ROLE_COUNT};
use spillsense_core::Error;

use crate::error::{Failure, FailureResult};
use crate::io::{read_bytes, write_json};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableFile {
    #[serde(default)]
    pub parents: Vec<String>,
    pub values: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub spec_version: u32,
    pub g_max: usize,
    #[serde(default)]
    pub blocks: BTreeMap<String, Vec<f64>>,
    pub selection: TableFile,
    pub propensity: TableFile,
    pub exposure: TableFile,
    pub outcome: TableFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<TableFile>,
}

fn flatten(
    value: &Value,
    depth: usize,
    shape: &mut Vec<usize>,
    out: &mut Vec<f64>,
    section: &str,
) -> Result<(), String> {
    match value {
        Value::Number(n) => {
            if depth != shape.len() {
                return Err(format!("{section}: ragged nesting at depth {depth}"));
            }
            out.push(n.as_f64().ok_or_else(|| format!("{section}: {n} is not a finite number"))?);
            Ok(())
        }
        Value::Array(items) => {
            if depth == shape.len() {
                if !out.is_empty() {
                    return Err(format!("{section}: ragged nesting at depth {depth}"));
                }
                shape.push(items.len());
            } else if shape[depth] != items.len() {
                return Err(format!("{section}: rows of length {} and {} at depth {depth}", shape[depth], items.len()));
            }
            items.iter().try_for_each(|v| flatten(v, depth + 1, shape, out, section))
        }
        other => Err(format!("{section}: expected a number or an array, found {other}")),
    }
}

fn nested(values: &[f64], shape: &[usize]) -> Value {
    match shape.split_first() {
        None => Value::from(values[0]),
        Some((&len, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array((0..len).map(|i| nested(&values[i * stride..(i + 1) * stride], rest)).collect())
        }
    }
}

fn parse_axis(name: &str, section: &str) -> Result<Axis, String> {
    Axis::from_name(name).ok_or_else(|| format!("{section}: unknown parent `{name}`"))
}

fn table(file: &TableFile, section: &str, child: Option<Axis>, target: &[(Axis, usize)]) -> Result<Table, String> {
    let mut axes = file.parents.iter().map(|p| parse_axis(p, section)).collect::<Result<Vec<_>, _>>()?;
    if let Some(c) = child {
        if axes.contains(&c) {
            return Err(format!("{section}: `{}` is the row axis and cannot be a parent", c.name()));
        }
        axes.push(c);
    }
    let mut shape = Vec::new();
    let mut values = Vec::new();
    flatten(&file.values, 0, &mut shape, &mut values, section)?;
    if shape.len() != axes.len() {
        return Err(format!("{section}: values nest {} deep but {} axes are declared", shape.len(), axes.len()));
    }
    let t = Table::new(axes, shape, values).map_err(|e| format!("{section}: {e}"))?;
    t.conform(target).map_err(|e| format!("{section}: {e}"))
}

impl ScenarioFile {
    /// Builds and validates the scenario.
    pub fn to_spec(&self) -> Result<ScenarioSpec, Error> {
        let input = |m: String| Error::InputDomain(m);
        if self.spec_version != SPEC_VERSION {
            return Err(input(format!(
                "spec_version {} is not supported (expected {SPEC_VERSION})",
                self.spec_version
            )));
        }
        let mut blocks: [CovariateBlock; ROLE_COUNT] = Role::ALL.map(CovariateBlock::absent);
        for (name, pmf) in &self.blocks {
            let role = Role::from_name(name).ok_or_else(|| input(format!("blocks: unknown role `{name}`")))?;
            blocks[role.index()] = CovariateBlock { role, pmf: pmf.clone() };
        }
        let undefined = self.degree.is_some();
        let canon = canonical_axes(&blocks, self.g_max, undefined);
        let spec = ScenarioSpec {
            blocks,
            g_max: self.g_max,
            selection: table(&self.selection, "selection", None, &canon.selection).map_err(input)?,
            propensity: table(&self.propensity, "propensity", None, &canon.propensity).map_err(input)?,
            exposure: table(&self.exposure, "exposure", Some(Axis::G), &canon.exposure).map_err(input)?,
            outcome: table(&self.outcome, "outcome", None, &canon.outcome).map_err(input)?,
            degree: match &self.degree {
                Some(d) => Some(table(d, "degree", Some(Axis::N), &canon.degree).map_err(input)?),
                None => None,
            },
        };
        spec.validate().into_result()?;
        Ok(spec)
    }

    /// Every table written out over its full canonical parent set.
    pub fn from_spec(spec: &ScenarioSpec) -> Self {
        let section = |t: &Table, child: bool| {
            let axes = t.axes();
            let parents_len = if child { axes.len() - 1 } else { axes.len() };
            TableFile {
                parents: axes[..parents_len].iter().map(|a| a.name().to_string()).collect(),
                values: nested(t.values(), t.shape()),
            }
        };
        let blocks = spec
            .blocks
            .iter()
            .filter(|b| b.support() > 1)
            .map(|b| (b.role.name().to_string(), b.pmf.clone()))
            .collect();
        ScenarioFile {
            spec_version: SPEC_VERSION,
            g_max: spec.g_max,
            blocks,
            selection: section(&spec.selection, false),
            propensity: section(&spec.propensity, false),
            exposure: section(&spec.exposure, true),
            outcome: section(&spec.outcome, false),
            degree: spec.degree.as_ref().map(|d| section(d, true)),
        }
    }
}

/// A loaded scenario together with the SHA-256 of its file bytes.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub spec: ScenarioSpec,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_scenario(path: &Path, bytes: &[u8]) -> FailureResult<ScenarioSpec> {
    let file: ScenarioFile = serde_json::from_slice(bytes).map_err(|e| Failure::parse(path, e))?;
    Ok(file.to_spec()?)
}

pub fn load_scenario(path: &Path) -> FailureResult<LoadedScenario> {
    let bytes = read_bytes(path)?;
    let spec = parse_scenario(path, &bytes)?;
    Ok(LoadedScenario { spec, sha256: sha256_hex(&bytes) })
}

pub fn save_scenario(path: &Path, spec: &ScenarioSpec) -> FailureResult<()> {
    write_json(path, &ScenarioFile::from_spec(spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use spillsense_core::scenario::{random_scenario, DegreeModel, ScenarioOptions};

    fn small() -> Value {
        serde_json::json!({
            "spec_version": 1,
            "g_max": 1,
            "blocks": { "x_ay": [0.5, 0.5] },
            "selection": { "values": 0.6 },
            "propensity": { "parents": ["s", "x_ay"], "values": [[0.3, 0.7], [0.4, 0.6]] },
            "exposure": { "parents": ["s"], "values": [[0.5, 0.5], [0.2, 0.8]] },
            "outcome": { "parents": ["a", "g", "x_ay"], "values": [[[0, 1], [1, 2]], [[2, 3], [3, 4]]] }
        })
    }

    #[test]
    fn hand_written_file_broadcasts_missing_parents() {
        let file: ScenarioFile = serde_json::from_value(small()).unwrap();
        let spec = file.to_spec().unwrap();
        assert_eq!(spec.support(Role::XAy), 2);
        let c = [0u16; ROLE_COUNT];
        assert_eq!(spec.treatment_probability(spillsense_core::scenario::Population::Target, &c), 0.4);
        assert_eq!(spec.outcome_value(1, 1, &c), 3.0);
    }

    #[test]
    fn round_trip_preserves_every_table() {
        for seed in 0..10 {
            let opts =
                ScenarioOptions { degree_model: (seed % 2 == 0).then_some(DegreeModel::Ragged), ..Default::default() };
            let spec = random_scenario(seed, &opts).unwrap();
            let text = serde_json::to_string(&ScenarioFile::from_spec(&spec)).unwrap();
            let back: ScenarioFile = serde_json::from_str(&text).unwrap();
            assert_eq!(back.to_spec().unwrap(), spec, "seed {seed}");
        }
    }

    #[test]
    fn bad_row_sums_fail_validation() {
        let mut v = small();
        v["exposure"]["values"] = serde_json::json!([[0.5, 0.6], [0.2, 0.8]]);
        let file: ScenarioFile = serde_json::from_value(v).unwrap();
        assert!(matches!(file.to_spec(), Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn ragged_and_misdeclared_tables_are_rejected() {
        let mut v = small();
        v["propensity"]["values"] = serde_json::json!([[0.3, 0.7], [0.4]]);
        let file: ScenarioFile = serde_json::from_value(v).unwrap();
        assert!(file.to_spec().is_err());
        let mut v = small();
        v["exposure"]["parents"] = serde_json::json!(["s", "g"]);
        let file: ScenarioFile = serde_json::from_value(v).unwrap();
        assert!(file.to_spec().is_err());
        let mut v = small();
        v["spec_version"] = serde_json::json!(2);
        let file: ScenarioFile = serde_json::from_value(v).unwrap();
        assert!(file.to_spec().is_err());
    }
}
