//! Params JSON: the [`SensitivityParams`] fields, plus an optional
//! `summary` object holding a [`DataSummary`] for runs without data.

use std::path::Path;

use serde_json::Value;
use spillsense_core::bounds::{DataSummary, SensitivityParams};

use crate::error::{Failure, FailureResult};
use crate::io::read_bytes;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub params: SensitivityParams,
    pub summary: Option<DataSummary>,
}

pub fn parse_params(path: &Path, bytes: &[u8]) -> FailureResult<ParamsFile> {
    let mut value: Value = serde_json::from_slice(bytes).map_err(|e| Failure::parse(path, e))?;
    let obj = value.as_object_mut().ok_or_else(|| Failure::parse(path, "expected a JSON object"))?;
    let summary = match obj.remove("summary") {
        None => None,
        Some(s) => {
            Some(serde_json::from_value::<DataSummary>(s).map_err(|e| Failure::parse(path, format!("summary: {e}")))?)
        }
    };
    let params: SensitivityParams = serde_json::from_value(value).map_err(|e| Failure::parse(path, e))?;
    params.validate()?;
    if let Some(s) = &summary {
        s.validate()?;
    }
    Ok(ParamsFile { params, summary })
}

pub fn load_params(path: &Path) -> FailureResult<ParamsFile> {
    parse_params(path, &read_bytes(path)?)
}
