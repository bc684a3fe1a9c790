//! The JSON problem document `{"P": ..., "p": [...], "K": ..., "config": {...}}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::{SolveConfig, VIProblem};
use crate::polyhedra::PolyhedralSet;
use crate::polymap::PolynomialMap;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    #[serde(rename = "P")]
    map: PolynomialMap,
    #[serde(default)]
    p: Option<Vec<f64>>,
    #[serde(rename = "K")]
    k: serde_json::Value,
    #[serde(default)]
    config: SolveConfig,
}

/// A parsed problem file. `p` defaults to zero and `config` to
/// [`SolveConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemFile {
    #[serde(rename = "P")]
    pub map: PolynomialMap,
    pub p: Vec<f64>,
    #[serde(rename = "K")]
    pub k: PolyhedralSet,
    pub config: SolveConfig,
}

impl ProblemFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawProblem = serde_json::from_str(text)?;
        let n = raw.map.n();
        let k = PolyhedralSet::from_json_value(raw.k, n)?;
        let p = raw.p.unwrap_or_else(|| vec![0.0; n]);
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.len(),
            });
        }
        raw.config.validate()?;
        Ok(Self {
            map: raw.map,
            p,
            k,
            config: raw.config,
        })
    }

    pub fn to_problem(&self) -> Result<VIProblem> {
        VIProblem::new(self.k.clone(), self.map.clone(), self.p.clone())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
