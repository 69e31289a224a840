//! JSON schemas for chain specs and vector files.
//!
//! Chain spec (exact field names):
//! `{"kind":"finite","labels":[...],"P":[[...]]}` or
//! `{"kind":"family","family":"birth_death","params":{"p":0.2,"q":0.5},
//!   "N":50,"boundary":"reflect_to_last"}`.
//!
//! Vectors ride alongside: `{"V":[...],"h":[...],"mu":[...]}`, each
//! optional, lengths equal to the state count.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::chain::{truncate, BoundaryPolicy, CountableChainSpec, MarkovChain};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpecFile {
    Finite {
        #[serde(default)]
        labels: Option<Vec<String>>,
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
    },
    Family {
        family: String,
        params: BTreeMap<String, f64>,
        #[serde(rename = "N")]
        n: usize,
        #[serde(default = "default_boundary")]
        boundary: BoundaryPolicy,
    },
}

fn default_boundary() -> BoundaryPolicy {
    BoundaryPolicy::ReflectToLast
}

impl ChainSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("chain spec: {e}")))
    }

    pub fn build(&self) -> Result<MarkovChain> {
        match self {
            ChainSpecFile::Finite { labels, p } => {
                let chain = MarkovChain::from_rows(p)?;
                match labels {
                    None => Ok(chain),
                    Some(ls) => {
                        let n = p.len();
                        if ls.len() != n {
                            return Err(Error::DimensionMismatch { expected: n, got: ls.len() });
                        }
                        let raw = chain.p().clone();
                        MarkovChain::validate(raw, ls.clone(), chain.tol())
                    }
                }
            }
            ChainSpecFile::Family { family, params, n, boundary } => {
                let pairs: Vec<(&str, f64)> =
                    params.iter().map(|(k, &v)| (k.as_str(), v)).collect();
                let spec = CountableChainSpec::new(family, &pairs);
                truncate(&spec, *n, *boundary)
            }
        }
    }

    /// The family spec and boundary, for commands that need to re-truncate
    /// at different sizes (truncation studies).
    pub fn family(&self) -> Option<(CountableChainSpec, BoundaryPolicy)> {
        match self {
            ChainSpecFile::Finite { .. } => None,
            ChainSpecFile::Family { family, params, boundary, .. } => {
                let pairs: Vec<(&str, f64)> =
                    params.iter().map(|(k, &v)| (k.as_str(), v)).collect();
                Some((CountableChainSpec::new(family, &pairs), *boundary))
            }
        }
    }
}

/// Optional named vectors accompanying a chain spec.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorFile {
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

impl VectorFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("vector file: {e}")))
    }
}

/// Check a vector's length against the chain size and convert.
pub fn to_dvector(values: &[f64], n: usize) -> Result<DVector<f64>> {
    if values.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: values.len() });
    }
    Ok(DVector::from_column_slice(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn finite_spec_round_trip() {
        let text = r#"{"kind":"finite","labels":["a","b"],"P":[[0.7,0.3],[0.2,0.8]]}"#;
        let spec = ChainSpecFile::parse(text).unwrap();
        let chain = spec.build().unwrap();
        assert_eq!(chain.labels(), ["a", "b"]);
        assert_abs_diff_eq!(chain.p()[(0, 1)], 0.3);
        assert!(spec.family().is_none());
    }

    #[test]
    fn finite_spec_without_labels() {
        let text = r#"{"kind":"finite","P":[[0.5,0.5],[0.5,0.5]]}"#;
        let chain = ChainSpecFile::parse(text).unwrap().build().unwrap();
        assert_eq!(chain.n(), 2);
    }

    #[test]
    fn family_spec_builds_truncation() {
        let text = r#"{"kind":"family","family":"birth_death","params":{"p":0.2,"q":0.5},"N":5,"boundary":"reflect_to_last"}"#;
        let spec = ChainSpecFile::parse(text).unwrap();
        let chain = spec.build().unwrap();
        assert_eq!(chain.n(), 5);
        assert_abs_diff_eq!(chain.p()[(0, 0)], 0.8);
        assert!(spec.family().is_some());
    }

    #[test]
    fn family_boundary_defaults_to_reflect() {
        let text = r#"{"kind":"family","family":"birth_death","params":{"p":0.2,"q":0.5},"N":5}"#;
        let chain = ChainSpecFile::parse(text).unwrap().build().unwrap();
        assert_abs_diff_eq!(chain.p()[(4, 4)], 0.5);
    }

    #[test]
    fn malformed_specs_are_parse_errors() {
        for text in [
            "{",
            r#"{"kind":"diagonal"}"#,
            r#"{"kind":"finite","P":[[0.7,0.3],[0.2,0.8]],"extra":1}"#,
        ] {
            assert!(matches!(ChainSpecFile::parse(text), Err(Error::Parse(_))), "{text}");
        }
        // Well-formed JSON but a bad matrix fails at build time.
        let spec = ChainSpecFile::parse(r#"{"kind":"finite","P":[[0.7,0.4],[0.2,0.8]]}"#).unwrap();
        assert!(matches!(spec.build(), Err(Error::NonStochasticRow { .. })));
    }

    #[test]
    fn vector_file_fields_optional() {
        let v = VectorFile::parse(r#"{"V":[1.0,2.0],"h":[0.0,1.0]}"#).unwrap();
        assert_eq!(v.v.unwrap(), vec![1.0, 2.0]);
        assert_eq!(v.h.unwrap(), vec![0.0, 1.0]);
        assert!(v.mu.is_none());
        assert!(VectorFile::parse(r#"{"W":[1.0]}"#).is_err());
        assert!(to_dvector(&[1.0, 2.0], 3).is_err());
    }
}
