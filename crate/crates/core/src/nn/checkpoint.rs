use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Matrix, Parameters};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tpnkit-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Versioned JSON container of named tensors plus string metadata. Floats are
/// written in shortest round-trip form, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_params(&mut self, prefix: &str, params: &impl Parameters) {
        params.for_each_param(prefix, &mut |name, m| {
            self.tensors.push(NamedTensor {
                name: name.to_string(),
                shape: [m.rows(), m.cols()],
                data: m.as_slice().to_vec(),
            })
        });
    }

    pub fn add_tensor(&mut self, name: &str, m: &Matrix) {
        self.tensors.push(NamedTensor {
            name: name.to_string(),
            shape: [m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        });
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Invalid(format!("checkpoint is missing metadata key `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse().map_err(|_| {
            Error::Invalid(format!(
                "checkpoint metadata `{key}` = `{raw}` is malformed"
            ))
        })
    }

    pub fn tensor(&self, name: &str) -> Result<Matrix> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Invalid(format!("checkpoint is missing tensor `{name}`")))?;
        Matrix::from_vec(t.shape[0], t.shape[1], t.data.clone())
    }

    /// Fills `params` from tensors named with `prefix`; every name and shape
    /// must match.
    pub fn load_params(&self, prefix: &str, params: &mut impl Parameters) -> Result<()> {
        let mut err = None;
        params.for_each_param_mut(prefix, &mut |name, m| {
            if err.is_some() {
                return;
            }
            match self.tensor(name) {
                Ok(t) if t.rows() == m.rows() && t.cols() == m.cols() => *m = t,
                Ok(t) => {
                    err = Some(Error::Invalid(format!(
                        "tensor `{name}` has shape {}x{}, expected {}x{}",
                        t.rows(),
                        t.cols(),
                        m.rows(),
                        m.cols()
                    )))
                }
                Err(e) => err = Some(e),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::format(
                origin,
                format!("unexpected format tag `{}`", ck.format),
            ));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported version {}", ck.version),
            ));
        }
        for t in &ck.tensors {
            if t.shape[0] * t.shape[1] != t.data.len() {
                return Err(Error::format(
                    origin,
                    format!("tensor `{}` has inconsistent shape", t.name),
                ));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}
