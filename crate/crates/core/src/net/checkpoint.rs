//! Model checkpoint file.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format": "comot-potential-model",
//!   "version": 1,
//!   "hidden": 150,
//!   "clamp": 5.0,
//!   "config_hash": "<sha256 hex of the training config>",
//!   "parameters": [
//!     { "name": "w1", "rows": 1, "cols": 150, "values": [ ... row-major ... ] },
//!     ...
//!   ]
//! }
//! ```
//!
//! Parameters appear in [`PARAM_NAMES`] order. Floats are written in
//! shortest round-trip form, so a save/load cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{PotentialModel, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const CHECKPOINT_FORMAT: &str = "comot-potential-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub hidden: usize,
    pub clamp: f64,
    pub config_hash: String,
    pub parameters: Vec<ParameterBlock>,
}

impl Checkpoint {
    pub fn from_model(model: &PotentialModel, config_hash: impl Into<String>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            hidden: model.hidden(),
            clamp: model.clamp_bound(),
            config_hash: config_hash.into(),
            parameters: model
                .parameters()
                .iter()
                .zip(PARAM_NAMES)
                .map(|(p, name)| ParameterBlock {
                    name: name.to_string(),
                    rows: p.rows(),
                    cols: p.cols(),
                    values: p.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<PotentialModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format {:?}",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let mut params = Vec::with_capacity(self.parameters.len());
        for (block, name) in self.parameters.iter().zip(PARAM_NAMES) {
            if block.name != name {
                return Err(Error::Checkpoint(format!(
                    "expected parameter {name}, found {}",
                    block.name
                )));
            }
            if block.values.len() != block.rows * block.cols {
                return Err(Error::Checkpoint(format!(
                    "{name}: {} values for shape {}x{}",
                    block.values.len(),
                    block.rows,
                    block.cols
                )));
            }
            params.push(Matrix::from_vec(
                block.rows,
                block.cols,
                block.values.clone(),
            ));
        }
        let model =
            PotentialModel::from_parameters(params, self.clamp).map_err(Error::Checkpoint)?;
        if model.hidden() != self.hidden {
            return Err(Error::Checkpoint("hidden width mismatch".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let model = PotentialModel::new(7, 5.0, 42);
        let ck = Checkpoint::from_model(&model, "abc");
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let restored = back.to_model().unwrap();
        for (a, b) in restored.parameters().iter().zip(model.parameters()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_foreign_or_corrupt_files() {
        let model = PotentialModel::new(3, 5.0, 1);
        let mut ck = Checkpoint::from_model(&model, "x");
        ck.format = "other".into();
        assert!(ck.to_model().is_err());
        let mut ck = Checkpoint::from_model(&model, "x");
        ck.parameters[4].values.pop();
        assert!(ck.to_model().is_err());
        let mut ck = Checkpoint::from_model(&model, "x");
        ck.parameters.swap(0, 1);
        assert!(ck.to_model().is_err());
        assert!(Checkpoint::from_json("{").is_err());
    }
}
