//! Versioned JSON dump of named parameter tensors.
//!
//! Values are written with shortest round-trip formatting and parsed with
//! exact float parsing, so save → load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

pub const FORMAT: &str = "formation-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Environment steps consumed when the checkpoint was taken.
    pub step: u64,
    /// Architecture description needed to rebuild the owner.
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        config_hash: &str,
        seed: u64,
        step: u64,
        meta: serde_json::Value,
        named: Vec<(String, &Tensor)>,
    ) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config_hash: config_hash.into(),
            seed,
            step,
            meta,
            tensors: named
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape.clone(),
                    values: t.data.clone(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(t) = self
            .tensors
            .iter()
            .find(|t| t.values.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Checkpoint(format!("tensor {} has non-finite values", t.name)));
        }
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        for t in &ck.tensors {
            if t.values.len() != t.shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!("tensor {} has wrong length", t.name)));
            }
        }
        Ok(ck)
    }

    /// Copies stored values into `targets`, matching by name and shape.
    pub fn restore_into(&self, targets: Vec<(String, &mut Tensor)>) -> Result<()> {
        if targets.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                targets.len(),
                self.tensors.len()
            )));
        }
        for ((name, t), stored) in targets.into_iter().zip(&self.tensors) {
            if name != stored.name || t.shape != stored.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor mismatch: {name} {:?} vs {} {:?}",
                    t.shape, stored.name, stored.shape
                )));
            }
            t.data.copy_from_slice(&stored.values);
        }
        Ok(())
    }
}
