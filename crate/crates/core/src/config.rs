//! Versioned run configuration (TOML). Every field has a default, so an
//! empty file gives the reference setup.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::par::ExecMode;
use crate::rl::{PolicyArch, PpoConfig};
use crate::scenario::{FollowerLaw, ScenarioConfig};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Controller selection for `eval` / `trace`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Distance,
    Displacement,
    Angle,
    Gat,
}

impl ControllerKind {
    pub fn law(self) -> Option<FollowerLaw> {
        match self {
            ControllerKind::Distance => Some(FollowerLaw::Distance),
            ControllerKind::Displacement => Some(FollowerLaw::Displacement),
            ControllerKind::Angle => Some(FollowerLaw::Angle),
            ControllerKind::Gat => None,
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::Distance => "distance",
            ControllerKind::Displacement => "displacement",
            ControllerKind::Angle => "angle",
            ControllerKind::Gat => "gat",
        })
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distance" => Ok(ControllerKind::Distance),
            "displacement" => Ok(ControllerKind::Displacement),
            "angle" => Ok(ControllerKind::Angle),
            "gat" | "policy" => Ok(ControllerKind::Gat),
            _ => Err(Error::config(
                "controller",
                format!("unknown controller `{s}` (distance, displacement, angle, gat)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub controller: ControllerKind,
    /// Evaluation episodes per mission.
    pub episodes: usize,
    pub exec: ExecMode,
    pub scenario: ScenarioConfig,
    pub policy: PolicyArch,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            seed: 0,
            out_dir: PathBuf::from("runs"),
            controller: ControllerKind::Displacement,
            episodes: 10,
            exec: ExecMode::default(),
            scenario: ScenarioConfig::default(),
            policy: PolicyArch::default(),
            ppo: PpoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.version),
            ));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be >= 1"));
        }
        self.scenario.validate()?;
        self.policy.validate()?;
        self.ppo.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// SHA-256 (first 16 hex digits) of everything that affects results;
    /// the output directory is excluded.
    pub fn config_hash(&self) -> String {
        let mut canon = self.clone();
        canon.out_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.ppo.lambda1, 0.1);
        assert_eq!(cfg.ppo.lambda2, 0.5);
        assert_eq!(cfg.scenario.comm.kappa, 3.0);
    }

    #[test]
    fn negative_kappa_names_field() {
        let err = RunConfig::from_toml_str("[scenario.comm]\nkappa = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("kappa"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(RunConfig::from_toml_str("[ppo]\nclip_eps = 0.1\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig {
            seed: 17,
            ..Default::default()
        };
        cfg.scenario.comm.attacked_ids.insert(3);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn hash_ignores_out_dir_but_not_seed() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "/elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
