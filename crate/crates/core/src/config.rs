//! The single JSON document read by the command-line tool.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certificates::{CertificateBundle, CertificateConfig, CheckSettings, GridSpec};
use crate::error::Result;
use crate::executor::ExecConfig;
use crate::hybrid::{SystemConfig, SystemDefinition};
use crate::montecarlo::{LevelSetConfig, RecurrenceConfig, StabilityConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub checks: CheckSettings,
    pub level_set: LevelSetConfig,
    pub stability: StabilityConfig,
    pub recurrence: RecurrenceConfig,
}

impl VerificationConfig {
    /// The configured grid, or 41 points per axis on `[-3, 3]^dim`.
    pub fn grid_or_default(&self, dim: usize) -> GridSpec {
        self.grid
            .clone()
            .unwrap_or_else(|| GridSpec::cube(dim, -3.0, 3.0, 41))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateConfig>,
    #[serde(default)]
    pub execution: ExecConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
}

impl ConfigDocument {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn build_system(&self) -> Result<SystemDefinition> {
        self.system.build()
    }

    pub fn build_certificate(&self) -> Result<Option<CertificateBundle>> {
        self.certificate
            .as_ref()
            .map(|c| c.build(self.system.n1, self.system.n2))
            .transpose()
    }
}
