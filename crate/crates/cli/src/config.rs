use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use cycle_funnel::dclf::SynthesisConfig;
use cycle_funnel::funnel::PlannerSettings;
use cycle_funnel::model::ModelParams;
use cycle_funnel::numerics::{IntegrationSettings, OptimizerSettings};
use cycle_funnel::roa::RoaSettings;

use crate::error::CliError;

/// Everything a run needs. Every field is optional in the JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub synthesis: SynthesisConfig,
    pub integration: IntegrationSettings,
    pub optimizer: OptimizerSettings,
    pub roa: RoaSettings,
    pub planner: PlannerSettings,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    /// Reads `path` if given, otherwise returns the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("reading {}: {e}", p.display())))?;
                Self::from_json(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str, e: &dyn std::fmt::Display| CliError::Input(format!("{what}: {e}"));
        self.model.validate().map_err(|e| bad("model", &e))?;
        self.synthesis
            .validate()
            .map_err(|e| bad("synthesis", &e))?;
        self.integration
            .validate()
            .map_err(|e| bad("integration", &e))?;
        self.roa.validate().map_err(|e| bad("roa", &e))?;
        if !(self.planner.delta > 0.0) || self.planner.max_steps == 0 {
            return Err(CliError::Input(
                "planner: delta must be positive and max_steps at least 1".into(),
            ));
        }
        Ok(())
    }
}
