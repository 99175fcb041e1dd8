use std::path::Path;

use serde::{Deserialize, Serialize};
use takeover_core::filter::FilterConfig;
use takeover_core::io::load_toml;
use takeover_core::physio::PhysioConfig;
use takeover_core::policy::ControllerGains;
use takeover_core::predict::PredictConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub max_steps: usize,
    pub perception_noise: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            max_steps: 400,
            perception_noise: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gains: ControllerGains,
    pub simulate: SimulateSection,
    pub filter: FilterConfig,
    pub predict: PredictConfig,
    pub physio: PhysioConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> takeover_core::Result<Self> {
        let cfg: RunConfig = match path {
            Some(p) => load_toml(p)?,
            None => RunConfig::default(),
        };
        cfg.gains.validate()?;
        cfg.filter.validate()?;
        Ok(cfg)
    }
}
