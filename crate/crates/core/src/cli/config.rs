use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::learners::{EnetParams, ForestParams, GridSpec};
use crate::metrics::MetricsConfig;
use crate::pipeline::SelectionConfig;
use crate::synth::CohortConfig;

/// Everything a run depends on besides its input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub folds: usize,
    pub rank_folds: usize,
    pub metrics: MetricsConfig,
    pub selection: SelectionConfig,
    pub grid: GridSpec,
    /// Hyperparameters used by `rank` when no model artifact is given.
    pub rank_enet: EnetParams,
    pub rank_forest: ForestParams,
    pub synth: CohortConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            folds: 25,
            rank_folds: 10,
            metrics: MetricsConfig::default(),
            selection: SelectionConfig::default(),
            grid: GridSpec::default(),
            rank_enet: EnetParams::new(0.5, 0.01),
            rank_forest: ForestParams::default(),
            synth: CohortConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Pushes the seed into every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.selection.rfe.seed = seed;
        self.rank_forest.seed = seed;
        self.synth.seed = seed;
        self
    }
}
