//! The run configuration shared by every subcommand.

use std::path::Path;

use anyhow::{bail, Context};
use cellmap_core::filters::FilterConfig;
use cellmap_core::referencing::ReferenceOptions;
use cellmap_core::registration::IcpParams;
use cellmap_core::synth::SensorModel;
use cellmap_core::workflow::GridOptions;
use serde::{Deserialize, Serialize};

/// Every tunable of the workflow. Sections default individually, so a config
/// file only lists what it changes:
///
/// ```json
/// { "seed": 7, "grid": { "padding_levels": 2 }, "filters": { "d_cutoff_max": 3.0 } }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub filters: FilterConfig,
    /// Fusion ICP. Off by default: with good pose priors it rarely helps.
    pub icp: IcpParams,
    pub use_icp: bool,
    pub sensor: SensorModel,
    pub grid: GridOptions,
    pub reference: ReferenceOptions,
    /// Master seed. Overrides the seeds of the filter, grid and referencing
    /// sections and seeds rendering.
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Propagates the master seed into the sections.
    pub fn seeded(mut self) -> RunConfig {
        self.filters.rng_seed = self.seed;
        self.grid.seed = self.seed;
        self.reference.seed = self.seed;
        self
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.filters.validate().context("filters")?;
        self.icp.validate().context("icp")?;
        self.reference.icp.validate().context("reference.icp")?;
        self.sensor.validate().context("sensor")?;
        if !(self.grid.leaf > 0.0 && self.grid.leaf.is_finite()) {
            bail!("grid.leaf must be positive, got {}", self.grid.leaf);
        }
        if let Some(r) = self.grid.d_reach {
            if !(r > 0.0) {
                bail!("grid.d_reach must be positive, got {r}");
            }
        }
        if !(self.reference.points_per_m2 > 0.0) || !(self.grid.points_per_m2 > 0.0) {
            bail!("robot sampling densities must be positive");
        }
        Ok(())
    }
}
