use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, GridArgs, MapArgs, ReferenceArgs, SynthArgs};
use crate::config::RunConfig;
use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "cellmap", version, about = "Work-cell mapping: depth frames to an editable, padded occupancy grid")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags applied on top of the config file.
#[derive(Debug, Args)]
pub struct Overrides {
    /// RunConfig JSON; missing sections take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Occupancy grid leaf, meters.
    #[arg(long, global = true)]
    pub leaf: Option<f64>,
    #[arg(long, global = true)]
    pub padding_levels: Option<usize>,
    /// Maximum reach kept around the robot base, meters.
    #[arg(long, global = true)]
    pub d_reach: Option<f64>,
    /// Refine frame poses by ICP during fusion.
    #[arg(long, global = true, overrides_with = "no_icp")]
    pub icp: bool,
    #[arg(long, global = true)]
    pub no_icp: bool,
}

impl Overrides {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.leaf {
            cfg.grid.leaf = l;
        }
        if let Some(n) = self.padding_levels {
            cfg.grid.padding_levels = n;
        }
        if let Some(r) = self.d_reach {
            cfg.grid.d_reach = Some(r);
        }
        if self.icp {
            cfg.use_icp = true;
        }
        if self.no_icp {
            cfg.use_icp = false;
        }
        let cfg = cfg.seeded();
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic capture and its ground truth.
    Synth {
        /// SceneSpec JSON (default: the built-in work cell).
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Trajectory JSON (default: an orbit around the test object).
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse frames and run the cleaning pipeline into a PLY cloud.
    Map {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-stage point counts as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Locate the robot in a map from a rough seed pose.
    Reference {
        #[arg(long)]
        cloud: PathBuf,
        /// Robot manifest JSON.
        #[arg(long)]
        robot: PathBuf,
        /// Seed pose JSON: a transform, or `{"position": [x, y, z], "yaw_deg": a}`.
        #[arg(long)]
        seed_pose: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the padded occupancy grid in the robot frame.
    Grid {
        #[arg(long)]
        cloud: PathBuf,
        /// Output of `reference`, or a bare transform.
        #[arg(long)]
        transform: PathBuf,
        #[arg(long)]
        robot: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the padding layers of a grid document.
    Pad {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        levels: usize,
        /// Defaults to rewriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare results against ground truth.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Serve a map session over HTTP for editing.
    Serve {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Nearest-neighbour distances from a map cloud to a reference cloud.
    Cloud {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Both directions instead of map -> truth.
        #[arg(long)]
        symmetric: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// False positive / false negative cells against a truth grid.
    Grid {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// `min_x,min_y,min_z,max_x,max_y,max_z` in the grid frame; cells
        /// count when their center is inside.
        #[arg(long, allow_hyphen_values = true)]
        region: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Depth statistics of the centered pixel square over all frames.
    Noise {
        #[arg(long)]
        frames: PathBuf,
        /// Expected depth, meters; far-off means are flagged.
        #[arg(long)]
        nominal: f64,
        #[arg(long, default_value_t = 5)]
        size: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// Runs one invocation and returns the process exit status.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let cfg = cli.overrides.resolve()?;
    let text = match cli.command {
        Command::Synth { scene, trajectory, out } => commands::synth(&SynthArgs { scene, trajectory, out }, &cfg)?,
        Command::Map { frames, out, report } => commands::map(&MapArgs { frames, out, report }, &cfg)?,
        Command::Reference { cloud, robot, seed_pose, out } => {
            let outcome = commands::reference_cmd(&ReferenceArgs { cloud, robot, seed_pose, out }, &cfg)?;
            if !outcome.report.converged {
                eprintln!("{}", outcome.message);
                eprintln!("{}", serde_json::to_string_pretty(&outcome.report)?);
                return Ok(crate::EXIT_NOT_CONVERGED);
            }
            outcome.message
        }
        Command::Grid { cloud, transform, robot, out } => commands::grid(&GridArgs { cloud, transform, robot, out }, &cfg)?,
        Command::Pad { grid, levels, out } => {
            let out = out.unwrap_or_else(|| grid.clone());
            commands::pad_cmd(&grid, levels, &out)?
        }
        Command::Eval(EvalCommand::Cloud { map, truth, symmetric, json }) => {
            commands::eval_cloud(&map, &truth, symmetric, json.as_deref())?
        }
        Command::Eval(EvalCommand::Grid { grid, truth, region, json }) => {
            let region = region.as_deref().map(commands::parse_region).transpose()?;
            commands::eval_grid(&grid, &truth, region.as_ref(), json.as_deref())?
        }
        Command::Eval(EvalCommand::Noise { frames, nominal, size, json }) => {
            commands::eval_noise(&frames, nominal, size, json.as_deref())?
        }
        Command::Serve { session, bind } => {
            let state = AppState::open(&session)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(state, &bind))?;
            String::new()
        }
    };
    if !text.is_empty() {
        println!("{text}");
    }
    Ok(0)
}
