//! Experiment configuration: a plain-text `key=value` file plus the
//! profile presets that pick network size and episode counts.

use std::path::{Path, PathBuf};

use crate::env::WorldConfig;
use crate::error::{Error, Result};
use crate::fitter::ParamGrid;
use crate::net::OptimizerKind;
use crate::policy::{TrainConfig, Variant};

/// Scale presets. `Desk` trains a 64/64 network for minutes; `Paper`
/// trains the full 512/256 network for the published episode counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }

    fn hidden(&self) -> (usize, usize) {
        match self {
            Profile::Desk => (64, 64),
            Profile::Paper => (512, 256),
        }
    }

    fn episodes(&self, variant: Variant) -> u32 {
        match (self, variant) {
            (Profile::Desk, Variant::Vlm) => 9000,
            (Profile::Desk, _) => 5000,
            (Profile::Paper, Variant::Vlm) => 45_000,
            (Profile::Paper, _) => 25_000,
        }
    }

    /// Exploration decay per learn step. The desk profile runs an order
    /// of magnitude fewer learn steps, so it decays faster to leave
    /// enough low-epsilon episodes for the wait-then-cross strategy to
    /// be discovered.
    fn eps_decay_per_step(&self) -> f64 {
        match self {
            Profile::Desk => 3e-4,
            Profile::Paper => 5e-5,
        }
    }
}

/// Synthetic-trial generation settings for the simulate command.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizeConfig {
    pub participants: u32,
    pub reps_per_scenario: u32,
    pub sigma_v: f64,
    pub c: f64,
}

/// Everything one command run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub profile: Profile,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub weights: Option<PathBuf>,
    pub trials: Option<PathBuf>,
    pub cit_samples: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub n_reps: u32,
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub grid: ParamGrid,
    /// Training fails its convergence check when the final reward-log
    /// block mean falls below this value.
    pub min_final_mean_reward: Option<f64>,
    pub synthesize: Option<SynthesizeConfig>,
}

impl ExperimentConfig {
    /// Baseline configuration for a variant and profile; file keys and
    /// CLI flags override it.
    pub fn defaults(variant: Variant, profile: Profile) -> Self {
        let (hidden1, hidden2) = profile.hidden();
        ExperimentConfig {
            variant,
            profile,
            seed: 0,
            out_dir: PathBuf::from("out"),
            weights: None,
            trials: None,
            cit_samples: None,
            reference: None,
            n_reps: 200,
            world: WorldConfig::default(),
            train: TrainConfig {
                learning_rate: 1e-4,
                gamma: 0.99,
                eps_start: 1.0,
                eps_decay_per_step: profile.eps_decay_per_step(),
                eps_min: 0.001,
                episodes: profile.episodes(variant),
                replay_capacity: 100_000,
                batch_size: 64,
                target_sync_steps: 1000,
                hidden1,
                hidden2,
                optimizer: OptimizerKind::Adam,
                seed: 0,
                reward_log_every: 500,
            },
            grid: ParamGrid::default_inclusive(),
            min_final_mean_reward: None,
            synthesize: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        self.grid.validate()?;
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be positive".into()));
        }
        if let Some(synth) = &self.synthesize {
            if synth.participants == 0 || synth.reps_per_scenario == 0 {
                return Err(Error::Config(
                    "synth.participants and synth.reps must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Applies a command-line seed override to both the experiment and
    /// training seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid number `{tok}` in list")))
        })
        .collect()
}

/// Parses a `key=value` configuration file. Blank lines and lines
/// starting with `#` are ignored. `variant` is required; every other
/// key falls back to the profile defaults.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(path, idx + 1, format!("expected key=value, found `{line}`"))
        })?;
        pairs.push((idx + 1, key.trim().to_string(), value.trim().to_string()));
    }

    // The profile and variant decide the defaults, so read them first.
    let mut variant = None;
    let mut profile = Profile::Desk;
    for (line, key, value) in &pairs {
        match key.as_str() {
            "variant" => {
                variant = Some(Variant::parse(value).ok_or_else(|| {
                    Error::parse(path, *line, format!("unknown variant `{value}`"))
                })?);
            }
            "profile" => {
                profile = Profile::parse(value).ok_or_else(|| {
                    Error::parse(path, *line, format!("unknown profile `{value}`"))
                })?;
            }
            _ => {}
        }
    }
    let variant =
        variant.ok_or_else(|| Error::Config(format!("{}: missing `variant`", path.display())))?;

    let mut cfg = ExperimentConfig::defaults(variant, profile);
    let mut synth_participants = 10u32;
    let mut synth_reps = 5u32;
    let mut synth_sigma = 0.3f64;
    let mut synth_c = 40.0f64;
    let mut synth_requested = false;

    for (line, key, value) in &pairs {
        let line = *line;
        let bad_num = || Error::parse(path, line, format!("invalid number for `{key}`: `{value}`"));
        match key.as_str() {
            "variant" | "profile" => {}
            "seed" => {
                let seed = value.parse::<u64>().map_err(|_| bad_num())?;
                cfg.seed = seed;
                cfg.train.seed = seed;
            }
            "out_dir" => cfg.out_dir = PathBuf::from(value),
            "weights" => cfg.weights = Some(PathBuf::from(value)),
            "trials" => cfg.trials = Some(PathBuf::from(value)),
            "cit_samples" => cfg.cit_samples = Some(PathBuf::from(value)),
            "reference" => cfg.reference = Some(PathBuf::from(value)),
            "n_reps" => cfg.n_reps = value.parse().map_err(|_| bad_num())?,

            "world.road_width" => cfg.world.road_width = value.parse().map_err(|_| bad_num())?,
            "world.walk_speed" => cfg.world.walk_speed = value.parse().map_err(|_| bad_num())?,
            "world.dt" => cfg.world.dt = value.parse().map_err(|_| bad_num())?,
            "world.eye_height" => cfg.world.eye_height = value.parse().map_err(|_| bad_num())?,
            "world.vehicle_length" => {
                cfg.world.vehicle_length = value.parse().map_err(|_| bad_num())?
            }
            "world.vehicle_width" => {
                cfg.world.vehicle_width = value.parse().map_err(|_| bad_num())?
            }
            "world.lane_near_edge" => {
                cfg.world.lane_near_edge = value.parse().map_err(|_| bad_num())?
            }
            "world.ped_radius" => cfg.world.ped_radius = value.parse().map_err(|_| bad_num())?,
            "world.max_episode_s" => {
                cfg.world.max_episode_s = value.parse().map_err(|_| bad_num())?
            }
            "world.motor_delay_mean" => {
                cfg.world.motor_delay_mean = value.parse().map_err(|_| bad_num())?
            }
            "world.motor_delay_std" => {
                cfg.world.motor_delay_std = value.parse().map_err(|_| bad_num())?
            }
            "world.reward_success" => {
                cfg.world.reward_success = value.parse().map_err(|_| bad_num())?
            }
            "world.reward_collision" => {
                cfg.world.reward_collision = value.parse().map_err(|_| bad_num())?
            }
            "world.time_penalty_rate" => {
                cfg.world.time_penalty_rate = value.parse().map_err(|_| bad_num())?
            }

            "train.learning_rate" => {
                cfg.train.learning_rate = value.parse().map_err(|_| bad_num())?
            }
            "train.gamma" => cfg.train.gamma = value.parse().map_err(|_| bad_num())?,
            "train.eps_start" => cfg.train.eps_start = value.parse().map_err(|_| bad_num())?,
            "train.eps_decay_per_step" => {
                cfg.train.eps_decay_per_step = value.parse().map_err(|_| bad_num())?
            }
            "train.eps_min" => cfg.train.eps_min = value.parse().map_err(|_| bad_num())?,
            "train.episodes" => cfg.train.episodes = value.parse().map_err(|_| bad_num())?,
            "train.replay_capacity" => {
                cfg.train.replay_capacity = value.parse().map_err(|_| bad_num())?
            }
            "train.batch_size" => cfg.train.batch_size = value.parse().map_err(|_| bad_num())?,
            "train.target_sync_steps" => {
                cfg.train.target_sync_steps = value.parse().map_err(|_| bad_num())?
            }
            "train.hidden1" => cfg.train.hidden1 = value.parse().map_err(|_| bad_num())?,
            "train.hidden2" => cfg.train.hidden2 = value.parse().map_err(|_| bad_num())?,
            "train.reward_log_every" => {
                cfg.train.reward_log_every = value.parse().map_err(|_| bad_num())?
            }
            "train.optimizer" => {
                cfg.train.optimizer = OptimizerKind::parse(value).ok_or_else(|| {
                    Error::parse(path, line, format!("unknown optimizer `{value}`"))
                })?;
            }
            "train.min_final_mean_reward" => {
                cfg.min_final_mean_reward = Some(value.parse().map_err(|_| bad_num())?)
            }

            "grid.sigma_v" => cfg.grid.sigma_v_values = parse_list(value)?,
            "grid.c" => cfg.grid.c_values = parse_list(value)?,

            "synth.participants" => {
                synth_participants = value.parse().map_err(|_| bad_num())?;
                synth_requested = true;
            }
            "synth.reps" => {
                synth_reps = value.parse().map_err(|_| bad_num())?;
                synth_requested = true;
            }
            "synth.sigma_v" => {
                synth_sigma = value.parse().map_err(|_| bad_num())?;
                synth_requested = true;
            }
            "synth.c" => {
                synth_c = value.parse().map_err(|_| bad_num())?;
                synth_requested = true;
            }

            other => {
                return Err(Error::parse(path, line, format!("unknown key `{other}`")));
            }
        }
    }

    if synth_requested {
        cfg.synthesize = Some(SynthesizeConfig {
            participants: synth_participants,
            reps_per_scenario: synth_reps,
            sigma_v: synth_sigma,
            c: synth_c,
        });
    }
    cfg.validate()?;
    Ok(cfg)
}
