//! Run manifests: every command writes a `manifest.toml` next to its
//! outputs that pins the fully resolved configuration — including every
//! value that came from a default — plus the constants baked into the
//! binary, so a run can be reproduced bit-for-bit from the manifest alone.

use std::path::Path;

use serde::Serialize;

use sgan::domains::VALIDITY_THRESHOLD;
use sgan::learners::MIN_PAIR_DISTANCE;
use sgan::nn::{
    ADAM_ALPHA, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, DEFAULT_NOISE_DIM, HIDDEN_WIDTH,
    LEAKY_SLOPE,
};

use crate::config::Experiment;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub preset: String,
    pub wall_clock_ms: u64,
    pub domain: DomainManifest,
    pub learner: LearnerManifest,
    pub train: TrainManifest,
    pub data: DataManifest,
    pub eval: EvalManifest,
    pub constants: Constants,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Serialize)]
pub struct DomainManifest {
    pub kind: String,
    pub size: usize,
    pub representation: String,
    pub dynamics: String,
    pub block_size: usize,
    pub fence_prob: f64,
    pub encoded_dim: usize,
}

#[derive(Debug, Serialize)]
pub struct LearnerManifest {
    pub kind: String,
}

#[derive(Debug, Serialize)]
pub struct TrainManifest {
    pub iterations: usize,
    pub batch_size: usize,
    pub critic_iters: usize,
    pub delta: f64,
    pub delta_rule: String,
    pub lambda: f64,
    pub rho: f64,
    pub noise_dim: usize,
    pub t_max: usize,
    pub noise_retention: bool,
    pub eval_every: usize,
    pub eval_snapshot_samples: usize,
}

#[derive(Debug, Serialize)]
pub struct DataManifest {
    pub count: u64,
    pub start_states: String,
}

#[derive(Debug, Serialize)]
pub struct EvalManifest {
    pub n_samples: usize,
    pub max_resample_factor: usize,
    pub deviation: String,
    pub heldout_backgrounds: usize,
}

/// Values the binary fixes rather than reads from config.
#[derive(Debug, Serialize)]
pub struct Constants {
    pub adam_alpha: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub hidden_width: usize,
    pub default_noise_dim: usize,
    pub leaky_slope: f64,
    pub init_scheme: String,
    pub t_rule: String,
    pub min_pair_distance: f64,
    pub validity_threshold: f64,
    pub obstacle_encoding: f64,
    pub seed_streams: Vec<String>,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            adam_alpha: ADAM_ALPHA,
            adam_beta1: ADAM_BETA1,
            adam_beta2: ADAM_BETA2,
            adam_epsilon: ADAM_EPSILON,
            hidden_width: HIDDEN_WIDTH,
            default_noise_dim: DEFAULT_NOISE_DIM,
            leaky_slope: LEAKY_SLOPE,
            init_scheme: "weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero"
                .to_string(),
            t_rule: "ceil(distance/delta - 1e-9), clamped to [1, t_max]".to_string(),
            min_pair_distance: MIN_PAIR_DISTANCE,
            validity_threshold: VALIDITY_THRESHOLD,
            obstacle_encoding: 0.5,
            seed_streams: [
                "dataset",
                "init.generator",
                "init.discriminator",
                "training",
                "eval.snapshot.{iteration}",
                "eval.states",
                "eval.sampling",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

/// Per-command result counters, filled in after the work ran.
#[derive(Debug, Default, Serialize)]
pub struct Outcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs_written: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noop_disc_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_pairs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states_evaluated: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_l1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_validity: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, exp: &Experiment) -> Self {
        RunManifest {
            schema: 1,
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: exp.seed,
            preset: exp.preset.map(|p| p.name().to_string()).unwrap_or_else(|| "none".into()),
            wall_clock_ms: 0,
            domain: DomainManifest {
                kind: exp.spec.kind.name().to_string(),
                size: exp.spec.size,
                representation: exp.spec.representation.name().to_string(),
                dynamics: exp.spec.dynamics.label(),
                block_size: exp.spec.block_size,
                fence_prob: exp.spec.fence_prob,
                encoded_dim: exp.spec.encoded_dim(),
            },
            learner: LearnerManifest { kind: exp.learner.name().to_string() },
            train: TrainManifest {
                iterations: exp.train.iterations,
                batch_size: exp.train.batch_size,
                critic_iters: exp.train.critic_iters,
                delta: exp.train.delta,
                delta_rule: exp.delta_rule.to_string(),
                lambda: exp.train.lambda,
                rho: exp.train.rho,
                noise_dim: exp.train.noise_dim,
                t_max: exp.train.t_max,
                noise_retention: exp.train.enable_noise_retention,
                eval_every: exp.train.eval_every,
                eval_snapshot_samples: exp.train.eval_snapshot_samples,
            },
            data: DataManifest {
                count: exp.data_count,
                start_states: "uniform over valid states".to_string(),
            },
            eval: EvalManifest {
                n_samples: exp.eval.n_samples,
                max_resample_factor: exp.eval.max_resample_factor,
                deviation: format!("{:?}", exp.eval.deviation).to_lowercase(),
                heldout_backgrounds: exp.eval.heldout_backgrounds,
            },
            constants: Constants::default(),
            outcome: None,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Other(format!("manifest serialization: {e}")))?;
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}
