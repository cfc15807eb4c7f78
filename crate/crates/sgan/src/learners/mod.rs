//! The four transition-model learners: a lookup table, a deterministic
//! network trained on squared error, a gradient-penalty WGAN, and the
//! segment-regression GAN whose discriminator learns to point its input
//! gradient along real−generated directions.

mod steps;
pub mod tabular;
mod train;

pub use steps::{
    det_train_step, generator_step, gpwgan_disc_step, sgan_disc_step, DiscStepOutcome,
};
pub use tabular::TabularModel;
pub use train::{
    train, DeterministicModel, EvalSnapshot, GanModel, LogEntry, TrainingLog, TransitionModel,
};

use serde::{Deserialize, Serialize};

use crate::domains::{agent_block_norm, GridDomainSpec, Representation};
use crate::error::{Error, Result};
use crate::nn::DEFAULT_NOISE_DIM;

/// Pairs closer than this have no usable direction and are skipped.
pub const MIN_PAIR_DISTANCE: f64 = 1e-9;

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_CRITIC_ITERS: usize = 5;
pub const DEFAULT_LAMBDA: f64 = 10.0;
pub const DEFAULT_RHO: f64 = 1.0;
pub const DEFAULT_T_MAX: usize = 64;
pub const DEFAULT_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Tabular,
    DetNet,
    GpWgan,
    Sgan,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Tabular => "tabular",
            LearnerKind::DetNet => "det-net",
            LearnerKind::GpWgan => "gp-wgan",
            LearnerKind::Sgan => "sgan",
        }
    }

    pub fn is_gan(&self) -> bool {
        matches!(self, LearnerKind::GpWgan | LearnerKind::Sgan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Generator iterations (each preceded by `critic_iters` critic steps).
    pub iterations: usize,
    pub batch_size: usize,
    pub critic_iters: usize,
    /// Interpolation step length; at most ⌈distance/δ⌉ points per pair.
    pub delta: f64,
    /// Gradient-penalty weight (GP-WGAN only).
    pub lambda: f64,
    /// Noise-retention weight.
    pub rho: f64,
    pub noise_dim: usize,
    /// Upper clamp on interpolation draws per pair.
    pub t_max: usize,
    pub enable_noise_retention: bool,
    pub seed: u64,
    /// Evaluate a small snapshot every this many generator iterations
    /// (0 = never).
    pub eval_every: usize,
    pub eval_snapshot_samples: usize,
}

impl TrainConfig {
    /// Paper-style defaults for a domain: δ by representation, retention on
    /// complex kinds only.
    pub fn defaults_for(spec: &GridDomainSpec) -> Self {
        TrainConfig {
            iterations: DEFAULT_ITERATIONS,
            batch_size: DEFAULT_BATCH_SIZE,
            critic_iters: DEFAULT_CRITIC_ITERS,
            delta: match spec.representation {
                Representation::VectorBits => 0.3,
                Representation::ImageBlocks => 1.0,
            },
            lambda: DEFAULT_LAMBDA,
            rho: DEFAULT_RHO,
            noise_dim: DEFAULT_NOISE_DIM,
            t_max: DEFAULT_T_MAX,
            enable_noise_retention: spec.kind.is_complex(),
            seed: 0,
            eval_every: 0,
            eval_snapshot_samples: 1000,
        }
    }

    /// δ chosen so a one-cell move spans about three interpolation points:
    /// one third of the norm contributed by a single cell's block changing.
    pub fn auto_delta(spec: &GridDomainSpec) -> f64 {
        agent_block_norm(spec) / 3.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("iterations", self.iterations),
            ("batch_size", self.batch_size),
            ("critic_iters", self.critic_iters),
            ("noise_dim", self.noise_dim),
            ("t_max", self.t_max),
        ];
        for (name, v) in positive {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config("delta must be positive".to_string()));
        }
        for (name, v) in [("lambda", self.lambda), ("rho", self.rho)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be nonnegative")));
            }
        }
        if self.eval_every > 0 && self.eval_snapshot_samples < 1 {
            return Err(Error::Config(
                "eval_snapshot_samples must be at least 1 when snapshots are on".to_string(),
            ));
        }
        Ok(())
    }
}

/// Interpolation draws for a pair at the given distance: ⌈distance/δ⌉ with
/// a floor of 1, then an optional cap. The tiny bias inside the ceil keeps
/// exact multiples exact (0.9/0.3 rounds up in floats and must still give
/// 3, not 4).
pub fn draw_count(distance: f64, delta: f64, cap: Option<usize>) -> usize {
    debug_assert!(delta > 0.0 && distance >= 0.0);
    let t = (distance / delta - 1e-9).ceil().max(1.0) as usize;
    match cap {
        Some(c) => t.min(c),
        None => t,
    }
}
