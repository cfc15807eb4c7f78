//! The training loop and the trained-model type it produces. Every run is
//! fully determined by (learner, domain, dataset, config): initialization
//! and in-loop randomness come from named streams of the config seed.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::autodiff::Tensor;
use crate::domains::{self, Dataset, GridDomainSpec, GridState, TransitionPair};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvalConfig, ExactOutcome, NextStateSampler};
use crate::nn::{
    build_discriminator, build_generator, checkpoint, AdamState, DiscriminatorNet, GeneratorNet,
};
use crate::seed;

use super::steps::{
    det_train_step, generator_step, gpwgan_disc_step, sgan_disc_step, uniform_noise,
};
use super::tabular::TabularModel;
use super::{LearnerKind, TrainConfig};

/// States drawn per in-training evaluation snapshot.
const SNAPSHOT_STATES: usize = 8;

/// One-point predictor: the generator evaluated at zero noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicModel {
    pub net: GeneratorNet,
}

/// Adversarially trained sampler with its critic and both optimizer states;
/// `kind` records the critic objective that trained it.
#[derive(Debug, Clone)]
pub struct GanModel {
    pub kind: LearnerKind,
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub g_adam: AdamState,
    pub d_adam: AdamState,
}

impl GanModel {
    pub fn new(
        kind: LearnerKind,
        generator: GeneratorNet,
        discriminator: DiscriminatorNet,
    ) -> Result<Self> {
        if !kind.is_gan() {
            return Err(Error::contract(format!("{} is not an adversarial learner", kind.name())));
        }
        if generator.input_dim != discriminator.state_dim {
            return Err(Error::shape(format!(
                "generator dimension {} does not match critic dimension {}",
                generator.input_dim, discriminator.state_dim
            )));
        }
        let g_adam = AdamState::for_params(&generator.params());
        let d_adam = AdamState::for_params(&discriminator.params());
        Ok(GanModel { kind, generator, discriminator, g_adam, d_adam })
    }
}

/// A trained transition model of any learner kind.
#[derive(Debug, Clone)]
pub enum TransitionModel {
    Tabular(TabularModel),
    Deterministic(DeterministicModel),
    Gan(GanModel),
}

fn det_predict(net: &GeneratorNet, xbar: &[f64]) -> Result<Vec<f64>> {
    let x = Tensor::matrix(1, xbar.len(), xbar.to_vec())?;
    let noise = Tensor::zeros(vec![1, net.noise_dim]);
    let out = net.sample(&x, &noise)?;
    Ok(out.row(0).to_vec())
}

fn gan_sample(
    gen: &GeneratorNet,
    xbar: &[f64],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let rows: Vec<Vec<f64>> = (0..count).map(|_| xbar.to_vec()).collect();
    let x = Tensor::from_rows(&rows)?;
    let noise = uniform_noise(count, gen.noise_dim, rng);
    let out = gen.sample(&x, &noise)?;
    Ok((0..count).map(|i| out.row(i).to_vec()).collect())
}

impl NextStateSampler for TransitionModel {
    fn sample_next(
        &mut self,
        xbar: &[f64],
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>> {
        match self {
            TransitionModel::Tabular(t) => t.sample_next(xbar, count, rng),
            TransitionModel::Deterministic(d) => {
                let x = det_predict(&d.net, xbar)?;
                Ok(vec![x; count])
            }
            TransitionModel::Gan(m) => gan_sample(&m.generator, xbar, count, rng),
        }
    }

    fn exact(&self, xbar: &[f64]) -> Option<ExactOutcome> {
        match self {
            TransitionModel::Tabular(t) => t.exact(xbar),
            _ => None,
        }
    }
}

impl TransitionModel {
    pub fn kind(&self) -> LearnerKind {
        match self {
            TransitionModel::Tabular(_) => LearnerKind::Tabular,
            TransitionModel::Deterministic(_) => LearnerKind::DetNet,
            TransitionModel::Gan(m) => m.kind,
        }
    }

    /// Writes final parameters plus enough metadata to rebuild the model.
    /// Optimizer state is not persisted; a reloaded model resumes with a
    /// fresh optimizer.
    pub fn save(&self, path: &Path, spec: &GridDomainSpec) -> Result<()> {
        let spec_value = serde_json::to_value(spec)
            .map_err(|e| Error::Format { path: path.display().to_string(), detail: e.to_string() })?;
        let mut meta = json!({ "model": self.kind().name(), "spec": spec_value });
        let params = match self {
            TransitionModel::Tabular(t) => {
                meta["table"] = t.to_json();
                Vec::new()
            }
            TransitionModel::Deterministic(d) => {
                meta["noise_dim"] = json!(d.net.noise_dim);
                checkpoint::pack_generator(&d.net, "g.")
            }
            TransitionModel::Gan(m) => {
                meta["noise_dim"] = json!(m.generator.noise_dim);
                let mut p = checkpoint::pack_generator(&m.generator, "g.");
                p.extend(checkpoint::pack_discriminator(&m.discriminator, "d."));
                p
            }
        };
        checkpoint::Checkpoint { meta, params }.save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, GridDomainSpec)> {
        let ck = checkpoint::Checkpoint::load(path)?;
        let origin = path.display().to_string();
        let fmt =
            |detail: &str| Error::Format { path: origin.clone(), detail: detail.to_string() };
        let name = ck
            .meta
            .get("model")
            .and_then(|v| v.as_str())
            .ok_or_else(|| fmt("missing model name"))?
            .to_string();
        let spec: GridDomainSpec = serde_json::from_value(
            ck.meta.get("spec").cloned().ok_or_else(|| fmt("missing domain spec"))?,
        )
        .map_err(|e| fmt(&e.to_string()))?;
        spec.validate()?;
        let v = spec.encoded_dim();
        let noise_dim = || -> Result<usize> {
            ck.meta
                .get("noise_dim")
                .and_then(|n| n.as_u64())
                .map(|n| n as usize)
                .ok_or_else(|| fmt("missing noise_dim"))
        };
        let model = match name.as_str() {
            "tabular" => {
                let table = ck.meta.get("table").ok_or_else(|| fmt("missing table"))?;
                TransitionModel::Tabular(TabularModel::from_json(table)?)
            }
            "det-net" => TransitionModel::Deterministic(DeterministicModel {
                net: checkpoint::unpack_generator("g.", v, noise_dim()?, &ck.params, &origin)?,
            }),
            "gp-wgan" | "sgan" => {
                let kind =
                    if name == "sgan" { LearnerKind::Sgan } else { LearnerKind::GpWgan };
                let generator =
                    checkpoint::unpack_generator("g.", v, noise_dim()?, &ck.params, &origin)?;
                let discriminator =
                    checkpoint::unpack_discriminator("d.", v, &ck.params, &origin)?;
                TransitionModel::Gan(GanModel::new(kind, generator, discriminator)?)
            }
            other => return Err(fmt(&format!("unknown model kind `{other}`"))),
        };
        Ok((model, spec))
    }
}

/// Mid-training evaluation of the generator on a few random states.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalSnapshot {
    pub mean_l1: f64,
    pub mean_validity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogEntry {
    pub iteration: usize,
    /// Mean critic loss over the applied critic steps of this iteration;
    /// absent for learners without a critic or when every step was skipped.
    pub d_loss: Option<f64>,
    pub g_loss: Option<f64>,
    /// Wall-clock milliseconds since training started.
    pub wall_ms: u64,
    pub snapshot: Option<EvalSnapshot>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
    /// Critic steps withheld because every pair in the batch was degenerate.
    pub noop_disc_steps: u64,
    pub skipped_pairs_total: u64,
}

fn sample_batch<'a>(
    dataset: &'a Dataset,
    size: usize,
    rng: &mut impl Rng,
) -> Vec<&'a TransitionPair> {
    (0..size).map(|_| &dataset.pairs[rng.gen_range(0..dataset.pairs.len())]).collect()
}

struct DetSampler<'a> {
    net: &'a GeneratorNet,
}

impl NextStateSampler for DetSampler<'_> {
    fn sample_next(
        &mut self,
        xbar: &[f64],
        count: usize,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>> {
        let x = det_predict(self.net, xbar)?;
        Ok(vec![x; count])
    }
}

struct GanSampler<'a> {
    gen: &'a GeneratorNet,
}

impl NextStateSampler for GanSampler<'_> {
    fn sample_next(
        &mut self,
        xbar: &[f64],
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>> {
        gan_sample(self.gen, xbar, count, rng)
    }
}

fn snapshot<S: NextStateSampler + ?Sized>(
    model: &mut S,
    spec: &GridDomainSpec,
    config: &TrainConfig,
    iteration: usize,
) -> Result<EvalSnapshot> {
    let mut rng = seed::stream(config.seed, &format!("eval.snapshot.{iteration}"));
    let states: Vec<GridState> = (0..SNAPSHOT_STATES)
        .map(|_| domains::random_state(spec, &mut rng))
        .collect::<Result<_>>()?;
    let cfg = EvalConfig { n_samples: config.eval_snapshot_samples, ..Default::default() };
    let report = evaluation::evaluate_model(model, spec, &states, &cfg, &mut rng)?;
    Ok(EvalSnapshot { mean_l1: report.mean_l1, mean_validity: report.mean_validity })
}

fn wants_snapshot(config: &TrainConfig, iteration: usize) -> bool {
    config.eval_every > 0 && (iteration + 1) % config.eval_every == 0
}

/// Trains a model of the requested kind on the dataset. Networks are
/// initialized from the "init.generator"/"init.discriminator" streams of
/// the config seed; batches, noise, and interpolation draws all come from
/// the single "training" stream.
pub fn train(
    kind: LearnerKind,
    spec: &GridDomainSpec,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(TransitionModel, TrainingLog)> {
    spec.validate()?;
    config.validate()?;
    if dataset.spec != *spec {
        return Err(Error::contract("dataset was drawn from a different domain".to_string()));
    }
    if dataset.is_empty() {
        return Err(Error::contract("dataset is empty".to_string()));
    }
    match kind {
        LearnerKind::Tabular => {
            Ok((TransitionModel::Tabular(TabularModel::fit(dataset)), TrainingLog::default()))
        }
        LearnerKind::DetNet => train_det(spec, dataset, config),
        LearnerKind::GpWgan | LearnerKind::Sgan => train_gan(kind, spec, dataset, config),
    }
}

fn train_det(
    spec: &GridDomainSpec,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(TransitionModel, TrainingLog)> {
    let mut init_rng = seed::stream(config.seed, "init.generator");
    let mut net = build_generator(spec.encoded_dim(), config.noise_dim, &mut init_rng);
    let mut adam = AdamState::for_params(&net.params());
    let mut rng = seed::stream(config.seed, "training");
    let mut log = TrainingLog::default();
    let start = Instant::now();
    for it in 0..config.iterations {
        let batch = sample_batch(dataset, config.batch_size, &mut rng);
        let loss = det_train_step(&mut net, &mut adam, &batch)?;
        let snap = if wants_snapshot(config, it) {
            Some(snapshot(&mut DetSampler { net: &net }, spec, config, it)?)
        } else {
            None
        };
        log.entries.push(LogEntry {
            iteration: it,
            d_loss: None,
            g_loss: Some(loss),
            wall_ms: start.elapsed().as_millis() as u64,
            snapshot: snap,
        });
    }
    Ok((TransitionModel::Deterministic(DeterministicModel { net }), log))
}

fn train_gan(
    kind: LearnerKind,
    spec: &GridDomainSpec,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(TransitionModel, TrainingLog)> {
    let v = spec.encoded_dim();
    let mut gen_rng = seed::stream(config.seed, "init.generator");
    let generator = build_generator(v, config.noise_dim, &mut gen_rng);
    let mut disc_rng = seed::stream(config.seed, "init.discriminator");
    let discriminator = build_discriminator(v, &mut disc_rng);
    let mut model = GanModel::new(kind, generator, discriminator)?;
    let mut rng = seed::stream(config.seed, "training");
    let mut log = TrainingLog::default();
    let start = Instant::now();
    for it in 0..config.iterations {
        let mut d_sum = 0.0;
        let mut d_applied = 0u32;
        for _ in 0..config.critic_iters {
            let batch = sample_batch(dataset, config.batch_size, &mut rng);
            match kind {
                LearnerKind::GpWgan => {
                    let loss = gpwgan_disc_step(
                        &model.generator,
                        &mut model.discriminator,
                        &mut model.d_adam,
                        &batch,
                        config.lambda,
                        &mut rng,
                    )?;
                    d_sum += loss;
                    d_applied += 1;
                }
                LearnerKind::Sgan => {
                    let out = sgan_disc_step(
                        &model.generator,
                        &mut model.discriminator,
                        &mut model.d_adam,
                        &batch,
                        config.delta,
                        config.t_max,
                        &mut rng,
                    )?;
                    log.skipped_pairs_total += out.skipped_pairs as u64;
                    if out.applied {
                        d_sum += out.loss;
                        d_applied += 1;
                    } else {
                        log.noop_disc_steps += 1;
                    }
                }
                _ => unreachable!("only adversarial kinds reach the critic loop"),
            }
        }
        let batch = sample_batch(dataset, config.batch_size, &mut rng);
        let g_loss = generator_step(
            &mut model.generator,
            &mut model.g_adam,
            &model.discriminator,
            &batch,
            config.rho,
            config.enable_noise_retention,
            &mut rng,
        )?;
        let snap = if wants_snapshot(config, it) {
            Some(snapshot(&mut GanSampler { gen: &model.generator }, spec, config, it)?)
        } else {
            None
        };
        log.entries.push(LogEntry {
            iteration: it,
            d_loss: if d_applied > 0 { Some(d_sum / f64::from(d_applied)) } else { None },
            g_loss: Some(g_loss),
            wall_ms: start.elapsed().as_millis() as u64,
            snapshot: snap,
        });
    }
    Ok((TransitionModel::Gan(model), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{Dynamics, Representation, StartStatePolicy};
    use tempfile::tempdir;

    fn spec_1d() -> GridDomainSpec {
        GridDomainSpec::one_d(5, Representation::VectorBits)
    }

    fn small_config(iterations: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_size: 8,
            noise_dim: 16,
            seed,
            ..TrainConfig::defaults_for(&spec_1d())
        }
    }

    fn dataset_1d(count: usize) -> Dataset {
        let spec = spec_1d();
        let mut rng = seed::stream(3, "train-test-data");
        domains::generate_dataset(&spec, count, &mut rng, StartStatePolicy::UniformValid).unwrap()
    }

    #[test]
    fn one_iteration_applies_exactly_critic_iters_plus_one_updates() {
        let spec = spec_1d();
        let ds = dataset_1d(64);
        let config = small_config(1, 7);
        let (model, log) = train(LearnerKind::Sgan, &spec, &ds, &config).unwrap();
        let TransitionModel::Gan(m) = model else { panic!("wrong model kind") };
        assert_eq!(m.d_adam.step_count() + log.noop_disc_steps, 5);
        assert_eq!(m.g_adam.step_count(), 1);
        assert_eq!(log.entries.len(), 1);
    }

    #[test]
    fn same_seed_reproduces_the_model_bit_for_bit() {
        let spec = spec_1d();
        let ds = dataset_1d(64);
        let config = small_config(3, 11);
        let (a, _) = train(LearnerKind::Sgan, &spec, &ds, &config).unwrap();
        let (b, _) = train(LearnerKind::Sgan, &spec, &ds, &config).unwrap();
        let (TransitionModel::Gan(a), TransitionModel::Gan(b)) = (a, b) else {
            panic!("wrong model kind")
        };
        assert_eq!(a.generator, b.generator);
        assert_eq!(a.discriminator, b.discriminator);

        let config2 = small_config(3, 12);
        let (c, _) = train(LearnerKind::Sgan, &spec, &ds, &config2).unwrap();
        let TransitionModel::Gan(c) = c else { panic!("wrong model kind") };
        assert_ne!(a.generator, c.generator, "different seeds must differ");
    }

    #[test]
    fn checkpoints_round_trip_every_model_kind() {
        let spec = spec_1d();
        let ds = dataset_1d(64);
        let dir = tempdir().unwrap();
        for kind in
            [LearnerKind::Tabular, LearnerKind::DetNet, LearnerKind::GpWgan, LearnerKind::Sgan]
        {
            let config = small_config(if kind == LearnerKind::Tabular { 1 } else { 2 }, 5);
            let (model, _) = train(kind, &spec, &ds, &config).unwrap();
            let path = dir.path().join(format!("{}.ck", kind.name()));
            model.save(&path, &spec).unwrap();
            let (loaded, loaded_spec) = TransitionModel::load(&path).unwrap();
            assert_eq!(loaded_spec, spec);
            assert_eq!(loaded.kind(), kind);
            match (&model, &loaded) {
                (TransitionModel::Tabular(a), TransitionModel::Tabular(b)) => assert_eq!(a, b),
                (TransitionModel::Deterministic(a), TransitionModel::Deterministic(b)) => {
                    assert_eq!(a.net, b.net)
                }
                (TransitionModel::Gan(a), TransitionModel::Gan(b)) => {
                    assert_eq!(a.generator, b.generator);
                    assert_eq!(a.discriminator, b.discriminator);
                }
                _ => panic!("model kind changed across save/load"),
            }
        }
    }

    #[test]
    fn dataset_domain_mismatch_is_rejected() {
        let ds = dataset_1d(16);
        let other = GridDomainSpec::two_d(4, Representation::VectorBits, Dynamics::uniform_2d());
        let config = small_config(1, 1);
        assert!(train(LearnerKind::Tabular, &other, &ds, &config).is_err());
    }

    #[test]
    fn deterministic_model_predicts_one_point() {
        let spec = spec_1d();
        let ds = dataset_1d(64);
        let config = small_config(2, 9);
        let (mut model, log) = train(LearnerKind::DetNet, &spec, &ds, &config).unwrap();
        assert_eq!(log.entries.len(), 2);
        assert!(log.entries.iter().all(|e| e.d_loss.is_none() && e.g_loss.is_some()));
        let mut rng = seed::stream(1, "train-test-sample");
        let draws = model.sample_next(&ds.pairs[0].xbar, 4, &mut rng).unwrap();
        assert_eq!(draws.len(), 4);
        assert!(draws.windows(2).all(|w| w[0] == w[1]), "all draws must coincide");
    }

    #[test]
    fn gan_draws_vary_and_match_dimension() {
        let spec = spec_1d();
        let ds = dataset_1d(64);
        let config = small_config(1, 13);
        let (mut model, _) = train(LearnerKind::GpWgan, &spec, &ds, &config).unwrap();
        let mut rng = seed::stream(2, "train-test-sample");
        let draws = model.sample_next(&ds.pairs[0].xbar, 6, &mut rng).unwrap();
        assert_eq!(draws.len(), 6);
        assert!(draws.iter().all(|d| d.len() == spec.encoded_dim()));
        assert!(draws.windows(2).any(|w| w[0] != w[1]), "noise must move the sampler");
    }

    #[test]
    fn snapshots_fire_on_schedule() {
        let spec = spec_1d();
        let ds = dataset_1d(64);
        let mut config = small_config(4, 21);
        config.eval_every = 2;
        config.eval_snapshot_samples = 20;
        let (_, log) = train(LearnerKind::Sgan, &spec, &ds, &config).unwrap();
        let fired: Vec<usize> =
            log.entries.iter().filter(|e| e.snapshot.is_some()).map(|e| e.iteration).collect();
        assert_eq!(fired, vec![1, 3]);
    }
}
