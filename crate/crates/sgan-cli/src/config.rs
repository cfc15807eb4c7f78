//! Experiment config files: a versioned TOML schema in which only the
//! domain and learner are mandatory. Every omitted knob resolves to a
//! documented default (possibly preset-dependent), and the full resolution
//! is echoed into the run manifest so no default stays silent.

use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use serde::Deserialize;

use sgan::domains::{DomainKind, Dynamics, GridDomainSpec, Ratio64, Representation};
use sgan::evaluation::{DeviationMetric, DEFAULT_EVAL_SAMPLES, DEFAULT_RESAMPLE_FACTOR};
use sgan::learners::{LearnerKind, TrainConfig};

use crate::error::{CliError, Result};

pub const CONFIG_SCHEMA: u32 = 1;

/// Paper-scale preset trains for 100k generator iterations and evaluates
/// with 10k draws per state; the ci preset shrinks both to desk scale.
pub const PAPER_ITERATIONS: usize = 100_000;
pub const CI_ITERATIONS: usize = 2_000;
pub const PAPER_EVAL_SAMPLES: usize = DEFAULT_EVAL_SAMPLES;
pub const CI_EVAL_SAMPLES: usize = 1_000;
/// Random-background evaluation sets default to fewer draws per state.
pub const RANDOM_BG_EVAL_SAMPLES: usize = 1_000;

pub const DEFAULT_DATA_COUNT: u64 = 100_000;
/// Random backgrounds default to this fraction of the transition-pair space.
pub const BACKGROUND_DATA_FRACTION: f64 = 1e-6;
pub const DEFAULT_HELDOUT_BACKGROUNDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Paper,
    Ci,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Ci => "ci",
        }
    }

    fn iterations(&self) -> usize {
        match self {
            Preset::Paper => PAPER_ITERATIONS,
            Preset::Ci => CI_ITERATIONS,
        }
    }

    fn eval_samples(&self, spec: &GridDomainSpec) -> usize {
        match self {
            Preset::Paper => default_eval_samples(spec),
            Preset::Ci => CI_EVAL_SAMPLES,
        }
    }
}

fn default_eval_samples(spec: &GridDomainSpec) -> usize {
    if spec.kind == DomainKind::TwoDRandomBackground {
        RANDOM_BG_EVAL_SAMPLES
    } else {
        PAPER_EVAL_SAMPLES
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema: u32,
    seed: Option<u64>,
    domain: DomainSection,
    learner: LearnerSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    eval: EvalSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSection {
    kind: DomainKind,
    size: usize,
    representation: Representation,
    /// `"default"`, `"uniform"`, or colon-joined probabilities
    /// (`"1/3:2/3"`, `"0.8:0.1:0:0.1"`).
    dynamics: Option<String>,
    block_size: Option<usize>,
    fence_prob: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LearnerSection {
    kind: LearnerKind,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    iterations: Option<usize>,
    batch_size: Option<usize>,
    critic_iters: Option<usize>,
    delta: Option<DeltaSpec>,
    lambda: Option<f64>,
    rho: Option<f64>,
    noise_dim: Option<usize>,
    t_max: Option<usize>,
    noise_retention: Option<bool>,
    eval_every: Option<usize>,
    eval_snapshot_samples: Option<usize>,
}

/// δ is either a number or the string `"auto"` (one third of the encoding
/// distance a single agent move causes).
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DeltaSpec {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    count: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    n_samples: Option<usize>,
    max_resample_factor: Option<usize>,
    deviation: Option<DeviationMetric>,
    /// Fresh backgrounds drawn for random-background evaluation; ignored by
    /// the other kinds.
    heldout_backgrounds: Option<usize>,
}

/// How δ was chosen, echoed in manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaRule {
    Fixed,
    Auto,
    RepresentationDefault,
}

impl fmt::Display for DeltaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeltaRule::Fixed => "fixed",
            DeltaRule::Auto => "auto",
            DeltaRule::RepresentationDefault => "representation-default",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub n_samples: usize,
    pub max_resample_factor: usize,
    pub deviation: DeviationMetric,
    pub heldout_backgrounds: usize,
}

/// A config file after defaulting: everything a command needs, fully
/// determined.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: GridDomainSpec,
    pub learner: LearnerKind,
    pub train: TrainConfig,
    pub delta_rule: DeltaRule,
    pub data_count: u64,
    pub eval: EvalSettings,
    pub seed: u64,
    pub preset: Option<Preset>,
}

/// Parses one probability: `a/b`, an integer, or a terminating decimal
/// (converted exactly, `0.25` → 1/4).
pub fn parse_ratio(s: &str) -> Result<Ratio64> {
    let bad = |detail: &str| CliError::usage(format!("dynamics: bad probability `{s}`: {detail}"));
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().map_err(|_| bad("numerator is not an integer"))?;
        let d: i64 = den.trim().parse().map_err(|_| bad("denominator is not an integer"))?;
        if d <= 0 {
            return Err(bad("denominator must be positive"));
        }
        return Ok(Ratio::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.len() > 9 {
            return Err(bad("at most 9 decimal places"));
        }
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("decimal digits expected after the point"));
        }
        let w: i64 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| bad("integer part is not a number"))?
        };
        if w < 0 || whole.starts_with('-') {
            return Err(bad("probabilities are nonnegative"));
        }
        let scale = 10i64.pow(frac.len() as u32);
        let f: i64 = frac.parse().map_err(|_| bad("fraction part is not a number"))?;
        return Ok(Ratio::new(w * scale + f, scale));
    }
    let n: i64 = s.parse().map_err(|_| bad("not a number"))?;
    Ok(Ratio::from_integer(n))
}

fn parse_dynamics(kind: DomainKind, text: Option<&str>) -> Result<Dynamics> {
    let two_d = kind.is_two_d();
    match text.unwrap_or("default") {
        "default" => Ok(if two_d { Dynamics::russell_norvig() } else { Dynamics::one_d_default() }),
        "uniform" => Ok(if two_d {
            Dynamics::uniform_2d()
        } else {
            Dynamics::OneD { left: Ratio::new(1, 2), right: Ratio::new(1, 2) }
        }),
        s => {
            let parts: std::result::Result<Vec<Ratio64>, CliError> =
                s.split(':').map(parse_ratio).collect();
            let parts = parts?;
            match (two_d, parts.as_slice()) {
                (false, &[left, right]) => Ok(Dynamics::OneD { left, right }),
                (true, &[north, east, south, west]) => {
                    Ok(Dynamics::TwoD { north, east, south, west })
                }
                _ => Err(CliError::usage(format!(
                    "dynamics: `{s}` has {} parts, but a {} domain needs {}",
                    parts.len(),
                    kind.name(),
                    if two_d { 4 } else { 2 }
                ))),
            }
        }
    }
}

fn build_spec(d: &DomainSection) -> Result<GridDomainSpec> {
    let dynamics = parse_dynamics(d.kind, d.dynamics.as_deref())?;
    let mut spec = match d.kind {
        DomainKind::OneD => GridDomainSpec::one_d(d.size, d.representation),
        DomainKind::TwoD => GridDomainSpec::two_d(d.size, d.representation, dynamics),
        DomainKind::TwoDObstacle => {
            GridDomainSpec::two_d_obstacle(d.size, d.representation, dynamics)
        }
        DomainKind::TwoDRandomBackground => GridDomainSpec::two_d_random_background(
            d.size,
            d.representation,
            dynamics,
            d.fence_prob.unwrap_or(sgan::domains::DEFAULT_FENCE_PROB),
        ),
    };
    spec.dynamics = dynamics;
    if let Some(b) = d.block_size {
        spec.block_size = b;
    }
    if d.fence_prob.is_some() && d.kind != DomainKind::TwoDRandomBackground {
        return Err(CliError::usage(format!(
            "domain.fence_prob: only meaningful for two-d-random-background, not {}",
            d.kind.name()
        )));
    }
    spec.validate().map_err(|e| CliError::usage(format!("domain: {e}")))?;
    Ok(spec)
}

/// Loads and fully resolves a config file. `seed_flag` (from `--seed`)
/// overrides the file's seed; the preset fills only the keys the file left
/// unspecified.
pub fn load_experiment(
    path: &Path,
    seed_flag: Option<u64>,
    preset: Option<Preset>,
) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    let file: ConfigFile = toml::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    if file.schema != CONFIG_SCHEMA {
        return Err(CliError::usage(format!(
            "schema: version {} is not supported (this build reads {CONFIG_SCHEMA})",
            file.schema
        )));
    }
    let seed = seed_flag.or(file.seed).ok_or_else(|| {
        CliError::usage("seed: set it in the config file or pass --seed".to_string())
    })?;
    let spec = build_spec(&file.domain)?;

    let defaults = TrainConfig::defaults_for(&spec);
    let t = &file.train;
    let (delta, delta_rule) = match &t.delta {
        None => (defaults.delta, DeltaRule::RepresentationDefault),
        Some(DeltaSpec::Fixed(v)) => (*v, DeltaRule::Fixed),
        Some(DeltaSpec::Named(s)) if s == "auto" => {
            (TrainConfig::auto_delta(&spec), DeltaRule::Auto)
        }
        Some(DeltaSpec::Named(s)) => {
            return Err(CliError::usage(format!(
                "train.delta: `{s}` is not a number or \"auto\""
            )))
        }
    };
    let train = TrainConfig {
        iterations: t
            .iterations
            .or(preset.map(|p| p.iterations()))
            .unwrap_or(defaults.iterations),
        batch_size: t.batch_size.unwrap_or(defaults.batch_size),
        critic_iters: t.critic_iters.unwrap_or(defaults.critic_iters),
        delta,
        lambda: t.lambda.unwrap_or(defaults.lambda),
        rho: t.rho.unwrap_or(defaults.rho),
        noise_dim: t.noise_dim.unwrap_or(defaults.noise_dim),
        t_max: t.t_max.unwrap_or(defaults.t_max),
        enable_noise_retention: t.noise_retention.unwrap_or(defaults.enable_noise_retention),
        seed,
        eval_every: t.eval_every.unwrap_or(0),
        eval_snapshot_samples: t.eval_snapshot_samples.unwrap_or(defaults.eval_snapshot_samples),
    };
    train.validate().map_err(|e| CliError::usage(format!("train: {e}")))?;

    let data_count = match file.data.count {
        Some(c) if c == 0 => return Err(CliError::usage("data.count: must be at least 1")),
        Some(c) => c,
        None => sgan::domains::recommended_dataset_size(&spec, BACKGROUND_DATA_FRACTION)
            .unwrap_or(DEFAULT_DATA_COUNT),
    };

    let e = &file.eval;
    let eval = EvalSettings {
        n_samples: e
            .n_samples
            .or(preset.map(|p| p.eval_samples(&spec)))
            .unwrap_or_else(|| default_eval_samples(&spec)),
        max_resample_factor: e.max_resample_factor.unwrap_or(DEFAULT_RESAMPLE_FACTOR),
        deviation: e.deviation.unwrap_or_default(),
        heldout_backgrounds: e.heldout_backgrounds.unwrap_or(DEFAULT_HELDOUT_BACKGROUNDS),
    };
    if eval.n_samples < 1 {
        return Err(CliError::usage("eval.n_samples: must be at least 1"));
    }
    if eval.heldout_backgrounds < 1 {
        return Err(CliError::usage("eval.heldout_backgrounds: must be at least 1"));
    }

    Ok(Experiment {
        spec,
        learner: file.learner.kind,
        train,
        delta_rule,
        data_count,
        eval,
        seed,
        preset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    const MINIMAL: &str = r#"
schema = 1
seed = 7

[domain]
kind = "one-d"
size = 5
representation = "vector-bits"

[learner]
kind = "sgan"
"#;

    #[test]
    fn minimal_config_resolves_paper_scale_defaults() {
        let f = write_config(MINIMAL);
        let exp = load_experiment(f.path(), None, None).unwrap();
        assert_eq!(exp.seed, 7);
        assert_eq!(exp.learner, LearnerKind::Sgan);
        assert_eq!(exp.spec.kind, DomainKind::OneD);
        assert_eq!(exp.spec.dynamics.label(), "1/3:2/3");
        assert_eq!(exp.train.iterations, PAPER_ITERATIONS);
        assert_eq!(exp.train.delta, 0.3);
        assert_eq!(exp.delta_rule, DeltaRule::RepresentationDefault);
        assert_eq!(exp.train.seed, 7);
        assert_eq!(exp.data_count, DEFAULT_DATA_COUNT);
        assert_eq!(exp.eval.n_samples, PAPER_EVAL_SAMPLES);
    }

    #[test]
    fn presets_fill_only_unspecified_keys() {
        let f = write_config(MINIMAL);
        let ci = load_experiment(f.path(), None, Some(Preset::Ci)).unwrap();
        assert_eq!(ci.train.iterations, CI_ITERATIONS);
        assert_eq!(ci.eval.n_samples, CI_EVAL_SAMPLES);

        let pinned = write_config(&format!("{MINIMAL}\n[train]\niterations = 123\n"));
        let exp = load_experiment(pinned.path(), None, Some(Preset::Ci)).unwrap();
        assert_eq!(exp.train.iterations, 123, "explicit keys beat the preset");
        assert_eq!(exp.eval.n_samples, CI_EVAL_SAMPLES);
    }

    #[test]
    fn seed_flag_overrides_file_seed() {
        let f = write_config(MINIMAL);
        let exp = load_experiment(f.path(), Some(99), None).unwrap();
        assert_eq!(exp.seed, 99);
        assert_eq!(exp.train.seed, 99);

        let no_seed = write_config(&MINIMAL.replace("seed = 7", ""));
        let err = load_experiment(no_seed.path(), None, None).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let ok = load_experiment(no_seed.path(), Some(3), None).unwrap();
        assert_eq!(ok.seed, 3);
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let f = write_config(&format!("{MINIMAL}\n[train]\nlearning_rate = 0.1\n"));
        let err = load_experiment(f.path(), None, None).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn dynamics_strings_parse_exactly() {
        assert_eq!(parse_ratio("1/3").unwrap(), Ratio::new(1, 3));
        assert_eq!(parse_ratio("0.25").unwrap(), Ratio::new(1, 4));
        assert_eq!(parse_ratio("0").unwrap(), Ratio::from_integer(0));
        assert_eq!(parse_ratio(".5").unwrap(), Ratio::new(1, 2));
        assert!(parse_ratio("x").is_err());
        assert!(parse_ratio("1/0").is_err());

        let f = write_config(&MINIMAL.replace(
            "representation = \"vector-bits\"",
            "representation = \"vector-bits\"\ndynamics = \"0.4:0.6\"",
        ));
        let exp = load_experiment(f.path(), None, None).unwrap();
        assert_eq!(exp.spec.dynamics.label(), "2/5:3/5");
    }

    #[test]
    fn dynamics_arity_must_match_the_domain() {
        let f = write_config(&MINIMAL.replace(
            "representation = \"vector-bits\"",
            "representation = \"vector-bits\"\ndynamics = \"1/4:1/4:1/4:1/4\"",
        ));
        let err = load_experiment(f.path(), None, None).unwrap_err();
        assert!(err.to_string().contains("needs 2"), "{err}");
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let f = write_config(&MINIMAL.replace(
            "representation = \"vector-bits\"",
            "representation = \"vector-bits\"\ndynamics = \"1/3:1/3\"",
        ));
        let err = load_experiment(f.path(), None, None).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)), "{err}");
    }

    #[test]
    fn auto_delta_and_fixed_delta() {
        let auto = write_config(&format!("{MINIMAL}\n[train]\ndelta = \"auto\"\n"));
        let exp = load_experiment(auto.path(), None, None).unwrap();
        assert_eq!(exp.delta_rule, DeltaRule::Auto);
        assert!((exp.train.delta - 1.0 / 3.0).abs() < 1e-15);

        let fixed = write_config(&format!("{MINIMAL}\n[train]\ndelta = 0.05\n"));
        let exp = load_experiment(fixed.path(), None, None).unwrap();
        assert_eq!(exp.delta_rule, DeltaRule::Fixed);
        assert_eq!(exp.train.delta, 0.05);

        let bad = write_config(&format!("{MINIMAL}\n[train]\ndelta = \"magic\"\n"));
        assert!(load_experiment(bad.path(), None, None).is_err());
    }

    #[test]
    fn random_background_defaults_scale_with_the_pair_space() {
        let text = MINIMAL
            .replace("kind = \"one-d\"", "kind = \"two-d-random-background\"")
            .replace("size = 5", "size = 5");
        let f = write_config(&text);
        let exp = load_experiment(f.path(), None, None).unwrap();
        // 25 · 2²⁴ states · 5 successors · 1e-6.
        assert_eq!(exp.data_count, 2097);
        assert_eq!(exp.eval.heldout_backgrounds, DEFAULT_HELDOUT_BACKGROUNDS);
        assert_eq!(exp.eval.n_samples, RANDOM_BG_EVAL_SAMPLES);
    }

    #[test]
    fn fence_prob_is_rejected_outside_random_background() {
        let f = write_config(&MINIMAL.replace("size = 5", "size = 5\nfence_prob = 0.3"));
        let err = load_experiment(f.path(), None, None).unwrap_err();
        assert!(err.to_string().contains("fence_prob"), "{err}");
    }

    #[test]
    fn schema_version_is_enforced() {
        let f = write_config(&MINIMAL.replace("schema = 1", "schema = 2"));
        let err = load_experiment(f.path(), None, None).unwrap_err();
        assert!(err.to_string().contains("schema"), "{err}");
    }
}
