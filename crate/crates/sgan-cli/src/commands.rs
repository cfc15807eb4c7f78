//! The five subcommands. Each one resolves its inputs, does the work, and
//! drops a manifest next to its outputs recording the fully resolved run.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use sgan::domains::{
    enumerate_states, generate_dataset, Dataset, DomainKind, GridState, StartStatePolicy,
    StateKey,
};
use sgan::evaluation::{evaluate_model, EvalConfig, EvalReport};
use sgan::learners::{train, TrainingLog, TransitionModel};
use sgan::seed;
use sgan::theory::{
    fit_scale, hit_probability_constancy_check, hit_probability_limit, hit_probability_simulate,
    pearson, tail_difference_field, theorem1_field_check, Density1D, DiscretizationParams,
};

use crate::config::{load_experiment, Experiment, Preset};
use crate::error::{CliError, Result};
use crate::manifest::{Outcome, RunManifest};
use crate::metrics::{read_metrics, render_report, write_metrics, MetricsRow, METRICS_FILE};

pub const DATASET_FILE: &str = "dataset.sgds";
pub const MODEL_FILE: &str = "model.sgck";
pub const TRAINING_LOG_FILE: &str = "training_log.tsv";
pub const EVAL_STATES_FILE: &str = "eval_states.tsv";
/// Evaluation on random backgrounds keeps the agent on one fixed cell and
/// varies the background; backgrounds fencing this cell are redrawn.
pub const EVAL_AGENT_POS: usize = 0;

pub struct RunPaths {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub out: PathBuf,
}

impl RunPaths {
    fn resolve(&self) -> Result<Experiment> {
        load_experiment(&self.config, self.seed, self.preset)
    }

    fn prepare_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        Ok(())
    }
}

pub fn cmd_generate(paths: &RunPaths) -> Result<()> {
    let started = Instant::now();
    let exp = paths.resolve()?;
    paths.prepare_out()?;
    let mut rng = seed::stream(exp.seed, "dataset");
    let mut dataset = generate_dataset(
        &exp.spec,
        exp.data_count as usize,
        &mut rng,
        StartStatePolicy::UniformValid,
    )?;
    dataset.seed = Some(exp.seed);
    let path = paths.out.join(DATASET_FILE);
    dataset.save(&path)?;
    let mut manifest = RunManifest::new("generate", &exp);
    manifest.wall_clock_ms = started.elapsed().as_millis() as u64;
    manifest.outcome = Some(Outcome {
        pairs_written: Some(dataset.pairs.len() as u64),
        ..Default::default()
    });
    manifest.save(&paths.out)?;
    println!("generate: {} pairs -> {}", dataset.pairs.len(), path.display());
    Ok(())
}

fn spec_summary(spec: &sgan::domains::GridDomainSpec) -> String {
    format!(
        "{} n={} {} dynamics={} block={} fence_prob={}",
        spec.kind.name(),
        spec.size,
        spec.representation.name(),
        spec.dynamics.label(),
        spec.block_size,
        spec.fence_prob
    )
}

fn load_dataset_for(exp: &Experiment, path: &Path) -> Result<Dataset> {
    let dataset = Dataset::load(path)?;
    if dataset.spec != exp.spec {
        return Err(CliError::usage(format!(
            "dataset {}: built for [{}], config resolves to [{}]",
            path.display(),
            spec_summary(&dataset.spec),
            spec_summary(&exp.spec)
        )));
    }
    Ok(dataset)
}

fn write_training_log(path: &Path, log: &TrainingLog) -> Result<()> {
    let mut text = String::from("iteration\td_loss\tg_loss\twall_ms\tsnapshot_l1\tsnapshot_validity\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for e in &log.entries {
        let (sl1, sval) = match &e.snapshot {
            Some(s) => (format!("{:.6}", s.mean_l1), format!("{:.6}", s.mean_validity)),
            None => (String::new(), String::new()),
        };
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.iteration,
            opt(e.d_loss),
            opt(e.g_loss),
            e.wall_ms,
            sl1,
            sval
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_train(paths: &RunPaths, data: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    let exp = paths.resolve()?;
    paths.prepare_out()?;
    let data_path = data.map(Path::to_path_buf).unwrap_or_else(|| paths.out.join(DATASET_FILE));
    let dataset = load_dataset_for(&exp, &data_path)?;
    let (model, log) = train(exp.learner, &exp.spec, &dataset, &exp.train)?;
    let model_path = paths.out.join(MODEL_FILE);
    model.save(&model_path, &exp.spec)?;
    write_training_log(&paths.out.join(TRAINING_LOG_FILE), &log)?;
    let mut manifest = RunManifest::new("train", &exp);
    manifest.wall_clock_ms = started.elapsed().as_millis() as u64;
    manifest.outcome = Some(Outcome {
        iterations_run: Some(exp.train.iterations),
        noop_disc_steps: Some(log.noop_disc_steps),
        skipped_pairs: Some(log.skipped_pairs_total),
        ..Default::default()
    });
    manifest.save(&paths.out)?;
    println!(
        "train: {} on {} pairs for {} iterations -> {}",
        exp.learner.name(),
        dataset.pairs.len(),
        exp.train.iterations,
        model_path.display()
    );
    Ok(())
}

/// Held-out evaluation states for the random-background kind: fresh fence
/// grids with the agent on [`EVAL_AGENT_POS`], never colliding with a state
/// the training set contains.
fn heldout_states(exp: &Experiment, dataset: &Dataset) -> Result<Vec<GridState>> {
    let seen: HashSet<StateKey> =
        dataset.pairs.iter().map(|p| StateKey::from_slice(&p.xbar)).collect();
    let mut rng = seed::stream(exp.seed, "eval.states");
    let mut states = Vec::with_capacity(exp.eval.heldout_backgrounds);
    let mut picked: HashSet<StateKey> = HashSet::new();
    let mut attempts = 0u64;
    let cap = 10_000 * exp.eval.heldout_backgrounds as u64;
    while states.len() < exp.eval.heldout_backgrounds {
        attempts += 1;
        if attempts > cap {
            return Err(CliError::Other(format!(
                "could not draw {} distinct unseen backgrounds (domain too small?)",
                exp.eval.heldout_backgrounds
            )));
        }
        let fences: Vec<bool> = (0..exp.spec.cells())
            .map(|_| rand::Rng::gen::<f64>(&mut rng) < exp.spec.fence_prob)
            .collect();
        if fences[EVAL_AGENT_POS] {
            continue;
        }
        let state = GridState::with_background(EVAL_AGENT_POS, fences);
        let key = StateKey::from_slice(&sgan::domains::encode(&exp.spec, &state));
        if seen.contains(&key) || !picked.insert(key) {
            continue;
        }
        states.push(state);
    }
    Ok(states)
}

fn write_eval_states(path: &Path, report: &EvalReport) -> Result<()> {
    let mut text = String::from("pos\tbackground\tl1\tvalidity\tvalid_draws\tattempts\n");
    for r in &report.rows {
        text.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}\t{}\n",
            r.pos,
            r.background.as_deref().unwrap_or("-"),
            r.l1,
            r.validity,
            r.valid_draws,
            r.attempts
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_evaluate(paths: &RunPaths, checkpoint: Option<&Path>, data: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    let exp = paths.resolve()?;
    paths.prepare_out()?;
    let model_path =
        checkpoint.map(Path::to_path_buf).unwrap_or_else(|| paths.out.join(MODEL_FILE));
    let (mut model, ck_spec) = TransitionModel::load(&model_path)?;
    if ck_spec != exp.spec {
        return Err(CliError::usage(format!(
            "checkpoint {}: trained for [{}], config resolves to [{}]",
            model_path.display(),
            spec_summary(&ck_spec),
            spec_summary(&exp.spec)
        )));
    }
    let states = if exp.spec.kind == DomainKind::TwoDRandomBackground {
        let data_path =
            data.map(Path::to_path_buf).unwrap_or_else(|| paths.out.join(DATASET_FILE));
        if !data_path.exists() {
            return Err(CliError::usage(format!(
                "random-background evaluation draws held-out backgrounds against the training \
                 set; pass --data (no dataset at {})",
                data_path.display()
            )));
        }
        let dataset = load_dataset_for(&exp, &data_path)?;
        heldout_states(&exp, &dataset)?
    } else {
        enumerate_states(&exp.spec, None)?
    };
    let cfg = EvalConfig {
        n_samples: exp.eval.n_samples,
        max_resample_factor: exp.eval.max_resample_factor,
        deviation: exp.eval.deviation,
    };
    let mut rng = seed::stream(exp.seed, "eval.sampling");
    let report = evaluate_model(&mut model, &exp.spec, &states, &cfg, &mut rng)?;
    let row = MetricsRow {
        domain: exp.spec.kind.name().to_string(),
        representation: exp.spec.representation.name().to_string(),
        size: exp.spec.size,
        dynamics: exp.spec.dynamics.label(),
        learner: model.kind().name().to_string(),
        l1: report.mean_l1,
        validity: report.mean_validity,
        seed: exp.seed,
    };
    write_metrics(&paths.out.join(METRICS_FILE), std::slice::from_ref(&row))?;
    write_eval_states(&paths.out.join(EVAL_STATES_FILE), &report)?;
    let mut manifest = RunManifest::new("evaluate", &exp);
    manifest.wall_clock_ms = started.elapsed().as_millis() as u64;
    manifest.outcome = Some(Outcome {
        states_evaluated: Some(report.rows.len()),
        mean_l1: Some(report.mean_l1),
        mean_validity: Some(report.mean_validity),
        ..Default::default()
    });
    manifest.save(&paths.out)?;
    println!(
        "evaluate: {} states, mean l1 {:.3}, mean validity {:.3}",
        report.rows.len(),
        report.mean_l1,
        report.mean_validity
    );
    Ok(())
}

pub const LEMMA_FILE: &str = "lemma.tsv";
pub const LEMMA_SUMMARY_FILE: &str = "lemma_summary.tsv";
pub const THEOREM_FILE: &str = "theorem.tsv";
pub const THEOREM_SUMMARY_FILE: &str = "theorem_summary.tsv";

#[derive(Debug, Serialize)]
struct TheoryManifest {
    schema: u32,
    command: String,
    code_version: String,
    seed: u64,
    wall_clock_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cells: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    null: Option<bool>,
}

impl TheoryManifest {
    fn save(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Other(format!("manifest serialization: {e}")))?;
        std::fs::write(dir.join(crate::manifest::MANIFEST_FILE), text)?;
        Ok(())
    }
}

pub fn cmd_theory_lemma(out: &Path, seed_value: u64, cells: u64, trials: u64) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out)?;
    let z_values = [1.0, 2.0, 3.0];
    let d_values = [0.2, 0.5, 0.9];
    let mut table = String::from("z\td\tcells\tdraws\tsimulated\tlimit\tabs_err\n");
    for &z in &z_values {
        for &d in &d_values {
            let params = DiscretizationParams::with_cells(d, cells, z);
            let mut rng = seed::stream(seed_value, &format!("theory.lemma.z{z}.d{d}"));
            let simulated = hit_probability_simulate(&params, None, trials, &mut rng)?;
            let limit = hit_probability_limit(z);
            table.push_str(&format!(
                "{z}\t{d}\t{cells}\t{}\t{simulated:.6}\t{limit:.6}\t{:.6}\n",
                params.draws(),
                (simulated - limit).abs()
            ));
        }
    }
    std::fs::write(out.join(LEMMA_FILE), table)?;
    let mut summary = String::from("z\tlimit\tmax_spread_across_d\n");
    for &z in &z_values {
        let mut rng = seed::stream(seed_value, &format!("theory.lemma.constancy.z{z}"));
        let spread = hit_probability_constancy_check(z, &d_values, cells, trials, &mut rng)?;
        summary.push_str(&format!("{z}\t{:.6}\t{spread:.6}\n", hit_probability_limit(z)));
    }
    std::fs::write(out.join(LEMMA_SUMMARY_FILE), summary)?;
    TheoryManifest {
        schema: 1,
        command: "theory lemma".to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: seed_value,
        wall_clock_ms: started.elapsed().as_millis() as u64,
        cells: Some(cells),
        trials: Some(trials),
        z_values: Some(z_values.to_vec()),
        d_values: Some(d_values.to_vec()),
        steps: None,
        bins: None,
        null: None,
    }
    .save(out)?;
    println!("theory lemma: {} -> {}", LEMMA_FILE, out.display());
    Ok(())
}

pub fn cmd_theory_theorem(
    out: &Path,
    seed_value: u64,
    steps: usize,
    bins: usize,
    null: bool,
) -> Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(out)?;
    let bimodal = Density1D::bimodal_spikes(bins)?;
    let uniform = Density1D::uniform(bins);
    // In null mode the critic trains on identical densities; its field is
    // still fitted against the distinct-pair reference so the two scales
    // are comparable numbers.
    let report = if null {
        theorem1_field_check(&bimodal, &bimodal, steps, seed_value)?
    } else {
        theorem1_field_check(&bimodal, &uniform, steps, seed_value)?
    };
    let reference: Vec<f64> = report
        .grid
        .iter()
        .map(|&x| tail_difference_field(&bimodal, &uniform, x))
        .collect();
    let correlation = pearson(&report.trained_field, &reference);
    let scale = fit_scale(&report.trained_field, &reference);
    let mean_abs = report.trained_field.iter().map(|v| v.abs()).sum::<f64>()
        / report.trained_field.len() as f64;
    let mut table = String::from("x\ttrained_field\toracle_field\n");
    for i in 0..report.grid.len() {
        table.push_str(&format!(
            "{:.6}\t{:.6}\t{:.6}\n",
            report.grid[i], report.trained_field[i], report.oracle_field[i]
        ));
    }
    std::fs::write(out.join(THEOREM_FILE), table)?;
    let mut summary =
        String::from("steps\tbins\tseed\tnull\tcorrelation\tscale\tmean_abs_field\n");
    summary.push_str(&format!(
        "{steps}\t{bins}\t{seed_value}\t{null}\t{correlation:.6}\t{scale:.6}\t{mean_abs:.6}\n"
    ));
    std::fs::write(out.join(THEOREM_SUMMARY_FILE), summary)?;
    TheoryManifest {
        schema: 1,
        command: "theory theorem".to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: seed_value,
        wall_clock_ms: started.elapsed().as_millis() as u64,
        cells: None,
        trials: None,
        z_values: None,
        d_values: None,
        steps: Some(steps),
        bins: Some(bins),
        null: Some(null),
    }
    .save(out)?;
    println!(
        "theory theorem: correlation {:.3}, scale {:.3} -> {}",
        correlation,
        scale,
        out.display()
    );
    Ok(())
}

pub fn cmd_report(dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    if dirs.is_empty() {
        return Err(CliError::usage("report needs at least one run directory".to_string()));
    }
    let mut rows = Vec::new();
    for dir in dirs {
        rows.extend(read_metrics(&dir.join(METRICS_FILE))?);
    }
    let text = render_report(&rows);
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, &text)?;
    }
    Ok(())
}
