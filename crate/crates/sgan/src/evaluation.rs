//! Model evaluation: compares a learned next-state sampler against the
//! exact successor distribution, state by state.
//!
//! Sampled vectors are snapped to the nearest valid state; draws farther
//! than the validity threshold count as invalid and are resampled, within a
//! budget of `max_resample_factor × n_samples` total attempts per state.
//! Validity is the fraction of all attempted draws that were valid, and the
//! distribution distance is the L1 distance (∈ [0, 2]) between the exact
//! successor distribution and the empirical distribution over snapped
//! draws. A state for which no valid draw ever appears scores the maximum
//! distance of 2.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domains::{
    self, encode, GridDomainSpec, GridState, SparseDistribution, StateKey,
};
use crate::error::Result;

pub const DEFAULT_EVAL_SAMPLES: usize = 10_000;
pub const DEFAULT_RESAMPLE_FACTOR: usize = 10;

/// How far a sampled vector is from a candidate state. Max-abs is the
/// primary metric; Euclidean exists for sensitivity analysis only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationMetric {
    #[default]
    MaxAbs,
    L2,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    /// Valid draws wanted per evaluation state.
    pub n_samples: usize,
    /// Total draw budget per state, as a multiple of `n_samples`.
    pub max_resample_factor: usize,
    pub deviation: DeviationMetric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_samples: DEFAULT_EVAL_SAMPLES,
            max_resample_factor: DEFAULT_RESAMPLE_FACTOR,
            deviation: DeviationMetric::MaxAbs,
        }
    }
}

/// Answer from a model that can be queried exactly instead of sampled.
#[derive(Debug, Clone)]
pub enum ExactOutcome {
    Seen(SparseDistribution),
    /// The model has no information about this state.
    Unseen,
}

/// A learned transition model, seen purely as a sampler of successor
/// vectors (plus an optional exact-query fast path).
pub trait NextStateSampler {
    /// Draw `count` successor vectors for the (encoded) current state.
    fn sample_next(
        &mut self,
        xbar: &[f64],
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>>;

    /// Models backed by a lookup table answer here and skip sampling.
    fn exact(&self, _xbar: &[f64]) -> Option<ExactOutcome> {
        None
    }
}

/// Nearest valid state under the chosen metric if its deviation is strictly
/// below the validity threshold; non-finite vectors snap to nothing.
pub fn snap_with_metric(
    spec: &GridDomainSpec,
    v: &[f64],
    metric: DeviationMetric,
) -> Result<(Option<GridState>, f64)> {
    if v.iter().any(|x| !x.is_finite()) {
        return Ok((None, f64::INFINITY));
    }
    let (state, dev) = match metric {
        DeviationMetric::MaxAbs => encode::nearest_state(spec, v)?,
        DeviationMetric::L2 => encode::nearest_state_l2(spec, v)?,
    };
    Ok(((dev < encode::VALIDITY_THRESHOLD).then_some(state), dev))
}

/// [`snap_with_metric`] under max-abs deviation, dropping the deviation.
pub fn snap(spec: &GridDomainSpec, v: &[f64]) -> Result<Option<GridState>> {
    Ok(snap_with_metric(spec, v, DeviationMetric::MaxAbs)?.0)
}

/// Like [`snap`], also reporting the max-abs deviation from the nearest
/// valid state (infinite for non-finite input).
pub fn snap_with_deviation(spec: &GridDomainSpec, v: &[f64]) -> Result<(Option<GridState>, f64)> {
    snap_with_metric(spec, v, DeviationMetric::MaxAbs)
}

/// L1 distance between distributions over encoded states; ranges over
/// [0, 2] and hits 2 exactly on disjoint supports.
pub fn l1_distance(p: &SparseDistribution, q: &SparseDistribution) -> f64 {
    let mut total = 0.0;
    for (k, pp) in p.iter() {
        total += (pp - q.prob(k)).abs();
    }
    for (k, qq) in q.iter() {
        if p.prob(k) == 0.0 {
            total += qq;
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct EmpiricalDraws {
    /// Distribution over snapped valid draws; `None` if every attempt came
    /// back invalid.
    pub distribution: Option<SparseDistribution>,
    pub valid_draws: u64,
    pub attempts: u64,
}

impl EmpiricalDraws {
    pub fn validity(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.valid_draws as f64 / self.attempts as f64
        }
    }
}

const SAMPLE_CHUNK: usize = 2048;

/// Draw from the model until `n_samples` valid successors are collected or
/// the attempt budget runs out, snapping each draw to its nearest valid
/// state.
pub fn empirical_next_distribution<S: NextStateSampler + ?Sized>(
    model: &mut S,
    spec: &GridDomainSpec,
    xbar: &[f64],
    cfg: &EvalConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EmpiricalDraws> {
    let budget = cfg.n_samples.saturating_mul(cfg.max_resample_factor.max(1));
    let mut counts: std::collections::BTreeMap<StateKey, u64> = std::collections::BTreeMap::new();
    let mut valid: u64 = 0;
    let mut attempts: usize = 0;
    while (valid as usize) < cfg.n_samples && attempts < budget {
        let take = (cfg.n_samples - valid as usize)
            .min(budget - attempts)
            .min(SAMPLE_CHUNK);
        let draws = model.sample_next(xbar, take, rng)?;
        attempts += draws.len();
        for d in &draws {
            if let (Some(state), _) = snap_with_metric(spec, d, cfg.deviation)? {
                let key = StateKey::from_slice(&encode::encode(spec, &state));
                *counts.entry(key).or_insert(0) += 1;
                valid += 1;
            }
        }
    }
    let distribution =
        if valid > 0 { Some(SparseDistribution::from_counts(&counts)?) } else { None };
    Ok(EmpiricalDraws { distribution, valid_draws: valid, attempts: attempts as u64 })
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    /// Agent position of the evaluated state (plus a background digest when
    /// one exists, to tell evaluation states apart).
    pub pos: usize,
    pub background: Option<String>,
    pub l1: f64,
    pub validity: f64,
    pub valid_draws: u64,
    pub attempts: u64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_l1: f64,
    pub mean_validity: f64,
    /// Valid draws that entered empirical distributions, over all states.
    pub samples_used: u64,
    /// Draws discarded as invalid and resampled, over all states.
    pub invalid_resample_count: u64,
}

impl EvalReport {
    fn from_rows(rows: Vec<EvalRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let mean_l1 = rows.iter().map(|r| r.l1).sum::<f64>() / n;
        let mean_validity = rows.iter().map(|r| r.validity).sum::<f64>() / n;
        let samples_used = rows.iter().map(|r| r.valid_draws).sum();
        let invalid_resample_count = rows.iter().map(|r| r.attempts - r.valid_draws).sum();
        EvalReport { rows, mean_l1, mean_validity, samples_used, invalid_resample_count }
    }
}

fn background_digest(s: &GridState) -> Option<String> {
    s.fences.as_ref().map(|f| {
        f.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>()
    })
}

/// Evaluate a model on each given state against the exact successor
/// distribution. Means are unweighted over states.
pub fn evaluate_model<S: NextStateSampler + ?Sized>(
    model: &mut S,
    spec: &GridDomainSpec,
    states: &[GridState],
    cfg: &EvalConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(states.len());
    for s in states {
        let truth = domains::true_next_distribution(spec, s)?;
        let xbar = encode::encode(spec, s);
        let row = match model.exact(&xbar) {
            Some(ExactOutcome::Seen(dist)) => EvalRow {
                pos: s.pos,
                background: background_digest(s),
                l1: l1_distance(&truth, &dist),
                validity: 1.0,
                valid_draws: 0,
                attempts: 0,
            },
            Some(ExactOutcome::Unseen) => EvalRow {
                pos: s.pos,
                background: background_digest(s),
                l1: 2.0,
                validity: 1.0,
                valid_draws: 0,
                attempts: 0,
            },
            None => {
                let draws = empirical_next_distribution(model, spec, &xbar, cfg, rng)?;
                let l1 = match &draws.distribution {
                    Some(d) => l1_distance(&truth, d),
                    None => 2.0,
                };
                EvalRow {
                    pos: s.pos,
                    background: background_digest(s),
                    l1,
                    validity: draws.validity(),
                    valid_draws: draws.valid_draws,
                    attempts: draws.attempts,
                }
            }
        };
        rows.push(row);
    }
    Ok(EvalReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::Representation;
    use crate::seed;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn spec_1d() -> GridDomainSpec {
        GridDomainSpec::one_d(5, Representation::VectorBits)
    }

    fn dist(entries: &[(&[f64], f64)]) -> SparseDistribution {
        let map: BTreeMap<StateKey, f64> =
            entries.iter().map(|(v, p)| (StateKey::from_slice(v), *p)).collect();
        SparseDistribution::from_entries(map).unwrap()
    }

    #[test]
    fn l1_identical_zero_disjoint_two() {
        let a = dist(&[(&[1.0, 0.0], 0.5), (&[0.0, 1.0], 0.5)]);
        let b = dist(&[(&[1.0, 0.0], 0.5), (&[0.0, 1.0], 0.5)]);
        assert_eq!(l1_distance(&a, &b), 0.0);
        let c = dist(&[(&[0.5, 0.5], 1.0)]);
        assert_eq!(l1_distance(&a, &c), 2.0);
        let d = dist(&[(&[1.0, 0.0], 1.0)]);
        assert!((l1_distance(&a, &d) - 1.0).abs() < 1e-15);
    }

    /// Samples the true dynamics but ruins a fixed fraction of draws.
    struct NoisyTruth {
        spec: GridDomainSpec,
        invalid_rate: f64,
    }

    impl NextStateSampler for NoisyTruth {
        fn sample_next(
            &mut self,
            xbar: &[f64],
            count: usize,
            rng: &mut ChaCha8Rng,
        ) -> Result<Vec<Vec<f64>>> {
            let s = encode::decode_exact(&self.spec, xbar)?;
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                if rng.gen::<f64>() < self.invalid_rate {
                    out.push(vec![0.4; xbar.len()]);
                } else {
                    let succ = domains::sample_successor(&self.spec, &s, rng)?;
                    out.push(encode::encode(&self.spec, &succ));
                }
            }
            Ok(out)
        }
    }

    #[test]
    fn perfect_sampler_scores_near_zero() {
        let spec = spec_1d();
        let mut model = NoisyTruth { spec: spec.clone(), invalid_rate: 0.0 };
        let states = domains::enumerate_states(&spec, None).unwrap();
        let cfg = EvalConfig { n_samples: 20_000, max_resample_factor: 10, ..Default::default() };
        let mut rng = seed::stream(5, "evaluation");
        let report = evaluate_model(&mut model, &spec, &states, &cfg, &mut rng).unwrap();
        assert_eq!(report.rows.len(), 5);
        assert!(report.mean_l1 < 0.02, "mean l1 {}", report.mean_l1);
        assert_eq!(report.mean_validity, 1.0);
    }

    #[test]
    fn resampling_fills_quota_and_reports_validity() {
        let spec = spec_1d();
        let mut model = NoisyTruth { spec: spec.clone(), invalid_rate: 0.5 };
        let cfg = EvalConfig { n_samples: 4000, max_resample_factor: 10, ..Default::default() };
        let mut rng = seed::stream(6, "evaluation");
        let xbar = encode::encode(&spec, &GridState::at(2));
        let draws = empirical_next_distribution(&mut model, &spec, &xbar, &cfg, &mut rng).unwrap();
        assert_eq!(draws.valid_draws, 4000);
        assert!(draws.attempts > 4000);
        assert!((draws.validity() - 0.5).abs() < 0.05, "validity {}", draws.validity());
    }

    #[test]
    fn never_valid_sampler_hits_budget_and_max_distance() {
        let spec = spec_1d();
        let mut model = NoisyTruth { spec: spec.clone(), invalid_rate: 1.0 };
        let cfg = EvalConfig { n_samples: 100, max_resample_factor: 10, ..Default::default() };
        let mut rng = seed::stream(7, "evaluation");
        let report =
            evaluate_model(&mut model, &spec, &[GridState::at(1)], &cfg, &mut rng).unwrap();
        assert_eq!(report.rows[0].attempts, 1000);
        assert_eq!(report.rows[0].valid_draws, 0);
        assert_eq!(report.rows[0].validity, 0.0);
        assert_eq!(report.rows[0].l1, 2.0);
    }

    /// Exact-query model used by the lookup-table learner.
    struct FixedExact {
        table: BTreeMap<StateKey, SparseDistribution>,
    }

    impl NextStateSampler for FixedExact {
        fn sample_next(
            &mut self,
            _xbar: &[f64],
            _count: usize,
            _rng: &mut ChaCha8Rng,
        ) -> Result<Vec<Vec<f64>>> {
            panic!("exact models are never sampled");
        }

        fn exact(&self, xbar: &[f64]) -> Option<ExactOutcome> {
            Some(match self.table.get(&StateKey::from_slice(xbar)) {
                Some(d) => ExactOutcome::Seen(d.clone()),
                None => ExactOutcome::Unseen,
            })
        }
    }

    #[test]
    fn exact_models_skip_sampling_and_unseen_scores_two() {
        let spec = spec_1d();
        let s = GridState::at(2);
        let xbar = StateKey::from_slice(&encode::encode(&spec, &s));
        let truth = domains::true_next_distribution(&spec, &s).unwrap();
        let mut table = BTreeMap::new();
        table.insert(xbar, truth);
        let mut model = FixedExact { table };
        let cfg = EvalConfig { n_samples: 10, max_resample_factor: 10, ..Default::default() };
        let mut rng = seed::stream(8, "evaluation");
        let report = evaluate_model(
            &mut model,
            &spec,
            &[GridState::at(2), GridState::at(0)],
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.rows[0].l1, 0.0);
        assert_eq!(report.rows[0].validity, 1.0);
        assert_eq!(report.rows[1].l1, 2.0);
        assert_eq!(report.rows[1].validity, 1.0);
        assert_eq!(report.mean_l1, 1.0);
    }

    #[test]
    fn l2_metric_is_stricter_on_spread_out_error() {
        let spec = spec_1d();
        // 0.06 per coordinate: max-abs 0.06 (valid), Euclidean 0.12 (not).
        let v = vec![0.06, 0.06, 1.0, 0.06, 0.06];
        let (s, dev) = snap_with_metric(&spec, &v, DeviationMetric::MaxAbs).unwrap();
        assert_eq!(s, Some(GridState::at(2)));
        assert!((dev - 0.06).abs() < 1e-15);
        let (s, dev) = snap_with_metric(&spec, &v, DeviationMetric::L2).unwrap();
        assert_eq!(s, None);
        assert!((dev - 0.12).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_strict() {
        let spec = spec_1d();
        let mut v = encode::encode(&spec, &GridState::at(1));
        v[3] = encode::VALIDITY_THRESHOLD;
        assert_eq!(snap(&spec, &v).unwrap(), None);
        v[3] = encode::VALIDITY_THRESHOLD - 1e-12;
        assert_eq!(snap(&spec, &v).unwrap(), Some(GridState::at(1)));
    }

    #[test]
    fn snap_handles_non_finite_as_invalid() {
        let spec = spec_1d();
        assert_eq!(snap(&spec, &[f64::NAN, 0.0, 0.0, 0.0, 0.0]).unwrap(), None);
        let (s, dev) = snap_with_deviation(&spec, &[f64::INFINITY, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s, None);
        assert!(dev.is_infinite());
    }
}
