//! Monte-Carlo check of the interpolation-hit probability: discretize a
//! segment of length d into cells of size ε, draw T = ⌈d/δ⌉ uniform points
//! with δ = z·ε, and ask how often at least one lands in a given cell. As
//! ε → 0 the hit probability approaches 1 − e^{−1/z}, independent of d.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::learners::draw_count;
use rand::Rng;

/// Segment length d, cell size ε, and the ratio z = δ/ε between the
/// interpolation step and the cell.
#[derive(Debug, Clone, Copy)]
pub struct DiscretizationParams {
    pub epsilon: f64,
    pub z: f64,
    pub d: f64,
}

impl DiscretizationParams {
    /// ε = d / cells.
    pub fn with_cells(d: f64, cells: u64, z: f64) -> Self {
        DiscretizationParams { epsilon: d / cells as f64, z, d }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("z", self.z), ("d", self.d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.epsilon > self.d {
            return Err(Error::Config("cell size exceeds segment length".to_string()));
        }
        Ok(())
    }

    /// Number of whole cells along the segment.
    pub fn cells(&self) -> u64 {
        (self.d / self.epsilon).round().max(1.0) as u64
    }

    /// Uniform draws per trial: ⌈d/δ⌉ with δ = z·ε, uncapped.
    pub fn draws(&self) -> usize {
        draw_count(self.d, self.z * self.epsilon, None)
    }
}

/// Limit of the hit probability as ε → 0 at fixed z.
pub fn hit_probability_limit(z: f64) -> f64 {
    1.0 - (-1.0 / z).exp()
}

/// Simulated probability that any of the T uniform draws on [0, d] lands in
/// the target cell [c·ε, (c+1)·ε). `target_cell` defaults to the central
/// cell; a cell beyond the segment end can never be hit, so the estimate is
/// exactly zero there.
pub fn hit_probability_simulate(
    params: &DiscretizationParams,
    target_cell: Option<u64>,
    trials: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".to_string()));
    }
    let cell = target_cell.unwrap_or(params.cells() / 2);
    let lo = cell as f64 * params.epsilon;
    let hi = lo + params.epsilon;
    let t = params.draws();
    let mut hits = 0u64;
    for _ in 0..trials {
        for _ in 0..t {
            let x = rng.gen::<f64>() * params.d;
            if x >= lo && x < hi {
                hits += 1;
                break;
            }
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Runs the simulation at the same z across several segment lengths (each
/// with `cells` cells, so ε scales with d) and returns the largest pairwise
/// difference between the estimates. The limit does not involve d, so this
/// should shrink toward sampling noise.
pub fn hit_probability_constancy_check(
    z: f64,
    d_values: &[f64],
    cells: u64,
    trials: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if d_values.len() < 2 {
        return Err(Error::Config("need at least two segment lengths".to_string()));
    }
    let mut probs = Vec::with_capacity(d_values.len());
    for &d in d_values {
        let params = DiscretizationParams::with_cells(d, cells, z);
        probs.push(hit_probability_simulate(&params, None, trials, rng)?);
    }
    let mut max_dev: f64 = 0.0;
    for i in 0..probs.len() {
        for j in i + 1..probs.len() {
            max_dev = max_dev.max((probs[i] - probs[j]).abs());
        }
    }
    Ok(max_dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn limit_values() {
        assert!((hit_probability_limit(1.0) - 0.6321205588285577).abs() < 1e-15);
        assert!((hit_probability_limit(2.0) - 0.3934693402873666).abs() < 1e-15);
        assert!((hit_probability_limit(3.0) - 0.2834686894262107).abs() < 1e-15);
    }

    #[test]
    fn draws_follow_the_ceiling_rule() {
        let p = DiscretizationParams::with_cells(0.9, 2000, 1.0);
        assert_eq!(p.cells(), 2000);
        assert_eq!(p.draws(), 2000);
        let p = DiscretizationParams::with_cells(0.9, 2000, 3.0);
        // ⌈2000/3⌉
        assert_eq!(p.draws(), 667);
    }

    #[test]
    fn simulated_probability_approaches_the_limit() {
        let mut rng = seed::stream(41, "lemma-test");
        let params = DiscretizationParams::with_cells(0.5, 400, 1.0);
        let p = hit_probability_simulate(&params, None, 4000, &mut rng).unwrap();
        assert!((p - hit_probability_limit(1.0)).abs() < 0.03, "p = {p}");
    }

    #[test]
    fn unreachable_cell_is_never_hit() {
        let mut rng = seed::stream(42, "lemma-test");
        let params = DiscretizationParams::with_cells(0.5, 100, 1.0);
        let p = hit_probability_simulate(&params, Some(100), 500, &mut rng).unwrap();
        assert_eq!(p, 0.0);
        let p = hit_probability_simulate(&params, Some(250), 500, &mut rng).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let bad = DiscretizationParams { epsilon: 0.0, z: 1.0, d: 0.5 };
        assert!(bad.validate().is_err());
        let bad = DiscretizationParams { epsilon: 0.7, z: 1.0, d: 0.5 };
        assert!(bad.validate().is_err());
        let good = DiscretizationParams::with_cells(0.5, 10, 2.0);
        assert!(good.validate().is_ok());
    }

    #[test]
    fn constancy_holds_across_segment_lengths() {
        let mut rng = seed::stream(43, "lemma-test");
        let dev =
            hit_probability_constancy_check(2.0, &[0.2, 0.5, 0.9], 300, 3000, &mut rng).unwrap();
        assert!(dev < 0.04, "max deviation {dev}");
    }
}
