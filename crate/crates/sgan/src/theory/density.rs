//! Piecewise-constant densities on [0,1] with exact tail integrals, the
//! tail-difference direction field, and exact earth-mover distance.

use rand::Rng;

use crate::error::{Error, Result};

/// A probability density on [0,1], constant on `bins.len()` equal bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Density1D {
    bins: Vec<f64>,
}

impl Density1D {
    /// Bin densities (not masses); must be nonnegative and integrate to 1.
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::contract("density needs at least one bin".to_string()));
        }
        if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::contract("bin densities must be finite and nonnegative".to_string()));
        }
        let d = Density1D { bins };
        let integral = d.integral();
        if (integral - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("density integrates to {integral}, not 1")));
        }
        Ok(d)
    }

    /// Normalizes arbitrary nonnegative weights into a density.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::contract("weights must be finite and nonnegative".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::contract("weights must have positive total".to_string()));
        }
        let n = weights.len() as f64;
        Density1D::new(weights.iter().map(|w| w / total * n).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Density1D { bins: vec![1.0; n.max(1)] }
    }

    /// Two rectangles of mass 1/2 and width 0.05, centered at 0.25 and
    /// 0.75. `n` must make the rectangle edges land on bin boundaries
    /// (any multiple of 40).
    pub fn bimodal_spikes(n: usize) -> Result<Self> {
        if n == 0 || n % 40 != 0 {
            return Err(Error::contract(
                "spike edges need bins aligned to multiples of 1/40".to_string(),
            ));
        }
        let mut weights = vec![0.0; n];
        // [0.225, 0.275) and [0.725, 0.775) in exact bin indices.
        for (lo, hi) in [(9 * n / 40, 11 * n / 40), (29 * n / 40, 31 * n / 40)] {
            for slot in &mut weights[lo..hi] {
                *slot = 1.0;
            }
        }
        Density1D::from_weights(&weights)
    }

    /// All mass in the single bin containing `x`.
    pub fn point_mass(n: usize, x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::contract("point mass must lie in [0,1]".to_string()));
        }
        let n = n.max(1);
        let mut weights = vec![0.0; n];
        let i = ((x * n as f64) as usize).min(n - 1);
        weights[i] = 1.0;
        Density1D::from_weights(&weights)
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn width(&self) -> f64 {
        1.0 / self.bins.len() as f64
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn integral(&self) -> f64 {
        // One multiplication after the sum keeps e.g. uniform(n) exactly 1.
        self.bins.iter().sum::<f64>() * self.width()
    }

    pub fn density_at(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let i = ((x * self.bins.len() as f64) as usize).min(self.bins.len() - 1);
        self.bins[i]
    }

    /// ∫_x^1 of the density, exact for the piecewise-constant form.
    pub fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.integral();
        }
        if x >= 1.0 {
            return 0.0;
        }
        let n = self.bins.len();
        let w = self.width();
        let j = ((x * n as f64) as usize).min(n - 1);
        let partial = ((j + 1) as f64 * w - x) * self.bins[j];
        partial + self.bins[j + 1..].iter().sum::<f64>() * w
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.integral() - self.tail(x)
    }

    /// Inverse-CDF draw, uniform within the selected bin.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        let w = self.width();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &dens) in self.bins.iter().enumerate() {
            let mass = dens * w;
            if mass > 0.0 {
                if u < acc + mass {
                    return (i as f64 + (u - acc) / mass) * w;
                }
                last_positive = i;
                acc += mass;
            }
        }
        // Rounding pushed u past the accumulated total: right edge of the
        // last occupied bin.
        (last_positive as f64 + 1.0) * w
    }
}

/// The direction field the trained critic's input gradient should be
/// proportional to: ∫_x^1 p_r − ∫_x^1 p_g. Vanishes identically when the
/// densities coincide and always vanishes at x = 1.
pub fn tail_difference_field(pr: &Density1D, pg: &Density1D, x: f64) -> f64 {
    pr.tail(x) - pg.tail(x)
}

/// Antiderivative of the field on a grid: the critic the objective drives
/// toward, up to an additive constant (anchored to 0 at `grid[0]`). The
/// field is piecewise linear, so the trapezoid rule is exact when the grid
/// contains every bin edge.
pub fn optimal_discriminator_values(pr: &Density1D, pg: &Density1D, grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut prev_x = match grid.first() {
        Some(&x) => x,
        None => return out,
    };
    let mut prev_f = tail_difference_field(pr, pg, prev_x);
    out.push(0.0);
    for &x in &grid[1..] {
        let f = tail_difference_field(pr, pg, x);
        acc += (x - prev_x) * (prev_f + f) / 2.0;
        out.push(acc);
        prev_x = x;
        prev_f = f;
    }
    out
}

/// ∫ |segment| for a linear segment running from d0 to d1 over unit length.
fn seg_abs_integral(d0: f64, d1: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        (d0.abs() + d1.abs()) / 2.0
    } else {
        let t = d0 / (d0 - d1);
        (d0.abs() * t + d1.abs() * (1.0 - t)) / 2.0
    }
}

/// Exact 1D earth-mover distance: ∫₀¹ |F_r − F_g|. The CDF difference is
/// piecewise linear, so each bin contributes a closed-form area (split at
/// the sign crossing when there is one).
pub fn emd_1d(pr: &Density1D, pg: &Density1D) -> Result<f64> {
    if pr.len() != pg.len() {
        return Err(Error::contract("earth-mover distance needs a common bin grid".to_string()));
    }
    let w = pr.width();
    let mut fr = 0.0;
    let mut fg = 0.0;
    let mut total = 0.0;
    for i in 0..pr.len() {
        let fr1 = fr + pr.bins[i] * w;
        let fg1 = fg + pg.bins[i] * w;
        total += w * seg_abs_integral(fr - fg, fr1 - fg1);
        fr = fr1;
        fg = fg1;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn constructors_enforce_unit_integral() {
        assert!(Density1D::new(vec![1.0, 1.0]).is_ok());
        assert!(Density1D::new(vec![1.0, 0.5]).is_err());
        assert!(Density1D::new(vec![-1.0, 3.0]).is_err());
        let d = Density1D::from_weights(&[1.0, 3.0]).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-15);
        assert_eq!(d.bins(), &[0.5, 1.5]);
    }

    #[test]
    fn uniform_tail_is_one_minus_x() {
        let d = Density1D::uniform(100);
        for x in [0.0, 0.13, 0.25, 0.5, 0.99, 1.0] {
            assert!((d.tail(x) - (1.0 - x)).abs() < 1e-12, "tail({x})");
            assert!((d.cdf(x) - x).abs() < 1e-12, "cdf({x})");
        }
        assert_eq!(d.tail(1.0), 0.0);
        assert_eq!(d.tail(-0.5), 1.0);
        assert_eq!(d.tail(1.5), 0.0);
    }

    #[test]
    fn bimodal_spikes_have_expected_masses() {
        let d = Density1D::bimodal_spikes(200).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        // Mass 1/2 below the midpoint, all of it inside [0.225, 0.275].
        assert!((d.cdf(0.5) - 0.5).abs() < 1e-12);
        assert!((d.cdf(0.275) - 0.5).abs() < 1e-12);
        assert!(d.cdf(0.225).abs() < 1e-12);
        assert_eq!(d.density_at(0.5), 0.0);
        assert!((d.density_at(0.25) - 10.0).abs() < 1e-12);
        assert!(Density1D::bimodal_spikes(50).is_err(), "edges must align");
    }

    #[test]
    fn sampling_matches_bin_masses() {
        let d = Density1D::from_weights(&[1.0, 0.0, 3.0, 0.0]).unwrap();
        let mut rng = seed::stream(5, "density-test");
        let n = 40_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let x = d.sample(&mut rng);
            assert!((0.0..=1.0).contains(&x));
            counts[((x * 4.0) as usize).min(3)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert_eq!(counts[3], 0);
        // 3σ for p = 0.25: 3·√(p(1−p)/n) ≈ 0.0065.
        let p0 = counts[0] as f64 / n as f64;
        assert!((p0 - 0.25).abs() < 0.0065, "p0 = {p0}");
    }

    #[test]
    fn field_vanishes_at_one_and_for_equal_densities() {
        let u = Density1D::uniform(200);
        let b = Density1D::bimodal_spikes(200).unwrap();
        assert_eq!(tail_difference_field(&b, &u, 1.0), 0.0);
        for x in [0.0, 0.3, 0.77] {
            assert_eq!(tail_difference_field(&u, &u, x), 0.0);
        }
        // Real mass to the right of generated mass ⇒ field ≥ 0, strictly
        // positive between the masses.
        let pr = Density1D::point_mass(100, 0.75).unwrap();
        let pg = Density1D::point_mass(100, 0.25).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!(tail_difference_field(&pr, &pg, x) >= -1e-15);
        }
        assert!(tail_difference_field(&pr, &pg, 0.5) > 0.9);
    }

    #[test]
    fn optimal_discriminator_slopes_up_toward_real_mass() {
        let pr = Density1D::point_mass(100, 0.75).unwrap();
        let pg = Density1D::point_mass(100, 0.25).unwrap();
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let d = optimal_discriminator_values(&pr, &pg, &grid);
        assert_eq!(d[0], 0.0);
        assert!(d.windows(2).all(|w| w[1] >= w[0] - 1e-15), "nondecreasing");
        assert!(d[100] > 0.4, "net rise {}", d[100]);
    }

    #[test]
    fn emd_of_point_masses_is_their_distance() {
        // A "point mass" occupies one bin, so the exact distance is between
        // bin centers; it equals |a − b| itself up to one bin width.
        let n = 200usize;
        let center = |x: f64| (((x * n as f64) as usize).min(n - 1) as f64 + 0.5) / n as f64;
        for (a, b) in [(0.25, 0.75), (0.1, 0.9), (0.5, 0.5), (0.0, 1.0)] {
            let pa = Density1D::point_mass(n, a).unwrap();
            let pb = Density1D::point_mass(n, b).unwrap();
            let d = emd_1d(&pa, &pb).unwrap();
            assert!((d - (center(b) - center(a)).abs()).abs() < 1e-9, "emd({a},{b}) = {d}");
            assert!((d - (b - a).abs()).abs() < 1.0 / n as f64 + 1e-9, "emd({a},{b}) = {d}");
            let r = emd_1d(&pb, &pa).unwrap();
            assert_eq!(d, r, "symmetry");
        }
    }

    #[test]
    fn emd_identity_and_uniform_oracle() {
        let u = Density1D::uniform(400);
        assert_eq!(emd_1d(&u, &u).unwrap(), 0.0);
        // Uniform vs a narrow central mass: ∫|x − step(x−1/2)| = 1/4, up to
        // the width of the discretized point.
        let p = Density1D::point_mass(400, 0.5).unwrap();
        let d = emd_1d(&u, &p).unwrap();
        assert!((d - 0.25).abs() < 1e-3, "emd = {d}");
        assert!(emd_1d(&u, &Density1D::uniform(100)).is_err(), "grid mismatch");
    }

    #[test]
    fn emd_equals_integral_of_absolute_field() {
        // The field is F_g − F_r, so ∫|field| must reproduce the distance.
        let pr = Density1D::bimodal_spikes(200).unwrap();
        let pg = Density1D::uniform(200);
        let emd = emd_1d(&pr, &pg).unwrap();
        let n = 200_000;
        let quad: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                tail_difference_field(&pr, &pg, x).abs() / n as f64
            })
            .sum();
        assert!((emd - quad).abs() < 1e-4, "emd {emd} vs quadrature {quad}");
    }
}
