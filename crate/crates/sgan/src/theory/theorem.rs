//! Trains a small scalar critic with the segment-regression objective on
//! samples from two densities and compares its input-gradient field against
//! the tail-difference field the theory predicts (up to a positive scale).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor};
use crate::error::Result;
use crate::learners::MIN_PAIR_DISTANCE;
use crate::nn::{Linear, Mlp};
use crate::seed;

use super::density::{tail_difference_field, Density1D};

/// Evaluation grid: evenly spaced over [0, 1], endpoints included.
pub const THEOREM_GRID_POINTS: usize = 201;
const BATCH_PAIRS: usize = 32;
const DELTA: f64 = 0.1;
const HIDDEN: usize = 64;

#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub grid: Vec<f64>,
    /// d/dx of the trained critic at each grid point.
    pub trained_field: Vec<f64>,
    /// Tail-difference field at the same points.
    pub oracle_field: Vec<f64>,
    pub correlation: f64,
    /// Least-squares coefficient of trained against oracle.
    pub scale: f64,
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "series must have equal length");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va < 1e-30 || vb < 1e-30 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// c minimizing ‖f − c·g‖²; zero when g is (numerically) the zero vector.
pub fn fit_scale(f: &[f64], g: &[f64]) -> f64 {
    assert_eq!(f.len(), g.len(), "series must have equal length");
    let dot: f64 = f.iter().zip(g).map(|(x, y)| x * y).sum();
    let gg: f64 = g.iter().map(|y| y * y).sum();
    if gg < 1e-30 {
        return 0.0;
    }
    dot / gg
}

/// One critic step: draw pairs (x_r, x_g), regress d/dx onto sign(x_r−x_g)
/// at T uniform interpolation points per pair, T ∝ |x_r−x_g| exactly in
/// expectation (floor plus a Bernoulli on the fraction), every point
/// weighted equally. Both choices matter: together they give each covering
/// pair the same expected mass at any crossed point, which is exactly what
/// makes the expected update field the tail difference. The batched
/// learner differs on both counts for good reasons of its own — ⌈T⌉
/// guarantees short pairs are not dropped, and dividing by T_b bounds any
/// one pair's influence — but ⌈T⌉ overweights pairs shorter than δ (which
/// cluster next to density spikes) and 1/T_b reweights mass by 1/distance;
/// either way the expected field would be a different object.
fn field_step(
    mlp: &mut Mlp,
    lr: f64,
    pr: &Density1D,
    pg: &Density1D,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let pairs: Vec<(f64, f64)> =
        (0..BATCH_PAIRS).map(|_| (pr.sample(rng), pg.sample(rng))).collect();
    let mut xt_rows = Vec::new();
    let mut targets = Vec::new();
    for &(xr, xg) in &pairs {
        let dist = (xr - xg).abs();
        if dist < MIN_PAIR_DISTANCE {
            continue;
        }
        let ratio = dist / DELTA;
        let t_count = ratio.floor() as usize + usize::from(rng.gen::<f64>() < ratio.fract());
        let unit = (xr - xg).signum();
        for _ in 0..t_count {
            let tau: f64 = rng.gen();
            xt_rows.push(vec![tau * xr + (1.0 - tau) * xg]);
            targets.push(vec![unit]);
        }
    }
    if xt_rows.is_empty() {
        return Ok(0.0);
    }
    let weights = vec![1.0 / xt_rows.len() as f64; xt_rows.len()];
    let mut g = Graph::new();
    let h = mlp.insert_params(&mut g);
    let xt = g.leaf(Tensor::from_rows(&xt_rows)?);
    let tgt = g.leaf(Tensor::from_rows(&targets)?);
    let wcol = g.leaf(Tensor::matrix(weights.len(), 1, weights)?);
    let d = mlp.forward_with(&mut g, &h, xt)?;
    let s = g.sum(d)?;
    let gt = g.backward(s, &[xt], true)?.node(xt).expect("higher-order backward records nodes");
    let resid = g.sub(gt, tgt)?;
    let sq = g.mul(resid, resid)?;
    let weighted = g.mul(sq, wcol)?;
    let loss = g.sum(weighted)?;
    let value = g.value(loss).item()?;
    // Plain gradient descent on the output coefficients over the frozen
    // local basis — the implementable form of the per-point update picture
    // the prediction reasons with: each knot window accumulates its own
    // expected update. Updating the basis layers too would couple windows
    // again (their tangent features are steps, active for every x above a
    // knot), and an adaptive per-coordinate method would race to the
    // sampled regression's minimizer instead of accumulating the expected
    // update.
    let handles = h.all();
    let trainable = &handles[handles.len() - 2..];
    let grads = g.backward(loss, trainable, false)?;
    let n_params = mlp.params().len();
    for (param, &id) in
        mlp.params_mut().iter_mut().skip(n_params - 2).zip(trainable)
    {
        let gt = grads.tensor(id);
        if !gt.all_finite() {
            return Err(crate::error::Error::NonFinite {
                op: "field_step",
                detail: "gradient contains NaN or Inf".to_string(),
            });
        }
        let pd = param.data_mut();
        for (p, gv) in pd.iter_mut().zip(gt.data()) {
            *p -= lr * gv;
        }
    }
    Ok(value)
}

/// d/dx of the critic at each of `xs`.
fn input_gradient(mlp: &Mlp, xs: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let h = mlp.insert_params(&mut g);
    let x = g.leaf(Tensor::matrix(xs.len(), 1, xs.to_vec())?);
    let d = mlp.forward_with(&mut g, &h, x)?;
    let s = g.sum(d)?;
    let grads = g.backward(s, &[x], false)?;
    Ok(grads.tensor(x).data().to_vec())
}

/// Trains a fresh local-basis critic (see [`tent_basis_critic`]) for
/// `steps` steps on the two densities and reports the trained field, the
/// predicted field, their Pearson correlation, and the least-squares
/// proportionality constant.
pub fn theorem1_field_check(
    pr: &Density1D,
    pg: &Density1D,
    steps: usize,
    seed_value: u64,
) -> Result<Theorem1Report> {
    field_check_with_lr(pr, pg, steps, seed_value, FIELD_CHECK_LR)
}

/// The prediction under test is about the expected update direction, so the
/// step size must hold the given budget in the regime that direction
/// dominates: the exact minimizer of the sampled regression is the tail
/// difference divided by the segment-coverage probability, a different
/// (though positively correlated) field that the critic drifts toward if
/// trained far past the budget.
const FIELD_CHECK_LR: f64 = 3e-4;

/// A [1, w+1, w, 1] critic whose input-gradient tangent basis is local.
///
/// Layer 1 puts one LeakyReLU breakpoint at each of w+1 uniform knots over
/// [0, 1]; layer 2 takes adjacent differences, turning each unit into a
/// tent function whose derivative is a bump supported on one knot window;
/// the output layer starts at zero, so the initial field is exactly zero
/// and everything the field shows afterwards is accumulated update.
///
/// Two properties make this the right probe for the claim. First, under a
/// loss that only sees d/dx, biases receive exactly zero gradient (the
/// activation masks are constants to the second backward pass), so
/// breakpoints must be placed at init — a conventional zero-bias init pins
/// them all at x = 0 and collapses d/dx to a constant over (0, 1] forever.
/// Second, with a local basis each knot window accumulates its own
/// expected update independently; a net with step-shaped tangent features
/// (any plain [1, h, 1] LeakyReLU layer) smears the update field across
/// the whole interval and buries the shape under test.
fn tent_basis_critic(windows: usize) -> Mlp {
    let knots = windows + 1;
    let l1 = Linear {
        w: Tensor::matrix(1, knots, vec![1.0; knots]).expect("init shape"),
        b: Tensor::vector((0..knots).map(|k| -(k as f64) / windows as f64).collect()),
    };
    let mut w2 = vec![0.0; knots * windows];
    for j in 0..windows {
        w2[j * windows + j] = 1.0;
        w2[(j + 1) * windows + j] = -1.0;
    }
    let l2 = Linear {
        w: Tensor::matrix(knots, windows, w2).expect("init shape"),
        b: Tensor::zeros(vec![windows]),
    };
    let l3 = Linear {
        w: Tensor::zeros(vec![windows, 1]),
        b: Tensor::zeros(vec![1]),
    };
    Mlp { layers: vec![l1, l2, l3], linear_output: true }
}

fn field_check_with_lr(
    pr: &Density1D,
    pg: &Density1D,
    steps: usize,
    seed_value: u64,
    lr: f64,
) -> Result<Theorem1Report> {
    let mut mlp = tent_basis_critic(HIDDEN);
    let mut rng = seed::stream(seed_value, "training");
    for _ in 0..steps {
        field_step(&mut mlp, lr, pr, pg, &mut rng)?;
    }
    let grid: Vec<f64> = (0..THEOREM_GRID_POINTS)
        .map(|i| i as f64 / (THEOREM_GRID_POINTS - 1) as f64)
        .collect();
    let trained_field = input_gradient(&mlp, &grid)?;
    let oracle_field: Vec<f64> = grid.iter().map(|&x| tail_difference_field(pr, pg, x)).collect();
    let correlation = pearson(&trained_field, &oracle_field);
    let scale = fit_scale(&trained_field, &oracle_field);
    Ok(Theorem1Report { grid, trained_field, oracle_field, correlation, scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((pearson(&a, &b) - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &c) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&a, &[5.0; 4]), 0.0);
    }

    #[test]
    fn fit_scale_recovers_proportionality() {
        let g = vec![0.5, -1.0, 2.0];
        let f: Vec<f64> = g.iter().map(|x| 2.5 * x).collect();
        assert!((fit_scale(&f, &g) - 2.5).abs() < 1e-12);
        assert_eq!(fit_scale(&f, &[0.0; 3]), 0.0);
    }

    #[test]
    fn input_gradient_of_a_linear_critic_is_its_weight() {
        let mlp = Mlp {
            layers: vec![Linear {
                w: Tensor::matrix(1, 1, vec![0.37]).unwrap(),
                b: Tensor::vector(vec![0.0]),
            }],
            linear_output: true,
        };
        let field = input_gradient(&mlp, &[0.0, 0.4, 1.0]).unwrap();
        for v in field {
            assert!((v - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn report_has_consistent_shapes_and_exact_oracle_endpoint() {
        let pr = Density1D::bimodal_spikes(200).unwrap();
        let pg = Density1D::uniform(200);
        let report = theorem1_field_check(&pr, &pg, 0, 9).unwrap();
        assert_eq!(report.grid.len(), THEOREM_GRID_POINTS);
        assert_eq!(report.trained_field.len(), THEOREM_GRID_POINTS);
        assert_eq!(report.oracle_field.len(), THEOREM_GRID_POINTS);
        assert_eq!(*report.oracle_field.last().unwrap(), 0.0);
        assert!(report.correlation.is_finite());
    }

    #[test]
    #[ignore = "convergence probe; run by hand"]
    fn probe_field_convergence() {
        let bi = Density1D::bimodal_spikes(200).unwrap();
        let u = Density1D::uniform(200);
        for &lr in &[3e-4, 1e-3, 3e-3] {
            for &steps in &[5000usize, 20000] {
                for seed_value in [1u64, 2, 3] {
                    let r = field_check_with_lr(&bi, &u, steps, seed_value, lr).unwrap();
                    let mean_abs = r.trained_field.iter().map(|v| v.abs()).sum::<f64>()
                        / r.trained_field.len() as f64;
                    println!(
                        "lr={lr:.0e} steps={steps} seed={seed_value} correlation={:.4} scale={:.4} mean|field|={:.4}",
                        r.correlation, r.scale, mean_abs
                    );
                }
            }
        }
    }

    #[test]
    #[ignore = "convergence probe; run by hand"]
    fn probe_null_field() {
        let bi = Density1D::bimodal_spikes(200).unwrap();
        let u = Density1D::uniform(200);
        for seed_value in [1u64, 2, 3] {
            let null = theorem1_field_check(&bi, &bi, 20000, seed_value).unwrap();
            let distinct_oracle: Vec<f64> =
                null.grid.iter().map(|&x| tail_difference_field(&bi, &u, x)).collect();
            let corr = pearson(&null.trained_field, &distinct_oracle);
            let scale = fit_scale(&null.trained_field, &distinct_oracle);
            let mean_abs = null.trained_field.iter().map(|v| v.abs()).sum::<f64>()
                / null.trained_field.len() as f64;
            println!(
                "null seed={seed_value} corr_vs_distinct={corr:.4} scale_vs_distinct={scale:.4} mean|field|={mean_abs:.4}",
            );
        }
    }

    #[test]
    fn short_training_aligns_the_field_with_a_sawtooth_oracle() {
        // Real mass concentrated at 0.75 against uniform generated mass:
        // interpolation points cover all of [0, 1] (unlike two point masses,
        // where the grid edges never receive training signal), and the
        // predicted field is the ramp x on [0, 0.75), then x − 1.
        let pr = Density1D::point_mass(200, 0.75).unwrap();
        let pg = Density1D::uniform(200);
        let report = theorem1_field_check(&pr, &pg, 2000, 3).unwrap();
        assert!(
            report.correlation > 0.5,
            "correlation {} scale {}",
            report.correlation,
            report.scale
        );
        assert!(report.scale > 0.0, "field must point toward the real mass");
    }
}
