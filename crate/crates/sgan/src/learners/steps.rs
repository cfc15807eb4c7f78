//! Single training steps for the three network learners. Each step builds
//! a fresh graph, computes its loss, backpropagates into the updated
//! network only, and applies one Adam update. The counterpart network is
//! borrowed immutably, so step isolation holds by construction.

use rand::Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::domains::TransitionPair;
use crate::error::{Error, Result};
use crate::nn::{AdamState, DiscriminatorNet, GeneratorNet, NetHandles};

use super::{draw_count, MIN_PAIR_DISTANCE};

/// Result of one discriminator step; a step with every pair skipped applies
/// no update.
#[derive(Debug, Clone, Copy)]
pub struct DiscStepOutcome {
    pub loss: f64,
    pub skipped_pairs: usize,
    pub applied: bool,
}

pub(crate) fn batch_matrices(batch: &[&TransitionPair]) -> Result<(Tensor, Tensor)> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch".to_string()));
    }
    let xbar: Vec<Vec<f64>> = batch.iter().map(|p| p.xbar.clone()).collect();
    let xr: Vec<Vec<f64>> = batch.iter().map(|p| p.xr.clone()).collect();
    Ok((Tensor::from_rows(&xbar)?, Tensor::from_rows(&xr)?))
}

pub(crate) fn uniform_noise(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen::<f64>()).collect();
    Tensor::matrix(rows, cols, data).expect("shape matches data")
}

/// One Adam update from a finished backward pass, reading gradients in
/// handle order (which matches `params_mut` order).
fn apply_update(
    adam: &mut AdamState,
    params: &mut [&mut Tensor],
    handles: &NetHandles,
    grads: &crate::autodiff::GradientMap,
) -> Result<()> {
    let gs: Vec<&Tensor> = handles.all().iter().map(|&id| grads.tensor(id)).collect();
    adam.step(params, &gs)
}

/// Mean squared error of the zero-noise generator against observed
/// successors; one Adam step on it.
pub fn det_train_step(
    net: &mut GeneratorNet,
    adam: &mut AdamState,
    batch: &[&TransitionPair],
) -> Result<f64> {
    let (xbar_t, xr_t) = batch_matrices(batch)?;
    let b = batch.len();
    let mut g = Graph::new();
    let h = net.insert_params(&mut g);
    let xbar = g.leaf(xbar_t);
    let xr = g.leaf(xr_t);
    let noise = g.leaf(Tensor::zeros(vec![b, net.noise_dim]));
    let out = net.forward_with(&mut g, &h, xbar, noise)?;
    let diff = g.sub(out, xr)?;
    let sq = g.mul(diff, diff)?;
    let loss = g.mean(sq)?;
    let loss_value = g.value(loss).item()?;
    let grads = g.backward(loss, &h.all(), false)?;
    apply_update(adam, &mut net.params_mut(), &h, &grads)?;
    Ok(loss_value)
}

/// Interpolation inputs for one gradient-penalty step: generated states and
/// one interpolation point per pair.
pub(crate) struct GpwganBatch {
    pub xbar: Tensor,
    pub xr: Tensor,
    pub xg: Tensor,
    pub xt: Tensor,
}

impl GpwganBatch {
    /// Draws noise, samples the frozen generator, and picks one τ ∼ U(0,1)
    /// interpolation point per pair (a degenerate pair interpolates to
    /// itself).
    pub(crate) fn assemble(
        gen: &GeneratorNet,
        batch: &[&TransitionPair],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (xbar, xr) = batch_matrices(batch)?;
        let noise = uniform_noise(batch.len(), gen.noise_dim, rng);
        let xg = gen.sample(&xbar, &noise)?;
        let mut xt_rows = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let tau: f64 = rng.gen();
            let row: Vec<f64> = xr
                .row(i)
                .iter()
                .zip(xg.row(i))
                .map(|(r, g_)| tau * r + (1.0 - tau) * g_)
                .collect();
            xt_rows.push(row);
        }
        let xt = Tensor::from_rows(&xt_rows)?;
        Ok(GpwganBatch { xbar, xr, xg, xt })
    }
}

/// Loss minimized by the gradient-penalty critic:
/// E[D(x̄,x_g)] − E[D(x̄,x_r)] + λ·E[(‖∇_{x_τ}D(x̄,x_τ)‖ − 1)²].
pub(crate) fn build_gpwgan_loss(
    g: &mut Graph,
    disc: &DiscriminatorNet,
    batch: &GpwganBatch,
    lambda: f64,
) -> Result<(NetHandles, NodeId)> {
    let h = disc.insert_params(g);
    let xbar = g.leaf(batch.xbar.clone());
    let xr = g.leaf(batch.xr.clone());
    let xg = g.leaf(batch.xg.clone());
    let xt = g.leaf(batch.xt.clone());
    let d_r = disc.forward_with(g, &h, xbar, xr)?;
    let d_g = disc.forward_with(g, &h, xbar, xg)?;
    let d_t = disc.forward_with(g, &h, xbar, xt)?;
    // Row gradients of the summed scores equal per-pair input gradients.
    let s = g.sum(d_t)?;
    let input_grads = g.backward(s, &[xt], true)?;
    let gt = input_grads.node(xt).expect("higher-order backward records nodes");
    let gt_sq = g.mul(gt, gt)?;
    let row_sq = g.sum_axis1(gt_sq)?;
    let row_norm = g.sqrt(row_sq)?;
    let shifted = g.add_scalar(row_norm, -1.0)?;
    let pen_terms = g.mul(shifted, shifted)?;
    let penalty = g.mean(pen_terms)?;
    let mean_g = g.mean(d_g)?;
    let mean_r = g.mean(d_r)?;
    let gap = g.sub(mean_g, mean_r)?;
    let weighted_pen = g.scale(penalty, lambda)?;
    let loss = g.add(gap, weighted_pen)?;
    Ok((h, loss))
}

/// One critic step of the gradient-penalty baseline.
pub fn gpwgan_disc_step(
    gen: &GeneratorNet,
    disc: &mut DiscriminatorNet,
    d_adam: &mut AdamState,
    batch: &[&TransitionPair],
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let data = GpwganBatch::assemble(gen, batch, rng)?;
    let mut g = Graph::new();
    let (h, loss) = build_gpwgan_loss(&mut g, disc, &data, lambda)?;
    let loss_value = g.value(loss).item()?;
    let grads = g.backward(loss, &h.all(), false)?;
    apply_update(d_adam, &mut disc.params_mut(), &h, &grads)?;
    Ok(loss_value)
}

/// All interpolation rows of one segment-regression critic step, flattened
/// across the batch. `weights` carries 1/(B·T_b) per row so that a plain
/// sum over rows realizes (1/B)·Σ_b (1/T_b)·Σ_t.
pub(crate) struct SganPlan {
    pub xbar_rows: Vec<Vec<f64>>,
    pub xt_rows: Vec<Vec<f64>>,
    pub target_rows: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub skipped_pairs: usize,
}

impl SganPlan {
    pub(crate) fn is_empty(&self) -> bool {
        self.xt_rows.is_empty()
    }
}

/// Expands a batch into interpolation points: per pair, T = ⌈‖x_r−x_g‖/δ⌉
/// (clamped to [1, t_max]) points x_τ = τ·x_r + (1−τ)·x_g with independent
/// τ ∼ U(0,1), each regressing onto the unit direction (x_r−x_g)/‖x_r−x_g‖.
/// Pairs with ‖x_r−x_g‖ < 1e-9 are skipped.
pub(crate) fn plan_sgan_batch(
    xbar: &Tensor,
    xr: &Tensor,
    xg: &Tensor,
    delta: f64,
    t_max: usize,
    rng: &mut impl Rng,
) -> SganPlan {
    let (b, _) = xr.matrix_dims();
    let mut plan = SganPlan {
        xbar_rows: Vec::new(),
        xt_rows: Vec::new(),
        target_rows: Vec::new(),
        weights: Vec::new(),
        skipped_pairs: 0,
    };
    for i in 0..b {
        let xr_i = xr.row(i);
        let xg_i = xg.row(i);
        let diff: Vec<f64> = xr_i.iter().zip(xg_i).map(|(r, g_)| r - g_).collect();
        let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        if dist < MIN_PAIR_DISTANCE {
            plan.skipped_pairs += 1;
            continue;
        }
        let t_count = draw_count(dist, delta, Some(t_max));
        let unit: Vec<f64> = diff.iter().map(|d| d / dist).collect();
        debug_assert!(
            (unit.iter().map(|u| u * u).sum::<f64>().sqrt() - 1.0).abs() < 1e-12,
            "regression target must be unit norm"
        );
        let w = 1.0 / (b as f64 * t_count as f64);
        for _ in 0..t_count {
            let tau: f64 = rng.gen();
            let row: Vec<f64> =
                xr_i.iter().zip(xg_i).map(|(r, g_)| tau * r + (1.0 - tau) * g_).collect();
            plan.xbar_rows.push(xbar.row(i).to_vec());
            plan.xt_rows.push(row);
            plan.target_rows.push(unit.clone());
            plan.weights.push(w);
        }
    }
    plan
}

/// Loss minimized by the segment-regression critic:
/// (1/B)·Σ_b (1/T_b)·Σ_t ‖∇_{x_τ}D(x̄,x_τ) − (x_r−x_g)/‖x_r−x_g‖‖².
pub(crate) fn build_sgan_loss(
    g: &mut Graph,
    disc: &DiscriminatorNet,
    plan: &SganPlan,
) -> Result<(NetHandles, NodeId)> {
    let h = disc.insert_params(g);
    let cols = plan.xt_rows[0].len();
    let xbar = g.leaf(Tensor::from_rows(&plan.xbar_rows)?);
    let xt = g.leaf(Tensor::from_rows(&plan.xt_rows)?);
    let targets = g.leaf(Tensor::from_rows(&plan.target_rows)?);
    let weights = {
        let col = Tensor::matrix(plan.weights.len(), 1, plan.weights.clone())?;
        let w = g.leaf(col);
        g.broadcast_cols(w, cols)?
    };
    let d = disc.forward_with(g, &h, xbar, xt)?;
    let s = g.sum(d)?;
    let input_grads = g.backward(s, &[xt], true)?;
    let gt = input_grads.node(xt).expect("higher-order backward records nodes");
    let resid = g.sub(gt, targets)?;
    let sq = g.mul(resid, resid)?;
    let weighted = g.mul(sq, weights)?;
    let loss = g.sum(weighted)?;
    Ok((h, loss))
}

/// One critic step of the segment-regression objective.
pub fn sgan_disc_step(
    gen: &GeneratorNet,
    disc: &mut DiscriminatorNet,
    d_adam: &mut AdamState,
    batch: &[&TransitionPair],
    delta: f64,
    t_max: usize,
    rng: &mut impl Rng,
) -> Result<DiscStepOutcome> {
    let (xbar, xr) = batch_matrices(batch)?;
    let noise = uniform_noise(batch.len(), gen.noise_dim, rng);
    let xg = gen.sample(&xbar, &noise)?;
    let plan = plan_sgan_batch(&xbar, &xr, &xg, delta, t_max, rng);
    if plan.is_empty() {
        return Ok(DiscStepOutcome {
            loss: 0.0,
            skipped_pairs: plan.skipped_pairs,
            applied: false,
        });
    }
    let mut g = Graph::new();
    let (h, loss) = build_sgan_loss(&mut g, disc, &plan)?;
    let loss_value = g.value(loss).item()?;
    let grads = g.backward(loss, &h.all(), false)?;
    apply_update(d_adam, &mut disc.params_mut(), &h, &grads)?;
    Ok(DiscStepOutcome { loss: loss_value, skipped_pairs: plan.skipped_pairs, applied: true })
}

/// Generator loss mean(−D(x̄, G(x̄,n))), plus −ρ·log(1+‖∇_n G(x̄,n)‖) when
/// noise retention is on. Returns (generator handles, discriminator
/// handles, loss).
pub(crate) fn build_generator_loss(
    g: &mut Graph,
    gen: &GeneratorNet,
    disc: &DiscriminatorNet,
    xbar_t: &Tensor,
    noise_t: &Tensor,
    rho: f64,
    retention: bool,
) -> Result<(NetHandles, NetHandles, NodeId)> {
    let gh = gen.insert_params(g);
    let dh = disc.insert_params(g);
    let xbar = g.leaf(xbar_t.clone());
    let noise = g.leaf(noise_t.clone());
    let xg = gen.forward_with(g, &gh, xbar, noise)?;
    let d = disc.forward_with(g, &dh, xbar, xg)?;
    let mean_d = g.mean(d)?;
    let base = g.scale(mean_d, -1.0)?;
    let loss = if retention {
        let s = g.sum(xg)?;
        let noise_grads = g.backward(s, &[noise], true)?;
        let gn = noise_grads.node(noise).expect("higher-order backward records nodes");
        let norm = g.l2_norm(gn)?;
        let log_term = g.log1p(norm)?;
        let retention_loss = g.scale(log_term, -rho)?;
        g.add(base, retention_loss)?
    } else {
        base
    };
    Ok((gh, dh, loss))
}

/// One generator step against a frozen discriminator.
pub fn generator_step(
    gen: &mut GeneratorNet,
    g_adam: &mut AdamState,
    disc: &DiscriminatorNet,
    batch: &[&TransitionPair],
    rho: f64,
    retention: bool,
    rng: &mut impl Rng,
) -> Result<f64> {
    let xbar_rows: Vec<Vec<f64>> = batch.iter().map(|p| p.xbar.clone()).collect();
    let xbar_t = Tensor::from_rows(&xbar_rows)?;
    let noise_t = uniform_noise(batch.len(), gen.noise_dim, rng);
    let mut g = Graph::new();
    let (gh, _dh, loss) = build_generator_loss(&mut g, gen, disc, &xbar_t, &noise_t, rho, retention)?;
    let loss_value = g.value(loss).item()?;
    let grads = g.backward(loss, &gh.all(), false)?;
    apply_update(g_adam, &mut gen.params_mut(), &gh, &grads)?;
    Ok(loss_value)
}
