//! Encodings between grid states and real vectors.
//!
//! Layouts (all row-major, channel-major):
//! * vector, 1D: `n` coordinates, agent cell 1.0, rest 0.0.
//! * vector, 2D: `n²` coordinates in row-major cell order; the obstacle cell
//!   (when present) is fixed at 0.5.
//! * image: each cell becomes a `block_size × block_size` pixel block. A 1D
//!   grid renders as a `block_size × block_size·n` image, a 2D grid as
//!   `block_size·n × block_size·n`. Blocks are constant: agent 1.0,
//!   obstacle 0.5, free 0.0.
//! * random background: two planes, fences first, then the agent plane;
//!   each plane uses the layout above (fence blocks 1.0).
//!
//! Decoding accepts approximate vectors: [`nearest_state`] finds the valid
//! state minimizing the max-abs coordinate deviation (exactly, not by
//! search over all states), and [`decode`] applies the validity threshold
//! to it. Distinct valid states differ by 1.0 in max-abs (some coordinate
//! flips between 0 and 1, or 0.5 and 1), so any threshold below 0.5
//! identifies at most one state.

use super::{DomainKind, GridDomainSpec, GridState, Representation};
use crate::error::{Error, Result};

/// A vector decodes to a state only if every coordinate is within this of
/// the state's exact encoding.
pub const VALIDITY_THRESHOLD: f64 = 0.1;

fn plane_len(spec: &GridDomainSpec) -> usize {
    match spec.representation {
        Representation::VectorBits => spec.cells(),
        Representation::ImageBlocks => spec.cells() * spec.block_size * spec.block_size,
    }
}

pub fn encoded_dim(spec: &GridDomainSpec) -> usize {
    plane_len(spec) * spec.channels()
}

/// Flat indices of one cell's coordinates within one channel.
pub fn group_indices(spec: &GridDomainSpec, channel: usize, cell: usize) -> Vec<usize> {
    let offset = channel * plane_len(spec);
    match spec.representation {
        Representation::VectorBits => vec![offset + cell],
        Representation::ImageBlocks => {
            let bs = spec.block_size;
            let width = bs * spec.size;
            let (r0, c0) = if spec.kind.is_two_d() {
                ((cell / spec.size) * bs, (cell % spec.size) * bs)
            } else {
                (0, cell * bs)
            };
            let mut idx = Vec::with_capacity(bs * bs);
            for dr in 0..bs {
                for dc in 0..bs {
                    idx.push(offset + (r0 + dr) * width + (c0 + dc));
                }
            }
            idx
        }
    }
}

/// Per-grid contribution of a single cell's block to an L2 norm: the block
/// changing by one unit per coordinate moves the norm by 1 (vector) or
/// `block_size` (image, √(block_size²)).
pub fn agent_block_norm(spec: &GridDomainSpec) -> f64 {
    match spec.representation {
        Representation::VectorBits => 1.0,
        Representation::ImageBlocks => spec.block_size as f64,
    }
}

/// Encoding with no agent and no fences: zeros except the obstacle block.
fn base_encoding(spec: &GridDomainSpec) -> Vec<f64> {
    let mut v = vec![0.0; encoded_dim(spec)];
    if let Some(ob) = spec.obstacle_cell() {
        for i in group_indices(spec, 0, ob) {
            v[i] = 0.5;
        }
    }
    v
}

pub fn encode(spec: &GridDomainSpec, s: &GridState) -> Vec<f64> {
    let mut v = base_encoding(spec);
    match &s.fences {
        Some(fences) => {
            for (cell, &fenced) in fences.iter().enumerate() {
                if fenced {
                    for i in group_indices(spec, 0, cell) {
                        v[i] = 1.0;
                    }
                }
            }
            for i in group_indices(spec, 1, s.pos) {
                v[i] = 1.0;
            }
        }
        None => {
            for i in group_indices(spec, 0, s.pos) {
                v[i] = 1.0;
            }
        }
    }
    v
}

/// The shared value of a cell's block, if the block is constant.
fn group_value(spec: &GridDomainSpec, v: &[f64], channel: usize, cell: usize) -> Option<f64> {
    let idx = group_indices(spec, channel, cell);
    let first = v[idx[0]];
    idx.iter().all(|&i| v[i] == first).then_some(first)
}

/// Strict O(dim) decoder: accepts only exact encodings.
pub fn decode_exact(spec: &GridDomainSpec, v: &[f64]) -> Result<GridState> {
    if v.len() != encoded_dim(spec) {
        return Err(Error::shape(format!(
            "vector has {} coordinates, encoding wants {}",
            v.len(),
            encoded_dim(spec)
        )));
    }
    let reject = |what: &str| Err(Error::InvalidState(format!("not an exact encoding: {what}")));
    let cells = spec.cells();
    let state = if spec.kind == DomainKind::TwoDRandomBackground {
        let mut fences = vec![false; cells];
        for cell in 0..cells {
            match group_value(spec, v, 0, cell) {
                Some(x) if x == 0.0 => {}
                Some(x) if x == 1.0 => fences[cell] = true,
                _ => return reject("fence plane"),
            }
        }
        let mut pos = None;
        for cell in 0..cells {
            match group_value(spec, v, 1, cell) {
                Some(x) if x == 0.0 => {}
                Some(x) if x == 1.0 => {
                    if pos.replace(cell).is_some() {
                        return reject("two agents");
                    }
                }
                _ => return reject("agent plane"),
            }
        }
        match pos {
            Some(pos) => GridState { pos, fences: Some(fences) },
            None => return reject("no agent"),
        }
    } else {
        let obstacle = spec.obstacle_cell();
        let mut pos = None;
        for cell in 0..cells {
            let gv = match group_value(spec, v, 0, cell) {
                Some(gv) => gv,
                None => return reject("non-constant block"),
            };
            if obstacle == Some(cell) {
                if gv != 0.5 {
                    return reject("obstacle block");
                }
            } else if gv == 0.0 {
            } else if gv == 1.0 {
                if pos.replace(cell).is_some() {
                    return reject("two agents");
                }
            } else {
                return reject("off-grid value");
            }
        }
        match pos {
            Some(pos) => GridState { pos, fences: None },
            None => return reject("no agent"),
        }
    };
    spec.check_state(&state)?;
    Ok(state)
}

pub fn is_exact_valid_encoding(spec: &GridDomainSpec, v: &[f64]) -> bool {
    decode_exact(spec, v).is_ok()
}

/// Per-cell max-abs deviation of a block from a constant target value.
fn block_deviation(spec: &GridDomainSpec, v: &[f64], channel: usize, cell: usize, target: f64) -> f64 {
    group_indices(spec, channel, cell)
        .iter()
        .fold(0.0f64, |acc, &i| acc.max((v[i] - target).abs()))
}

/// Largest entries of `vals` (value, cell), enough to answer "max excluding
/// any one cell".
fn top_two(vals: &[f64]) -> [(f64, usize); 2] {
    let mut top = [(f64::NEG_INFINITY, usize::MAX); 2];
    for (cell, &x) in vals.iter().enumerate() {
        if x > top[0].0 {
            top[1] = top[0];
            top[0] = (x, cell);
        } else if x > top[1].0 {
            top[1] = (x, cell);
        }
    }
    top
}

fn max_excluding(top: &[(f64, usize); 2], cell: usize) -> f64 {
    let best = if top[0].1 == cell { top[1].0 } else { top[0].0 };
    best.max(0.0)
}

/// The valid state minimizing the max-abs coordinate deviation from `v`,
/// with that deviation. Exact: each cell's block contributes independently
/// to the max, so per-block deviations against each hypothesis (agent here,
/// fence or not, background) combine by taking maxima, and the best agent
/// cell falls out of running maxima rather than a scan over whole states.
/// Ties resolve to the smallest agent position and to fewer fences.
pub fn nearest_state(spec: &GridDomainSpec, v: &[f64]) -> Result<(GridState, f64)> {
    spec.validate()?;
    if v.len() != encoded_dim(spec) {
        return Err(Error::shape(format!(
            "vector has {} coordinates, encoding wants {}",
            v.len(),
            encoded_dim(spec)
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            op: "nearest_state",
            detail: "input vector has non-finite coordinates".to_string(),
        });
    }
    let cells = spec.cells();
    let obstacle = spec.obstacle_cell();

    if spec.kind == DomainKind::TwoDRandomBackground {
        // Fence plane: each non-agent cell picks whichever bit deviates
        // less; the agent's cell is forced open.
        let dev_fence0: Vec<f64> = (0..cells).map(|c| block_deviation(spec, v, 0, c, 0.0)).collect();
        let dev_fence1: Vec<f64> = (0..cells).map(|c| block_deviation(spec, v, 0, c, 1.0)).collect();
        let dev_fence_free: Vec<f64> =
            (0..cells).map(|c| dev_fence0[c].min(dev_fence1[c])).collect();
        let fence_top = top_two(&dev_fence_free);
        // Agent plane: chosen cell goes to 1, every other to 0.
        let dev_agent0: Vec<f64> = (0..cells).map(|c| block_deviation(spec, v, 1, c, 0.0)).collect();
        let dev_agent1: Vec<f64> = (0..cells).map(|c| block_deviation(spec, v, 1, c, 1.0)).collect();
        let agent_top = top_two(&dev_agent0);

        let mut best: Option<(f64, usize)> = None;
        for j in 0..cells {
            let dev = dev_agent1[j]
                .max(max_excluding(&agent_top, j))
                .max(max_excluding(&fence_top, j))
                .max(dev_fence0[j]);
            if best.map_or(true, |(b, _)| dev < b) {
                best = Some((dev, j));
            }
        }
        let (dev, pos) = best.expect("at least one cell");
        let fences: Vec<bool> = (0..cells)
            .map(|c| c != pos && dev_fence1[c] < dev_fence0[c])
            .collect();
        Ok((GridState { pos, fences: Some(fences) }, dev))
    } else {
        let base: Vec<f64> = (0..cells)
            .map(|c| if obstacle == Some(c) { 0.5 } else { 0.0 })
            .collect();
        let dev_base: Vec<f64> =
            (0..cells).map(|c| block_deviation(spec, v, 0, c, base[c])).collect();
        let dev_agent: Vec<f64> = (0..cells).map(|c| block_deviation(spec, v, 0, c, 1.0)).collect();
        let base_top = top_two(&dev_base);

        let mut best: Option<(f64, usize)> = None;
        for j in 0..cells {
            if obstacle == Some(j) {
                continue;
            }
            let dev = dev_agent[j].max(max_excluding(&base_top, j));
            if best.map_or(true, |(b, _)| dev < b) {
                best = Some((dev, j));
            }
        }
        let (dev, pos) = best.expect("at least one open cell");
        Ok((GridState { pos, fences: None }, dev))
    }
}

/// Nearest valid state if it lies strictly within [`VALIDITY_THRESHOLD`].
pub fn decode(spec: &GridDomainSpec, v: &[f64]) -> Result<Option<GridState>> {
    let (state, dev) = nearest_state(spec, v)?;
    Ok((dev < VALIDITY_THRESHOLD).then_some(state))
}

/// Sum of squared deviations of a block from a constant target.
fn block_sq(spec: &GridDomainSpec, v: &[f64], channel: usize, cell: usize, target: f64) -> f64 {
    group_indices(spec, channel, cell)
        .iter()
        .map(|&i| (v[i] - target) * (v[i] - target))
        .sum()
}

/// Variant of [`nearest_state`] minimizing Euclidean instead of max-abs
/// deviation, for sensitivity analysis of the validity metric. Same
/// decomposition argument, with per-block maxima replaced by sums.
pub fn nearest_state_l2(spec: &GridDomainSpec, v: &[f64]) -> Result<(GridState, f64)> {
    spec.validate()?;
    if v.len() != encoded_dim(spec) {
        return Err(Error::shape(format!(
            "vector has {} coordinates, encoding wants {}",
            v.len(),
            encoded_dim(spec)
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            op: "nearest_state_l2",
            detail: "input vector has non-finite coordinates".to_string(),
        });
    }
    let cells = spec.cells();
    let obstacle = spec.obstacle_cell();

    if spec.kind == DomainKind::TwoDRandomBackground {
        let f0: Vec<f64> = (0..cells).map(|c| block_sq(spec, v, 0, c, 0.0)).collect();
        let f1: Vec<f64> = (0..cells).map(|c| block_sq(spec, v, 0, c, 1.0)).collect();
        let fmin: Vec<f64> = (0..cells).map(|c| f0[c].min(f1[c])).collect();
        let a0: Vec<f64> = (0..cells).map(|c| block_sq(spec, v, 1, c, 0.0)).collect();
        let a1: Vec<f64> = (0..cells).map(|c| block_sq(spec, v, 1, c, 1.0)).collect();
        let agent_base: f64 = a0.iter().sum();
        let fence_base: f64 = fmin.iter().sum();

        let mut best: Option<(f64, usize)> = None;
        for j in 0..cells {
            let cost = agent_base - a0[j] + a1[j] + fence_base - fmin[j] + f0[j];
            if best.map_or(true, |(b, _)| cost < b) {
                best = Some((cost, j));
            }
        }
        let (cost, pos) = best.expect("at least one cell");
        let fences: Vec<bool> = (0..cells).map(|c| c != pos && f1[c] < f0[c]).collect();
        Ok((GridState { pos, fences: Some(fences) }, cost.max(0.0).sqrt()))
    } else {
        let sq_base: Vec<f64> = (0..cells)
            .map(|c| block_sq(spec, v, 0, c, if obstacle == Some(c) { 0.5 } else { 0.0 }))
            .collect();
        let sq_agent: Vec<f64> = (0..cells).map(|c| block_sq(spec, v, 0, c, 1.0)).collect();
        let total_base: f64 = sq_base.iter().sum();

        let mut best: Option<(f64, usize)> = None;
        for j in 0..cells {
            if obstacle == Some(j) {
                continue;
            }
            let cost = total_base - sq_base[j] + sq_agent[j];
            if best.map_or(true, |(b, _)| cost < b) {
                best = Some((cost, j));
            }
        }
        let (cost, pos) = best.expect("at least one open cell");
        Ok((GridState { pos, fences: None }, cost.max(0.0).sqrt()))
    }
}
