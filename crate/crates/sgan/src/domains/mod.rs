//! Exactly solvable grid environments: successor-distribution oracles (in
//! rational arithmetic, converted to floats only at the boundary), state
//! encodings, enumeration, and dataset generation.
//!
//! Conventions fixed here and recorded in run manifests:
//! * 2D moves are ordered north, east, south, west; north is "up" (row−1),
//!   and the 0.8:0.1:0.0:0.1 dynamics reads in that order with north as the
//!   intended direction.
//! * Any move off the grid, into the obstacle, or into a fence cell leaves
//!   the agent in place.
//! * The obstacle sits at the grid's center cell (⌊n/2⌋, ⌊n/2⌋).
//! * Random backgrounds draw each cell as a fence independently with a
//!   configurable probability (default 0.2), then place the agent uniformly
//!   on non-fence cells.

mod dataset;
pub mod encode;

pub use dataset::{Dataset, TransitionPair, DATASET_MAGIC};
pub use encode::{
    agent_block_norm, decode, decode_exact, encode, encoded_dim, is_exact_valid_encoding,
    nearest_state, nearest_state_l2, VALIDITY_THRESHOLD,
};

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Ratio64 = Ratio<i64>;

/// States enumerable up to this many; beyond it enumeration refuses.
pub const ENUMERATION_CAP: u128 = 1 << 20;

pub const DEFAULT_BLOCK_SIZE: usize = 4;
pub const DEFAULT_FENCE_PROB: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    OneD,
    TwoD,
    TwoDObstacle,
    TwoDRandomBackground,
}

impl DomainKind {
    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::OneD => "one-d",
            DomainKind::TwoD => "two-d",
            DomainKind::TwoDObstacle => "two-d-obstacle",
            DomainKind::TwoDRandomBackground => "two-d-random-background",
        }
    }

    pub fn is_two_d(&self) -> bool {
        !matches!(self, DomainKind::OneD)
    }

    /// Complex domains get the noise-retention loss by default.
    pub fn is_complex(&self) -> bool {
        matches!(self, DomainKind::TwoDObstacle | DomainKind::TwoDRandomBackground)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    VectorBits,
    ImageBlocks,
}

impl Representation {
    pub fn name(&self) -> &'static str {
        match self {
            Representation::VectorBits => "vector-bits",
            Representation::ImageBlocks => "image-blocks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    OneD { left: Ratio64, right: Ratio64 },
    TwoD { north: Ratio64, east: Ratio64, south: Ratio64, west: Ratio64 },
}

impl Dynamics {
    /// 1/3 left, 2/3 right.
    pub fn one_d_default() -> Self {
        Dynamics::OneD { left: Ratio::new(1, 3), right: Ratio::new(2, 3) }
    }

    /// 0.8 north (intended), 0.1 east, 0 south, 0.1 west.
    pub fn russell_norvig() -> Self {
        Dynamics::TwoD {
            north: Ratio::new(4, 5),
            east: Ratio::new(1, 10),
            south: Ratio::zero(),
            west: Ratio::new(1, 10),
        }
    }

    pub fn uniform_2d() -> Self {
        let q = Ratio::new(1, 4);
        Dynamics::TwoD { north: q, east: q, south: q, west: q }
    }

    pub fn probabilities(&self) -> Vec<Ratio64> {
        match *self {
            Dynamics::OneD { left, right } => vec![left, right],
            Dynamics::TwoD { north, east, south, west } => vec![north, east, south, west],
        }
    }

    fn check(&self) -> Result<()> {
        let ps = self.probabilities();
        if ps.iter().any(|p| *p < Ratio::zero()) {
            return Err(Error::Config("dynamics probabilities must be nonnegative".to_string()));
        }
        let sum: Ratio64 = ps.iter().sum();
        if !sum.is_one() {
            return Err(Error::Config(format!("dynamics probabilities sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Colon-joined exact probabilities, e.g. `1/3:2/3` or `4/5:1/10:0:1/10`.
    pub fn label(&self) -> String {
        self.probabilities().iter().map(|p| p.to_string()).collect::<Vec<_>>().join(":")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDomainSpec {
    pub kind: DomainKind,
    pub size: usize,
    pub dynamics: Dynamics,
    pub representation: Representation,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    /// Only meaningful for the random-background kind.
    #[serde(default = "default_fence_prob")]
    pub fence_prob: f64,
}

fn default_block_size() -> usize {
    DEFAULT_BLOCK_SIZE
}

fn default_fence_prob() -> f64 {
    DEFAULT_FENCE_PROB
}

impl GridDomainSpec {
    pub fn one_d(size: usize, representation: Representation) -> Self {
        GridDomainSpec {
            kind: DomainKind::OneD,
            size,
            dynamics: Dynamics::one_d_default(),
            representation,
            block_size: DEFAULT_BLOCK_SIZE,
            fence_prob: DEFAULT_FENCE_PROB,
        }
    }

    pub fn two_d(size: usize, representation: Representation, dynamics: Dynamics) -> Self {
        GridDomainSpec { kind: DomainKind::TwoD, size, dynamics, representation, block_size: DEFAULT_BLOCK_SIZE, fence_prob: DEFAULT_FENCE_PROB }
    }

    pub fn two_d_obstacle(size: usize, representation: Representation, dynamics: Dynamics) -> Self {
        GridDomainSpec { kind: DomainKind::TwoDObstacle, size, dynamics, representation, block_size: DEFAULT_BLOCK_SIZE, fence_prob: DEFAULT_FENCE_PROB }
    }

    pub fn two_d_random_background(
        size: usize,
        representation: Representation,
        dynamics: Dynamics,
        fence_prob: f64,
    ) -> Self {
        GridDomainSpec {
            kind: DomainKind::TwoDRandomBackground,
            size,
            dynamics,
            representation,
            block_size: DEFAULT_BLOCK_SIZE,
            fence_prob,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::Config("grid size must be at least 2".to_string()));
        }
        if self.block_size < 1 {
            return Err(Error::Config("block size must be at least 1".to_string()));
        }
        self.dynamics.check()?;
        let dyn_is_2d = matches!(self.dynamics, Dynamics::TwoD { .. });
        if self.kind.is_two_d() != dyn_is_2d {
            return Err(Error::Config(format!(
                "{} domain needs {} dynamics",
                self.kind.name(),
                if self.kind.is_two_d() { "4-tuple" } else { "2-tuple" }
            )));
        }
        if self.kind == DomainKind::TwoDRandomBackground
            && !(0.0..1.0).contains(&self.fence_prob)
        {
            return Err(Error::Config("fence probability must be in [0, 1)".to_string()));
        }
        Ok(())
    }

    /// Grid cells: n for 1D, n² for 2D kinds.
    pub fn cells(&self) -> usize {
        if self.kind.is_two_d() {
            self.size * self.size
        } else {
            self.size
        }
    }

    pub fn channels(&self) -> usize {
        if self.kind == DomainKind::TwoDRandomBackground {
            2
        } else {
            1
        }
    }

    pub fn obstacle_cell(&self) -> Option<usize> {
        match self.kind {
            DomainKind::TwoDObstacle => {
                let mid = self.size / 2;
                Some(mid * self.size + mid)
            }
            _ => None,
        }
    }

    pub fn encoded_dim(&self) -> usize {
        encode::encoded_dim(self)
    }

    /// Whether the agent may stand on `pos` given an optional background.
    fn position_open(&self, pos: usize, fences: Option<&[bool]>) -> bool {
        pos < self.cells()
            && Some(pos) != self.obstacle_cell()
            && fences.map_or(true, |f| !f[pos])
    }

    pub fn check_state(&self, s: &GridState) -> Result<()> {
        self.validate()?;
        match (self.kind, &s.fences) {
            (DomainKind::TwoDRandomBackground, Some(f)) => {
                if f.len() != self.cells() {
                    return Err(Error::InvalidState(format!(
                        "background has {} cells, spec wants {}",
                        f.len(),
                        self.cells()
                    )));
                }
            }
            (DomainKind::TwoDRandomBackground, None) => {
                return Err(Error::InvalidState("random-background state without background".to_string()))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidState(format!(
                    "{} state carries a background",
                    self.kind.name()
                )))
            }
            (_, None) => {}
        }
        if !self.position_open(s.pos, s.fences.as_deref()) {
            return Err(Error::InvalidState(format!("agent position {} is not open", s.pos)));
        }
        Ok(())
    }

    /// Number of joint (position, background) states.
    pub fn state_space_size(&self) -> u128 {
        let m = self.cells() as u128;
        match self.kind {
            DomainKind::OneD | DomainKind::TwoD => m,
            DomainKind::TwoDObstacle => m - 1,
            // Sum over 2^m backgrounds of the number of open cells:
            // Σ_configs (m − |fences|) = m·2^(m−1).
            DomainKind::TwoDRandomBackground => m * (1u128 << (m as u32 - 1)),
        }
    }

    /// Upper bound on distinct (x̄, x_r) pairs: each state has at most
    /// `moves + 1` successors (all moves plus staying in place).
    pub fn transition_pair_bound(&self) -> u128 {
        let succ = self.dynamics.probabilities().len() as u128 + 1;
        self.state_space_size().saturating_mul(succ)
    }
}

/// Agent position plus, for the random-background kind, the fence grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GridState {
    pub pos: usize,
    pub fences: Option<Vec<bool>>,
}

impl GridState {
    pub fn at(pos: usize) -> Self {
        GridState { pos, fences: None }
    }

    pub fn with_background(pos: usize, fences: Vec<bool>) -> Self {
        GridState { pos, fences: Some(fences) }
    }

    pub fn row_col(&self, size: usize) -> (usize, usize) {
        (self.pos / size, self.pos % size)
    }
}

/// Canonical map key for an encoded state: the exact bit patterns of its
/// `f64` coordinates (order-preserving for the values that occur here).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey(Vec<u64>);

impl StateKey {
    pub fn from_slice(v: &[f64]) -> Self {
        StateKey(v.iter().map(|x| x.to_bits()).collect())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from_bits(b)).collect()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn hex(&self) -> String {
        let mut s = String::with_capacity(self.0.len() * 16);
        for b in &self.0 {
            s.push_str(&format!("{b:016x}"));
        }
        s
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if s.len() % 16 != 0 {
            return Err(Error::Format {
                path: "<state-key>".to_string(),
                detail: "hex length not a multiple of 16".to_string(),
            });
        }
        let mut out = Vec::with_capacity(s.len() / 16);
        for chunk in s.as_bytes().chunks(16) {
            let txt = std::str::from_utf8(chunk).map_err(|e| Error::Format {
                path: "<state-key>".to_string(),
                detail: e.to_string(),
            })?;
            out.push(u64::from_str_radix(txt, 16).map_err(|e| Error::Format {
                path: "<state-key>".to_string(),
                detail: e.to_string(),
            })?);
        }
        Ok(StateKey(out))
    }
}

/// Probabilities over canonical encoded states; nonnegative, summing to
/// 1 ± 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDistribution {
    entries: BTreeMap<StateKey, f64>,
}

impl SparseDistribution {
    pub fn from_entries(entries: BTreeMap<StateKey, f64>) -> Result<Self> {
        if entries.values().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::contract("distribution has negative or non-finite mass".to_string()));
        }
        let total: f64 = entries.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("distribution sums to {total}")));
        }
        Ok(SparseDistribution { entries })
    }

    pub fn from_counts(counts: &BTreeMap<StateKey, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::contract("empty count table".to_string()));
        }
        let entries = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
            .collect();
        Ok(SparseDistribution { entries })
    }

    pub fn point_mass(key: StateKey) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(key, 1.0);
        SparseDistribution { entries }
    }

    pub fn prob(&self, key: &StateKey) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, f64)> {
        self.entries.iter().map(|(k, &p)| (k, p))
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }
}

/// Candidate moves with their probabilities, before blocking rules.
fn moves(spec: &GridDomainSpec, pos: usize) -> Vec<(Option<usize>, Ratio64)> {
    let n = spec.size;
    match spec.dynamics {
        Dynamics::OneD { left, right } => {
            let l = if pos > 0 { Some(pos - 1) } else { None };
            let r = if pos + 1 < n { Some(pos + 1) } else { None };
            vec![(l, left), (r, right)]
        }
        Dynamics::TwoD { north, east, south, west } => {
            let (r, c) = (pos / n, pos % n);
            let go = |rr: isize, cc: isize| -> Option<usize> {
                if rr < 0 || cc < 0 || rr >= n as isize || cc >= n as isize {
                    None
                } else {
                    Some(rr as usize * n + cc as usize)
                }
            };
            let (r, c) = (r as isize, c as isize);
            vec![
                (go(r - 1, c), north),
                (go(r, c + 1), east),
                (go(r + 1, c), south),
                (go(r, c - 1), west),
            ]
        }
    }
}

/// Exact successor-position distribution; blocked mass folds onto "stay".
pub fn successor_positions(spec: &GridDomainSpec, s: &GridState) -> Result<BTreeMap<usize, Ratio64>> {
    spec.check_state(s)?;
    let mut out: BTreeMap<usize, Ratio64> = BTreeMap::new();
    for (target, p) in moves(spec, s.pos) {
        if p.is_zero() {
            continue;
        }
        let dest = match target {
            Some(t) if spec.position_open(t, s.fences.as_deref()) => t,
            _ => s.pos,
        };
        *out.entry(dest).or_insert_with(Ratio::zero) += p;
    }
    debug_assert!(out.values().sum::<Ratio64>().is_one());
    Ok(out)
}

/// Exact successor distribution over encoded states.
pub fn true_next_distribution(spec: &GridDomainSpec, s: &GridState) -> Result<SparseDistribution> {
    let by_pos = successor_positions(spec, s)?;
    let mut entries = BTreeMap::new();
    for (pos, p) in by_pos {
        let succ = GridState { pos, fences: s.fences.clone() };
        let key = StateKey::from_slice(&encode::encode(spec, &succ));
        let prob = *p.numer() as f64 / *p.denom() as f64;
        *entries.entry(key).or_insert(0.0) += prob;
    }
    SparseDistribution::from_entries(entries)
}

/// All valid states, ordered by agent position. The random-background kind
/// has too many backgrounds to enumerate jointly, so it requires one fixed
/// background.
pub fn enumerate_states(
    spec: &GridDomainSpec,
    background: Option<&[bool]>,
) -> Result<Vec<GridState>> {
    spec.validate()?;
    match (spec.kind, background) {
        (DomainKind::TwoDRandomBackground, None) => {
            return Err(Error::contract(
                "random-background enumeration requires a fixed background".to_string(),
            ))
        }
        (DomainKind::TwoDRandomBackground, Some(f)) if f.len() != spec.cells() => {
            return Err(Error::contract(format!(
                "background has {} cells, spec wants {}",
                f.len(),
                spec.cells()
            )))
        }
        (k, Some(_)) if k != DomainKind::TwoDRandomBackground => {
            return Err(Error::contract(format!("{} takes no background", k.name())))
        }
        _ => {}
    }
    let space = spec.state_space_size();
    if spec.kind != DomainKind::TwoDRandomBackground && space > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { states: space, cap: ENUMERATION_CAP });
    }
    let fences = background.map(|f| f.to_vec());
    Ok((0..spec.cells())
        .filter(|&pos| spec.position_open(pos, background))
        .map(|pos| GridState { pos, fences: fences.clone() })
        .collect())
}

/// [`enumerate_states`], encoded.
pub fn enumerate_valid_states(
    spec: &GridDomainSpec,
    background: Option<&[bool]>,
) -> Result<Vec<Vec<f64>>> {
    Ok(enumerate_states(spec, background)?.iter().map(|s| encode::encode(spec, s)).collect())
}

/// Draws a successor state exactly per [`successor_positions`].
pub fn sample_successor(spec: &GridDomainSpec, s: &GridState, rng: &mut impl Rng) -> Result<GridState> {
    let dist = successor_positions(spec, s)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = None;
    for (pos, p) in &dist {
        acc += *p.numer() as f64 / *p.denom() as f64;
        if u < acc {
            chosen = Some(*pos);
            break;
        }
    }
    // Float round-off can leave acc marginally below 1; fall back to the
    // last entry rather than lose mass.
    let pos = chosen.unwrap_or_else(|| *dist.keys().last().expect("nonempty distribution"));
    Ok(GridState { pos, fences: s.fences.clone() })
}

pub fn sample_transition(
    spec: &GridDomainSpec,
    s: &GridState,
    rng: &mut impl Rng,
) -> Result<TransitionPair> {
    let succ = sample_successor(spec, s, rng)?;
    Ok(TransitionPair { xbar: encode::encode(spec, s), xr: encode::encode(spec, &succ) })
}

/// Uniform valid start state; for random backgrounds, fences are drawn
/// i.i.d. with `fence_prob` first (redrawn in the vanishingly rare case that
/// no cell stays open), then the agent goes uniformly on an open cell.
pub fn random_state(spec: &GridDomainSpec, rng: &mut impl Rng) -> Result<GridState> {
    spec.validate()?;
    match spec.kind {
        DomainKind::TwoDRandomBackground => {
            loop {
                let fences: Vec<bool> =
                    (0..spec.cells()).map(|_| rng.gen::<f64>() < spec.fence_prob).collect();
                let open: Vec<usize> = (0..spec.cells()).filter(|&p| !fences[p]).collect();
                if open.is_empty() {
                    continue;
                }
                let pos = open[rng.gen_range(0..open.len())];
                return Ok(GridState::with_background(pos, fences));
            }
        }
        _ => {
            let open: Vec<usize> =
                (0..spec.cells()).filter(|&p| spec.position_open(p, None)).collect();
            Ok(GridState::at(open[rng.gen_range(0..open.len())]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartStatePolicy {
    /// Fresh uniform start state (and background) per pair.
    UniformValid,
    /// Fixed agent position; backgrounds still drawn per the background law.
    FixedPosition(usize),
}

pub fn generate_dataset(
    spec: &GridDomainSpec,
    count: usize,
    rng: &mut impl Rng,
    policy: StartStatePolicy,
) -> Result<Dataset> {
    spec.validate()?;
    if count < 1 {
        return Err(Error::contract("dataset needs at least one pair".to_string()));
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let start = match policy {
            StartStatePolicy::UniformValid => random_state(spec, rng)?,
            StartStatePolicy::FixedPosition(pos) => match spec.kind {
                DomainKind::TwoDRandomBackground => loop {
                    let s = random_state(spec, rng)?;
                    let fences = s.fences.as_ref().expect("random-background state");
                    if !fences[pos] {
                        break GridState { pos, fences: s.fences };
                    }
                },
                _ => GridState::at(pos),
            },
        };
        pairs.push(sample_transition(spec, &start, rng)?);
    }
    Ok(Dataset { spec: spec.clone(), pairs, seed: None })
}

/// Default data budget for the random-background kind: a fraction (typically
/// 10⁻⁶) of the transition-pair space. Other kinds return `None` (callers
/// use their own default).
pub fn recommended_dataset_size(spec: &GridDomainSpec, fraction: f64) -> Option<u64> {
    match spec.kind {
        DomainKind::TwoDRandomBackground => {
            let pairs = spec.transition_pair_bound() as f64;
            Some((pairs * fraction).round().max(1.0) as u64)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn ratio_map(entries: &[(usize, (i64, i64))]) -> BTreeMap<usize, Ratio64> {
        entries.iter().map(|&(k, (n, d))| (k, Ratio::new(n, d))).collect()
    }

    #[test]
    fn one_d_interior_splits_one_third_two_thirds() {
        let spec = GridDomainSpec::one_d(5, Representation::VectorBits);
        let d = successor_positions(&spec, &GridState::at(2)).unwrap();
        assert_eq!(d, ratio_map(&[(1, (1, 3)), (3, (2, 3))]));
    }

    #[test]
    fn one_d_left_boundary_stays_in_place() {
        let spec = GridDomainSpec::one_d(5, Representation::VectorBits);
        let d = successor_positions(&spec, &GridState::at(0)).unwrap();
        assert_eq!(d, ratio_map(&[(0, (1, 3)), (1, (2, 3))]));
    }

    #[test]
    fn two_d_uniform_corner_folds_blocked_mass() {
        let spec = GridDomainSpec::two_d(5, Representation::VectorBits, Dynamics::uniform_2d());
        let d = successor_positions(&spec, &GridState::at(0)).unwrap();
        // North and west are off-grid: 0.5 stays, east (0,1)=1, south (1,0)=5.
        assert_eq!(d, ratio_map(&[(0, (1, 2)), (1, (1, 4)), (5, (1, 4))]));
    }

    #[test]
    fn obstacle_blocks_like_a_wall() {
        let spec = GridDomainSpec::two_d_obstacle(
            5,
            Representation::VectorBits,
            Dynamics::russell_norvig(),
        );
        assert_eq!(spec.obstacle_cell(), Some(12));
        // Agent just south of the obstacle at (3,2)=17; north move hits it.
        let d = successor_positions(&spec, &GridState::at(17)).unwrap();
        assert_eq!(d, ratio_map(&[(16, (1, 10)), (17, (4, 5)), (18, (1, 10))]));
    }

    #[test]
    fn fences_block_like_walls() {
        let spec = GridDomainSpec::two_d_random_background(
            3,
            Representation::VectorBits,
            Dynamics::uniform_2d(),
            0.2,
        );
        let mut fences = vec![false; 9];
        fences[1] = true; // north of center
        let s = GridState::with_background(4, fences);
        let d = successor_positions(&spec, &s).unwrap();
        assert_eq!(d, ratio_map(&[(3, (1, 4)), (4, (1, 4)), (5, (1, 4)), (7, (1, 4))]));
    }

    #[test]
    fn outgoing_mass_is_exactly_one_on_every_state() {
        for spec in [
            GridDomainSpec::one_d(7, Representation::VectorBits),
            GridDomainSpec::two_d(4, Representation::VectorBits, Dynamics::russell_norvig()),
            GridDomainSpec::two_d_obstacle(5, Representation::VectorBits, Dynamics::uniform_2d()),
        ] {
            for s in enumerate_states(&spec, None).unwrap() {
                let d = successor_positions(&spec, &s).unwrap();
                assert!(d.values().sum::<Ratio64>().is_one());
                for pos in d.keys() {
                    assert!(spec.position_open(*pos, None));
                }
            }
        }
    }

    #[test]
    fn enumeration_counts() {
        let one = GridDomainSpec::one_d(5, Representation::VectorBits);
        assert_eq!(enumerate_states(&one, None).unwrap().len(), 5);
        let two = GridDomainSpec::two_d(5, Representation::VectorBits, Dynamics::uniform_2d());
        assert_eq!(enumerate_states(&two, None).unwrap().len(), 25);
        let obs = GridDomainSpec::two_d_obstacle(5, Representation::VectorBits, Dynamics::uniform_2d());
        assert_eq!(enumerate_states(&obs, None).unwrap().len(), 24);

        let rb = GridDomainSpec::two_d_random_background(
            5,
            Representation::VectorBits,
            Dynamics::uniform_2d(),
            0.2,
        );
        assert!(enumerate_states(&rb, None).is_err());
        let mut fences = vec![false; 25];
        fences[3] = true;
        fences[10] = true;
        assert_eq!(enumerate_states(&rb, Some(&fences)).unwrap().len(), 23);
    }

    #[test]
    fn state_space_sizes() {
        let rb = GridDomainSpec::two_d_random_background(
            5,
            Representation::VectorBits,
            Dynamics::uniform_2d(),
            0.2,
        );
        // 25 · 2²⁴
        assert_eq!(rb.state_space_size(), 25 * (1u128 << 24));
        assert_eq!(recommended_dataset_size(&rb, 1e-6), Some(2097));
    }

    #[test]
    fn sampling_matches_oracle_frequencies() {
        let spec = GridDomainSpec::one_d(5, Representation::VectorBits);
        let s = GridState::at(2);
        let mut rng = seed::stream(42, "dataset");
        let trials = 200_000usize;
        let mut left = 0usize;
        for _ in 0..trials {
            let succ = sample_successor(&spec, &s, &mut rng).unwrap();
            if succ.pos == 1 {
                left += 1;
            } else {
                assert_eq!(succ.pos, 3);
            }
        }
        let p = left as f64 / trials as f64;
        let se = ((1.0 / 3.0) * (2.0 / 3.0) / trials as f64).sqrt();
        assert!((p - 1.0 / 3.0).abs() < 3.0 * se, "p̂ = {p}");
    }

    #[test]
    fn dataset_regeneration_is_identical() {
        let spec = GridDomainSpec::two_d(3, Representation::VectorBits, Dynamics::uniform_2d());
        let a = generate_dataset(&spec, 50, &mut seed::stream(9, "dataset"), StartStatePolicy::UniformValid)
            .unwrap();
        let b = generate_dataset(&spec, 50, &mut seed::stream(9, "dataset"), StartStatePolicy::UniformValid)
            .unwrap();
        assert_eq!(a.pairs, b.pairs);
    }

    #[test]
    fn invalid_states_are_rejected() {
        let spec = GridDomainSpec::one_d(5, Representation::VectorBits);
        assert!(matches!(
            successor_positions(&spec, &GridState::at(9)),
            Err(Error::InvalidState(_))
        ));
        let obs = GridDomainSpec::two_d_obstacle(5, Representation::VectorBits, Dynamics::uniform_2d());
        assert!(obs.check_state(&GridState::at(12)).is_err());
    }

    #[test]
    fn dynamics_must_sum_to_one() {
        let mut spec = GridDomainSpec::one_d(5, Representation::VectorBits);
        spec.dynamics = Dynamics::OneD { left: Ratio::new(1, 3), right: Ratio::new(1, 3) };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn dynamics_labels_are_exact() {
        assert_eq!(Dynamics::one_d_default().label(), "1/3:2/3");
        assert_eq!(Dynamics::russell_norvig().label(), "4/5:1/10:0:1/10");
        assert_eq!(Dynamics::uniform_2d().label(), "1/4:1/4:1/4:1/4");
    }

    #[test]
    fn state_key_hex_roundtrip() {
        let key = StateKey::from_slice(&[0.0, 0.5, 1.0]);
        let back = StateKey::from_hex(&key.hex()).unwrap();
        assert_eq!(key, back);
        assert_eq!(back.to_vec(), vec![0.0, 0.5, 1.0]);
    }
}
