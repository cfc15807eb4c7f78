//! The exact successor distributions, cross-checked three ways: an
//! independent re-derivation of the movement rules in this file, Monte
//! Carlo frequencies from the transition sampler, and the encoder/decoder
//! round trip over every reachable state.

use std::collections::BTreeMap;

use rand::Rng;

use sgan::domains::{
    decode_exact, encode, enumerate_states, is_exact_valid_encoding, random_state,
    sample_transition, true_next_distribution, Dynamics, GridDomainSpec, GridState,
    Representation, StateKey,
};
use sgan::seed;

fn enumerable_specs() -> Vec<GridDomainSpec> {
    let mut out = Vec::new();
    for repr in [Representation::VectorBits, Representation::ImageBlocks] {
        out.push(GridDomainSpec::one_d(5, repr));
        out.push(GridDomainSpec::one_d(9, repr));
        out.push(GridDomainSpec::two_d(5, repr, Dynamics::uniform_2d()));
        out.push(GridDomainSpec::two_d(4, repr, Dynamics::russell_norvig()));
        out.push(GridDomainSpec::two_d_obstacle(5, repr, Dynamics::russell_norvig()));
        out.push(GridDomainSpec::two_d_obstacle(3, repr, Dynamics::uniform_2d()));
    }
    out
}

/// Movement rules restated from scratch: each direction tries its target
/// cell; leaving the grid, entering the center obstacle, or entering a
/// fenced cell means staying put. Probabilities stay exact rationals.
fn rederived_successors(spec: &GridDomainSpec, s: &GridState) -> BTreeMap<usize, (i64, i64)> {
    let n = spec.size as isize;
    let probs = spec.dynamics.probabilities();
    let pos = s.pos as isize;
    let candidates: Vec<(isize, isize)> = match spec.dynamics {
        Dynamics::OneD { .. } => vec![(0, -1), (0, 1)],
        Dynamics::TwoD { .. } => vec![(-1, 0), (0, 1), (1, 0), (0, -1)],
    };
    let (row, col) = if spec.kind.is_two_d() { (pos / n, pos % n) } else { (0, pos) };
    let obstacle = spec.obstacle_cell().map(|c| c as isize);
    let mut out: BTreeMap<usize, (i64, i64)> = BTreeMap::new();
    for ((dr, dc), p) in candidates.into_iter().zip(probs) {
        if *p.numer() == 0 {
            continue;
        }
        let (rr, cc) = (row + dr, col + dc);
        let target = if spec.kind.is_two_d() { rr * n + cc } else { cc };
        let off_grid = if spec.kind.is_two_d() {
            rr < 0 || cc < 0 || rr >= n || cc >= n
        } else {
            cc < 0 || cc >= n
        };
        let fenced = s
            .fences
            .as_ref()
            .map_or(false, |f| !off_grid && f[target as usize]);
        let blocked = off_grid || Some(target) == obstacle || fenced;
        let dest = if blocked { s.pos } else { target as usize };
        let e = out.entry(dest).or_insert((0, 1));
        // exact rational addition a/b + c/d
        let (a, b) = *e;
        let (c, d) = (*p.numer(), *p.denom());
        let num = a * d + c * b;
        let den = b * d;
        let g = gcd(num.abs().max(1), den);
        *e = (num / g, den / g);
    }
    out
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

#[test]
fn successor_distributions_match_an_independent_rederivation() {
    for spec in enumerable_specs() {
        for state in enumerate_states(&spec, None).unwrap() {
            let expected = rederived_successors(&spec, &state);
            let got = true_next_distribution(&spec, &state).unwrap();
            assert_eq!(
                got.support_len(),
                expected.len(),
                "support mismatch at pos {} in {}",
                state.pos,
                spec.kind.name()
            );
            for (dest, (num, den)) in &expected {
                let succ = GridState { pos: *dest, fences: state.fences.clone() };
                let key = StateKey::from_slice(&encode(&spec, &succ));
                let p = *num as f64 / *den as f64;
                assert!(
                    (got.prob(&key) - p).abs() < 1e-12,
                    "P(pos {} -> {}) = {} want {}",
                    state.pos,
                    dest,
                    got.prob(&key),
                    p
                );
            }
        }
    }
}

#[test]
fn sampler_frequencies_match_the_exact_distribution() {
    let specs = [
        GridDomainSpec::one_d(5, Representation::VectorBits),
        GridDomainSpec::two_d_obstacle(
            5,
            Representation::VectorBits,
            Dynamics::russell_norvig(),
        ),
    ];
    for spec in specs {
        let states = enumerate_states(&spec, None).unwrap();
        let mut rng = seed::stream(23, &format!("sampler-freq.{}", spec.kind.name()));
        for state in states.iter().step_by(3) {
            let truth = true_next_distribution(&spec, state).unwrap();
            let trials = 20_000;
            let mut counts: BTreeMap<StateKey, u64> = BTreeMap::new();
            for _ in 0..trials {
                let pair = sample_transition(&spec, state, &mut rng).unwrap();
                *counts.entry(StateKey::from_slice(&pair.xr)).or_insert(0) += 1;
            }
            for (key, observed) in &counts {
                let p = truth.prob(key);
                assert!(p > 0.0, "sampler produced a zero-probability successor");
                let freq = *observed as f64 / trials as f64;
                assert!(
                    (freq - p).abs() < 0.02,
                    "freq {freq:.4} vs exact {p:.4} at pos {}",
                    state.pos
                );
            }
        }
    }
}

#[test]
fn transitions_preserve_the_background_and_land_on_valid_successors() {
    let spec = GridDomainSpec::two_d_random_background(
        5,
        Representation::VectorBits,
        Dynamics::uniform_2d(),
        0.2,
    );
    let mut rng = seed::stream(29, "background-transitions");
    for _ in 0..200 {
        let state = random_state(&spec, &mut rng).unwrap();
        let pair = sample_transition(&spec, &state, &mut rng).unwrap();
        let before = decode_exact(&spec, &pair.xbar).unwrap();
        let after = decode_exact(&spec, &pair.xr).unwrap();
        assert_eq!(before.fences, after.fences, "background changed inside a transition");
        assert_eq!(before.pos, state.pos);
        let truth = true_next_distribution(&spec, &state).unwrap();
        assert!(truth.prob(&StateKey::from_slice(&pair.xr)) > 0.0);
    }
}

#[test]
fn every_enumerable_state_round_trips_through_the_encoder() {
    for spec in enumerable_specs() {
        for state in enumerate_states(&spec, None).unwrap() {
            let v = encode(&spec, &state);
            assert_eq!(v.len(), spec.encoded_dim());
            assert!(is_exact_valid_encoding(&spec, &v));
            let back = decode_exact(&spec, &v).unwrap();
            assert_eq!(back, state);
        }
    }
}

#[test]
fn random_background_states_round_trip_through_the_encoder() {
    let spec = GridDomainSpec::two_d_random_background(
        4,
        Representation::ImageBlocks,
        Dynamics::uniform_2d(),
        0.3,
    );
    let mut rng = seed::stream(31, "background-roundtrip");
    for _ in 0..200 {
        let state = random_state(&spec, &mut rng).unwrap();
        let v = encode(&spec, &state);
        assert!(is_exact_valid_encoding(&spec, &v));
        assert_eq!(decode_exact(&spec, &v).unwrap(), state);
        // A perturbed encoding must not decode exactly.
        let mut broken = v.clone();
        let at = rng.gen_range(0..broken.len());
        broken[at] += 0.25;
        assert!(decode_exact(&spec, &broken).is_err());
    }
}
