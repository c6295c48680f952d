#![allow(dead_code)]

use dcgrid::model::MicrogridModel;
use dcgrid::plant::{DgRatings, ElectricalNetwork, Line};
use dcgrid::topology::{CommGraph, NodePartition};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tree plus `extra` random chords, as 0-based pairs.
fn connected_pairs(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..extra {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let key = (i.min(j), i.max(j));
        if i != j && !pairs.iter().any(|&(a, b)| (a.min(b), a.max(b)) == key) {
            pairs.push(key);
        }
    }
    pairs
}

/// Connected network with every bus loaded unless `allow_unloaded`.
pub fn network(rng: &mut ChaCha8Rng, n: usize, allow_unloaded: bool) -> ElectricalNetwork {
    let extra = rng.random_range(0..=n);
    let lines = connected_pairs(rng, n, extra)
        .into_iter()
        .map(|(from, to)| Line {
            from,
            to,
            resistance: rng.random_range(0.5..5.0),
            inductance: rng.random_range(10e-6..50e-6),
        })
        .collect();
    let mut loads: Vec<f64> = (0..n).map(|_| 1.0 / rng.random_range(10.0..60.0)).collect();
    if allow_unloaded {
        for g in loads.iter_mut() {
            if rng.random_bool(0.3) {
                *g = 0.0;
            }
        }
        if loads.iter().all(|&g| g == 0.0) {
            loads[0] = 0.05;
        }
    }
    let lt = (0..n).map(|_| rng.random_range(1.5e-3..3e-3)).collect();
    let ct = (0..n).map(|_| rng.random_range(2e-3..3.5e-3)).collect();
    ElectricalNetwork::new(lines, loads, lt, ct).unwrap()
}

pub fn ratings(rng: &mut ChaCha8Rng, n: usize) -> DgRatings {
    let cap = (0..n).map(|_| rng.random_range(10.0..50.0)).collect();
    DgRatings::with_rating_inverse_droop(cap, 380.0, 0.05).unwrap()
}

pub fn graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> CommGraph {
    let extra = (density * (n * n) as f64) as usize;
    let edges: Vec<_> = connected_pairs(rng, n, extra)
        .into_iter()
        .map(|(i, j)| (i, j, rng.random_range(5.0..30.0)))
        .collect();
    CommGraph::from_edges(n, &edges).unwrap()
}

pub fn partition(rng: &mut ChaCha8Rng, n: usize) -> NodePartition {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let m = rng.random_range(1..=n);
    NodePartition::new(n, &ids[..m]).unwrap()
}

pub fn model(rng: &mut ChaCha8Rng, n: usize, critical: bool) -> MicrogridModel {
    let net = network(rng, n, false);
    let r = ratings(rng, n);
    let g = graph(rng, n, 0.5);
    let p = if critical { partition(rng, n) } else { NodePartition::all_critical(n) };
    MicrogridModel::new(net, r, g, p).unwrap()
}
