#![allow(dead_code)]

use cardiowatch::bnc::{Network, Node};
use cardiowatch::synth::{generate, Morphology, SyntheticRecord, SyntheticSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn morphology() -> impl Strategy<Value = Morphology> {
    prop_oneof![
        Just(Morphology::Normal),
        Just(Morphology::Pvc),
        Just(Morphology::Pac),
        Just(Morphology::Mi),
    ]
}

/// Short desk-scale records: 10 to 30 beats, noise up to 0.05 mV.
pub fn record_spec() -> impl Strategy<Value = SyntheticSpec> {
    (morphology(), 10usize..30, 60.0f64..85.0, 0.0f64..0.05, any::<u64>()).prop_map(|(m, beats, bpm, noise, seed)| {
        SyntheticSpec {
            beats,
            bpm,
            morphology: m,
            noise_sigma: noise,
            seed,
            ..Default::default()
        }
    })
}

pub fn synth(spec: &SyntheticSpec) -> SyntheticRecord {
    generate(spec)
}

pub fn lead(s: &SyntheticRecord) -> &[f64] {
    &s.record.signals[0]
}

/// A random DAG over `n` binary nodes: nodes are placed in a random order
/// and each earlier node is a parent of a later one with probability 1/2.
pub fn random_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4usize);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut parents = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.5) {
                parents[order[b]].push(order[a]);
            }
        }
    }
    let nodes = parents
        .into_iter()
        .enumerate()
        .map(|(i, ps)| {
            let rows = 1usize << ps.len();
            let cpt = (0..rows)
                .flat_map(|_| {
                    let p: f64 = rng.random_range(0.01..0.99);
                    [p, 1.0 - p]
                })
                .collect();
            Node {
                name: format!("x{i}"),
                cardinality: 2,
                parents: ps,
                cpt,
            }
        })
        .collect();
    Network::new(nodes).unwrap()
}

/// Brute force: enumerate every assignment, multiply each node's table
/// entry, and condition on the evidence by summation.
pub fn full_joint_posterior(net: &Network, query: usize, evidence: &[usize]) -> [f64; 2] {
    let nodes = net.nodes();
    let n = nodes.len();
    let mut mass = [0.0; 2];
    for bits in 0..(1usize << n) {
        let a: Vec<usize> = (0..n).map(|i| (bits >> i) & 1).collect();
        if (0..n).any(|i| i != query && a[i] != evidence[i]) {
            continue;
        }
        let mut joint = 1.0;
        for (i, node) in nodes.iter().enumerate() {
            let mut row = 0;
            for &p in &node.parents {
                row = row * 2 + a[p];
            }
            joint *= node.cpt[row * 2 + a[i]];
        }
        mass[a[query]] += joint;
    }
    let z = mass[0] + mass[1];
    [mass[0] / z, mass[1] / z]
}

/// Sorted-half oracle written out longhand.
pub fn hinge_oracle(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let (lower, upper) = if n.is_multiple_of(2) {
        (v[..n / 2].to_vec(), v[n / 2..].to_vec())
    } else {
        (v[..=n / 2].to_vec(), v[n / 2..].to_vec())
    };
    let med = |h: &[f64]| {
        let m = h.len();
        if m.is_multiple_of(2) {
            (h[m / 2 - 1] + h[m / 2]) / 2.0
        } else {
            h[m / 2]
        }
    };
    (med(&lower), med(&upper))
}
