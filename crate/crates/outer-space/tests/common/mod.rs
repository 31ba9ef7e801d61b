#![allow(dead_code)]

use outer_space::freegroup::{reduce, Basis, Word};
use outer_space::graph::{lambda, MarkedGraph};
use outer_space::graphmap::canonical_map;
use outer_space::rational::{q, Q};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// A random basis of F_n reached by Nielsen moves, every word of length ≤ `max_len`.
pub fn nielsen_tuple(rng: &mut StdRng, n: usize, moves: usize, max_len: usize) -> Vec<Word> {
    let mut t: Vec<Word> = (0..n).map(|i| Basis::standard(n).generator(i)).collect();
    for _ in 0..moves {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let other = if rng.gen_bool(0.5) { t[j].clone() } else { t[j].inverse() };
        let cand = match rng.gen_range(0..3) {
            0 => reduce(&t[i].mul(&other)),
            1 => reduce(&other.mul(&t[i])),
            _ => t[i].inverse(),
        };
        if cand.len() <= max_len && !cand.is_empty() {
            t[i] = cand;
        }
    }
    t
}

fn lengths(rng: &mut StdRng, n: usize) -> Vec<Q> {
    let raw: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=6)).collect();
    let total: i64 = raw.iter().sum();
    raw.iter().map(|&r| q(r, total)).collect()
}

/// Two roses, x with petals reading a random Nielsen tuple, y standard.
pub fn random_rose_pair(rng: &mut StdRng) -> (MarkedGraph, MarkedGraph) {
    let n = rng.gen_range(2..=3);
    let b = Basis::standard(n);
    loop {
        let moves = rng.gen_range(1..=6);
        let t = nielsen_tuple(rng, n, moves, 4);
        if t.iter().all(|w| w.len() == 1) {
            continue;
        }
        let words: Vec<String> = t.iter().map(|w| b.format(w)).collect();
        let lx = lengths(rng, n);
        let ly = lengths(rng, n);
        let xp: Vec<(&str, Q)> = words.iter().map(|w| w.as_str()).zip(lx).collect();
        let yp: Vec<(&str, Q)> = b.names().iter().map(|w| w.as_str()).zip(ly).collect();
        return (MarkedGraph::rose(&b, &xp).unwrap(), MarkedGraph::rose(&b, &yp).unwrap());
    }
}

/// Random pairs whose canonical map realizes λ(x,y), so folding from it is
/// a geodesic.
pub fn optimal_pairs(seed: u64, count: usize) -> Vec<(MarkedGraph, MarkedGraph)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let (x, y) = random_rose_pair(&mut rng);
        let m = canonical_map(&x, &y).unwrap();
        let l = lambda(&x, &y).unwrap();
        if m.max_stretch() == l && l > q(1, 1) {
            out.push((x, y));
        }
    }
    out
}

/// Optimal pairs whose canonical map stretches every edge by λ.
pub fn full_tension_pairs(seed: u64, count: usize) -> Vec<(MarkedGraph, MarkedGraph)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let (x, y) = random_rose_pair(&mut rng);
        let m = canonical_map(&x, &y).unwrap();
        let l = lambda(&x, &y).unwrap();
        if m.max_stretch() == l && l > q(1, 1) && m.stretches().iter().all(|s| *s == l) {
            out.push((x, y));
        }
    }
    out
}
