#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scfg_moments::inside::check_cycle_free;
use scfg_moments::{check_consistency, validate, Grammar, GrammarBuilder};

pub const NAMES: [&str; 4] = ["S", "A", "B", "C"];
pub const TERMINALS: [&str; 2] = ["a", "b"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_nonterminals: usize,
    pub max_rules: usize,
    pub max_rhs: usize,
    pub feature_dim: usize,
    pub feature_range: f64,
    pub max_rho: f64,
    /// Reject epsilon rules and unit cycles.
    pub cycle_free: bool,
}

impl Shape {
    /// `|N| ≤ 4`, rhs length ≤ 3, `ρ(M) ≤ max_rho`, `D = 2`, `Y ∈ [−2, 2]`.
    pub fn suite(max_rho: f64) -> Self {
        Shape {
            max_nonterminals: 4,
            max_rules: 4,
            max_rhs: 3,
            feature_dim: 2,
            feature_range: 2.0,
            max_rho,
            cycle_free: false,
        }
    }

    pub fn cycle_free() -> Self {
        Shape {
            max_nonterminals: 3,
            max_rules: 4,
            max_rhs: 3,
            feature_dim: 2,
            feature_range: 2.0,
            max_rho: 0.9,
            cycle_free: true,
        }
    }
}

fn try_grammar<R: Rng>(rng: &mut R, shape: &Shape) -> Option<Grammar> {
    let n = rng.gen_range(1..=shape.max_nonterminals);
    let names = &NAMES[..n];
    let mut b = GrammarBuilder::new(&TERMINALS, names, "S").feature_dim(shape.feature_dim);
    for premise in names {
        let k = rng.gen_range(1..=shape.max_rules);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in weights {
            let len = rng.gen_range(1..=shape.max_rhs);
            let rhs: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        *TERMINALS.choose(rng).unwrap()
                    } else {
                        *names.choose(rng).unwrap()
                    }
                })
                .collect();
            let y: Vec<f64> = (0..shape.feature_dim)
                .map(|_| rng.gen_range(-shape.feature_range..=shape.feature_range))
                .collect();
            // duplicate rhs for one premise: start over
            b.rule(premise, &rhs, w / total, Some(y)).ok()?;
        }
    }
    let g = b.build().ok()?;
    if !validate(&g).is_valid() {
        return None;
    }
    let rho = check_consistency(&g).ok()?.spectral_radius;
    if rho > shape.max_rho {
        return None;
    }
    if shape.cycle_free && check_cycle_free(&g).is_err() {
        return None;
    }
    Some(g)
}

pub fn random_grammar<R: Rng>(rng: &mut R, shape: &Shape) -> Grammar {
    loop {
        if let Some(g) = try_grammar(rng, shape) {
            return g;
        }
    }
}

pub fn suite(seed: u64, count: usize, shape: &Shape) -> Vec<Grammar> {
    let mut r = rng(seed);
    (0..count).map(|_| random_grammar(&mut r, shape)).collect()
}

/// Every string over `{a, b}` of length `0..=max_len`, as terminal ids.
pub fn all_words(max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for t in 0..TERMINALS.len() {
                let mut v: Vec<usize> = w.clone();
                v.push(t);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs().max(y.abs())))
        .fold(0.0, f64::max)
}
