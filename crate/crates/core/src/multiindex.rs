//! Multi-indices and the combinatorics built on them.
//!
//! A [`MultiIndex`] is a fixed-length tuple of non-negative exponents. It
//! orders mixed partial derivatives, names cross-moments, and indexes the
//! coefficients of a [`BinomialTuple`](crate::semiring::BinomialTuple).
//! [`Downset`] enumerates `{α : α ≤ ν}` in graded order and precomputes the
//! Leibniz product table used by the semiring.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuple of non-negative integer exponents.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        assert!(!exponents.is_empty(), "multi-index must have length >= 1");
        MultiIndex(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex::new(vec![0; dim])
    }

    /// Unit multi-index `e_k` of dimension `dim`.
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut e = vec![0; dim];
        e[k] = 1;
        MultiIndex::new(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// `|α| = α₁ + … + α_d`.
    pub fn length(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    fn check_dim(&self, other: &MultiIndex) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Componentwise `self ≤ other`.
    pub fn leq(&self, other: &MultiIndex) -> Result<bool> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).all(|(a, b)| a <= b))
    }

    /// Componentwise strict `self < other`: every component strictly smaller.
    pub fn lt(&self, other: &MultiIndex) -> Result<bool> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).all(|(a, b)| a < b))
    }

    /// `self ≤ other` and `self ≠ other`.
    pub fn proper_below(&self, other: &MultiIndex) -> Result<bool> {
        Ok(self.leq(other)? && self != other)
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Result<MultiIndex> {
        if !other.leq(self)? {
            return Err(Error::NotBelow {
                lower: other.clone(),
                upper: self.clone(),
            });
        }
        Ok(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn checked_add(&self, other: &MultiIndex) -> Result<MultiIndex> {
        self.check_dim(other)?;
        Ok(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    /// `α! = α₁!⋯α_d!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&e| (1..=e).map(f64::from).product::<f64>())
            .product()
    }

    /// Number of elements in the downset `{β : β ≤ self}`.
    pub fn downset_size(&self) -> usize {
        self.0.iter().map(|&e| e as usize + 1).product()
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex::new(v)
    }
}

impl<const N: usize> From<[u32; N]> for MultiIndex {
    fn from(v: [u32; N]) -> Self {
        MultiIndex::new(v.to_vec())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

impl std::str::FromStr for MultiIndex {
    type Err = Error;

    /// Parses the comma-separated form produced by `Display`, e.g. `"1,2"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: std::result::Result<Vec<u32>, _> =
            s.split(',').map(|p| p.trim().parse::<u32>()).collect();
        match parts {
            Ok(v) if !v.is_empty() => Ok(MultiIndex(v)),
            _ => Err(Error::Syntax {
                line: 0,
                column: 0,
                message: format!("invalid multi-index `{s}`"),
            }),
        }
    }
}

fn scalar_binom(n: u32, k: u32) -> Result<u64> {
    debug_assert!(k <= n);
    let k = k.min(n - k) as u64;
    let n = n as u64;
    let mut acc: u64 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul(n - i).ok_or(Error::Overflow)? / (i + 1);
    }
    Ok(acc)
}

/// `(α choose β) = Π (αᵢ choose βᵢ)`.
pub fn binom(alpha: &MultiIndex, beta: &MultiIndex) -> Result<u64> {
    if !beta.leq(alpha)? {
        return Err(Error::NotBelow {
            lower: beta.clone(),
            upper: alpha.clone(),
        });
    }
    alpha.0.iter().zip(&beta.0).try_fold(1u64, |acc, (&a, &b)| {
        acc.checked_mul(scalar_binom(a, b)?).ok_or(Error::Overflow)
    })
}

/// `α! / (β₁!⋯β_N!)` where the parts must sum to `α`.
pub fn multinom(alpha: &MultiIndex, parts: &[MultiIndex]) -> Result<u64> {
    let mut acc: u64 = 1;
    for d in 0..alpha.dim() {
        let mut running = 0u32;
        for part in parts {
            if part.dim() != alpha.dim() {
                return Err(Error::DimensionMismatch {
                    expected: alpha.dim(),
                    found: part.dim(),
                });
            }
            running += part.0[d];
            acc = acc
                .checked_mul(scalar_binom(running, part.0[d])?)
                .ok_or(Error::Overflow)?;
        }
        if running != alpha.0[d] {
            return Err(Error::NotAComposition(alpha.clone()));
        }
    }
    if parts.is_empty() && !alpha.is_zero() {
        return Err(Error::NotAComposition(alpha.clone()));
    }
    Ok(acc)
}

/// `z^γ = z₁^γ₁⋯z_d^γ_d` with `0⁰ = 1`.
pub fn power(z: &[f64], gamma: &MultiIndex) -> Result<f64> {
    if z.len() != gamma.dim() {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim(),
            found: z.len(),
        });
    }
    Ok(z.iter()
        .zip(&gamma.0)
        .map(|(&x, &e)| x.powi(e as i32))
        .product())
}

/// All `α ≤ ν`, ascending `|α|`, ties broken lexicographically.
pub fn enumerate_downset(nu: &MultiIndex) -> Vec<MultiIndex> {
    let mut all = Vec::with_capacity(nu.downset_size());
    let mut cur = vec![0u32; nu.dim()];
    loop {
        all.push(MultiIndex(cur.clone()));
        // odometer increment, last component fastest
        let mut k = nu.dim();
        loop {
            if k == 0 {
                all.sort_by(|a, b| a.length().cmp(&b.length()).then_with(|| a.cmp(b)));
                return all;
            }
            k -= 1;
            if cur[k] < nu.0[k] {
                cur[k] += 1;
                break;
            }
            cur[k] = 0;
        }
    }
}

/// Every ordered `n`-tuple of multi-indices summing to `alpha`, each once.
pub fn enumerate_compositions(alpha: &MultiIndex, n: usize) -> Vec<Vec<MultiIndex>> {
    assert!(n >= 1, "compositions need at least one part");
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(n);
    compositions_into(alpha, n, &mut prefix, &mut out);
    out
}

fn compositions_into(
    rest: &MultiIndex,
    n: usize,
    prefix: &mut Vec<MultiIndex>,
    out: &mut Vec<Vec<MultiIndex>>,
) {
    if n == 1 {
        let mut tuple = prefix.clone();
        tuple.push(rest.clone());
        out.push(tuple);
        return;
    }
    for first in enumerate_downset(rest) {
        let remainder = MultiIndex(rest.0.iter().zip(&first.0).map(|(r, f)| r - f).collect());
        prefix.push(first);
        compositions_into(&remainder, n - 1, prefix, out);
        prefix.pop();
    }
}

/// The downset of `ν` with O(1) position lookup and a precomputed Leibniz
/// product plan.
#[derive(Debug, Clone)]
pub struct Downset {
    order: MultiIndex,
    elems: Vec<MultiIndex>,
    /// mixed-radix rank -> position in `elems`
    rank_to_pos: Vec<usize>,
    strides: Vec<usize>,
    /// `(α, β, α − β, (α choose β))` for every `β ≤ α ≤ ν`, grouped by `α`.
    product_plan: Vec<(usize, usize, usize, f64)>,
}

impl Downset {
    pub fn new(order: MultiIndex) -> Self {
        let elems = enumerate_downset(&order);
        let mut strides = vec![1usize; order.dim()];
        for k in (0..order.dim().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (order.0[k + 1] as usize + 1);
        }
        let rank = |a: &MultiIndex| -> usize {
            a.0.iter()
                .zip(&strides)
                .map(|(&e, &s)| e as usize * s)
                .sum()
        };
        let mut rank_to_pos = vec![0; elems.len()];
        for (pos, a) in elems.iter().enumerate() {
            rank_to_pos[rank(a)] = pos;
        }
        let mut product_plan = Vec::new();
        for (pa, alpha) in elems.iter().enumerate() {
            for (pb, beta) in elems.iter().enumerate() {
                if beta.0.iter().zip(&alpha.0).all(|(b, a)| b <= a) {
                    let rest = alpha.checked_sub(beta).expect("beta <= alpha");
                    let coef = binom(alpha, beta).expect("small binomial") as f64;
                    product_plan.push((pa, pb, rank_to_pos[rank(&rest)], coef));
                }
            }
        }
        Downset {
            order,
            elems,
            rank_to_pos,
            strides,
            product_plan,
        }
    }

    pub fn order(&self) -> &MultiIndex {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elems(&self) -> &[MultiIndex] {
        &self.elems
    }

    /// Position of `alpha` in graded order, or `None` if `alpha ≰ ν`.
    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        if alpha.dim() != self.order.dim()
            || !alpha.0.iter().zip(&self.order.0).all(|(a, n)| a <= n)
        {
            return None;
        }
        let r: usize = alpha
            .0
            .iter()
            .zip(&self.strides)
            .map(|(&e, &s)| e as usize * s)
            .sum();
        Some(self.rank_to_pos[r])
    }

    pub(crate) fn product_plan(&self) -> &[(usize, usize, usize, f64)] {
        &self.product_plan
    }
}
