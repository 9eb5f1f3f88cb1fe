//! Unconditional cross-moments `m^(α)_i = Σ_{π ∈ Ω_i} p(π) X(π)^α`.
//!
//! Differentiating the partition-function equations
//! `Z_i = Σ_j μ(A_i → B_{i,j}) Π_k Z_k^{r_k}` at `t = 0` gives, for every
//! `α ≠ 0`, the linear system `m^(α) = M m^(α) + c^(α)` where `M` is the
//! expectation matrix and `c^(α)` depends only on moments of lower order.
//! Orders are processed in graded sequence and `I − M` is factored once.

use std::collections::HashMap;
use std::sync::Arc;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grammar::{
    assign_features, check_consistency, expectation_matrix, require_valid, FeatureSpec, Grammar,
};
use crate::linalg::LinearSolver;
use crate::multiindex::{binom, enumerate_compositions, multinom, power, Downset, MultiIndex};
use crate::semiring::BinomialTuple;

/// `m^(α)` for `α` in a prefix of the graded downset of `ν`.
#[derive(Debug, Clone)]
pub struct MomentTable {
    downset: Arc<Downset>,
    nonterminals: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl MomentTable {
    /// A table holding only `m^(0) = 1`.
    pub fn new(order: MultiIndex, nonterminals: Vec<String>) -> Self {
        let values = vec![vec![1.0; nonterminals.len()]];
        MomentTable {
            downset: Arc::new(Downset::new(order)),
            nonterminals,
            values,
        }
    }

    pub fn order(&self) -> &MultiIndex {
        self.downset.order()
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn is_complete(&self) -> bool {
        self.values.len() == self.downset.len()
    }

    /// Number of orders populated so far.
    pub fn populated(&self) -> usize {
        self.values.len()
    }

    /// The next order to be computed, if any.
    pub fn next_order(&self) -> Option<&MultiIndex> {
        self.downset.elems().get(self.values.len())
    }

    /// `m^(α)` over all nonterminals.
    pub fn get(&self, alpha: &MultiIndex) -> Option<&[f64]> {
        self.downset
            .position(alpha)
            .and_then(|p| self.values.get(p))
            .map(Vec::as_slice)
    }

    /// Appends `m^(α)` for [`next_order`](Self::next_order).
    pub fn push(&mut self, values: Vec<f64>) -> Result<()> {
        if self.is_complete() {
            return Err(Error::DimensionMismatch {
                expected: self.downset.len(),
                found: self.downset.len() + 1,
            });
        }
        if values.len() != self.nonterminals.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nonterminals.len(),
                found: values.len(),
            });
        }
        self.values.push(values);
        Ok(())
    }

    /// Keeps only the first `k` orders (at least `m^(0)`).
    pub fn truncated(&self, k: usize) -> MomentTable {
        let mut t = self.clone();
        t.values.truncate(k.max(1));
        t
    }

    /// `(α, m^(α))` pairs in graded order.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &[f64])> + '_ {
        self.downset
            .elems()
            .iter()
            .zip(self.values.iter().map(Vec::as_slice))
    }
}

impl PartialEq for MomentTable {
    fn eq(&self, other: &Self) -> bool {
        self.order() == other.order()
            && self.nonterminals == other.nonterminals
            && self.values == other.values
    }
}

impl Serialize for MomentTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct Moments<'a>(&'a MomentTable);
        impl Serialize for Moments<'_> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.values.len()))?;
                for (alpha, v) in self.0.iter() {
                    map.serialize_entry(&alpha.to_string(), v)?;
                }
                map.end()
            }
        }
        let mut map = serializer.serialize_map(Some(3))?;
        map.serialize_entry("nu", self.order())?;
        map.serialize_entry("nonterminals", &self.nonterminals)?;
        map.serialize_entry("moments", &Moments(self))?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for MomentTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            nu: MultiIndex,
            nonterminals: Vec<String>,
            moments: HashMap<String, Vec<f64>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let mut table = MomentTable::new(raw.nu, raw.nonterminals);
        let mut by_order = HashMap::new();
        for (k, v) in raw.moments {
            let alpha: MultiIndex = k.parse().map_err(D::Error::custom)?;
            by_order.insert(alpha, v);
        }
        let elems = table.downset.elems().to_vec();
        table.values.clear();
        for alpha in &elems {
            match by_order.remove(alpha) {
                Some(v) if v.len() == table.nonterminals.len() => table.values.push(v),
                Some(_) => return Err(D::Error::custom(format!("wrong length at {alpha}"))),
                None => break,
            }
        }
        if table.values.is_empty() || !by_order.is_empty() {
            return Err(D::Error::custom(
                "moments must be a graded prefix of the downset",
            ));
        }
        Ok(table)
    }
}

fn check_dim(g: &Grammar, a: &MultiIndex) -> Result<()> {
    if a.dim() != g.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: g.feature_dim(),
            found: a.dim(),
        });
    }
    Ok(())
}

fn lower_moment<'a>(partial: &'a MomentTable, beta: &MultiIndex) -> Result<&'a [f64]> {
    partial
        .get(beta)
        .ok_or_else(|| Error::MissingMoment(beta.clone()))
}

/// Sum of rule probabilities per premise, the formal value of `c^(0)`.
fn grade_zero_c(g: &Grammar) -> Vec<f64> {
    (0..g.num_nonterminals())
        .map(|i| g.rules_of(i).map(|r| r.probability).sum())
        .collect()
}

/// `c^(α)` via the binomial semiring.
///
/// Each `Z_k` is represented by the tuple of its known moments over
/// `{β ≤ α}` with the `α` slot zeroed; the `α` component of
/// `Σ_j lift(p, Y) ⊗ Π_k Z̃_k^{r_k}` then excludes exactly the terms that are
/// linear in `m^(α)`, which are the ones `M m^(α)` accounts for.
pub fn compute_c(g: &Grammar, partial: &MomentTable, a: &MultiIndex) -> Result<Vec<f64>> {
    check_dim(g, a)?;
    if a.is_zero() {
        return Ok(grade_zero_c(g));
    }
    let ds = Arc::new(Downset::new(a.clone()));
    let top = ds.len() - 1;
    let n = g.num_nonterminals();

    let mut z_tilde: Vec<Vec<f64>> = vec![vec![0.0; ds.len()]; n];
    for (pos, beta) in ds.elems().iter().enumerate().take(top) {
        let m = lower_moment(partial, beta)?;
        for k in 0..n {
            z_tilde[k][pos] = m[k];
        }
    }
    let z_tilde = z_tilde
        .into_iter()
        .map(|c| BinomialTuple::from_coeffs(&ds, c))
        .collect::<Result<Vec<_>>>()?;

    let mut powers: HashMap<(usize, u32), BinomialTuple> = HashMap::new();
    let mut c = vec![0.0; n];
    for rule in g.rules() {
        let mut acc = BinomialTuple::lift_in(&ds, rule.probability, &rule.features)?;
        for (k, &r) in rule.nonterminal_counts.iter().enumerate() {
            if r > 0 {
                let zp = powers.entry((k, r)).or_insert_with(|| z_tilde[k].pow(r));
                acc = acc.mul(zp)?;
            }
        }
        c[rule.premise] += acc.coeffs()[top];
    }
    Ok(c)
}

/// `Σ_{δ₁+…+δ_r = γ, each δ admissible} (γ; δ) Π_l m^(δ_l)_k`.
///
/// `r = 0` is the empty product: 1 when `γ = 0`, else 0.
fn power_derivative(
    partial: &MomentTable,
    k: usize,
    r: u32,
    gamma: &MultiIndex,
    admissible: impl Fn(&MultiIndex) -> bool,
) -> Result<f64> {
    if r == 0 {
        return Ok(if gamma.is_zero() { 1.0 } else { 0.0 });
    }
    let mut sum = 0.0;
    for parts in enumerate_compositions(gamma, r as usize) {
        if !parts.iter().all(&admissible) {
            continue;
        }
        let mut term = multinom(gamma, &parts)? as f64;
        for delta in &parts {
            term *= lower_moment(partial, delta)?[k];
        }
        sum += term;
    }
    Ok(sum)
}

/// `H_{i,j}(γ₁,…,γ_{|N|})` without the outer multinomial factor.
fn product_derivative(partial: &MomentTable, counts: &[u32], gammas: &[MultiIndex]) -> Result<f64> {
    let mut prod = 1.0;
    for (k, gamma) in gammas.iter().enumerate() {
        prod *= power_derivative(partial, k, counts[k], gamma, |_| true)?;
        if prod == 0.0 {
            break;
        }
    }
    Ok(prod)
}

/// `c^(α)` evaluated term by term from the three-sum expansion:
///
/// ```text
/// c_i = Σ_j p Σ_n Σ_{δ₁+…+δ_{r_n} = α, δ_l ≠ α} (α; δ) Π_l m^(δ_l)_n
///     + Σ_j p Σ_{γ₁+…+γ_{|N|} = α, γ_k ≠ α} H_{i,j}(γ)
///     + Σ_j Σ_{β ≤ α, β ≠ α} Q_{i,j}(α, β)
/// ```
///
/// Kept as an independent cross-check of [`compute_c`].
pub fn compute_c_literal(g: &Grammar, partial: &MomentTable, a: &MultiIndex) -> Result<Vec<f64>> {
    check_dim(g, a)?;
    if a.is_zero() {
        return Ok(grade_zero_c(g));
    }
    let n = g.num_nonterminals();
    let gamma_compositions = enumerate_compositions(a, n);
    let lower: Vec<MultiIndex> = crate::multiindex::enumerate_downset(a)
        .into_iter()
        .filter(|b| b != a)
        .collect();
    let beta_compositions: Vec<Vec<Vec<MultiIndex>>> =
        lower.iter().map(|b| enumerate_compositions(b, n)).collect();

    let mut c = vec![0.0; n];
    for rule in g.rules() {
        let p = rule.probability;
        let counts = &rule.nonterminal_counts;

        // terms with γ_n = α for a single n, minus the linear m^(α)_n part
        let mut first = 0.0;
        for (k, &r) in counts.iter().enumerate() {
            if r > 0 {
                first += power_derivative(partial, k, r, a, |d| d != a)?;
            }
        }

        // compositions of α across nonterminals with no part equal to α
        let mut second = 0.0;
        for gammas in &gamma_compositions {
            if gammas.iter().any(|gm| gm == a) {
                continue;
            }
            let h = product_derivative(partial, counts, gammas)?;
            if h != 0.0 {
                second += multinom(a, gammas)? as f64 * h;
            }
        }

        // Q_{i,j}(α, β) for β ≤ α, β ≠ α
        let mut third = 0.0;
        for (beta, comps) in lower.iter().zip(&beta_compositions) {
            let rest = a.checked_sub(beta)?;
            let mut d_beta = 0.0;
            for gammas in comps {
                let h = product_derivative(partial, counts, gammas)?;
                if h != 0.0 {
                    d_beta += multinom(beta, gammas)? as f64 * h;
                }
            }
            third += binom(a, beta)? as f64 * p * power(&rule.features, &rest)? * d_beta;
        }

        c[rule.premise] += p * first + p * second + third;
    }
    Ok(c)
}

/// The pieces of `c^(2) = CR + Σ_j Q_{i,j}(2,0) + Σ_j Q_{i,j}(2,1)` for a
/// scalar feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderTerms {
    pub cr: Vec<f64>,
    pub q20: Vec<f64>,
    pub q21: Vec<f64>,
    pub c: Vec<f64>,
}

impl SecondOrderTerms {
    /// `CR_i + 2 m^(1)_i − 1`, valid when every rule has `Y = 1`.
    pub fn derivation_length_form(&self, first: &[f64]) -> Vec<f64> {
        self.cr
            .iter()
            .zip(first)
            .map(|(cr, m1)| cr + 2.0 * m1 - 1.0)
            .collect()
    }
}

/// Second-order `c^(2)` from the specialized scalar formulas, given
/// `first = m^(1)`.
pub fn second_order_c_scalar(g: &Grammar, first: &[f64]) -> Result<SecondOrderTerms> {
    if g.feature_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: g.feature_dim(),
        });
    }
    let n = g.num_nonterminals();
    if first.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: first.len(),
        });
    }
    let mut cr = vec![0.0; n];
    let mut q20 = vec![0.0; n];
    let mut q21 = vec![0.0; n];
    for rule in g.rules() {
        let p = rule.probability;
        let y = rule.features[0];
        let r: Vec<f64> = rule
            .nonterminal_counts
            .iter()
            .map(|&c| f64::from(c))
            .collect();
        let linear: f64 = r.iter().zip(first).map(|(r, m)| r * m).sum();
        let diag: f64 = r.iter().zip(first).map(|(r, m)| r * m * m).sum();
        let i = rule.premise;
        cr[i] += p * (linear * linear - diag);
        q20[i] += p * y * y;
        q21[i] += 2.0 * p * y * linear;
    }
    let c = (0..n).map(|i| cr[i] + q20[i] + q21[i]).collect();
    Ok(SecondOrderTerms { cr, q20, q21, c })
}

/// Factors `I − M` after validating the grammar and checking `ρ(M) < 1`.
pub fn moment_solver(g: &Grammar) -> Result<LinearSolver> {
    require_valid(g)?;
    check_consistency(g)?;
    let m = expectation_matrix(g);
    let solver = LinearSolver::for_expectation_matrix(m.entries(), m.size())?;
    solver.require_well_conditioned()?;
    Ok(solver)
}

/// All cross-moments `m^(α)`, `α ≤ ν`, for every nonterminal.
pub fn compute_moments(g: &Grammar, nu: &MultiIndex) -> Result<MomentTable> {
    check_dim(g, nu)?;
    let solver = moment_solver(g)?;
    let mut table = MomentTable::new(nu.clone(), g.nonterminals().to_vec());
    while let Some(alpha) = table.next_order().cloned() {
        let c = compute_c(g, &table, &alpha)?;
        table.push(solver.solve(&c)?)?;
    }
    Ok(table)
}

/// Derivational entropy `−Σ_{π ∈ Ω_i} p(π) ln p(π)` for every nonterminal,
/// in nats.
pub fn derivational_entropy(g: &Grammar) -> Result<Vec<f64>> {
    let g = assign_features(g, &[FeatureSpec::Surprisal])?;
    let table = compute_moments(&g, &MultiIndex::new(vec![1]))?;
    Ok(table
        .get(&MultiIndex::new(vec![1]))
        .expect("complete table")
        .to_vec())
}
