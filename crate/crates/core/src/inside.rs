//! Conditional cross-moments `m^(α)_{i|u} = Σ_{π ∈ Ω_i(u)} p(π) X(π)^α`.
//!
//! The inside algorithm is run over the binomial semiring: every rule is
//! lifted to `(p Y^α)_{α ≤ ν}` and the inside weight of `(A_i, span)` is the
//! `⊕` over rules and split points of `⊗` products. Cells are computed on
//! demand from the root query and memoized.
//!
//! The grammar must be cycle-free: no unit-rule cycles, and no nullable
//! nonterminal except a start symbol with an explicit `eps` rule that never
//! occurs on a right-hand side.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grammar::{
    assign_features, nullable_nonterminals, require_valid, unit_cycle, FeatureSpec, Grammar, Symbol,
};
use crate::multiindex::{binom, enumerate_compositions, multinom, power, Downset, MultiIndex};
use crate::semiring::BinomialTuple;

/// Checks the structural preconditions of the inside recursion.
pub fn check_cycle_free(g: &Grammar) -> Result<()> {
    require_valid(g)?;
    if let Some(cycle) = unit_cycle(g) {
        return Err(Error::Cyclic(format!(
            "unit-rule cycle {}",
            cycle.join(" -> ")
        )));
    }
    let nullable = nullable_nonterminals(g);
    let start_on_rhs = g
        .rules()
        .iter()
        .any(|r| r.rhs_nonterminals().any(|k| k == g.start()));
    for (i, &is_nullable) in nullable.iter().enumerate() {
        if is_nullable && (i != g.start() || start_on_rhs) {
            return Err(Error::Cyclic(format!(
                "`{}` derives the empty string",
                g.nonterminals()[i]
            )));
        }
    }
    Ok(())
}

fn check_word(g: &Grammar, word: &[usize]) -> Result<()> {
    match word.iter().find(|&&t| t >= g.terminals().len()) {
        Some(t) => Err(Error::UnknownTerminal(format!("#{t}"))),
        None => Ok(()),
    }
}

fn check_order(g: &Grammar, nu: &MultiIndex) -> Result<()> {
    if nu.dim() != g.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: g.feature_dim(),
            found: nu.dim(),
        });
    }
    Ok(())
}

/// Memoized inside weights `σ_i(u[lo..hi])` over the binomial semiring.
#[derive(Debug)]
pub struct InsideTable<'g> {
    grammar: &'g Grammar,
    word: Vec<usize>,
    downset: Arc<Downset>,
    lifted: Vec<BinomialTuple>,
    cells: HashMap<(usize, usize, usize), BinomialTuple>,
}

impl<'g> InsideTable<'g> {
    /// An empty table; cells are filled by [`sigma`](Self::sigma).
    pub fn new(g: &'g Grammar, word: &[usize], nu: &MultiIndex) -> Result<Self> {
        check_order(g, nu)?;
        check_word(g, word)?;
        check_cycle_free(g)?;
        let downset = Arc::new(Downset::new(nu.clone()));
        let lifted = g
            .rules()
            .iter()
            .map(|r| BinomialTuple::lift_in(&downset, r.probability, &r.features))
            .collect::<Result<Vec<_>>>()?;
        Ok(InsideTable {
            grammar: g,
            word: word.to_vec(),
            downset,
            lifted,
            cells: HashMap::new(),
        })
    }

    pub fn word(&self) -> &[usize] {
        &self.word
    }

    pub fn order(&self) -> &MultiIndex {
        self.downset.order()
    }

    /// Materialized cells keyed by `(nonterminal, lo, hi)`.
    pub fn cells(&self) -> &HashMap<(usize, usize, usize), BinomialTuple> {
        &self.cells
    }

    /// `σ_i(u[lo..hi])`.
    pub fn sigma(&mut self, i: usize, lo: usize, hi: usize) -> Result<BinomialTuple> {
        if let Some(t) = self.cells.get(&(i, lo, hi)) {
            return Ok(t.clone());
        }
        if i >= self.grammar.num_nonterminals() || lo > hi || hi > self.word.len() {
            return Err(Error::InvalidGrammar(format!(
                "no cell ({i}, {lo}, {hi}) for a word of length {}",
                self.word.len()
            )));
        }
        let g = self.grammar;
        let mut total = BinomialTuple::zero_in(&self.downset);
        for (idx, rule) in g.rules().iter().enumerate() {
            if rule.premise != i {
                continue;
            }
            let acc = self.lifted[idx].clone();
            self.match_rhs(&rule.rhs, lo, hi, acc, &mut total)?;
        }
        self.cells.insert((i, lo, hi), total.clone());
        Ok(total)
    }

    /// Accumulates into `out` every way `rhs` can derive `word[pos..hi]`.
    fn match_rhs(
        &mut self,
        rhs: &[Symbol],
        pos: usize,
        hi: usize,
        acc: BinomialTuple,
        out: &mut BinomialTuple,
    ) -> Result<()> {
        let Some((head, rest)) = rhs.split_first() else {
            if pos == hi {
                out.add_assign(&acc)?;
            }
            return Ok(());
        };
        // every symbol covers at least one position
        if hi - pos < rhs.len() {
            return Ok(());
        }
        match *head {
            Symbol::Terminal(t) => {
                if self.word[pos] == t {
                    self.match_rhs(rest, pos + 1, hi, acc, out)?;
                }
            }
            Symbol::Nonterminal(b) => {
                let first_end = if rest.is_empty() { hi } else { pos + 1 };
                for end in first_end..=hi - rest.len() {
                    let child = self.sigma(b, pos, end)?;
                    if child.coeffs()[0] == 0.0 {
                        continue;
                    }
                    let next = acc.mul(&child)?;
                    self.match_rhs(rest, end, hi, next, out)?;
                }
            }
        }
        Ok(())
    }
}

/// Builds the table and fills every cell reachable from `(start, whole word)`.
pub fn inside_table<'g>(
    g: &'g Grammar,
    word: &[usize],
    nu: &MultiIndex,
) -> Result<InsideTable<'g>> {
    let mut table = InsideTable::new(g, word, nu)?;
    table.sigma(g.start(), 0, word.len())?;
    Ok(table)
}

/// Unnormalized conditional cross-moments of `A_i` given `word`; the zero
/// tuple if `word` is not derivable from `A_i`.
pub fn conditional_moments(
    g: &Grammar,
    word: &[usize],
    nu: &MultiIndex,
    i: usize,
) -> Result<BinomialTuple> {
    let mut table = InsideTable::new(g, word, nu)?;
    table.sigma(i, 0, word.len())
}

/// `E[X^α | u]`: the conditional tuple divided by the inside probability.
pub fn normalized_conditional_moments(
    g: &Grammar,
    word: &[usize],
    nu: &MultiIndex,
    i: usize,
) -> Result<BinomialTuple> {
    let t = conditional_moments(g, word, nu, i)?;
    normalize(&t)
}

pub(crate) fn normalize(t: &BinomialTuple) -> Result<BinomialTuple> {
    let z = t.coeffs()[0];
    if z <= 0.0 {
        return Err(Error::ZeroInsideProbability);
    }
    let mut coeffs: Vec<f64> = t.coeffs().iter().map(|c| c / z).collect();
    coeffs[0] = 1.0;
    BinomialTuple::from_coeffs(t.downset(), coeffs)
}

/// The same quantity as [`conditional_moments`], evaluated with explicit
/// binomial and multinomial sums per order instead of semiring products:
///
/// ```text
/// m^(α)_{i|u} = Σ_j Σ_splits Σ_{β ≤ α} (α choose β) p Y^{α−β}
///               Σ_{γ₁+…+γ_k = β} (β; γ) Π_l m^(γ_l)_{i_l|u_l}
/// ```
pub fn derivation_recursion_check(
    g: &Grammar,
    word: &[usize],
    nu: &MultiIndex,
    i: usize,
) -> Result<BinomialTuple> {
    check_order(g, nu)?;
    check_word(g, word)?;
    check_cycle_free(g)?;
    let downset = Arc::new(Downset::new(nu.clone()));
    let mut rec = ScalarRecursion {
        grammar: g,
        word,
        downset: &downset,
        memo: HashMap::new(),
    };
    let coeffs = rec.moments(i, 0, word.len())?;
    BinomialTuple::from_coeffs(&downset, coeffs)
}

struct ScalarRecursion<'a> {
    grammar: &'a Grammar,
    word: &'a [usize],
    downset: &'a Arc<Downset>,
    memo: HashMap<(usize, usize, usize), Vec<f64>>,
}

impl ScalarRecursion<'_> {
    fn moments(&mut self, i: usize, lo: usize, hi: usize) -> Result<Vec<f64>> {
        if let Some(v) = self.memo.get(&(i, lo, hi)) {
            return Ok(v.clone());
        }
        let g = self.grammar;
        let mut total = vec![0.0; self.downset.len()];
        for rule in g.rules_of(i) {
            let mut splits = Vec::new();
            self.splits(&rule.rhs, lo, hi, &mut Vec::new(), &mut splits);
            for split in splits {
                let children = split
                    .iter()
                    .map(|&(b, s, e)| self.moments(b, s, e))
                    .collect::<Result<Vec<_>>>()?;
                for (pos, alpha) in self.downset.elems().iter().enumerate() {
                    total[pos] +=
                        self.rule_term(rule.probability, &rule.features, alpha, &children)?;
                }
            }
        }
        self.memo.insert((i, lo, hi), total.clone());
        Ok(total)
    }

    fn rule_term(
        &self,
        p: f64,
        y: &[f64],
        alpha: &MultiIndex,
        children: &[Vec<f64>],
    ) -> Result<f64> {
        let k = children.len();
        let mut sum = 0.0;
        for beta in crate::multiindex::enumerate_downset(alpha) {
            let inner = if k == 0 {
                if beta.is_zero() {
                    1.0
                } else {
                    0.0
                }
            } else {
                let mut s = 0.0;
                for gammas in enumerate_compositions(&beta, k) {
                    let mut term = multinom(&beta, &gammas)? as f64;
                    for (gamma, child) in gammas.iter().zip(children) {
                        let pos = self.downset.position(gamma).expect("gamma <= nu");
                        term *= child[pos];
                    }
                    s += term;
                }
                s
            };
            if inner != 0.0 {
                let rest = alpha.checked_sub(&beta)?;
                sum += binom(alpha, &beta)? as f64 * p * power(y, &rest)? * inner;
            }
        }
        Ok(sum)
    }

    /// Every assignment of spans to the rhs nonterminals consistent with the
    /// rhs terminals matching `word[pos..hi]`.
    fn splits(
        &self,
        rhs: &[Symbol],
        pos: usize,
        hi: usize,
        prefix: &mut Vec<(usize, usize, usize)>,
        out: &mut Vec<Vec<(usize, usize, usize)>>,
    ) {
        let Some((head, rest)) = rhs.split_first() else {
            if pos == hi {
                out.push(prefix.clone());
            }
            return;
        };
        if hi - pos < rhs.len() {
            return;
        }
        match *head {
            Symbol::Terminal(t) => {
                if self.word[pos] == t {
                    self.splits(rest, pos + 1, hi, prefix, out);
                }
            }
            Symbol::Nonterminal(b) => {
                for end in pos + 1..=hi - rest.len() {
                    prefix.push((b, pos, end));
                    self.splits(rest, end, hi, prefix, out);
                    prefix.pop();
                }
            }
        }
    }
}

/// First-order surprisal statistics of the parses of `word` from the start
/// symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalEntropy {
    /// `P(u) = Σ_{π ∈ Ω(u)} p(π)`.
    pub inside_probability: f64,
    /// `Σ_{π ∈ Ω(u)} p(π) (−ln p(π))`, the unnormalized first moment.
    pub surprisal_moment: f64,
    /// `E[−ln p(π) | u]`.
    pub expected_surprisal: f64,
    /// `H(π | u) = E[−ln p(π) | u] + ln P(u)`.
    pub entropy: f64,
}

pub fn conditional_entropy(g: &Grammar, word: &[usize]) -> Result<ConditionalEntropy> {
    let g = assign_features(g, &[FeatureSpec::Surprisal])?;
    let t = conditional_moments(&g, word, &MultiIndex::new(vec![1]), g.start())?;
    let z = t.coeffs()[0];
    if z <= 0.0 {
        return Err(Error::ZeroInsideProbability);
    }
    let moment = t.coeffs()[1];
    let expected = moment / z;
    Ok(ConditionalEntropy {
        inside_probability: z,
        surprisal_moment: moment,
        expected_surprisal: expected,
        entropy: expected + z.ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    fn binary() -> Grammar {
        parse_grammar(
            "terminals: a b\nnonterminals: S\nrule: S -> S S | p=0.3\nrule: S -> a | p=0.7\n",
        )
        .unwrap()
    }

    fn with(g: &Grammar, spec: FeatureSpec) -> Grammar {
        assign_features(g, &[spec]).unwrap()
    }

    #[test]
    fn inside_probabilities() {
        let g = binary();
        let t = conditional_moments(&g, &[0, 0], &mi(&[0]), 0).unwrap();
        assert!((t.coeffs()[0] - 0.147).abs() < 1e-15);
        let t = conditional_moments(&g, &[0, 0, 0], &mi(&[0]), 0).unwrap();
        assert!((t.coeffs()[0] - 0.06174).abs() < 1e-15);
    }

    #[test]
    fn base_case_is_lift() {
        let g =
            parse_grammar("terminals: a\nnonterminals: S\nrule: S -> a | p=1 | Y=[5.0]\n").unwrap();
        let nu = mi(&[3]);
        let t = conditional_moments(&g, &[0], &nu, 0).unwrap();
        assert_eq!(t, BinomialTuple::lift(1.0, &[5.0], &nu).unwrap());
    }

    #[test]
    fn derivation_length_given_string() {
        let g = with(&binary(), FeatureSpec::DerivationLength);
        let t = conditional_moments(&g, &[0, 0], &mi(&[1]), 0).unwrap();
        assert!((t.coeffs()[0] - 0.147).abs() < 1e-15);
        assert!((t.coeffs()[1] - 0.441).abs() < 1e-15);
        let n = normalized_conditional_moments(&g, &[0, 0], &mi(&[1]), 0).unwrap();
        assert_eq!(n.coeffs()[0], 1.0);
        assert!((n.coeffs()[1] - 3.0).abs() < 1e-14);
        let n = normalized_conditional_moments(&g, &[0, 0, 0], &mi(&[1]), 0).unwrap();
        assert!((n.coeffs()[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn unparseable_string() {
        let g = with(&binary(), FeatureSpec::DerivationLength);
        let t = conditional_moments(&g, &[0, 1], &mi(&[1]), 0).unwrap();
        assert_eq!(t, BinomialTuple::zero(&mi(&[1])));
        assert_eq!(
            normalized_conditional_moments(&g, &[0, 1], &mi(&[1]), 0),
            Err(Error::ZeroInsideProbability)
        );
    }

    #[test]
    fn surprisal_single_parse() {
        let g = with(&binary(), FeatureSpec::Surprisal);
        let t = conditional_moments(&g, &[0, 0], &mi(&[1]), 0).unwrap();
        assert!((t.coeffs()[1] - 0.147 * 1.917_322_692_203_400_8).abs() < 1e-14);
        let h = conditional_entropy(&binary(), &[0, 0]).unwrap();
        // one parse: conditional entropy is zero
        assert!(h.entropy.abs() < 1e-14);
        let h = conditional_entropy(&binary(), &[0, 0, 0]).unwrap();
        // two equiprobable parses
        assert!((h.entropy - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn scalar_recursion_agrees() {
        let g = with(&binary(), FeatureSpec::DerivationLength);
        for (word, nu) in [(vec![0, 0], mi(&[1])), (vec![0, 0, 0], mi(&[2]))] {
            let a = conditional_moments(&g, &word, &nu, 0).unwrap();
            let b = derivation_recursion_check(&g, &word, &nu, 0).unwrap();
            for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixed_rhs_patterns() {
        // S -> a S b | a b  derives a^n b^n with exactly one parse
        let g = parse_grammar(
            "terminals: a b\nnonterminals: S\nrule: S -> a S b | p=0.25 | Y=[1.0]\nrule: S -> a b | p=0.75 | Y=[2.0]\n",
        )
        .unwrap();
        let t = conditional_moments(&g, &[0, 0, 0, 1, 1, 1], &mi(&[2]), 0).unwrap();
        let p = 0.25 * 0.25 * 0.75;
        let x = 1.0 + 1.0 + 2.0;
        assert!((t.coeffs()[0] - p).abs() < 1e-15);
        assert!((t.coeffs()[1] - p * x).abs() < 1e-14);
        assert!((t.coeffs()[2] - p * x * x).abs() < 1e-14);
        let t = conditional_moments(&g, &[0, 0, 1], &mi(&[2]), 0).unwrap();
        assert_eq!(t.coeffs()[0], 0.0);
    }

    #[test]
    fn unit_rules_allowed_when_acyclic() {
        let g = parse_grammar(
            "terminals: a\nnonterminals: S A\nrule: S -> A | p=0.5\nrule: S -> a | p=0.5\nrule: A -> a | p=1\n",
        )
        .unwrap();
        let t = conditional_moments(&g, &[0], &mi(&[1]), 0).unwrap();
        assert!((t.coeffs()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn preconditions() {
        let cyclic = parse_grammar(
            "terminals: a\nnonterminals: S A\nrule: S -> A | p=0.5\nrule: S -> a | p=0.5\n\
             rule: A -> S | p=0.5\nrule: A -> a | p=0.5\n",
        )
        .unwrap();
        assert!(matches!(
            conditional_moments(&cyclic, &[0], &mi(&[1]), 0),
            Err(Error::Cyclic(_))
        ));
        let nullable = parse_grammar(
            "terminals: a\nnonterminals: S A\nrule: S -> A a | p=1\nrule: A -> eps | p=0.5\nrule: A -> a | p=0.5\n",
        )
        .unwrap();
        assert!(matches!(
            conditional_moments(&nullable, &[0], &mi(&[1]), 0),
            Err(Error::Cyclic(_))
        ));
        assert!(matches!(
            conditional_moments(&binary(), &[7], &mi(&[1]), 0),
            Err(Error::UnknownTerminal(_))
        ));
    }

    #[test]
    fn top_level_epsilon() {
        let g = parse_grammar(
            "terminals: a\nnonterminals: S A\nrule: S -> eps | p=0.2 | Y=[3.0]\nrule: S -> A | p=0.8 | Y=[1.0]\n\
             rule: A -> a A | p=0.5 | Y=[1.0]\nrule: A -> a | p=0.5 | Y=[1.0]\n",
        )
        .unwrap();
        let t = conditional_moments(&g, &[], &mi(&[1]), 0).unwrap();
        assert!((t.coeffs()[0] - 0.2).abs() < 1e-15);
        assert!((t.coeffs()[1] - 0.6).abs() < 1e-15);
        let t = conditional_moments(&g, &[0, 0], &mi(&[1]), 0).unwrap();
        assert!((t.coeffs()[0] - 0.8 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn table_records_reachable_cells() {
        let g = binary();
        let table = inside_table(&g, &[0, 0, 0], &mi(&[0])).unwrap();
        assert!(table.cells().contains_key(&(0, 0, 3)));
        for t in table.cells().values() {
            assert!(t.coeffs()[0] >= 0.0);
            assert_eq!(t.order(), &mi(&[0]));
        }
    }
}
