//! Reference computations straight from the definitions.
//!
//! Nothing here uses the moment recursion, the linear solver or the
//! semiring type; results are sums of `p(π) X(π)^α` over derivations.

use crate::error::{Error, Result};
use crate::grammar::{Grammar, Symbol};
use crate::inside::check_cycle_free;
use crate::multiindex::{binom, enumerate_downset, power, MultiIndex};

/// States processed before [`enumerate_derivations`] gives up.
pub const FRONTIER_LIMIT: usize = 10_000_000;

/// A complete leftmost derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    /// Indices into [`Grammar::rules`], in application order.
    pub rules: Vec<usize>,
    /// `Π p(π_n)`, multiplied in application order.
    pub probability: f64,
    /// `X = Σ Y(π_n)`, summed in application order.
    pub features: Vec<f64>,
    /// Terminal indices of the derived string.
    pub yield_: Vec<usize>,
}

impl Derivation {
    fn from_rules(g: &Grammar, rules: Vec<usize>, yield_: Vec<usize>) -> Self {
        let mut probability = 1.0;
        let mut features = vec![0.0; g.feature_dim()];
        for &r in &rules {
            let rule = &g.rules()[r];
            probability *= rule.probability;
            for (x, y) in features.iter_mut().zip(&rule.features) {
                *x += y;
            }
        }
        Derivation {
            rules,
            probability,
            features,
            yield_,
        }
    }

    /// `p(π) X(π)^α`.
    pub fn weighted_power(&self, alpha: &MultiIndex) -> Result<f64> {
        Ok(self.probability * power(&self.features, alpha)?)
    }
}

/// `Σ_π p(π) X(π)^α` for every `α ≤ ν`, in graded order.
pub fn moment_sums(derivations: &[Derivation], nu: &MultiIndex) -> Result<Vec<f64>> {
    enumerate_downset(nu)
        .iter()
        .map(|alpha| {
            derivations
                .iter()
                .map(|d| d.weighted_power(alpha))
                .sum::<Result<f64>>()
        })
        .collect()
}

/// Applies `rules` as leftmost rewrites from `A_start`, returning the yield
/// and the probability multiplied in order.
pub fn replay(g: &Grammar, start: usize, rules: &[usize]) -> Result<(Vec<usize>, f64)> {
    let mut form = vec![Symbol::Nonterminal(start)];
    let mut probability = 1.0;
    for &r in rules {
        let rule = g
            .rules()
            .get(r)
            .ok_or_else(|| Error::InvalidGrammar(format!("no rule #{r}")))?;
        let pos = form
            .iter()
            .position(|s| matches!(s, Symbol::Nonterminal(_)))
            .ok_or_else(|| Error::InvalidGrammar("sentential form already terminal".into()))?;
        if form[pos] != Symbol::Nonterminal(rule.premise) {
            return Err(Error::InvalidGrammar(format!(
                "rule #{r} does not rewrite the leftmost nonterminal"
            )));
        }
        form.splice(pos..=pos, rule.rhs.iter().copied());
        probability *= rule.probability;
    }
    let yield_ = form
        .iter()
        .map(|s| match *s {
            Symbol::Terminal(t) => Ok(t),
            Symbol::Nonterminal(_) => Err(Error::InvalidGrammar("derivation incomplete".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((yield_, probability))
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub derivations: Vec<Derivation>,
    /// Total probability of sentential forms still incomplete at the step
    /// limit.
    pub tail_mass_bound: f64,
}

/// Every complete leftmost derivation from `A_i` with at most `max_steps`
/// rule applications.
pub fn enumerate_derivations(g: &Grammar, i: usize, max_steps: usize) -> Result<Enumeration> {
    struct State {
        rules: Vec<usize>,
        probability: f64,
        yield_: Vec<usize>,
        /// Unprocessed suffix of the sentential form, reversed.
        pending: Vec<Symbol>,
    }
    let mut stack = vec![State {
        rules: Vec::new(),
        probability: 1.0,
        yield_: Vec::new(),
        pending: vec![Symbol::Nonterminal(i)],
    }];
    let mut derivations = Vec::new();
    let mut tail = 0.0;
    let mut processed = 0usize;
    while let Some(mut state) = stack.pop() {
        processed += 1;
        if processed > FRONTIER_LIMIT {
            return Err(Error::FrontierExplosion {
                limit: FRONTIER_LIMIT,
            });
        }
        let leftmost = loop {
            match state.pending.pop() {
                Some(Symbol::Terminal(t)) => state.yield_.push(t),
                Some(Symbol::Nonterminal(n)) => break Some(n),
                None => break None,
            }
        };
        let Some(n) = leftmost else {
            derivations.push(Derivation::from_rules(g, state.rules, state.yield_));
            continue;
        };
        if state.rules.len() == max_steps {
            tail += state.probability;
            continue;
        }
        // push in reverse so rules are explored in declaration order
        let candidates: Vec<usize> = (0..g.rules().len())
            .filter(|&r| g.rules()[r].premise == n)
            .collect();
        for &r in candidates.iter().rev() {
            let rule = &g.rules()[r];
            let mut pending = state.pending.clone();
            pending.extend(rule.rhs.iter().rev().copied());
            let mut rules = state.rules.clone();
            rules.push(r);
            stack.push(State {
                rules,
                probability: state.probability * rule.probability,
                yield_: state.yield_.clone(),
                pending,
            });
        }
    }
    Ok(Enumeration {
        derivations,
        tail_mass_bound: tail,
    })
}

/// Truncated moment sums with their error bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMoments {
    pub order: MultiIndex,
    /// `Σ p(π) X(π)^α` over derivations of at most `max_steps` steps, per
    /// `α` in graded order.
    pub values: Vec<f64>,
    /// Per-`α` bound on the omitted mass: `tail_mass_bound` for `α = 0`,
    /// `tail_mass_bound · cap` for `α ≠ 0` when a cap on `|X^α|` is
    /// supplied, infinite otherwise. Heuristic, not certified.
    pub error_bounds: Vec<f64>,
    pub tail_mass_bound: f64,
}

impl OracleMoments {
    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        enumerate_downset(&self.order)
            .iter()
            .position(|a| a == alpha)
            .map(|p| self.values[p])
    }
}

/// `Σ_{π ∈ Ω_i, |π| ≤ max_steps} p(π) X(π)^α` for every `α ≤ ν`.
///
/// Derivations are grouped by their exact number of steps, so the sum over
/// all of them is taken without listing them one by one. The same totals as
/// summing [`enumerate_derivations`], at a cost polynomial in `max_steps`.
pub fn oracle_moments(
    g: &Grammar,
    i: usize,
    nu: &MultiIndex,
    max_steps: usize,
    x_cap: Option<f64>,
) -> Result<OracleMoments> {
    if nu.dim() != g.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: g.feature_dim(),
            found: nu.dim(),
        });
    }
    if max_steps == 0 {
        return Err(Error::InvalidGrammar("max_steps must be >= 1".into()));
    }
    let by_steps = StepTable::build(g, nu, max_steps)?;
    let mut values = vec![0.0; by_steps.orders.len()];
    for s in 1..=max_steps {
        for (v, x) in values.iter_mut().zip(&by_steps.exact[i][s]) {
            *v += x;
        }
    }
    let tail = by_steps.incomplete[i][max_steps];
    let error_bounds = by_steps
        .orders
        .iter()
        .map(|a| {
            if a.is_zero() {
                tail
            } else {
                x_cap.map_or(f64::INFINITY, |c| tail * c)
            }
        })
        .collect();
    Ok(OracleMoments {
        order: nu.clone(),
        values,
        error_bounds,
        tail_mass_bound: tail,
    })
}

/// Moment sums of derivations grouped by exact step count.
struct StepTable {
    orders: Vec<MultiIndex>,
    /// `exact[A][s][α] = Σ_{π from A, |π| = s} p(π) X(π)^α`
    exact: Vec<Vec<Vec<f64>>>,
    /// `incomplete[A][s]` = probability of leftmost prefixes from `A` of
    /// exactly `s` steps that are not yet complete.
    incomplete: Vec<Vec<f64>>,
}

impl StepTable {
    fn build(g: &Grammar, nu: &MultiIndex, max_steps: usize) -> Result<Self> {
        let orders = enumerate_downset(nu);
        let width = orders.len();
        // (α, β, α−β, binomial) in terms of positions in `orders`
        let mut conv = Vec::new();
        for (pa, a) in orders.iter().enumerate() {
            for (pb, b) in orders.iter().enumerate() {
                if b.leq(a)? {
                    let rest = a.checked_sub(b)?;
                    let pr = orders.iter().position(|x| *x == rest).expect("in downset");
                    conv.push((pa, pb, pr, binom(a, b)? as f64));
                }
            }
        }
        let convolve = |f: &[f64], h: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; width];
            for &(a, b, r, c) in &conv {
                out[a] += c * f[b] * h[r];
            }
            out
        };

        let n = g.num_nonterminals();
        let zero = vec![0.0; width];
        let mut exact = vec![vec![zero.clone(); max_steps + 1]; n];
        let mut incomplete = vec![vec![0.0; max_steps + 1]; n];
        for row in incomplete.iter_mut() {
            row[0] = 1.0;
        }

        struct RuleData {
            premise: usize,
            probability: f64,
            lifted: Vec<f64>,
            children: Vec<usize>,
            /// `prefix[j][t]`: children `0..=j` complete in exactly `t` steps.
            prefix: Vec<Vec<Vec<f64>>>,
        }
        let mut rules = g
            .rules()
            .iter()
            .map(|r| {
                let lifted = orders
                    .iter()
                    .map(|a| power(&r.features, a).map(|v| r.probability * v))
                    .collect::<Result<Vec<_>>>()?;
                let children: Vec<usize> = r.rhs_nonterminals().collect();
                let prefix = vec![vec![zero.clone(); max_steps + 1]; children.len()];
                Ok(RuleData {
                    premise: r.premise,
                    probability: r.probability,
                    lifted,
                    children,
                    prefix,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        for s in 1..=max_steps {
            let t = s - 1;
            // children's prefix products at total t use exact[·][≤ t]
            for rule in rules.iter_mut() {
                for j in 0..rule.children.len() {
                    let b = rule.children[j];
                    let value = if j == 0 {
                        exact[b][t].clone()
                    } else {
                        let mut acc = zero.clone();
                        for (last, child) in exact[b].iter().enumerate().take(t + 1).skip(1) {
                            let before = &rule.prefix[j - 1][t - last];
                            if before[0] == 0.0 && before.iter().all(|v| *v == 0.0) {
                                continue;
                            }
                            let term = convolve(before, child);
                            for (x, y) in acc.iter_mut().zip(term) {
                                *x += y;
                            }
                        }
                        acc
                    };
                    rule.prefix[j][t] = value;
                }
            }
            for rule in &rules {
                let a = rule.premise;
                let k = rule.children.len();
                let contribution = if k == 0 {
                    if s == 1 {
                        rule.lifted.clone()
                    } else {
                        continue;
                    }
                } else {
                    convolve(&rule.lifted, &rule.prefix[k - 1][t])
                };
                for (x, y) in exact[a][s].iter_mut().zip(contribution) {
                    *x += y;
                }
            }
            for rule in &rules {
                let a = rule.premise;
                let mut mass = 0.0;
                for (j, &b) in rule.children.iter().enumerate() {
                    // children before j complete in `done` steps, child j is
                    // incomplete after the remaining t − done steps
                    for done in 0..=t {
                        let before = if j == 0 {
                            if done == 0 {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            rule.prefix[j - 1][done][0]
                        };
                        if before != 0.0 {
                            mass += before * incomplete[b][t - done];
                        }
                    }
                }
                incomplete[a][s] += rule.probability * mass;
            }
        }
        Ok(StepTable {
            orders,
            exact,
            incomplete,
        })
    }
}

/// Every derivation of `word` from `A_i`, found by exhaustive search over
/// spans with no sharing between sub-searches.
pub fn enumerate_parses(g: &Grammar, i: usize, word: &[usize]) -> Result<Vec<Derivation>> {
    check_cycle_free(g)?;
    if let Some(t) = word.iter().find(|&&t| t >= g.terminals().len()) {
        return Err(Error::UnknownTerminal(format!("#{t}")));
    }
    Ok(parses(g, i, word)
        .into_iter()
        .map(|rules| Derivation::from_rules(g, rules, word.to_vec()))
        .collect())
}

/// Leftmost rule sequences deriving `word` from `A_i`.
fn parses(g: &Grammar, i: usize, word: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for (r, rule) in g.rules().iter().enumerate() {
        if rule.premise != i {
            continue;
        }
        extend_parses(g, &rule.rhs, word, vec![r], &mut out);
    }
    out
}

fn extend_parses(
    g: &Grammar,
    rhs: &[Symbol],
    word: &[usize],
    prefix: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let Some((head, rest)) = rhs.split_first() else {
        if word.is_empty() {
            out.push(prefix);
        }
        return;
    };
    if word.len() < rhs.len() {
        return;
    }
    match *head {
        Symbol::Terminal(t) => {
            if word[0] == t {
                extend_parses(g, rest, &word[1..], prefix, out);
            }
        }
        Symbol::Nonterminal(b) => {
            for end in 1..=word.len() - rest.len() {
                for sub in parses(g, b, &word[..end]) {
                    let mut seq = prefix.clone();
                    seq.extend(sub);
                    extend_parses(g, rest, &word[end..], seq, out);
                }
            }
        }
    }
}
