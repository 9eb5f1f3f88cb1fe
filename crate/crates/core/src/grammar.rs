//! Stochastic context-free grammars.
//!
//! Covers the in-memory representation, the line-oriented text format,
//! structural validation (proper, positive, productive, accessible), the
//! expectation matrix with its spectral radius, and per-rule feature
//! generation.
//!
//! The text format:
//!
//! ```text
//! # comments run to end of line
//! terminals: a b
//! nonterminals: S A
//! start: S
//! features: 2
//! rule: S -> A b | p=0.5 | Y=[1.0, 0.0]
//! rule: S -> a   | p=0.5 | Y=[0.0, 1.0]
//! rule: A -> eps | p=1.0
//! ```

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1` per premise.
pub const PROPER_TOLERANCE: f64 = 1e-9;

/// Grammars with `ρ(M) ≥ 1 − CONSISTENCY_MARGIN` are refused.
pub const CONSISTENCY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Terminal(usize),
    Nonterminal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub premise: usize,
    pub rhs: Vec<Symbol>,
    pub probability: f64,
    pub features: Vec<f64>,
    /// `r_n`: occurrences of nonterminal `n` in the rhs.
    pub nonterminal_counts: Vec<u32>,
    /// `t_n`: occurrences of terminal `n` in the rhs.
    pub terminal_counts: Vec<u32>,
}

impl Rule {
    pub fn is_epsilon(&self) -> bool {
        self.rhs.is_empty()
    }

    /// True if the rhs contains no nonterminal.
    pub fn is_terminal_only(&self) -> bool {
        self.rhs.iter().all(|s| matches!(s, Symbol::Terminal(_)))
    }

    /// Total number of terminals in the rhs.
    pub fn terminal_length(&self) -> u32 {
        self.terminal_counts.iter().sum()
    }

    /// Nonterminals of the rhs, left to right.
    pub fn rhs_nonterminals(&self) -> impl Iterator<Item = usize> + '_ {
        self.rhs.iter().filter_map(|s| match s {
            Symbol::Nonterminal(n) => Some(*n),
            Symbol::Terminal(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    terminals: Vec<String>,
    nonterminals: Vec<String>,
    /// Always 0 once built: the start symbol is moved to the front.
    start: usize,
    rules: Vec<Rule>,
    by_premise: Vec<Vec<usize>>,
    feature_dim: usize,
}

impl Grammar {
    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn num_nonterminals(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Rules with premise `i` (`R_i`).
    pub fn rules_of(&self, i: usize) -> impl Iterator<Item = &Rule> + '_ {
        self.by_premise[i].iter().map(move |&r| &self.rules[r])
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn nonterminal_index(&self, name: &str) -> Result<usize> {
        self.nonterminals
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNonterminal(name.to_string()))
    }

    /// Maps terminal names to indices.
    pub fn terminal_ids<S: AsRef<str>>(&self, word: &[S]) -> Result<Vec<usize>> {
        word.iter()
            .map(|w| {
                let w = w.as_ref();
                self.terminals
                    .iter()
                    .position(|t| t == w)
                    .ok_or_else(|| Error::UnknownTerminal(w.to_string()))
            })
            .collect()
    }

    fn symbol_name(&self, s: Symbol) -> &str {
        match s {
            Symbol::Terminal(t) => &self.terminals[t],
            Symbol::Nonterminal(n) => &self.nonterminals[n],
        }
    }

    /// Returns a copy with the same rules and new feature vectors.
    pub fn with_features(&self, features: Vec<Vec<f64>>) -> Result<Grammar> {
        if features.len() != self.rules.len() {
            return Err(Error::DimensionMismatch {
                expected: self.rules.len(),
                found: features.len(),
            });
        }
        let dim = features.first().map_or(self.feature_dim, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidGrammar(
                "feature dimension must be >= 1".into(),
            ));
        }
        let mut g = self.clone();
        for (k, (rule, y)) in g.rules.iter_mut().zip(features).enumerate() {
            if y.len() != dim {
                return Err(Error::FeatureDimension {
                    line: k + 1,
                    expected: dim,
                    found: y.len(),
                });
            }
            rule.features = y;
        }
        g.feature_dim = dim;
        Ok(g)
    }

    /// Canonical text form; `parse_grammar` inverts it exactly.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "terminals: {}", self.terminals.join(" "))?;
        writeln!(f, "nonterminals: {}", self.nonterminals.join(" "))?;
        writeln!(f, "start: {}", self.nonterminals[self.start])?;
        writeln!(f, "features: {}", self.feature_dim)?;
        for rule in &self.rules {
            let rhs = if rule.rhs.is_empty() {
                "eps".to_string()
            } else {
                rule.rhs
                    .iter()
                    .map(|&s| self.symbol_name(s))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let y = rule
                .features
                .iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(", ");
            writeln!(
                f,
                "rule: {} -> {} | p={:?} | Y=[{}]",
                self.nonterminals[rule.premise], rhs, rule.probability, y
            )?;
        }
        Ok(())
    }
}

/// `(premise, rhs, p, Y, source line)` as given to the builder.
type PendingRule = (usize, Vec<Symbol>, f64, Option<Vec<f64>>, usize);

/// Incremental construction by symbol name.
#[derive(Debug, Clone)]
pub struct GrammarBuilder {
    terminals: Vec<String>,
    nonterminals: Vec<String>,
    start: String,
    rules: Vec<PendingRule>,
    feature_dim: Option<usize>,
}

impl GrammarBuilder {
    pub fn new<S: AsRef<str>>(terminals: &[S], nonterminals: &[S], start: &str) -> Self {
        GrammarBuilder {
            terminals: terminals.iter().map(|s| s.as_ref().to_string()).collect(),
            nonterminals: nonterminals
                .iter()
                .map(|s| s.as_ref().to_string())
                .collect(),
            start: start.to_string(),
            rules: Vec::new(),
            feature_dim: None,
        }
    }

    pub fn feature_dim(mut self, dim: usize) -> Self {
        self.feature_dim = Some(dim);
        self
    }

    /// Adds `premise -> rhs`; an empty `rhs` is an epsilon rule.
    pub fn rule<S: AsRef<str>>(
        &mut self,
        premise: &str,
        rhs: &[S],
        probability: f64,
        features: Option<Vec<f64>>,
    ) -> Result<&mut Self> {
        self.rule_at(0, premise, rhs, probability, features)
    }

    fn rule_at<S: AsRef<str>>(
        &mut self,
        line: usize,
        premise: &str,
        rhs: &[S],
        probability: f64,
        features: Option<Vec<f64>>,
    ) -> Result<&mut Self> {
        let unknown = |s: &str| Error::UnknownSymbol {
            line,
            symbol: s.to_string(),
        };
        let premise_id = self
            .nonterminals
            .iter()
            .position(|n| n == premise)
            .ok_or_else(|| unknown(premise))?;
        let mut symbols = Vec::with_capacity(rhs.len());
        for s in rhs {
            let s = s.as_ref();
            if let Some(t) = self.terminals.iter().position(|t| t == s) {
                symbols.push(Symbol::Terminal(t));
            } else if let Some(n) = self.nonterminals.iter().position(|n| n == s) {
                symbols.push(Symbol::Nonterminal(n));
            } else {
                return Err(unknown(s));
            }
        }
        if self
            .rules
            .iter()
            .any(|(p, r, ..)| *p == premise_id && *r == symbols)
        {
            return Err(Error::DuplicateRule {
                line,
                premise: premise.to_string(),
            });
        }
        if !(probability.is_finite() && (0.0..=1.0).contains(&probability)) {
            return Err(Error::InvalidGrammar(format!(
                "probability {probability} of a `{premise}` rule is outside [0, 1]"
            )));
        }
        self.rules
            .push((premise_id, symbols, probability, features, line));
        Ok(self)
    }

    pub fn build(&self) -> Result<Grammar> {
        let mut seen = HashSet::new();
        for name in self.terminals.iter().chain(&self.nonterminals) {
            if name == "eps" {
                return Err(Error::InvalidGrammar("`eps` is reserved".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidGrammar(format!(
                    "symbol `{name}` declared twice"
                )));
            }
        }
        if self.nonterminals.is_empty() {
            return Err(Error::InvalidGrammar("no nonterminals".into()));
        }
        let start = self
            .nonterminals
            .iter()
            .position(|n| *n == self.start)
            .ok_or_else(|| Error::UnknownNonterminal(self.start.clone()))?;

        let dim = match self.feature_dim {
            Some(d) => d,
            None => self
                .rules
                .iter()
                .find_map(|r| r.3.as_ref().map(Vec::len))
                .unwrap_or(1),
        };
        if dim == 0 {
            return Err(Error::InvalidGrammar(
                "feature dimension must be >= 1".into(),
            ));
        }

        // stable move of the start symbol to index 0
        let n = self.nonterminals.len();
        let mut new_id: Vec<usize> = (0..n).collect();
        for (old, id) in new_id.iter_mut().enumerate() {
            *id = match old.cmp(&start) {
                std::cmp::Ordering::Less => old + 1,
                std::cmp::Ordering::Equal => 0,
                std::cmp::Ordering::Greater => old,
            };
        }
        let mut nonterminals = vec![String::new(); n];
        for (old, name) in self.nonterminals.iter().enumerate() {
            nonterminals[new_id[old]] = name.clone();
        }

        let mut rules = Vec::with_capacity(self.rules.len());
        for (premise, rhs, p, y, line) in &self.rules {
            let features = match y {
                Some(y) if y.len() != dim => {
                    return Err(Error::FeatureDimension {
                        line: *line,
                        expected: dim,
                        found: y.len(),
                    })
                }
                Some(y) => y.clone(),
                None => vec![0.0; dim],
            };
            let rhs: Vec<Symbol> = rhs
                .iter()
                .map(|s| match *s {
                    Symbol::Nonterminal(k) => Symbol::Nonterminal(new_id[k]),
                    t => t,
                })
                .collect();
            let mut nonterminal_counts = vec![0u32; n];
            let mut terminal_counts = vec![0u32; self.terminals.len()];
            for s in &rhs {
                match *s {
                    Symbol::Nonterminal(k) => nonterminal_counts[k] += 1,
                    Symbol::Terminal(t) => terminal_counts[t] += 1,
                }
            }
            rules.push(Rule {
                premise: new_id[*premise],
                rhs,
                probability: *p,
                features,
                nonterminal_counts,
                terminal_counts,
            });
        }
        // group by premise, keeping declaration order within a premise
        rules.sort_by_key(|r| r.premise);
        let mut by_premise = vec![Vec::new(); n];
        for (k, r) in rules.iter().enumerate() {
            by_premise[r.premise].push(k);
        }
        Ok(Grammar {
            terminals: self.terminals.clone(),
            nonterminals,
            start: 0,
            rules,
            by_premise,
            feature_dim: dim,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Rescale each premise's probabilities to sum to one instead of failing.
    pub normalize: bool,
}

pub fn parse_grammar(text: &str) -> Result<Grammar> {
    parse_grammar_with(text, ParseOptions::default())
}

pub fn parse_grammar_with(text: &str, options: ParseOptions) -> Result<Grammar> {
    let mut terminals: Vec<String> = Vec::new();
    let mut nonterminals: Vec<String> = Vec::new();
    let mut start: Option<String> = None;
    let mut feature_dim: Option<usize> = None;
    let mut rule_lines: Vec<(usize, usize, &str)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let syntax = |column: usize, message: String| Error::Syntax {
            line: line_no,
            column,
            message,
        };
        let Some((key, value)) = line.split_once(':') else {
            let col = line.len() - line.trim_start().len() + 1;
            return Err(syntax(col, "expected `key: value`".into()));
        };
        let value_col = key.len() + 2;
        match key.trim() {
            "terminals" => terminals.extend(value.split_whitespace().map(str::to_string)),
            "nonterminals" => nonterminals.extend(value.split_whitespace().map(str::to_string)),
            "start" => {
                let toks: Vec<_> = value.split_whitespace().collect();
                if toks.len() != 1 {
                    return Err(syntax(value_col, "`start:` takes one symbol".into()));
                }
                start = Some(toks[0].to_string());
            }
            "features" => {
                let d = value.trim().parse::<usize>().map_err(|_| {
                    syntax(value_col, format!("bad feature count `{}`", value.trim()))
                })?;
                feature_dim = Some(d);
            }
            "rule" => rule_lines.push((line_no, value_col, value)),
            other => {
                let col = line.find(other).unwrap_or(0) + 1;
                return Err(syntax(col, format!("unknown directive `{other}`")));
            }
        }
    }

    let start = match start {
        Some(s) => s,
        None => nonterminals
            .first()
            .cloned()
            .ok_or_else(|| Error::InvalidGrammar("no nonterminals declared".into()))?,
    };
    let mut builder = GrammarBuilder::new(&terminals, &nonterminals, &start);
    if let Some(d) = feature_dim {
        builder = builder.feature_dim(d);
    }
    for (line_no, col0, body) in rule_lines {
        let (premise, rhs, p, y) = parse_rule_body(body, line_no, col0)?;
        builder.rule_at(line_no, &premise, &rhs, p, y)?;
    }
    let mut grammar = builder.build()?;

    for i in 0..grammar.num_nonterminals() {
        let sum: f64 = grammar.rules_of(i).map(|r| r.probability).sum();
        if (sum - 1.0).abs() > PROPER_TOLERANCE {
            if options.normalize && sum > 0.0 {
                for &r in &grammar.by_premise[i] {
                    grammar.rules[r].probability /= sum;
                }
            } else {
                return Err(Error::NotProper {
                    nonterminal: grammar.nonterminals[i].clone(),
                    sum,
                });
            }
        }
    }
    Ok(grammar)
}

type RuleParts = (String, Vec<String>, f64, Option<Vec<f64>>);

fn parse_rule_body(body: &str, line: usize, col0: usize) -> Result<RuleParts> {
    let syntax = |offset: usize, message: String| Error::Syntax {
        line,
        column: col0 + offset,
        message,
    };
    let mut fields = body.split('|');
    let production = fields.next().unwrap_or("");
    let Some((lhs, rhs)) = production.split_once("->") else {
        return Err(syntax(0, "expected `premise -> rhs`".into()));
    };
    let lhs: Vec<_> = lhs.split_whitespace().collect();
    if lhs.len() != 1 {
        return Err(syntax(
            0,
            "rule premise must be a single nonterminal".into(),
        ));
    }
    let mut rhs: Vec<String> = rhs.split_whitespace().map(str::to_string).collect();
    if rhs == ["eps"] {
        rhs.clear();
    } else if rhs.is_empty() {
        return Err(syntax(0, "empty rhs; write `eps`".into()));
    } else if rhs.iter().any(|s| s == "eps") {
        return Err(syntax(0, "`eps` must stand alone".into()));
    }

    let mut p = None;
    let mut y = None;
    let mut offset = production.len() + 1;
    for field in fields {
        let f = field.trim();
        if let Some(v) = f.strip_prefix("p=") {
            let v = v
                .trim()
                .parse::<f64>()
                .map_err(|_| syntax(offset, format!("bad probability `{v}`")))?;
            p = Some(v);
        } else if let Some(v) = f.strip_prefix("Y=") {
            let inner = v
                .trim()
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| syntax(offset, "feature vector must be `[…]`".into()))?;
            let values = inner
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| syntax(offset, format!("bad feature value `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            y = Some(values);
        } else {
            return Err(syntax(offset, format!("unexpected field `{f}`")));
        }
        offset += field.len() + 1;
    }
    let p = p.ok_or_else(|| syntax(0, "missing `p=`".into()))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(syntax(0, format!("probability {p} outside [0, 1]")));
    }
    Ok((lhs[0].to_string(), rhs, p, y))
}

/// Outcome of [`validate`]; the grammar is accepted iff [`is_valid`](Self::is_valid).
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub proper: bool,
    /// `(nonterminal, Σ p)` for every premise violating properness.
    pub improper: Vec<(String, f64)>,
    pub all_positive: bool,
    pub productive: Vec<bool>,
    pub accessible: Vec<bool>,
}

impl ValidationReport {
    pub fn useful(&self) -> bool {
        self.productive
            .iter()
            .zip(&self.accessible)
            .all(|(p, a)| *p && *a)
    }

    pub fn is_valid(&self) -> bool {
        self.proper && self.all_positive && self.useful()
    }

    /// Human-readable failures, one per entry.
    pub fn problems(&self, g: &Grammar) -> Vec<String> {
        let mut out = Vec::new();
        for (name, sum) in &self.improper {
            out.push(format!(
                "not proper: probabilities of `{name}` sum to {sum}"
            ));
        }
        if !self.all_positive {
            out.push("some rule has zero probability".into());
        }
        for (i, name) in g.nonterminals().iter().enumerate() {
            if !self.productive[i] {
                out.push(format!("`{name}` is not productive"));
            }
            if !self.accessible[i] {
                out.push(format!("`{name}` is not accessible from the start symbol"));
            }
        }
        out
    }
}

pub fn validate(g: &Grammar) -> ValidationReport {
    let n = g.num_nonterminals();
    let improper: Vec<(String, f64)> = (0..n)
        .filter_map(|i| {
            let sum: f64 = g.rules_of(i).map(|r| r.probability).sum();
            ((sum - 1.0).abs() > PROPER_TOLERANCE).then(|| (g.nonterminals[i].clone(), sum))
        })
        .collect();
    let all_positive = g.rules.iter().all(|r| r.probability > 0.0);

    // least fixed point of "some rule has only productive nonterminals"
    let mut productive = vec![false; n];
    loop {
        let mut changed = false;
        for r in &g.rules {
            if !productive[r.premise] && r.rhs_nonterminals().all(|k| productive[k]) {
                productive[r.premise] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut accessible = vec![false; n];
    let mut queue = VecDeque::from([g.start]);
    accessible[g.start] = true;
    while let Some(i) = queue.pop_front() {
        for r in g.rules_of(i) {
            for k in r.rhs_nonterminals() {
                if !accessible[k] {
                    accessible[k] = true;
                    queue.push_back(k);
                }
            }
        }
    }

    ValidationReport {
        proper: improper.is_empty(),
        improper,
        all_positive,
        productive,
        accessible,
    }
}

/// Fails with [`Error::InvalidGrammar`] listing every problem.
pub fn require_valid(g: &Grammar) -> Result<()> {
    let report = validate(g);
    if report.is_valid() {
        Ok(())
    } else {
        Err(Error::InvalidGrammar(report.problems(g).join("; ")))
    }
}

/// `M_{i,n} = Σ_j p(A_i → B_{i,j}) r_n(B_{i,j})`, with an estimate of `ρ(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationMatrix {
    size: usize,
    entries: Vec<f64>,
    spectral_radius: f64,
}

impl ExpectationMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, n: usize) -> f64 {
        self.entries[i * self.size + n]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn is_consistent(&self) -> bool {
        self.spectral_radius < 1.0 - CONSISTENCY_MARGIN
    }
}

pub fn expectation_matrix(g: &Grammar) -> ExpectationMatrix {
    let n = g.num_nonterminals();
    let mut entries = vec![0.0; n * n];
    for r in &g.rules {
        for (k, &c) in r.nonterminal_counts.iter().enumerate() {
            entries[r.premise * n + k] += r.probability * f64::from(c);
        }
    }
    let spectral_radius = spectral_radius(&entries, n);
    ExpectationMatrix {
        size: n,
        entries,
        spectral_radius,
    }
}

const POWER_ITERATIONS: usize = 10_000;
const POWER_TOLERANCE: f64 = 1e-12;
const POWER_SHIFT: f64 = 1e-12;

/// Dominant eigenvalue of a nonnegative row-major `n × n` matrix by power
/// iteration with ℓ∞ normalization on `A + εI`.
pub fn spectral_radius(a: &[f64], n: usize) -> f64 {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    let mut estimate = f64::NAN;
    for _ in 0..POWER_ITERATIONS {
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            y[i] = row.iter().zip(&x).map(|(m, v)| m * v).sum::<f64>() + POWER_SHIFT * x[i];
        }
        let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 {
            return 0.0;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        let converged = (norm - estimate).abs() <= POWER_TOLERANCE * norm.max(1.0);
        estimate = norm;
        if converged {
            break;
        }
    }
    (estimate - POWER_SHIFT).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyVerdict {
    pub spectral_radius: f64,
}

/// Accepts iff `ρ(M) < 1 − margin`.
pub fn check_consistency(g: &Grammar) -> Result<ConsistencyVerdict> {
    let m = expectation_matrix(g);
    if m.is_consistent() {
        Ok(ConsistencyVerdict {
            spectral_radius: m.spectral_radius,
        })
    } else {
        Err(Error::Inconsistent {
            rho: m.spectral_radius,
        })
    }
}

/// One column of the per-rule feature vector `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSpec {
    /// `Y = 1`: `X` counts rule applications.
    DerivationLength,
    /// `Y = Σ_n t_n`: `X` is the length of the derived string.
    StringLength,
    /// `Y = −ln p`: the first moment is the derivational entropy.
    Surprisal,
    /// Column `k` of the features already attached to the grammar.
    Given(usize),
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derivation-length" => Ok(FeatureSpec::DerivationLength),
            "string-length" => Ok(FeatureSpec::StringLength),
            "surprisal" => Ok(FeatureSpec::Surprisal),
            other => match other.strip_prefix("file:").map(str::parse::<usize>) {
                Some(Ok(k)) => Ok(FeatureSpec::Given(k)),
                _ => Err(Error::UnknownFeature(other.to_string())),
            },
        }
    }
}

/// Parses a comma-separated generator list. `file` expands to every column
/// present in the grammar file, `file:k` to column `k`.
pub fn parse_feature_list(list: &str, given_dim: usize) -> Result<Vec<FeatureSpec>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim) {
        if name == "file" {
            out.extend((0..given_dim).map(FeatureSpec::Given));
        } else {
            out.push(name.parse()?);
        }
    }
    if out.is_empty() {
        return Err(Error::UnknownFeature(list.to_string()));
    }
    Ok(out)
}

/// Replaces every rule's `Y` with the generated columns; `D` becomes
/// `specs.len()`.
pub fn assign_features(g: &Grammar, specs: &[FeatureSpec]) -> Result<Grammar> {
    if specs.is_empty() {
        return Err(Error::InvalidGrammar("no feature generators given".into()));
    }
    let features = g
        .rules
        .iter()
        .map(|r| {
            specs
                .iter()
                .map(|spec| match *spec {
                    FeatureSpec::DerivationLength => Ok(1.0),
                    FeatureSpec::StringLength => Ok(f64::from(r.terminal_length())),
                    FeatureSpec::Surprisal => Ok(-r.probability.ln()),
                    FeatureSpec::Given(k) => {
                        r.features.get(k).copied().ok_or(Error::DimensionMismatch {
                            expected: g.feature_dim,
                            found: k + 1,
                        })
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    g.with_features(features)
}

/// Nonterminals deriving the empty string.
pub fn nullable_nonterminals(g: &Grammar) -> Vec<bool> {
    let mut nullable = vec![false; g.num_nonterminals()];
    loop {
        let mut changed = false;
        for r in &g.rules {
            if !nullable[r.premise]
                && r.rhs.iter().all(|s| match s {
                    Symbol::Nonterminal(k) => nullable[*k],
                    Symbol::Terminal(_) => false,
                })
            {
                nullable[r.premise] = true;
                changed = true;
            }
        }
        if !changed {
            return nullable;
        }
    }
}

/// Finds a cycle `A ⇒ B ⇒ … ⇒ A` through rules whose rhs is exactly one
/// nonterminal; returns the names along the cycle.
pub fn unit_cycle(g: &Grammar) -> Option<Vec<String>> {
    let n = g.num_nonterminals();
    let mut edges: HashMap<usize, Vec<usize>> = HashMap::new();
    for r in &g.rules {
        if let [Symbol::Nonterminal(k)] = r.rhs[..] {
            edges.entry(r.premise).or_default().push(k);
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut path = Vec::new();
    fn dfs(
        v: usize,
        edges: &HashMap<usize, Vec<usize>>,
        state: &mut [u8],
        path: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[v] = 1;
        path.push(v);
        for &w in edges.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
            if state[w] == 1 {
                let from = path.iter().position(|&x| x == w).expect("on stack");
                let mut cycle = path[from..].to_vec();
                cycle.push(w);
                return Some(cycle);
            }
            if state[w] == 0 {
                if let Some(c) = dfs(w, edges, state, path) {
                    return Some(c);
                }
            }
        }
        path.pop();
        state[v] = 2;
        None
    }
    for v in 0..n {
        if state[v] == 0 {
            if let Some(c) = dfs(v, &edges, &mut state, &mut path) {
                return Some(c.into_iter().map(|k| g.nonterminals[k].clone()).collect());
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const GEOMETRIC: &str = "\
terminals: a
nonterminals: S
start: S
rule: S -> a S | p=0.4
rule: S -> a   | p=0.6
";

    fn binary(p: f64) -> Grammar {
        parse_grammar(&format!(
            "terminals: a\nnonterminals: S\nrule: S -> S S | p={p}\nrule: S -> a | p={}\n",
            1.0 - p
        ))
        .unwrap()
    }

    #[test]
    fn parse_single_rule() {
        let g = parse_grammar("terminals: a\nnonterminals: S\nstart: S\nrule: S -> a | p=1.0\n")
            .unwrap();
        assert_eq!(g.rules().len(), 1);
        assert_eq!(g.feature_dim(), 1);
        let r = &g.rules()[0];
        assert_eq!(r.nonterminal_counts, vec![0]);
        assert_eq!(r.terminal_counts, vec![1]);
        assert_eq!(r.features, vec![0.0]);
    }

    #[test]
    fn parse_geometric() {
        let g = parse_grammar(GEOMETRIC).unwrap();
        assert_eq!(g.rules_of(0).count(), 2);
        assert_eq!(g.rules()[0].nonterminal_counts, vec![1]);
    }

    #[test]
    fn improper_grammar_is_rejected() {
        let text = "terminals: a\nnonterminals: S\nrule: S -> a S | p=0.4\nrule: S -> a | p=0.5\n";
        let err = parse_grammar(text).unwrap_err();
        assert!(matches!(err, Error::NotProper { .. }));
        assert!(err.to_string().contains("not proper"));
        let g = parse_grammar_with(text, ParseOptions { normalize: true }).unwrap();
        assert!((g.rules()[0].probability - 0.4 / 0.9).abs() < 1e-15);
    }

    #[test]
    fn parse_errors() {
        let err = parse_grammar("terminals: a\nnonterminals: S\nrule: S -> b | p=1\n").unwrap_err();
        assert_eq!(
            err,
            Error::UnknownSymbol {
                line: 3,
                symbol: "b".into()
            }
        );
        let err = parse_grammar(
            "terminals: a\nnonterminals: S\nrule: S -> a | p=0.5\nrule: S -> a | p=0.5\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateRule { line: 4, .. }));
        let err = parse_grammar(
            "terminals: a\nnonterminals: S\nfeatures: 2\nrule: S -> a | p=1 | Y=[1.0]\n",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::FeatureDimension {
                line: 4,
                expected: 2,
                found: 1
            }
        ));
        let err = parse_grammar("terminals: a\nbogus line\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, .. }));
        let err = parse_grammar("terminals: a\nnonterminals: S\nrule: S a | p=1\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }));
    }

    #[test]
    fn start_symbol_moves_to_front() {
        let g = parse_grammar(
            "terminals: a\nnonterminals: A S\nstart: S\nrule: S -> A | p=1\nrule: A -> a | p=1\n",
        )
        .unwrap();
        assert_eq!(g.nonterminals(), &["S".to_string(), "A".to_string()]);
        assert_eq!(g.start(), 0);
        assert_eq!(g.rules()[0].rhs, vec![Symbol::Nonterminal(1)]);
    }

    #[test]
    fn text_roundtrip() {
        let text = "terminals: a b\nnonterminals: S A\nstart: S\nfeatures: 2\n\
                    rule: S -> A b | p=0.5 | Y=[1.0, -0.25]\n\
                    rule: S -> a | p=0.5 | Y=[0.0, 1.0]\n\
                    rule: A -> eps | p=1.0 | Y=[0.1, 0.2]\n";
        let g = parse_grammar(text).unwrap();
        let again = parse_grammar(&g.to_text()).unwrap();
        assert_eq!(g, again);
        assert!(g.rules()[2].is_epsilon());
    }

    #[test]
    fn validate_examples() {
        let g = parse_grammar(GEOMETRIC).unwrap();
        let report = validate(&g);
        assert!(report.is_valid());

        let g = parse_grammar(
            "terminals: a\nnonterminals: S B\nrule: S -> a | p=1\nrule: B -> a | p=1\n",
        )
        .unwrap();
        let report = validate(&g);
        assert_eq!(report.accessible, vec![true, false]);
        assert!(!report.is_valid());

        let g = parse_grammar("terminals: a\nnonterminals: S\nrule: S -> S | p=1\n").unwrap();
        let report = validate(&g);
        assert_eq!(report.productive, vec![false]);
        assert!(!report.is_valid());
    }

    #[test]
    fn zero_probability_fails_validation() {
        let g = parse_grammar(
            "terminals: a\nnonterminals: S\nrule: S -> a S | p=0\nrule: S -> a | p=1\n",
        )
        .unwrap();
        let report = validate(&g);
        assert!(!report.all_positive);
        assert!(!report.is_valid());
    }

    #[test]
    fn expectation_matrix_examples() {
        let m = expectation_matrix(&parse_grammar(GEOMETRIC).unwrap());
        assert_eq!(m.entries(), &[0.4]);
        assert!((m.spectral_radius() - 0.4).abs() < 1e-12);

        let m = expectation_matrix(&binary(0.3));
        assert!((m.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((m.spectral_radius() - 0.6).abs() < 1e-12);

        let g = parse_grammar("terminals: a\nnonterminals: S\nrule: S -> a | p=1\n").unwrap();
        let m = expectation_matrix(&g);
        assert_eq!(m.entries(), &[0.0]);
        assert_eq!(m.spectral_radius(), 0.0);
    }

    #[test]
    fn consistency_examples() {
        assert!(check_consistency(&parse_grammar(GEOMETRIC).unwrap()).is_ok());
        let err = check_consistency(&binary(0.5)).unwrap_err();
        match err {
            Error::Inconsistent { rho } => assert!((rho - 1.0).abs() < 1e-8),
            e => panic!("unexpected {e:?}"),
        }
        let g = parse_grammar("terminals: a\nnonterminals: S\nrule: S -> a | p=1\n").unwrap();
        assert!(check_consistency(&g).is_ok());
    }

    #[test]
    fn spectral_radius_known_spectra() {
        let diag = [0.3, 0.0, 0.0, 0.0, 0.8, 0.0, 0.0, 0.0, 0.5];
        assert!((spectral_radius(&diag, 3) - 0.8).abs() < 1e-8);
        // [[a, b], [c, d]] with eigenvalues ((a+d) ± sqrt((a-d)^2 + 4bc)) / 2
        let (a, b, c, d) = (0.2f64, 0.5f64, 0.3f64, 0.4f64);
        let exact = ((a + d) + ((a - d).powi(2) + 4.0 * b * c).sqrt()) / 2.0;
        assert!((spectral_radius(&[a, b, c, d], 2) - exact).abs() < 1e-8);
        // nilpotent
        assert!(spectral_radius(&[0.0, 1.0, 0.0, 0.0], 2).abs() < 1e-8);
        // periodic permutation
        assert!((spectral_radius(&[0.0, 0.9, 0.9, 0.0], 2) - 0.9).abs() < 1e-8);
        // reducible upper triangular
        assert!((spectral_radius(&[0.5, 0.7, 0.0, 0.6], 2) - 0.6).abs() < 1e-8);
    }

    #[test]
    fn feature_generators() {
        let g = parse_grammar(
            "terminals: a b\nnonterminals: S\nrule: S -> a S b | p=0.5\nrule: S -> a b | p=0.5\n",
        )
        .unwrap();
        let specs = parse_feature_list("derivation-length,string-length,surprisal", 1).unwrap();
        let g = assign_features(&g, &specs).unwrap();
        assert_eq!(g.feature_dim(), 3);
        let y = &g.rules()[0].features;
        assert_eq!(y[0], 1.0);
        assert_eq!(y[1], 2.0);
        assert!((y[2] - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(
            parse_feature_list("entropy", 1),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn given_columns_are_copied() {
        let g = parse_grammar(
            "terminals: a\nnonterminals: S\nfeatures: 2\nrule: S -> a | p=1 | Y=[3.0, 4.0]\n",
        )
        .unwrap();
        let specs = parse_feature_list("file:1,derivation-length", g.feature_dim()).unwrap();
        let g2 = assign_features(&g, &specs).unwrap();
        assert_eq!(g2.rules()[0].features, vec![4.0, 1.0]);
        assert!(assign_features(&g, &[FeatureSpec::Given(5)]).is_err());
    }

    #[test]
    fn unit_cycles_and_nullables() {
        let g = parse_grammar(
            "terminals: a\nnonterminals: S A\nrule: S -> A | p=0.5\nrule: S -> a | p=0.5\n\
             rule: A -> S | p=0.5\nrule: A -> a | p=0.5\n",
        )
        .unwrap();
        assert!(unit_cycle(&g).is_some());
        let g = parse_grammar(
            "terminals: a\nnonterminals: S A\nrule: S -> A a | p=1\nrule: A -> eps | p=0.5\n\
             rule: A -> a | p=0.5\n",
        )
        .unwrap();
        assert!(unit_cycle(&g).is_none());
        assert_eq!(nullable_nonterminals(&g), vec![false, true]);
    }
}
