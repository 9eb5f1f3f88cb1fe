//! Cross-moments of additive statistics of stochastic context-free grammar
//! derivations.
//!
//! Every rule `A_i → B_{i,j}` carries a probability `p` and a feature vector
//! `Y ∈ R^D`; a derivation `π = π₁⋯π_N` has probability `Π p(π_n)` and
//! statistic `X(π) = Σ Y(π_n)`. For a multi-index `α` this crate computes
//!
//! * unconditional cross-moments `m^(α)_i = Σ_{π ∈ Ω_i} p(π) X(π)^α` by
//!   solving `(I − M) m^(α) = c^(α)` grade by grade ([`cross_moments`]);
//! * conditional cross-moments `m^(α)_{i|u}`, restricted to derivations of a
//!   string `u`, by running the inside algorithm over the binomial semiring
//!   ([`inside`], [`semiring`]);
//! * brute-force reference values for both ([`oracle`]).
//!
//! With `Y = 1` the first moment is the expected derivation length, with
//! `Y = −ln p` it is the derivational entropy.
//!
//! ```
//! use scfg_moments::{assign_features, compute_moments, parse_grammar, FeatureSpec, MultiIndex};
//!
//! let g = parse_grammar("terminals: a\nnonterminals: S\n\
//!                        rule: S -> a S | p=0.4\nrule: S -> a | p=0.6\n").unwrap();
//! let g = assign_features(&g, &[FeatureSpec::DerivationLength]).unwrap();
//! let table = compute_moments(&g, &MultiIndex::from([2])).unwrap();
//! let mean = table.get(&MultiIndex::from([1])).unwrap()[0];
//! assert!((mean - 1.0 / 0.6).abs() < 1e-12);
//! ```

pub mod cross_moments;
pub mod error;
pub mod grammar;
pub mod inside;
pub mod linalg;
pub mod multiindex;
pub mod oracle;
pub mod semiring;

pub use cross_moments::{
    compute_c, compute_c_literal, compute_moments, derivational_entropy, second_order_c_scalar,
    MomentTable, SecondOrderTerms,
};
pub use error::{Error, Result};
pub use grammar::{
    assign_features, check_consistency, expectation_matrix, parse_feature_list, parse_grammar,
    parse_grammar_with, validate, ExpectationMatrix, FeatureSpec, Grammar, GrammarBuilder,
    ParseOptions, Rule, Symbol, ValidationReport,
};
pub use inside::{
    conditional_entropy, conditional_moments, derivation_recursion_check, inside_table,
    normalized_conditional_moments, ConditionalEntropy, InsideTable,
};
pub use linalg::LinearSolver;
pub use multiindex::{Downset, MultiIndex};
pub use oracle::{enumerate_derivations, enumerate_parses, oracle_moments, Derivation};
pub use semiring::BinomialTuple;
