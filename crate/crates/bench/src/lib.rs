//! Grammars shared by the benchmarks in `benches/`.

use scfg_moments::{Grammar, GrammarBuilder};

/// `n` nonterminals `N0..N{n-1}` in a ring: each rewrites to `a N{i+1} N{i+2}`,
/// `b N{i+1}` or `a`, with two features per rule.
pub fn ring(n: usize) -> Grammar {
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let mut b =
        GrammarBuilder::new(&["a".to_string(), "b".to_string()], &names, "N0").feature_dim(2);
    for i in 0..n {
        let next = &names[(i + 1) % n];
        let after = &names[(i + 2) % n];
        let y = |k: usize| Some(vec![1.0, (i + k) as f64 / n as f64]);
        b.rule(&names[i], &["a", next.as_str(), after.as_str()], 0.2, y(0))
            .and_then(|b| b.rule(&names[i], &["b", next.as_str()], 0.3, y(1)))
            .and_then(|b| b.rule(&names[i], &["a"], 0.5, y(2)))
            .expect("ring rules are well formed");
    }
    b.build().expect("ring grammar builds")
}

/// A three-nonterminal grammar in Chomsky normal form over `{a, b}`.
pub fn cnf() -> Grammar {
    scfg_moments::parse_grammar(
        "terminals: a b\nnonterminals: S A B\nfeatures: 2\n\
         rule: S -> S S | p=0.2  | Y=[1, 0.5]\n\
         rule: S -> A B | p=0.3  | Y=[1, -1]\n\
         rule: S -> a   | p=0.5  | Y=[1, 0]\n\
         rule: A -> A B | p=0.25 | Y=[1, 2]\n\
         rule: A -> a   | p=0.45 | Y=[1, 0]\n\
         rule: A -> b   | p=0.3  | Y=[1, 1]\n\
         rule: B -> S A | p=0.2  | Y=[1, 0]\n\
         rule: B -> b   | p=0.8  | Y=[1, 0.25]\n",
    )
    .expect("cnf grammar parses")
}

/// `a b a b ...` of length `n`, as terminal ids.
pub fn alternating(n: usize) -> Vec<usize> {
    (0..n).map(|k| k % 2).collect()
}
