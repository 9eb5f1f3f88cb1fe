mod common;

use std::collections::HashMap;

use common::{close, random_grammar, rng, Shape};
use proptest::prelude::*;
use scfg_moments::grammar::spectral_radius;
use scfg_moments::multiindex::{binom, enumerate_compositions, enumerate_downset, multinom, power};
use scfg_moments::{
    expectation_matrix, parse_grammar, validate, BinomialTuple, GrammarBuilder, MultiIndex,
};

fn multiindex(max_dim: usize, max_entry: u32) -> impl Strategy<Value = MultiIndex> {
    prop::collection::vec(0..=max_entry, 1..=max_dim).prop_map(MultiIndex::new)
}

/// `(α, β)` with `β ≤ α`.
fn pair_below(max_dim: usize, max_entry: u32) -> impl Strategy<Value = (MultiIndex, MultiIndex)> {
    multiindex(max_dim, max_entry).prop_flat_map(|a| {
        let parts: Vec<_> = a.exponents().iter().map(|&x| 0..=x).collect();
        (Just(a), parts.prop_map(MultiIndex::new))
    })
}

fn order() -> impl Strategy<Value = MultiIndex> {
    prop_oneof![
        Just(MultiIndex::from([1])),
        Just(MultiIndex::from([2])),
        Just(MultiIndex::from([1, 1])),
        Just(MultiIndex::from([2, 1])),
        Just(MultiIndex::from([2, 2])),
    ]
}

fn tuple_in(nu: &MultiIndex, range: f64) -> impl Strategy<Value = BinomialTuple> {
    let nu = nu.clone();
    prop::collection::vec(-range..range, nu.downset_size()).prop_map(move |c| {
        let mut t = BinomialTuple::zero(&nu);
        for (alpha, v) in enumerate_downset(&nu).iter().zip(c) {
            t.set(alpha, v).unwrap();
        }
        t
    })
}

fn triple(range: f64) -> impl Strategy<Value = (BinomialTuple, BinomialTuple, BinomialTuple)> {
    order().prop_flat_map(move |nu| {
        (
            tuple_in(&nu, range),
            tuple_in(&nu, range),
            tuple_in(&nu, range),
        )
    })
}

fn assert_tuples_close(
    a: &BinomialTuple,
    b: &BinomialTuple,
    tol: f64,
) -> Result<(), TestCaseError> {
    for ((alpha, x), (_, y)) in a.iter().zip(b.iter()) {
        prop_assert!(close(x, y, tol), "at {}: {} vs {}", alpha, x, y);
    }
    Ok(())
}

fn factorial(a: &MultiIndex) -> f64 {
    a.exponents()
        .iter()
        .map(|&k| (1..=k).map(f64::from).product::<f64>())
        .product()
}

/// Truncated product of `Σ f_α t^α / α!` and `Σ g_α t^α / α!`, read back
/// in the same scaled basis.
fn polynomial_product(f: &BinomialTuple, g: &BinomialTuple) -> HashMap<MultiIndex, f64> {
    let nu = f.order();
    let mut out: HashMap<MultiIndex, f64> = HashMap::new();
    for (b, fb) in f.iter() {
        for (d, gd) in g.iter() {
            let sum = MultiIndex::new(
                b.exponents()
                    .iter()
                    .zip(d.exponents())
                    .map(|(x, y)| x + y)
                    .collect(),
            );
            if !sum.leq(nu).unwrap() {
                continue;
            }
            *out.entry(sum).or_default() += fb / factorial(b) * gd / factorial(d);
        }
    }
    out.into_iter()
        .map(|(a, v)| {
            let s = factorial(&a);
            (a, v * s)
        })
        .collect()
}

proptest! {
    #[test]
    fn binom_is_two_part_multinom((a, b) in pair_below(3, 6)) {
        let rest = a.checked_sub(&b).unwrap();
        prop_assert_eq!(binom(&a, &b).unwrap(), multinom(&a, &[b, rest]).unwrap());
    }

    #[test]
    fn composition_count(a in multiindex(3, 4), n in 1usize..=4) {
        prop_assume!(a.length() <= 4);
        let expected: u64 = a
            .exponents()
            .iter()
            .map(|&x| {
                let top = u64::from(x) + n as u64 - 1;
                binom(&MultiIndex::from([top as u32]), &MultiIndex::from([(n - 1) as u32])).unwrap()
            })
            .product();
        let comps = enumerate_compositions(&a, n);
        prop_assert_eq!(comps.len() as u64, expected);
        for c in &comps {
            prop_assert_eq!(c.len(), n);
            let mut total = MultiIndex::zero(a.dim());
            for part in c {
                total = total.checked_add(part).unwrap();
            }
            prop_assert_eq!(&total, &a);
        }
    }

    #[test]
    fn multinomial_theorem(
        (d, zs) in (1usize..=2).prop_flat_map(|d| {
            (Just(d), prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), 1..=3))
        })
    ) {
        let nu = MultiIndex::new(vec![2; d]);
        let n = zs.len();
        let total: Vec<f64> = (0..d).map(|k| zs.iter().map(|z| z[k]).sum()).collect();
        for alpha in enumerate_downset(&nu) {
            let mut expanded = 0.0;
            for parts in enumerate_compositions(&alpha, n) {
                let coef = multinom(&alpha, &parts).unwrap() as f64;
                let prod: f64 = parts.iter().zip(&zs).map(|(b, z)| power(z, b).unwrap()).product();
                expanded += coef * prod;
            }
            let direct = power(&total, &alpha).unwrap();
            prop_assert!((expanded - direct).abs() <= 1e-9, "{} {} {}", alpha, expanded, direct);
        }
    }

    #[test]
    fn downset_is_graded_and_complete(nu in multiindex(3, 3)) {
        let elems = enumerate_downset(&nu);
        prop_assert_eq!(elems.len(), nu.downset_size());
        prop_assert!(elems.windows(2).all(|w| w[0].length() <= w[1].length()));
        prop_assert!(elems.iter().all(|a| a.leq(&nu).unwrap()));
        let mut sorted = elems.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), elems.len());
        prop_assert!(elems[0].is_zero());
    }

    #[test]
    fn semiring_axioms((a, b, c) in triple(10.0)) {
        let nu = a.order().clone();
        let zero = BinomialTuple::zero(&nu);
        let one = BinomialTuple::one(&nu);
        let m = |x: &BinomialTuple, y: &BinomialTuple| x.mul(y).unwrap();
        let s = |x: &BinomialTuple, y: &BinomialTuple| x.add(y).unwrap();
        assert_tuples_close(&s(&s(&a, &b), &c), &s(&a, &s(&b, &c)), 1e-9)?;
        assert_tuples_close(&s(&a, &b), &s(&b, &a), 1e-9)?;
        assert_tuples_close(&m(&m(&a, &b), &c), &m(&a, &m(&b, &c)), 1e-9)?;
        assert_tuples_close(&m(&a, &b), &m(&b, &a), 1e-9)?;
        assert_tuples_close(&m(&a, &s(&b, &c)), &s(&m(&a, &b), &m(&a, &c)), 1e-9)?;
        assert_tuples_close(&m(&s(&b, &c), &a), &s(&m(&b, &a), &m(&c, &a)), 1e-9)?;
        prop_assert_eq!(m(&a, &zero), zero.clone());
        prop_assert_eq!(m(&zero, &a), zero);
        prop_assert_eq!(m(&a, &one), a.clone());
    }

    #[test]
    fn mul_is_scaled_polynomial_product((a, b, _c) in triple(10.0)) {
        let reference = polynomial_product(&a, &b);
        let p = a.mul(&b).unwrap();
        for (alpha, v) in p.iter() {
            let r = reference.get(alpha).copied().unwrap_or(0.0);
            prop_assert!(close(v, r, 1e-9), "{}: {} vs {}", alpha, v, r);
        }
    }

    #[test]
    fn lift_is_a_homomorphism(
        steps in prop::collection::vec((0.01f64..=1.0, -2.0f64..2.0, -2.0f64..2.0), 1..=6)
    ) {
        let nu = MultiIndex::from([2, 2]);
        let mut prod = BinomialTuple::one(&nu);
        let (mut p, mut y) = (1.0, [0.0, 0.0]);
        for (pn, y0, y1) in &steps {
            prod = prod.mul(&BinomialTuple::lift(*pn, &[*y0, *y1], &nu).unwrap()).unwrap();
            p *= pn;
            y[0] += y0;
            y[1] += y1;
        }
        for (alpha, v) in prod.iter() {
            let direct = p * power(&y, alpha).unwrap();
            prop_assert!(close(v, direct, 1e-9), "{}: {} vs {}", alpha, v, direct);
        }
    }

    #[test]
    fn pow_matches_repeated_mul((a, _b, _c) in triple(2.0), r in 0u32..5) {
        let mut expected = BinomialTuple::one(a.order());
        for _ in 0..r {
            expected = expected.mul(&a).unwrap();
        }
        assert_tuples_close(&a.pow(r), &expected, 1e-12)?;
    }

    #[test]
    fn tuple_json_round_trip((a, _b, _c) in triple(10.0)) {
        let text = serde_json::to_string(&a).unwrap();
        let back: BinomialTuple = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn expectation_rows_sum_to_expected_counts(seed in any::<u64>()) {
        let g = random_grammar(&mut rng(seed), &Shape::suite(0.9));
        let m = expectation_matrix(&g);
        for i in 0..g.num_nonterminals() {
            let row: f64 = (0..g.num_nonterminals()).map(|n| m.get(i, n)).sum();
            let expected: f64 = g
                .rules_of(i)
                .map(|r| r.probability * r.nonterminal_counts.iter().sum::<u32>() as f64)
                .sum();
            prop_assert!(close(row, expected, 1e-12));
        }
    }

    #[test]
    fn canonical_text_round_trips(seed in any::<u64>()) {
        let g = random_grammar(&mut rng(seed), &Shape::suite(0.9));
        let text = g.to_text();
        let back = parse_grammar(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn power_iteration_on_diagonal(d in prop::collection::vec(0.0f64..2.0, 1..=5)) {
        let n = d.len();
        let mut a = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            a[i * n + i] = *v;
        }
        let exact = d.iter().cloned().fold(0.0, f64::max);
        prop_assert!((spectral_radius(&a, n) - exact).abs() <= 1e-8);
    }

    #[test]
    fn power_iteration_on_2x2(x in 0.0f64..1.5, y in 0.0f64..1.5, b in 0.05f64..1.0, c in 0.05f64..1.0) {
        // non-negative, irreducible: ρ = (x + y)/2 + sqrt(((x − y)/2)² + bc)
        let a = [x, b, c, y];
        let exact = (x + y) / 2.0 + (((x - y) / 2.0).powi(2) + b * c).sqrt();
        prop_assert!((spectral_radius(&a, 2) - exact).abs() <= 1e-8);
    }
}

#[test]
fn cnf_rows_are_at_most_two() {
    let mut r = rng(11);
    for _ in 0..50 {
        let shape = Shape {
            max_rhs: 2,
            ..Shape::suite(0.95)
        };
        let g = random_grammar(&mut r, &shape);
        // keep only CNF-shaped grammars
        let cnf = g.rules().iter().all(|rule| {
            (rule.rhs.len() == 2 && rule.terminal_length() == 0)
                || (rule.rhs.len() == 1 && rule.terminal_length() == 1)
        });
        if !cnf {
            continue;
        }
        let m = expectation_matrix(&g);
        for i in 0..g.num_nonterminals() {
            let row: f64 = (0..g.num_nonterminals()).map(|n| m.get(i, n)).sum();
            assert!(row <= 2.0 + 1e-12);
        }
    }
    let g = parse_grammar(
        "terminals: a\nnonterminals: S A\nrule: S -> A A | p=1\nrule: A -> S A | p=0.2\nrule: A -> a | p=0.8\n",
    )
    .unwrap();
    let m = expectation_matrix(&g);
    assert_eq!(m.get(0, 1), 2.0);
    assert!((m.get(1, 0) + m.get(1, 1) - 0.4).abs() < 1e-15);
}

#[test]
fn non_reduced_grammars_fail_validation() {
    let mut b = GrammarBuilder::new(&["a"], &["S"], "S");
    b.rule("S", &["a"], 1.0, None).unwrap();
    b.rule("S", &["a", "S"], 0.0, None).unwrap();
    let g = b.build().unwrap();
    assert!(!validate(&g).all_positive);
    assert!(!validate(&g).is_valid());

    // B is unreachable, C never terminates
    let g = parse_grammar(
        "terminals: a\nnonterminals: S B C\n\
         rule: S -> a | p=0.5\nrule: S -> a C | p=0.5\n\
         rule: B -> a | p=1\nrule: C -> C a | p=1\n",
    )
    .unwrap();
    let report = validate(&g);
    assert!(!report.is_valid());
    assert_eq!(report.accessible, vec![true, false, true]);
    assert_eq!(report.productive, vec![true, true, false]);
}
