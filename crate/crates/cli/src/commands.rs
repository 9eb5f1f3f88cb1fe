use std::fmt::Write as _;

use scfg_moments::grammar::require_valid;
use scfg_moments::multiindex::enumerate_downset;
use scfg_moments::oracle::moment_sums;
use scfg_moments::{
    assign_features, compute_moments, conditional_entropy, conditional_moments,
    derivational_entropy, enumerate_parses, expectation_matrix, oracle_moments, parse_feature_list,
    parse_grammar_with, validate as validate_grammar, BinomialTuple, Error, Grammar, MultiIndex,
    ParseOptions,
};
use serde::Serialize;

use crate::{ConditionalArgs, EntropyArgs, FeatureArgs, GrammarArgs, MomentArgs, OracleArgs};

pub struct Output {
    pub text: String,
    pub status: u8,
}

#[derive(Debug)]
pub struct Failure {
    pub message: String,
    pub status: u8,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            message: message.into(),
            status: 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::UnknownFeature(_) | Error::UnknownTerminal(_) | Error::UnknownNonterminal(_) => {
                2
            }
            _ => 1,
        };
        Failure {
            message: e.to_string(),
            status,
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn ok(text: String) -> Result<Output> {
    Ok(Output { text, status: 0 })
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn load(args: &GrammarArgs) -> Result<Grammar> {
    let text = std::fs::read_to_string(&args.grammar).map_err(|e| Failure {
        message: format!("cannot read {}: {e}", args.grammar.display()),
        status: 1,
    })?;
    let options = ParseOptions {
        normalize: args.normalize,
    };
    Ok(parse_grammar_with(&text, options)?)
}

fn load_valid(args: &GrammarArgs) -> Result<Grammar> {
    let g = load(args)?;
    require_valid(&g)?;
    Ok(g)
}

/// Applies the feature generators and checks `ν` against them.
fn featured(g: &Grammar, args: &FeatureArgs) -> Result<(Grammar, Vec<String>, MultiIndex)> {
    let list = match &args.features {
        Some(list) => list.clone(),
        None if has_features(g) => "file".into(),
        None => "derivation-length".into(),
    };
    let specs = parse_feature_list(&list, g.feature_dim())?;
    let names: Vec<String> = list
        .split(',')
        .map(str::trim)
        .flat_map(|name| {
            if name == "file" {
                (0..g.feature_dim()).map(|k| format!("file:{k}")).collect()
            } else {
                vec![name.to_string()]
            }
        })
        .collect();
    let g = assign_features(g, &specs)?;
    let nu = match &args.nu {
        Some(s) => s.parse::<MultiIndex>().map_err(|_| {
            Failure::usage(format!("invalid --nu `{s}`: expected integers like 1,2"))
        })?,
        None => MultiIndex::new(vec![1; specs.len()]),
    };
    if nu.dim() != specs.len() {
        return Err(Failure::usage(format!(
            "--nu has {} components but {} features are selected",
            nu.dim(),
            specs.len()
        )));
    }
    Ok((g, names, nu))
}

fn has_features(g: &Grammar) -> bool {
    g.rules()
        .iter()
        .any(|r| r.features.iter().any(|&y| y != 0.0))
}

/// Shortest representation that reads back to the same `f64`.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn word_ids(g: &Grammar, s: &str) -> Result<Vec<usize>> {
    let word: Vec<&str> = s.split_whitespace().collect();
    Ok(g.terminal_ids(&word)?)
}

fn root(g: &Grammar, name: &Option<String>) -> Result<usize> {
    match name {
        Some(n) => Ok(g.nonterminal_index(n)?),
        None => Ok(g.start()),
    }
}

fn label(alpha: &MultiIndex) -> String {
    format!("({alpha})")
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    valid: bool,
    proper: bool,
    all_positive: bool,
    useful: bool,
    problems: Vec<String>,
    spectral_radius: f64,
    consistent: bool,
    nonterminals: &'a [String],
    rules: usize,
    features: usize,
}

pub fn validate(args: &GrammarArgs) -> Result<Output> {
    let g = load(args)?;
    let report = validate_grammar(&g);
    let m = expectation_matrix(&g);
    let rho = m.spectral_radius();
    let consistent = m.is_consistent();
    let valid = report.is_valid() && consistent;
    let problems = report.problems(&g);
    let status = if valid { 0 } else { 1 };
    if args.json {
        let r = ValidateReport {
            valid,
            proper: report.proper,
            all_positive: report.all_positive,
            useful: report.useful(),
            problems,
            spectral_radius: rho,
            consistent,
            nonterminals: g.nonterminals(),
            rules: g.rules().len(),
            features: g.feature_dim(),
        };
        return Ok(Output {
            text: json(&r),
            status,
        });
    }
    let yes = |b: bool| if b { "yes" } else { "no" };
    let mut t = String::new();
    writeln!(
        t,
        "nonterminals: {}, rules: {}, features: {}",
        g.num_nonterminals(),
        g.rules().len(),
        g.feature_dim()
    )
    .unwrap();
    writeln!(t, "proper: {}", yes(report.proper)).unwrap();
    writeln!(t, "positive probabilities: {}", yes(report.all_positive)).unwrap();
    writeln!(t, "useful: {}", yes(report.useful())).unwrap();
    for p in &problems {
        writeln!(t, "  {p}").unwrap();
    }
    if consistent {
        writeln!(t, "ρ(M) = {rho:.6} < 1 − margin: consistent").unwrap();
    } else {
        writeln!(t, "ρ(M) = {rho:.6} ≥ 1 − margin: inconsistent").unwrap();
    }
    writeln!(t, "{}", if valid { "valid" } else { "invalid" }).unwrap();
    Ok(Output { text: t, status })
}

#[derive(Serialize)]
struct MomentsReport<'a> {
    features: &'a [String],
    #[serde(flatten)]
    table: &'a scfg_moments::MomentTable,
}

pub fn moments(args: &MomentArgs) -> Result<Output> {
    let g = load_valid(&args.grammar)?;
    let (g, names, nu) = featured(&g, &args.features)?;
    let table = compute_moments(&g, &nu)?;
    if args.grammar.json {
        return ok(json(&MomentsReport {
            features: &names,
            table: &table,
        }));
    }
    let mut t = String::new();
    writeln!(t, "features: {}", names.join(", ")).unwrap();
    writeln!(t, "nu: {}", label(&nu)).unwrap();
    writeln!(t, "alpha\t{}", g.nonterminals().join("\t")).unwrap();
    for (alpha, values) in table.iter() {
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        writeln!(t, "{}\t{}", label(alpha), cells.join("\t")).unwrap();
    }
    ok(t)
}

#[derive(Serialize)]
struct ConditionalReport<'a> {
    string: &'a str,
    nonterminal: &'a str,
    features: &'a [String],
    #[serde(flatten)]
    tuple: &'a BinomialTuple,
    inside_probability: f64,
    normalized: Option<BinomialTuple>,
}

fn normalized(t: &BinomialTuple) -> Option<BinomialTuple> {
    let z = t.coeffs()[0];
    (z > 0.0).then(|| {
        let coeffs = t.coeffs().iter().map(|c| c / z).collect();
        BinomialTuple::from_coeffs(t.downset(), coeffs).expect("same downset")
    })
}

pub fn conditional(args: &ConditionalArgs) -> Result<Output> {
    let g = load_valid(&args.grammar)?;
    let (g, names, nu) = featured(&g, &args.features)?;
    let word = word_ids(&g, &args.string)?;
    let i = root(&g, &args.nonterminal)?;
    let tuple = conditional_moments(&g, &word, &nu, i)?;
    let norm = normalized(&tuple);
    let string = args.string.split_whitespace().collect::<Vec<_>>().join(" ");
    let name = &g.nonterminals()[i];
    if args.grammar.json {
        return ok(json(&ConditionalReport {
            string: &string,
            nonterminal: name,
            features: &names,
            tuple: &tuple,
            inside_probability: tuple.coeffs()[0],
            normalized: norm,
        }));
    }
    let mut t = String::new();
    writeln!(t, "string: {string}").unwrap();
    writeln!(t, "nonterminal: {name}").unwrap();
    writeln!(t, "features: {}", names.join(", ")).unwrap();
    writeln!(t, "inside probability: {}", num(tuple.coeffs()[0])).unwrap();
    writeln!(t, "alpha\tunnormalized\tnormalized").unwrap();
    for (k, (alpha, v)) in tuple.iter().enumerate() {
        let n = norm
            .as_ref()
            .map_or_else(|| "-".to_string(), |n| num(n.coeffs()[k]));
        writeln!(t, "{}\t{}\t{n}", label(alpha), num(v)).unwrap();
    }
    ok(t)
}

#[derive(Serialize)]
struct EntropyReport<'a> {
    nonterminal: &'a str,
    unit: &'a str,
    entropy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditional: Option<ConditionalEntropyReport<'a>>,
}

#[derive(Serialize)]
struct ConditionalEntropyReport<'a> {
    string: &'a str,
    inside_probability: f64,
    surprisal_moment: f64,
    expected_surprisal: f64,
    entropy: f64,
}

pub fn entropy(args: &EntropyArgs) -> Result<Output> {
    let g = load_valid(&args.grammar)?;
    let i = root(&g, &args.nonterminal)?;
    let (unit, scale) = if args.bits {
        ("bits", std::f64::consts::LN_2.recip())
    } else {
        ("nats", 1.0)
    };
    let h = derivational_entropy(&g)?[i] * scale;
    let name = &g.nonterminals()[i];
    let string = args
        .string
        .as_ref()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "));
    let conditional = match &string {
        Some(s) => {
            if i != g.start() {
                return Err(Failure::usage(
                    "conditional entropy is defined for the start symbol only",
                ));
            }
            let c = conditional_entropy(&g, &word_ids(&g, s)?)?;
            Some(ConditionalEntropyReport {
                string: s,
                inside_probability: c.inside_probability,
                surprisal_moment: c.surprisal_moment * scale,
                expected_surprisal: c.expected_surprisal * scale,
                entropy: c.entropy * scale,
            })
        }
        None => None,
    };
    if args.grammar.json {
        return ok(json(&EntropyReport {
            nonterminal: name,
            unit,
            entropy: h,
            conditional,
        }));
    }
    let mut t = String::new();
    writeln!(t, "derivational entropy of {name}: {} {unit}", num(h)).unwrap();
    if let Some(c) = conditional {
        writeln!(t, "string: {}", c.string).unwrap();
        writeln!(t, "inside probability: {}", num(c.inside_probability)).unwrap();
        writeln!(t, "surprisal moment: {} {unit}", num(c.surprisal_moment)).unwrap();
        writeln!(
            t,
            "expected surprisal given string: {} {unit}",
            num(c.expected_surprisal)
        )
        .unwrap();
        writeln!(t, "conditional entropy: {} {unit}", num(c.entropy)).unwrap();
    }
    ok(t)
}

#[derive(Serialize)]
struct OracleReport<'a> {
    nonterminal: &'a str,
    features: &'a [String],
    nu: &'a MultiIndex,
    #[serde(skip_serializing_if = "Option::is_none")]
    string: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    derivations: Option<usize>,
    tail_mass_bound: f64,
    moments: Pairs,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_bounds: Option<Pairs>,
}

/// `(key, value)` pairs serialized as a JSON object in the given order.
struct Pairs(Vec<(String, f64)>);

impl Serialize for Pairs {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, x) in &self.0 {
            map.serialize_entry(k, x)?;
        }
        map.end()
    }
}

pub fn oracle(args: &OracleArgs) -> Result<Output> {
    let g = load_valid(&args.grammar)?;
    let (g, names, nu) = featured(&g, &args.features)?;
    let i = root(&g, &args.nonterminal)?;
    if args.max_steps == 0 {
        return Err(Failure::usage("--max-steps must be at least 1"));
    }
    let orders: Vec<String> = enumerate_downset(&nu)
        .iter()
        .map(|a| a.to_string())
        .collect();
    let string = args
        .string
        .as_ref()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "));
    let (values, bounds, tail, count) = match &string {
        Some(s) => {
            let parses = enumerate_parses(&g, i, &word_ids(&g, s)?)?;
            let sums = moment_sums(&parses, &nu)?;
            (sums, None, 0.0, Some(parses.len()))
        }
        None => {
            let o = oracle_moments(&g, i, &nu, args.max_steps, args.x_cap)?;
            (o.values, Some(o.error_bounds), o.tail_mass_bound, None)
        }
    };
    let name = &g.nonterminals()[i];
    if args.grammar.json {
        let zip = |v: &[f64]| Pairs(orders.iter().cloned().zip(v.iter().copied()).collect());
        return ok(json(&OracleReport {
            nonterminal: name,
            features: &names,
            nu: &nu,
            string: string.as_deref(),
            max_steps: string.is_none().then_some(args.max_steps),
            derivations: count,
            tail_mass_bound: tail,
            moments: zip(&values),
            error_bounds: bounds.as_deref().map(zip),
        }));
    }
    let mut t = String::new();
    writeln!(t, "nonterminal: {name}").unwrap();
    writeln!(t, "features: {}", names.join(", ")).unwrap();
    match (&string, count) {
        (Some(s), Some(n)) => {
            writeln!(t, "string: {s}").unwrap();
            writeln!(t, "derivations: {n}").unwrap();
            writeln!(t, "alpha\tsum").unwrap();
            for (a, v) in orders.iter().zip(&values) {
                writeln!(t, "({a})\t{}", num(*v)).unwrap();
            }
        }
        _ => {
            writeln!(t, "max steps: {}", args.max_steps).unwrap();
            writeln!(t, "tail mass bound: {}", num(tail)).unwrap();
            writeln!(t, "alpha\tpartial sum\terror bound").unwrap();
            let bounds = bounds.unwrap_or_default();
            for ((a, v), b) in orders.iter().zip(&values).zip(&bounds) {
                writeln!(t, "({a})\t{}\t{}", num(*v), num(*b)).unwrap();
            }
            writeln!(t, "bounds for alpha != 0 are heuristic, not certified").unwrap();
        }
    }
    ok(t)
}
