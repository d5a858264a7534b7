//! Declarative text form of an estimator.
//!
//! ```text
//! spec   := ["expect" "="] factor (("*" | "/") factor)* ["over" policy]
//! factor := INT
//!         | "|" dim ("," dim)* "|"              domain size of the listed dims
//!         | "cube" ["[" name "]"] "(" [arg ("," arg)*] ")"
//! arg    := dim                                 copy the observed coordinate
//!         | dim "=" value                       fixed coordinate
//! policy := "support" | "product" | "observed"
//! ```
//!
//! `cube(day, hour)` is the observed cube summed down to `day` and `hour`;
//! `cube[name](...)` starts from the named cuboid of a [`Catalog`] instead
//! (`base` is always available). The hour profile model reads
//! `expect = cube(day) * cube(hour) / cube()`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use super::{
    domain_size, CoordinateProjection, DomainPolicy, EstimatorError, EstimatorSpec, Exponent, Term,
};
use crate::cube::{Cube, CubeOp, CubeStore, Trace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("estimator spec, column {column}: {message}")]
pub struct ParseError {
    pub column: usize,
    pub message: String,
}

/// Named derivation traces usable as `cube[name](...)`.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    named: BTreeMap<String, Trace>,
}

impl Catalog {
    pub fn new() -> Self {
        let mut named = BTreeMap::new();
        named.insert("base".to_owned(), Trace::new());
        Self { named }
    }

    pub fn insert(&mut self, name: impl Into<String>, trace: Trace) {
        self.named.insert(name.into(), trace);
    }

    pub fn get(&self, name: &str) -> Option<&Trace> {
        self.named.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Arg {
    Copy(String),
    Fixed(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Factor {
    Int(u64),
    DomainSize(Vec<String>),
    Cube { source: Option<String>, args: Vec<Arg> },
}

/// Parsed, not yet bound to an observed cube.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecText {
    factors: Vec<(Exponent, Factor)>,
    domain: DomainPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let n = s.parse().map_err(|_| ParseError {
                column: col,
                message: format!("integer `{s}` out of range"),
            })?;
            out.push((col, Tok::Int(n)));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '-' | '.' | ':'))
            {
                i += 1;
            }
            out.push((col, Tok::Ident(chars[start..i].iter().collect())));
        } else if c == '"' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            if i == chars.len() {
                return Err(ParseError {
                    column: col,
                    message: "unterminated string".into(),
                });
            }
            out.push((col, Tok::Str(chars[start..i].iter().collect())));
            i += 1;
        } else if "*/|(),=[]".contains(c) {
            out.push((col, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(ParseError {
                column: col,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(c, _)| *c).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            column: self.col(),
            message: message.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected a name"),
        }
    }

    fn value(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) | Some(Tok::Str(s)) => Ok(s),
            Some(Tok::Int(n)) => Ok(n.to_string()),
            _ => {
                self.pos -= 1;
                self.err("expected a value")
            }
        }
    }

    fn factor(&mut self) -> Result<Factor, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                if n == 0 {
                    return Err(ParseError {
                        column: self.col() - 1,
                        message: "constant must be positive".into(),
                    });
                }
                Ok(Factor::Int(n))
            }
            Some(Tok::Sym('|')) => {
                self.pos += 1;
                let mut dims = vec![self.ident()?];
                while self.eat(',') {
                    dims.push(self.ident()?);
                }
                self.expect('|')?;
                Ok(Factor::DomainSize(dims))
            }
            Some(Tok::Ident(s)) if s == "cube" => {
                self.pos += 1;
                let source = if self.eat('[') {
                    let name = self.ident()?;
                    self.expect(']')?;
                    Some(name)
                } else {
                    None
                };
                self.expect('(')?;
                let mut args = Vec::new();
                if !self.eat(')') {
                    loop {
                        let dim = self.ident()?;
                        if self.eat('=') {
                            args.push(Arg::Fixed(dim, self.value()?));
                        } else {
                            args.push(Arg::Copy(dim));
                        }
                        if self.eat(')') {
                            break;
                        }
                        self.expect(',')?;
                    }
                }
                Ok(Factor::Cube { source, args })
            }
            _ => self.err("expected an integer, `|dims|` or `cube(...)`"),
        }
    }
}

/// Parses the text form of an estimator.
pub fn parse_spec(src: &str) -> Result<SpecText, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        end: src.chars().count() + 1,
        toks,
        pos: 0,
    };
    if p.peek() == Some(&Tok::Ident("expect".into())) {
        p.pos += 1;
        p.expect('=')?;
    }
    let mut factors = vec![(Exponent::Numerator, p.factor()?)];
    let mut domain = DomainPolicy::Support;
    loop {
        match p.peek() {
            Some(Tok::Sym('*')) => {
                p.pos += 1;
                factors.push((Exponent::Numerator, p.factor()?));
            }
            Some(Tok::Sym('/')) => {
                p.pos += 1;
                factors.push((Exponent::Denominator, p.factor()?));
            }
            Some(Tok::Ident(s)) if s == "over" => {
                p.pos += 1;
                domain = match p.ident()?.as_str() {
                    "support" => DomainPolicy::Support,
                    "product" => DomainPolicy::Product,
                    "observed" => DomainPolicy::Observed,
                    other => {
                        p.pos -= 1;
                        return p.err(format!("unknown domain policy `{other}`"));
                    }
                };
                if p.peek().is_some() {
                    return p.err("unexpected input after domain policy");
                }
                break;
            }
            None => break,
            _ => return p.err("expected `*`, `/` or end of input"),
        }
    }
    if !factors.iter().any(|(_, f)| matches!(f, Factor::Cube { .. })) {
        return Err(ParseError {
            column: 1,
            message: "at least one cube(...) term is required".into(),
        });
    }
    Ok(SpecText { factors, domain })
}

impl SpecText {
    /// Binds the parsed form to an observed cube.
    pub fn compile(
        &self,
        obs: &Cube,
        store: &CubeStore,
        catalog: &Catalog,
    ) -> Result<EstimatorSpec, EstimatorError> {
        let mut constant = Ratio::from_integer(1u64);
        let mut terms = Vec::new();
        for (exp, factor) in &self.factors {
            let scale = match factor {
                Factor::Int(n) => Some(*n),
                Factor::DomainSize(dims) => {
                    let dims: Vec<&str> = dims.iter().map(String::as_str).collect();
                    Some(domain_size(obs, &dims)?)
                }
                Factor::Cube { source, args } => {
                    let start = match source {
                        None => obs.provenance().clone(),
                        Some(name) => catalog.get(name).cloned().ok_or_else(|| {
                            EstimatorError::Parse(ParseError {
                                column: 0,
                                message: format!("unknown cube `{name}`"),
                            })
                        })?,
                    };
                    let from = store.materialize(&start)?;
                    let mut projection = CoordinateProjection::new();
                    for a in args {
                        projection = match a {
                            Arg::Copy(d) => projection.copy(d),
                            Arg::Fixed(d, v) => projection.fixed(d, v),
                        };
                    }
                    let keep: Vec<&str> = projection.0.keys().map(String::as_str).collect();
                    for k in &keep {
                        if !from.has_dim(k) {
                            return Err(EstimatorError::UnknownTarget((*k).to_owned()));
                        }
                    }
                    let drop: Vec<String> = from
                        .dims()
                        .iter()
                        .map(|d| d.name().to_owned())
                        .filter(|n| !keep.contains(&n.as_str()))
                        .collect();
                    let trace = if drop.is_empty() {
                        start
                    } else {
                        start.then(CubeOp::aggregate(drop))
                    };
                    terms.push(Term {
                        cube: trace,
                        projection,
                        exponent: *exp,
                    });
                    None
                }
            };
            if let Some(n) = scale {
                if n == 0 {
                    return Err(EstimatorError::NonPositiveConstant);
                }
                constant = match exp {
                    Exponent::Numerator => constant * Ratio::from_integer(n),
                    Exponent::Denominator => constant / Ratio::from_integer(n),
                };
            }
        }
        Ok(EstimatorSpec {
            constant,
            terms,
            domain: self.domain,
        })
    }
}

impl fmt::Display for SpecText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expect =")?;
        for (i, (exp, factor)) in self.factors.iter().enumerate() {
            match (i, exp) {
                (0, _) => f.write_str(" ")?,
                (_, Exponent::Numerator) => f.write_str(" * ")?,
                (_, Exponent::Denominator) => f.write_str(" / ")?,
            }
            match factor {
                Factor::Int(n) => write!(f, "{n}")?,
                Factor::DomainSize(d) => write!(f, "|{}|", d.join(", "))?,
                Factor::Cube { source, args } => {
                    f.write_str("cube")?;
                    if let Some(s) = source {
                        write!(f, "[{s}]")?;
                    }
                    let args: Vec<String> = args
                        .iter()
                        .map(|a| match a {
                            Arg::Copy(d) => d.clone(),
                            Arg::Fixed(d, v) => format!("{d}=\"{v}\""),
                        })
                        .collect();
                    write!(f, "({})", args.join(", "))?;
                }
            }
        }
        match self.domain {
            DomainPolicy::Support => Ok(()),
            DomainPolicy::Product => f.write_str(" over product"),
            DomainPolicy::Observed => f.write_str(" over observed"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{cube_from_rows, DimKind, DimSpec, DimensionSchema};
    use crate::estimator::{day_hour_profile_spec, expected_ratio_product};

    fn setup() -> (Cube, CubeStore) {
        let schema = DimensionSchema::new(vec![
            DimSpec::categorical("author"),
            DimSpec::new("day", DimKind::Day),
            DimSpec::new("hour", DimKind::HourOfDay),
        ])
        .unwrap();
        let rows: &[(&[&str], u64)] = &[
            (&["a", "d1", "1"], 10),
            (&["b", "d1", "2"], 30),
            (&["a", "d2", "1"], 20),
            (&["b", "d2", "2"], 40),
        ];
        let base = cube_from_rows(&schema, rows).unwrap();
        let store = CubeStore::new(base.clone()).unwrap();
        let obs = base.aggregate(&["author"]).unwrap();
        (obs, store)
    }

    #[test]
    fn hour_model_text_matches_builder() {
        let (obs, store) = setup();
        let parsed = parse_spec("expect = cube(day) * cube(hour) / cube()").unwrap();
        let spec = parsed.compile(&obs, &store, &Catalog::new()).unwrap();
        assert_eq!(spec, day_hour_profile_spec(&obs, "day", "hour"));
    }

    #[test]
    fn constants_and_domain_sizes() {
        let (obs, store) = setup();
        let spec = parse_spec("cube() / |day, hour| over product")
            .unwrap()
            .compile(&obs, &store, &Catalog::new())
            .unwrap();
        assert_eq!(spec.constant, Ratio::new(1, 48));
        assert_eq!(spec.domain, DomainPolicy::Product);
        let f = expected_ratio_product(&store, &obs, &spec).unwrap();
        assert_eq!(f.cells.len(), 48);
        assert!((f.total_expected() - 100.0).abs() < 1e-9);

        let spec = parse_spec("3 * cube(day) / 4")
            .unwrap()
            .compile(&obs, &store, &Catalog::new())
            .unwrap();
        assert_eq!(spec.constant, Ratio::new(3, 4));
    }

    #[test]
    fn named_source_and_fixed_values() {
        let (obs, store) = setup();
        let spec = parse_spec(r#"cube(day) * cube[base](author="a", hour) / cube[base](hour)"#)
            .unwrap()
            .compile(&obs, &store, &Catalog::new())
            .unwrap();
        let f = expected_ratio_product(&store, &obs, &spec).unwrap();
        // day d2 total 60, author a holds all 30 retweets of hour 1
        let c = f.find(&["d2", "1"]).unwrap();
        assert!((c.expected - 60.0).abs() < 1e-12);
    }

    #[test]
    fn display_round_trips() {
        let src = r#"expect = 2 * cube(day) * cube[base](author="x y", hour) / cube() / |hour| over observed"#;
        let parsed = parse_spec(src).unwrap();
        assert_eq!(parsed.to_string(), src);
        assert_eq!(parse_spec(&parsed.to_string()).unwrap(), parsed);
    }

    #[test]
    fn syntax_errors_carry_columns() {
        let e = parse_spec("cube(day) + cube()").unwrap_err();
        assert_eq!(e.column, 11);
        assert!(parse_spec("2 / 3").is_err());
        assert!(parse_spec("cube(day").is_err());
        assert!(parse_spec("cube() over everything").is_err());
        assert!(parse_spec("0 * cube()").is_err());
    }

    #[test]
    fn unknown_names_fail_at_compile() {
        let (obs, store) = setup();
        let catalog = Catalog::new();
        assert!(parse_spec("cube(month)")
            .unwrap()
            .compile(&obs, &store, &catalog)
            .is_err());
        assert!(parse_spec("cube[nowhere]()")
            .unwrap()
            .compile(&obs, &store, &catalog)
            .is_err());
    }
}
