//! Sparse multivariate polynomials with exact differentiation, and a parser
//! for the expression syntax used in problem files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A polynomial in `nvars` variables. Terms are keyed by exponent vector and
/// never carry a zero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn variable(nvars: usize, index: usize) -> Self {
        let mut e = vec![0; nvars];
        e[index] = 1;
        let mut p = Polynomial::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (f64, Vec<u32>)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (c, e) in terms {
            assert_eq!(e.len(), nvars, "exponent vector length");
            p.add_term(e, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    fn add_term(&mut self, e: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(e).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (e, &c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (e, &c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[var] -= 1;
            out.add_term(d, c * e[var] as f64);
        }
        out
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        assert_eq!(vars.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, &c)| {
                e.iter()
                    .zip(vars)
                    .filter(|(&k, _)| k > 0)
                    .fold(c, |acc, (&k, &v)| acc * v.powi(k as i32))
            })
            .sum()
    }

    /// Moves every variable `i` to position `map[i]` in a space of `nvars` variables.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Polynomial {
        assert_eq!(map.len(), self.nvars);
        let mut out = Polynomial::zero(nvars);
        for (e, &c) in &self.terms {
            let mut ne = vec![0; nvars];
            for (i, &k) in e.iter().enumerate() {
                ne[map[i]] += k;
            }
            out.add_term(ne, c);
        }
        out
    }

    /// Renders the polynomial with the given variable names; the output parses back
    /// to an identical polynomial.
    pub fn to_expr(&self, names: &[String]) -> String {
        assert_eq!(names.len(), self.nvars);
        if self.terms.is_empty() {
            return "0".into();
        }
        let mut s = String::new();
        // highest total degree first reads more naturally
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (k, (e, &c)) in terms.into_iter().enumerate() {
            let mag = c.abs();
            if k == 0 {
                if c < 0.0 {
                    s.push('-');
                }
            } else {
                s.push_str(if c < 0.0 { " - " } else { " + " });
            }
            let mono: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .map(|(i, &p)| {
                    if p == 1 {
                        names[i].clone()
                    } else {
                        format!("{}^{}", names[i], p)
                    }
                })
                .collect();
            if mono.is_empty() {
                let _ = write!(s, "{mag:?}");
            } else {
                if mag != 1.0 {
                    let _ = write!(s, "{mag:?}*");
                }
                s.push_str(&mono.join("*"));
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str, line: usize, col0: usize) -> Result<Vec<(Token, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, message: String| Error::Parse {
        line,
        column: col0 + col,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push((Token::Plus, col));
                i += 1
            }
            '-' | '\u{2212}' => {
                out.push((Token::Minus, col));
                i += 1
            }
            '*' => {
                out.push((Token::Star, col));
                i += 1
            }
            '^' => {
                out.push((Token::Caret, col));
                i += 1
            }
            '(' => {
                out.push((Token::LParen, col));
                i += 1
            }
            ')' => {
                out.push((Token::RParen, col));
                i += 1
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let v: f64 = lit
                    .parse()
                    .map_err(|_| err(col, format!("bad number `{lit}`")))?;
                out.push((Token::Num(v), col));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Token::Ident(chars[start..i].iter().collect()), col));
            }
            other => return Err(err(col, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct ExprParser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    names: &'a [String],
    line: usize,
    col0: usize,
    end_col: usize,
}

impl ExprParser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        let column = self
            .tokens
            .get(self.pos)
            .map(|t| t.1)
            .unwrap_or(self.end_col);
        Error::Parse {
            line: self.line,
            column: self.col0 + column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.unary()?;
        while let Some(Token::Star) = self.peek() {
            self.pos += 1;
            acc = acc.mul(&self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(self.unary()?.scale(-1.0))
            }
            Some(Token::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial> {
        let base = self.primary()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            match self.peek() {
                Some(&Token::Num(k)) if k >= 0.0 && k.fract() == 0.0 && k <= 64.0 => {
                    self.pos += 1;
                    Ok(base.pow(k as u32))
                }
                _ => Err(self.err("exponent must be a non-negative integer")),
            }
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Polynomial> {
        let nvars = self.names.len();
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Polynomial::constant(nvars, v))
            }
            Some(Token::Ident(name)) => match self.names.iter().position(|n| *n == name) {
                Some(i) => {
                    self.pos += 1;
                    Ok(Polynomial::variable(nvars, i))
                }
                None => Err(self.err(format!("unknown variable `{name}`"))),
            },
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.err("expected `)`")),
                }
            }
            Some(_) => Err(self.err("expected a number, variable or `(`")),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

/// Parses a polynomial expression over the named variables. `line` and `col0`
/// locate the text inside a larger file for error messages.
pub fn parse_expr(text: &str, names: &[String], line: usize, col0: usize) -> Result<Polynomial> {
    let tokens = tokenize(text, line, col0)?;
    let mut parser = ExprParser {
        tokens,
        pos: 0,
        names,
        line,
        col0,
        end_col: text.chars().count() + 1,
    };
    let p = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.err("unexpected trailing input"));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["x1", "y1", "y2"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_and_evaluate() {
        let p = parse_expr("y1^2 - y2^2 - x1", &names(), 1, 0).unwrap();
        assert_eq!(p.eval(&[0.5, 2.0, 1.0]), 4.0 - 1.0 - 0.5);
        let q = parse_expr("-(y1 + 2*y2)^2 * 3", &names(), 1, 0).unwrap();
        assert_eq!(q.eval(&[0.0, 1.0, 1.0]), -27.0);
        let r = parse_expr("1.5e-3*y1 + .5", &names(), 1, 0).unwrap();
        assert_eq!(r.eval(&[0.0, 2.0, 0.0]), 3e-3 + 0.5);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let p = parse_expr("-y1^2", &names(), 1, 0).unwrap();
        assert_eq!(p.eval(&[0.0, 3.0, 0.0]), -9.0);
    }

    #[test]
    fn derivatives_are_exact() {
        let p = parse_expr("4*y1^3 - x1 + 3*y2*y1^2", &names(), 1, 0).unwrap();
        let d = p.derivative(1);
        assert_eq!(d, parse_expr("12*y1^2 + 6*y2*y1", &names(), 1, 0).unwrap());
        assert!(d.derivative(1).derivative(1).derivative(1).derivative(2).is_zero());
    }

    #[test]
    fn errors_report_position() {
        match parse_expr("y1 + z3", &names(), 4, 5) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(column, 5 + 6);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expr("y1^1.5", &names(), 1, 0).is_err());
        assert!(parse_expr("(y1 + y2", &names(), 1, 0).is_err());
        assert!(parse_expr("y1 y2", &names(), 1, 0).is_err());
    }

    #[test]
    fn rendering_round_trips() {
        let p = parse_expr("-0.1*y1^2*x1 + 3 - y2 + 1e-20*y1", &names(), 1, 0).unwrap();
        let s = p.to_expr(&names());
        assert_eq!(parse_expr(&s, &names(), 1, 0).unwrap(), p);
    }
}
