//! Text format for problems and nonlinear programs.
//!
//! ```text
//! # comment
//! dims 2 2
//! cone PP
//! order 2
//! base x 0 0 y 0 0
//! f1 = y1^2 - y2^2 - x1
//! f2 = y1*y2 - x2
//! ```
//!
//! Nonlinear programs use `objective = ...` and `g1 = ...`, `g2 = ...` in
//! place of the `f` lines and carry no `cone` line.

use std::collections::BTreeMap;

use super::polynomial::parse_expr;
use super::{variable_names, Mapping, NlpSpec, Polynomial, ProblemSpec};
use crate::cones::ConeSpec;
use crate::error::{Error, Result};
use crate::multilinear::Vector;

struct Located<T> {
    line: usize,
    value: T,
}

#[derive(Default)]
struct Sections {
    dims: Option<Located<(usize, usize)>>,
    cone: Option<Located<String>>,
    order: Option<Located<usize>>,
    base: Option<Located<(Vec<f64>, Vec<f64>)>>,
    // name -> (line, column of expression start, expression text)
    equations: BTreeMap<String, (usize, usize, String)>,
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_number(tok: &str, line: usize, column: usize) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| perr(line, column, format!("expected a real number, found `{tok}`")))
}

fn parse_usize(tok: &str, line: usize, column: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| perr(line, column, format!("expected a non-negative integer, found `{tok}`")))
}

/// Splits on whitespace, keeping 1-based start columns.
fn words(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out.into_iter()
        .map(|(s, w)| (line[..s].chars().count() + 1, w))
        .collect()
}

fn split_sections(text: &str) -> Result<Sections> {
    let mut sec = Sections::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        if let Some(eq) = content.find('=') {
            let name = content[..eq].trim();
            let name_col = content[..eq].find(name).unwrap_or(0) + 1;
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(perr(line, name_col, "expected `<name> = <expression>`"));
            }
            let expr = &content[eq + 1..];
            let col0 = content[..eq + 1].chars().count();
            if sec
                .equations
                .insert(name.to_string(), (line, col0, expr.to_string()))
                .is_some()
            {
                return Err(perr(line, name_col, format!("`{name}` defined twice")));
            }
            continue;
        }
        let w = words(content);
        let (kcol, key) = w[0];
        let args = &w[1..];
        let dup = |what: &str| perr(line, kcol, format!("duplicate `{what}` line"));
        match key {
            "dims" => {
                if args.len() != 2 {
                    return Err(perr(line, kcol, "`dims` takes two integers: m n"));
                }
                let m = parse_usize(args[0].1, line, args[0].0)?;
                let n = parse_usize(args[1].1, line, args[1].0)?;
                if sec.dims.replace(Located { line, value: (m, n) }).is_some() {
                    return Err(dup("dims"));
                }
            }
            "cone" => {
                if args.len() != 1 {
                    return Err(perr(line, kcol, "`cone` takes one string over F and P"));
                }
                let value = args[0].1.to_string();
                if sec.cone.replace(Located { line, value }).is_some() {
                    return Err(dup("cone"));
                }
            }
            "order" => {
                if args.len() != 1 {
                    return Err(perr(line, kcol, "`order` takes one integer"));
                }
                let p = parse_usize(args[0].1, line, args[0].0)?;
                if sec.order.replace(Located { line, value: p }).is_some() {
                    return Err(dup("order"));
                }
            }
            "base" => {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                let mut target: Option<&mut Vec<f64>> = None;
                let mut seen_x = false;
                let mut seen_y = false;
                for &(col, tok) in args {
                    match tok {
                        "x" if !seen_x && !seen_y => {
                            seen_x = true;
                            target = Some(&mut xs);
                        }
                        "y" if !seen_y => {
                            seen_y = true;
                            target = Some(&mut ys);
                        }
                        _ => match target.as_deref_mut() {
                            Some(t) => t.push(parse_number(tok, line, col)?),
                            None => return Err(perr(line, col, "expected `x` or `y`")),
                        },
                    }
                }
                if !seen_x || !seen_y {
                    return Err(perr(line, kcol, "`base` needs `x <reals> y <reals>`"));
                }
                if sec
                    .base
                    .replace(Located {
                        line,
                        value: (xs, ys),
                    })
                    .is_some()
                {
                    return Err(dup("base"));
                }
            }
            other => return Err(perr(line, kcol, format!("unknown directive `{other}`"))),
        }
    }
    Ok(sec)
}

fn base_point(sec: &Sections, m: usize, n: usize) -> Result<(Vector, Vector)> {
    match &sec.base {
        None => Ok((Vector::zeros(m), Vector::zeros(n))),
        Some(b) => {
            let (xs, ys) = &b.value;
            if xs.len() != m || ys.len() != n {
                return Err(perr(
                    b.line,
                    1,
                    format!(
                        "base point has {} + {} entries, dims say {m} + {n}",
                        xs.len(),
                        ys.len()
                    ),
                ));
            }
            Ok((Vector::from_row_slice(xs), Vector::from_row_slice(ys)))
        }
    }
}

fn take_components(
    sec: &mut Sections,
    prefix: &str,
    count: usize,
    names: &[String],
) -> Result<Vec<Polynomial>> {
    let mut out = Vec::with_capacity(count);
    for i in 1..=count {
        let key = format!("{prefix}{i}");
        let (line, col0, text) = sec
            .equations
            .remove(&key)
            .ok_or_else(|| perr(0, 0, format!("missing component `{key}`")))?;
        out.push(parse_expr(&text, names, line, col0)?);
    }
    Ok(out)
}

fn reject_leftovers(sec: &Sections) -> Result<()> {
    match sec.equations.iter().next() {
        Some((name, (line, _, _))) => Err(perr(*line, 1, format!("unexpected equation `{name}`"))),
        None => Ok(()),
    }
}

/// Parses a problem file. The singular pipeline needs `order >= 2`, and the
/// base point must solve the inclusion.
pub fn parse_problem(text: &str) -> Result<ProblemSpec> {
    let mut sec = split_sections(text)?;
    let (m, n) = sec
        .dims
        .as_ref()
        .map(|d| d.value)
        .ok_or_else(|| perr(0, 0, "missing `dims` line"))?;
    let cone = match &sec.cone {
        Some(c) => {
            let spec: ConeSpec = c.value.parse().map_err(|e| match e {
                Error::Parse {
                    column, message, ..
                } => perr(c.line, column, message),
                other => other,
            })?;
            if spec.dim() != n {
                return Err(perr(
                    c.line,
                    1,
                    format!("cone has {} symbols for {n} unknowns", spec.dim()),
                ));
            }
            spec
        }
        None => return Err(perr(0, 0, "missing `cone` line")),
    };
    let p = match &sec.order {
        Some(o) if o.value < 2 => {
            return Err(perr(o.line, 1, format!("order {} is below 2", o.value)))
        }
        Some(o) => o.value,
        None => return Err(perr(0, 0, "missing `order` line")),
    };
    let (x0, y0) = base_point(&sec, m, n)?;
    let names = variable_names(m, n);
    let polys = take_components(&mut sec, "f", n, &names)?;
    reject_leftovers(&sec)?;
    ProblemSpec::new(Mapping::Polynomial(polys), cone, x0, y0, p)
}

/// Renders a polynomial problem in the file format read by [`parse_problem`].
pub fn write_problem(spec: &ProblemSpec) -> Result<String> {
    let polys = spec
        .polynomials()
        .ok_or_else(|| Error::InvalidProblem("opaque mappings cannot be written".into()))?;
    let names = spec.variable_names();
    let nums = |v: &Vector| v.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>();
    let mut out = format!(
        "dims {} {}\ncone {}\norder {}\n",
        spec.param_dim(),
        spec.dim(),
        spec.cone(),
        spec.order()
    );
    let mut base = vec!["base".to_string(), "x".to_string()];
    base.extend(nums(spec.x0()));
    base.push("y".into());
    base.extend(nums(spec.y0()));
    out.push_str(&base.join(" "));
    out.push('\n');
    for (i, q) in polys.iter().enumerate() {
        out.push_str(&format!("f{} = {}\n", i + 1, q.to_expr(&names)));
    }
    Ok(out)
}

/// Parses a nonlinear program: `dims m n`, optional `order` and `base`,
/// `objective = ...`, and constraints `g1 = ...` meaning `g1 <= 0`.
pub fn parse_nlp(text: &str) -> Result<NlpSpec> {
    let mut sec = split_sections(text)?;
    let (m, n) = sec
        .dims
        .as_ref()
        .map(|d| d.value)
        .ok_or_else(|| perr(0, 0, "missing `dims` line"))?;
    if let Some(c) = &sec.cone {
        return Err(perr(c.line, 1, "a nonlinear program takes no `cone` line"));
    }
    let names = variable_names(m, n);
    let (line, col0, text) = sec
        .equations
        .remove("objective")
        .ok_or_else(|| perr(0, 0, "missing `objective` line"))?;
    let objective = parse_expr(&text, &names, line, col0)?;
    let count = (1..)
        .take_while(|i| sec.equations.contains_key(&format!("g{i}")))
        .count();
    let constraints = take_components(&mut sec, "g", count, &names)?;
    reject_leftovers(&sec)?;
    let (x0, y0) = base_point(&sec, m, n)?;
    Ok(NlpSpec {
        m,
        n,
        objective,
        constraints,
        y0: Some(y0),
        x0: Some(x0),
        p: sec.order.as_ref().map(|o| o.value),
    })
}

/// Parses an NCP file (a problem file whose `cone` and `order` lines are optional)
/// and returns its components with the parameter dimension.
pub fn parse_ncp_components(text: &str) -> Result<(Vec<Polynomial>, usize, Option<usize>)> {
    let mut sec = split_sections(text)?;
    let (m, n) = sec
        .dims
        .as_ref()
        .map(|d| d.value)
        .ok_or_else(|| perr(0, 0, "missing `dims` line"))?;
    let names = variable_names(m, n);
    let polys = take_components(&mut sec, "f", n, &names)?;
    reject_leftovers(&sec)?;
    Ok((polys, m, sec.order.as_ref().map(|o| o.value)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin;

    const EXAMPLE1: &str = "\
# planar complementarity problem
dims 2 2
cone PP
order 2
base x 0 0 y 0 0
f1 = y1^2 - y2^2 - x1
f2 = y1*y2 - x2
";

    #[test]
    fn example1_file_matches_builtin() {
        assert_eq!(parse_problem(EXAMPLE1).unwrap(), builtin("example1").unwrap());
    }

    #[test]
    fn written_builtins_parse_back() {
        for name in crate::problems::BUILTIN_NAMES {
            let e = builtin(name).unwrap();
            let text = write_problem(&e).unwrap();
            assert_eq!(parse_problem(&text).unwrap(), e, "{text}");
        }
    }

    #[test]
    fn rejects_low_order() {
        let text = "dims 0 1\ncone P\norder 1\nf1 = y1\n";
        assert!(matches!(parse_problem(text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn rejects_bad_base_point() {
        let text = "dims 0 1\ncone F\norder 2\nbase x y 0\nf1 = y1^2 + 1\n";
        assert!(matches!(
            parse_problem(text),
            Err(Error::InvalidBasePoint { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_location() {
        let text = "dims 0 1\ncone P\norder 2\nf1 = y1 ^ + 2\n";
        match parse_problem(text) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(column, 11);
            }
            other => panic!("{other:?}"),
        }
        let text = "dims 0 1\ncone Q\norder 2\nf1 = y1^2\n";
        assert!(matches!(
            parse_problem(text),
            Err(Error::Parse { line: 2, column: 1, .. })
        ));
        assert!(parse_problem("dims 0 1\ncone P\norder 2\nf1 = y1^2\nf2 = y1\n").is_err());
        assert!(parse_problem("dims 0 1\ncone P\norder 2\n").is_err());
        assert!(parse_problem("bogus 1\n").is_err());
    }

    #[test]
    fn nlp_file() {
        let text = "dims 1 2\norder 3\nobjective = y1^4 - y2^4 - x1*y1\ng1 = y1^3 - 2*y2^3\ng2 = y1^3 + 2*y2^3\n";
        let nlp = parse_nlp(text).unwrap();
        assert_eq!(nlp.constraints.len(), 2);
        let expected = crate::problems::example2_nlp();
        assert_eq!(nlp.objective, expected.objective);
        assert_eq!(nlp.constraints, expected.constraints);
    }
}
