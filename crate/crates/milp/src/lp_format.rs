//! CPLEX-style LP text format: writer and a reader for the subset it emits.
//!
//! Numbers are rendered with 17 significant digits so every coefficient
//! survives a round trip bit-exactly. The objective constant is carried in a
//! `\ offset <value>` comment, lazy rows in a `Lazy Constraints` section, and
//! every variable appears in `Bounds`, which also fixes variable order on read.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::LpFormatError;
use crate::model::{Model, Priority, Sense, VarId, VarKind};

const TERMS_PER_LINE: usize = 6;

/// Renders `v` with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn clean_name(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() || c == ':' || c == '\\' { '_' } else { c }).collect()
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (String, f64)>) {
    let mut count = 0;
    for (name, a) in terms {
        if count > 0 && count % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {name}", fmt_num(a.abs()));
        count += 1;
    }
}

/// LP text for `model`.
pub fn to_lp_string(model: &Model) -> String {
    let names: Vec<String> = model.vars().iter().map(|v| clean_name(&v.name)).collect();
    let mut out = String::new();
    out.push_str("\\ decprog model\n");
    let _ = writeln!(out, "\\ offset {}", fmt_num(model.offset()));
    out.push_str("Maximize\n obj:");
    write_terms(
        &mut out,
        model.vars().iter().enumerate().filter(|(_, v)| v.obj != 0.0).map(|(j, v)| (names[j].clone(), v.obj)),
    );
    out.push('\n');
    for (section, lazy) in [("Subject To", false), ("Lazy Constraints", true)] {
        let rows: Vec<_> = model.rows().iter().filter(|r| r.lazy == lazy).collect();
        if lazy && rows.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{section}");
        for r in rows {
            let _ = write!(out, " {}:", clean_name(&r.name));
            if r.terms.is_empty() {
                out.push_str(" 0");
            }
            write_terms(&mut out, r.terms.iter().map(|&(v, a)| (names[v.0].clone(), a)));
            let _ = writeln!(out, " {} {}", r.sense.symbol(), fmt_num(r.rhs));
        }
    }
    out.push_str("Bounds\n");
    for (j, v) in model.vars().iter().enumerate() {
        if v.lo == v.hi {
            let _ = writeln!(out, " {} = {}", names[j], fmt_num(v.lo));
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lo), names[j], fmt_num(v.hi));
        }
    }
    out.push_str("Binaries\n");
    for (j, v) in model.vars().iter().enumerate() {
        if v.kind == VarKind::Binary {
            let _ = writeln!(out, " {}", names[j]);
        }
    }
    out.push_str("End\n");
    out
}

pub fn write_lp(model: &Model, path: &Path) -> Result<(), LpFormatError> {
    let io = |source| LpFormatError::Io { path: path.display().to_string(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(to_lp_string(model).as_bytes()).map_err(io)?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Rows,
    Lazy,
    Bounds,
    Binaries,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "maximize" | "maximise" | "max" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Rows),
        "lazy constraints" => Some(Section::Lazy),
        "bounds" => Some(Section::Bounds),
        "binaries" | "binary" | "bin" => Some(Section::Binaries),
        "end" => Some(Section::End),
        _ => None,
    }
}

fn is_sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

struct Statement {
    line: usize,
    tokens: Vec<String>,
}

struct RawRow {
    name: String,
    terms: Vec<(String, f64)>,
    sense: Sense,
    rhs: f64,
    lazy: bool,
}

fn parse_num(tok: &str, line: usize) -> Result<f64, LpFormatError> {
    let t = tok.to_ascii_lowercase();
    match t.as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => return Ok(f64::INFINITY),
        "-inf" | "-infinity" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    tok.parse::<f64>().map_err(|_| LpFormatError::Syntax { line, message: format!("expected a number, found `{tok}`") })
}

fn looks_numeric(tok: &str) -> bool {
    let t = tok.trim_start_matches(['+', '-']);
    t.starts_with(|c: char| c.is_ascii_digit() || c == '.')
        || t.eq_ignore_ascii_case("inf")
        || t.eq_ignore_ascii_case("infinity")
}

/// Parses `[sign] [coef] name` terms until the token stream ends or a sense
/// token appears; returns terms and the index of the stopping token.
fn parse_terms(tokens: &[String], line: usize) -> Result<(Vec<(String, f64)>, usize), LpFormatError> {
    let mut terms = Vec::new();
    let mut k = 0;
    while k < tokens.len() {
        if is_sense(&tokens[k]).is_some() {
            break;
        }
        let mut sign = 1.0;
        while k < tokens.len() && (tokens[k] == "+" || tokens[k] == "-") {
            if tokens[k] == "-" {
                sign = -sign;
            }
            k += 1;
        }
        let mut coef = 1.0;
        if k < tokens.len() && looks_numeric(&tokens[k]) {
            coef = parse_num(&tokens[k], line)?;
            k += 1;
        }
        if k >= tokens.len() || is_sense(&tokens[k]).is_some() {
            if coef == 0.0 {
                continue;
            }
            return Err(LpFormatError::Syntax { line, message: "dangling coefficient".into() });
        }
        terms.push((tokens[k].clone(), sign * coef));
        k += 1;
    }
    Ok((terms, k))
}

/// Reads LP text produced by [`to_lp_string`] (and close variants).
/// Binaries are read back with [`Priority::Primary`].
pub fn from_lp_str(text: &str) -> Result<Model, LpFormatError> {
    let mut offset = 0.0;
    let mut section = Section::None;
    let mut objective: Vec<Statement> = Vec::new();
    let mut rows: Vec<(Statement, bool)> = Vec::new();
    let mut bounds: Vec<Statement> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let (body, comment) = match raw.find('\\') {
            Some(p) => (&raw[..p], Some(&raw[p + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            let c = c.trim();
            if let Some(v) = c.strip_prefix("offset") {
                offset = parse_num(v.trim(), line)?;
            }
        }
        if body.trim().is_empty() {
            continue;
        }
        if let Some(s) = section_of(body) {
            section = s;
            continue;
        }
        let tokens: Vec<String> = body.split_whitespace().map(str::to_string).collect();
        let continuation = body.starts_with(|c: char| c.is_whitespace()) && !tokens[0].ends_with(':');
        match section {
            Section::Objective => match objective.last_mut() {
                Some(st) if continuation || !tokens[0].ends_with(':') => st.tokens.extend(tokens),
                _ => objective.push(Statement { line, tokens }),
            },
            Section::Rows | Section::Lazy => {
                let lazy = section == Section::Lazy;
                match rows.last_mut() {
                    Some((st, _)) if !tokens[0].ends_with(':') && is_sense_missing(&st.tokens) => {
                        st.tokens.extend(tokens)
                    }
                    _ => rows.push((Statement { line, tokens }, lazy)),
                }
            }
            Section::Bounds => bounds.push(Statement { line, tokens }),
            Section::Binaries => binaries.extend(tokens),
            Section::End => {}
            Section::None => {
                return Err(LpFormatError::Syntax { line, message: "content before the objective section".into() });
            }
        }
    }

    let mut obj_terms = Vec::new();
    for st in &objective {
        let toks = if st.tokens.first().is_some_and(|t| t.ends_with(':')) { &st.tokens[1..] } else { &st.tokens[..] };
        let (terms, stop) = parse_terms(toks, st.line)?;
        if stop != toks.len() {
            return Err(LpFormatError::Syntax { line: st.line, message: "unexpected relation in objective".into() });
        }
        obj_terms.extend(terms);
    }
    let mut raw_rows = Vec::new();
    for (k, (st, lazy)) in rows.iter().enumerate() {
        let (name, toks) = match st.tokens.first() {
            Some(t) if t.ends_with(':') => (t.trim_end_matches(':').to_string(), &st.tokens[1..]),
            _ => (format!("r{k}"), &st.tokens[..]),
        };
        let (terms, stop) = parse_terms(toks, st.line)?;
        if stop + 2 != toks.len() {
            return Err(LpFormatError::Syntax { line: st.line, message: "expected `<terms> <sense> <rhs>`".into() });
        }
        let sense = is_sense(&toks[stop]).expect("stop token is a sense");
        let rhs = parse_num(&toks[stop + 1], st.line)?;
        raw_rows.push(RawRow { name, terms, sense, rhs, lazy: *lazy });
    }

    // Variable order: Bounds section first, then first appearance elsewhere.
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut lo_hi: Vec<(f64, f64)> = Vec::new();
    let mut touch = |name: &str, order: &mut Vec<String>, lo_hi: &mut Vec<(f64, f64)>| -> usize {
        if let Some(&k) = index.get(name) {
            return k;
        }
        index.insert(name.to_string(), order.len());
        order.push(name.to_string());
        lo_hi.push((0.0, f64::INFINITY));
        order.len() - 1
    };
    for st in &bounds {
        let t = &st.tokens;
        let bad = || LpFormatError::Syntax { line: st.line, message: "unsupported bound statement".into() };
        match t.len() {
            5 if is_sense(&t[1]) == Some(Sense::Le) && is_sense(&t[3]) == Some(Sense::Le) => {
                let k = touch(&t[2], &mut order, &mut lo_hi);
                lo_hi[k] = (parse_num(&t[0], st.line)?, parse_num(&t[4], st.line)?);
            }
            3 => {
                let k = touch(&t[0], &mut order, &mut lo_hi);
                let v = parse_num(&t[2], st.line)?;
                match is_sense(&t[1]).ok_or_else(bad)? {
                    Sense::Eq => lo_hi[k] = (v, v),
                    Sense::Le => lo_hi[k].1 = v,
                    Sense::Ge => lo_hi[k].0 = v,
                }
            }
            2 if t[1].eq_ignore_ascii_case("free") => {
                let k = touch(&t[0], &mut order, &mut lo_hi);
                lo_hi[k] = (f64::NEG_INFINITY, f64::INFINITY);
            }
            _ => return Err(bad()),
        }
    }
    for (name, _) in &obj_terms {
        touch(name, &mut order, &mut lo_hi);
    }
    for r in &raw_rows {
        for (name, _) in &r.terms {
            touch(name, &mut order, &mut lo_hi);
        }
    }
    for name in &binaries {
        touch(name, &mut order, &mut lo_hi);
    }
    let binary_set: std::collections::HashSet<&str> = binaries.iter().map(String::as_str).collect();

    let mut model = Model::new();
    let mut ids = Vec::with_capacity(order.len());
    for (k, name) in order.iter().enumerate() {
        let (lo, hi) = lo_hi[k];
        let id = if binary_set.contains(name.as_str()) {
            let id = model.add_binary(name.clone(), 0.0, Priority::Primary);
            if (lo, hi) != (0.0, f64::INFINITY) {
                model.set_bounds(id, lo, hi)?;
            }
            id
        } else {
            model.add_continuous(name.clone(), lo, hi, 0.0)?
        };
        ids.push(id);
    }
    let index: HashMap<&str, usize> = order.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
    let lookup = |name: &str| ids[index[name]];
    for (name, c) in obj_terms {
        let v = lookup(&name);
        let cur = model.var(v).obj;
        model.set_obj(v, cur + c);
    }
    for r in raw_rows {
        let terms: Vec<(VarId, f64)> = r.terms.iter().map(|(n, a)| (lookup(n), *a)).collect();
        model.add_row(r.name, terms, r.sense, r.rhs, r.lazy)?;
    }
    model.set_offset(offset);
    Ok(model)
}

fn is_sense_missing(tokens: &[String]) -> bool {
    !tokens.iter().any(|t| is_sense(t).is_some())
}

pub fn read_lp(path: &Path) -> Result<Model, LpFormatError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| LpFormatError::Io { path: path.display().to_string(), source })?;
    from_lp_str(&text)
}
