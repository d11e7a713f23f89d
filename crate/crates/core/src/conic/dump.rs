//! Plain-text program dump for offline cross-checking.
//!
//! ```text
//! conic-program 1
//! dims <ncols> <nrows>
//! zero <n>
//! nonneg <n>
//! soc <d1> <d2> ...
//! psd <n1> <n2> ...
//! hpsd <n1> <n2> ...
//! c <ncols values>
//! b <nrows values>
//! A
//! <nrows lines of ncols values>
//! ```
//!
//! Values are written with `{:e}` formatting, which round-trips `f64` exactly.

use super::{ConeSpec, ConicError, ConicProgram, SparseMatrix};
use std::fmt::Write as _;

const MAGIC: &str = "conic-program 1";

fn join(v: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:e}");
    }
    s
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_program(prog: &ConicProgram) -> String {
    let mut out = String::new();
    let n = prog.c.len();
    let m = prog.b.len();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dims {n} {m}");
    let _ = writeln!(out, "zero {}", prog.cones.zero);
    let _ = writeln!(out, "nonneg {}", prog.cones.nonneg);
    let _ = writeln!(out, "soc {}", join_usize(&prog.cones.soc));
    let _ = writeln!(out, "psd {}", join_usize(&prog.cones.psd));
    let _ = writeln!(out, "hpsd {}", join_usize(&prog.cones.hpsd));
    let _ = writeln!(out, "c {}", join(&prog.c));
    let _ = writeln!(out, "b {}", join(&prog.b));
    let _ = writeln!(out, "A");
    for row in prog.a.to_dense() {
        let _ = writeln!(out, "{}", join(&row));
    }
    out
}

fn parse_err(msg: impl Into<String>) -> ConicError {
    ConicError::Parse(msg.into())
}

fn tagged<'a>(line: Option<&'a str>, tag: &str) -> Result<Vec<&'a str>, ConicError> {
    let line = line.ok_or_else(|| parse_err(format!("missing '{tag}' line")))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(tag) {
        return Err(parse_err(format!("expected '{tag}' line, found '{line}'")));
    }
    Ok(it.collect())
}

fn floats(tokens: &[&str], want: usize, what: &str) -> Result<Vec<f64>, ConicError> {
    if tokens.len() != want {
        return Err(parse_err(format!("{what}: expected {want} values, found {}", tokens.len())));
    }
    tokens
        .iter()
        .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("{what}: '{t}': {e}"))))
        .collect()
}

fn counts(tokens: &[&str], what: &str) -> Result<Vec<usize>, ConicError> {
    tokens
        .iter()
        .map(|t| t.parse::<usize>().map_err(|e| parse_err(format!("{what}: '{t}': {e}"))))
        .collect()
}

fn single(tokens: &[&str], what: &str) -> Result<usize, ConicError> {
    match counts(tokens, what)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(parse_err(format!("{what}: expected one count"))),
    }
}

pub fn read_program(text: &str) -> Result<ConicProgram, ConicError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some(MAGIC) {
        return Err(parse_err("missing header"));
    }
    let dims = counts(&tagged(lines.next(), "dims")?, "dims")?;
    let [n, m] = dims[..] else {
        return Err(parse_err("dims: expected two counts"));
    };
    let zero = single(&tagged(lines.next(), "zero")?, "zero")?;
    let nonneg = single(&tagged(lines.next(), "nonneg")?, "nonneg")?;
    let soc = counts(&tagged(lines.next(), "soc")?, "soc")?;
    let psd = counts(&tagged(lines.next(), "psd")?, "psd")?;
    let hpsd = counts(&tagged(lines.next(), "hpsd")?, "hpsd")?;
    let c = floats(&tagged(lines.next(), "c")?, n, "c")?;
    let b = floats(&tagged(lines.next(), "b")?, m, "b")?;
    if lines.next() != Some("A") {
        return Err(parse_err("missing 'A' line"));
    }
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let line = lines.next().ok_or_else(|| parse_err(format!("A: missing row {i}")))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        rows.push(floats(&tokens, n, "A row")?);
    }
    if lines.next().is_some() {
        return Err(parse_err("trailing data after A"));
    }
    let prog = ConicProgram {
        c,
        a: SparseMatrix::from_dense(&rows, n),
        b,
        cones: ConeSpec {
            zero,
            nonneg,
            soc,
            psd,
            hpsd,
        },
    };
    prog.validate()?;
    Ok(prog)
}
