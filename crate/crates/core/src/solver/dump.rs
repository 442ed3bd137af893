//! Plain-text problem dumps for bug reports.
//!
//! When `CONEREG_DUMP` names a directory, every call to [`super::solve`]
//! writes the problem there before iterating. Layout:
//!
//! ```text
//! conereg-problem v1
//! rows <M> cols <N> nnz <K>
//! cones <B>
//! <kind> <dim>            (B lines; kind is free|nonneg|quad|rquad)
//! c
//! <N values, one per line>
//! b
//! <M values, one per line>
//! A
//! <row> <col> <value>     (K lines, column-major)
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a dump read back
//! with [`parse_dump`] reproduces the problem exactly.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{ConeBlock, ConeKind, ConeProduct, CscMatrix, SolverError, StandardFormProblem};

pub const DUMP_ENV: &str = "CONEREG_DUMP";

static DUMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

pub fn format_dump(problem: &StandardFormProblem) -> String {
    let a = problem.a();
    let mut out = String::new();
    out.push_str("conereg-problem v1\n");
    let _ = writeln!(out, "rows {} cols {} nnz {}", a.nrows(), a.ncols(), a.nnz());
    let _ = writeln!(out, "cones {}", problem.cone().blocks().len());
    for b in problem.cone().blocks() {
        let _ = writeln!(out, "{} {}", b.kind().label(), b.dim());
    }
    out.push_str("c\n");
    for v in problem.c() {
        let _ = writeln!(out, "{v:?}");
    }
    out.push_str("b\n");
    for v in problem.b() {
        let _ = writeln!(out, "{v:?}");
    }
    out.push_str("A\n");
    for (i, j, v) in a.triplets() {
        let _ = writeln!(out, "{i} {j} {v:?}");
    }
    out
}

fn bad(msg: impl Into<String>) -> SolverError {
    SolverError::Dimension(format!("malformed dump: {}", msg.into()))
}

pub fn parse_dump(text: &str) -> Result<StandardFormProblem, SolverError> {
    let mut lines = text.lines();
    let mut next = || lines.next().ok_or_else(|| bad("unexpected end of input"));
    if next()? != "conereg-problem v1" {
        return Err(bad("missing header"));
    }
    let dims: Vec<&str> = next()?.split_whitespace().collect();
    if dims.len() != 6 || dims[0] != "rows" || dims[2] != "cols" || dims[4] != "nnz" {
        return Err(bad("dimension line"));
    }
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("bad integer {s:?}")))
    };
    let parse_f64 = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("bad number {s:?}")))
    };
    let (m, n, nnz) = (
        parse_usize(dims[1])?,
        parse_usize(dims[3])?,
        parse_usize(dims[5])?,
    );

    let cone_line = next()?;
    let nb = parse_usize(
        cone_line
            .strip_prefix("cones ")
            .ok_or_else(|| bad("cones line"))?,
    )?;
    let mut blocks = Vec::with_capacity(nb);
    for _ in 0..nb {
        let line = next()?;
        let mut parts = line.split_whitespace();
        let kind = parts
            .next()
            .and_then(ConeKind::from_label)
            .ok_or_else(|| bad("cone kind"))?;
        let dim = parse_usize(parts.next().ok_or_else(|| bad("cone dim"))?)?;
        blocks.push(ConeBlock::new(kind, dim)?);
    }
    if next()? != "c" {
        return Err(bad("expected c section"));
    }
    let c = (0..n)
        .map(|_| next().and_then(parse_f64))
        .collect::<Result<Vec<_>, _>>()?;
    if next()? != "b" {
        return Err(bad("expected b section"));
    }
    let b = (0..m)
        .map(|_| next().and_then(parse_f64))
        .collect::<Result<Vec<_>, _>>()?;
    if next()? != "A" {
        return Err(bad("expected A section"));
    }
    let mut trip = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let line = next()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad("triplet line"));
        }
        trip.push((
            parse_usize(parts[0])?,
            parse_usize(parts[1])?,
            parse_f64(parts[2])?,
        ));
    }
    let a = CscMatrix::from_triplets(m, n, &trip)?;
    StandardFormProblem::new(c, a, b, ConeProduct::new(blocks))
}

/// Writes the dump atomically into `dir` and returns the file path.
pub fn dump_to_dir(problem: &StandardFormProblem, dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let k = DUMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let path = dir.join(format!("conereg-{}-{k:04}.txt", std::process::id()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(format_dump(problem).as_bytes())?;
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}
