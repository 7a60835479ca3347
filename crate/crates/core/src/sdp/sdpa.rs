//! Sparse SDPA (`.dat-s`) reader and writer.
//!
//! SDPA encodes `sum_k x_k G_k - G_0 >= 0`. A negdef block `C + sum x_k F_k < 0`
//! is written with `G_0 = C`, `G_k = -F_k`; a psd block with `G_0 = -C`,
//! `G_k = F_k`. Sign flips are exact, so round trips are bit-for-bit.
//! Block senses, labels and the variable directory travel in `*%` comment
//! lines, which other SDPA readers skip.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{SdpBlock, SdpFeasibilityProblem, Sense, SparseSym, VarRange};
use crate::error::{Error, Result};
use crate::lmi::MatrixVariable;

pub fn export_sdpa(problem: &SdpFeasibilityProblem) -> String {
    let mut out = String::new();
    out.push_str("* tsfilter block semidefinite feasibility problem\n");
    for (b, blk) in problem.blocks.iter().enumerate() {
        let sense = match blk.sense {
            Sense::NegDef => "negdef",
            Sense::PosSemiDef => "psd",
        };
        let _ = writeln!(out, "*% block {} {} {}", b + 1, sense, blk.label);
    }
    for r in &problem.directory {
        let _ = writeln!(
            out,
            "*% var {}",
            serde_json::to_string(r).expect("directory entries serialize")
        );
    }
    let _ = writeln!(out, "{}", problem.num_vars);
    let _ = writeln!(out, "{}", problem.blocks.len());
    let dims: Vec<String> = problem.blocks.iter().map(|b| b.dim.to_string()).collect();
    let _ = writeln!(out, "{}", dims.join(" "));
    // objective vector: pure feasibility
    let zeros = vec!["0"; problem.num_vars];
    let _ = writeln!(out, "{}", zeros.join(" "));

    for (b, blk) in problem.blocks.iter().enumerate() {
        let flip = match blk.sense {
            Sense::NegDef => (1.0, -1.0),
            Sense::PosSemiDef => (-1.0, 1.0),
        };
        for j in 0..blk.dim {
            for i in 0..=j {
                let v = blk.constant[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(out, "0 {} {} {} {}", b + 1, i + 1, j + 1, flip.0 * v);
                }
            }
        }
        for (k, entries) in &blk.coeffs {
            let mut sorted = entries.clone();
            sorted.sort_by_key(|&(i, j, _)| (j, i));
            for (i, j, v) in sorted {
                let _ = writeln!(out, "{} {} {} {} {}", k + 1, b + 1, i + 1, j + 1, flip.1 * v);
            }
        }
    }
    out
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn numbers(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')'))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Parses sparse SDPA text. Without `*%` sense annotations every block is
/// read in the standard SDPA sense (psd).
pub fn import_sdpa(text: &str) -> Result<SdpFeasibilityProblem> {
    let mut senses: BTreeMap<usize, (Sense, String)> = BTreeMap::new();
    let mut directory: Vec<VarRange> = Vec::new();
    let mut body: Vec<(usize, &str)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("*%") {
            let rest = rest.trim();
            if let Some(b) = rest.strip_prefix("block") {
                let mut it = b.trim().splitn(3, ' ');
                let num: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| perr(lineno, "bad block annotation"))?;
                let sense = match it.next() {
                    Some("negdef") => Sense::NegDef,
                    Some("psd") => Sense::PosSemiDef,
                    other => return Err(perr(lineno, format!("unknown sense {other:?}"))),
                };
                let label = it.next().unwrap_or("").to_string();
                senses.insert(num, (sense, label));
            } else if let Some(v) = rest.strip_prefix("var") {
                let r: VarRange =
                    serde_json::from_str(v.trim()).map_err(|e| perr(lineno, e.to_string()))?;
                directory.push(r);
            }
            continue;
        }
        if line.is_empty() || line.starts_with('*') || line.starts_with('"') {
            continue;
        }
        body.push((lineno, line));
    }

    let mut it = body.into_iter();
    let mut header = |what: &str| it.next().ok_or_else(|| perr(text.lines().count(), format!("missing {what}")));

    let (l, s) = header("mDIM")?;
    let m: usize = numbers(s)
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(l, "mDIM must be a nonnegative integer"))?;
    let (l, s) = header("nBLOCK")?;
    let nb: usize = numbers(s)
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(l, "nBLOCK must be a nonnegative integer"))?;
    let (l, s) = header("block structure")?;
    let sizes: Vec<i64> = numbers(s)
        .iter()
        .take(nb)
        .map(|t| t.parse::<i64>().map_err(|_| perr(l, format!("bad block size {t}"))))
        .collect::<Result<_>>()?;
    if sizes.len() != nb || sizes.iter().any(|&d| d == 0) {
        return Err(perr(l, "block structure does not match nBLOCK"));
    }
    let diagonal: Vec<bool> = sizes.iter().map(|&d| d < 0).collect();
    let dims: Vec<usize> = sizes.iter().map(|d| d.unsigned_abs() as usize).collect();

    let mut rest: Vec<(usize, &str)> = it.collect();
    // The objective line is optional here: entry lines always have 5 fields.
    if let Some(&(_, s)) = rest.first() {
        if !is_entry(s, m, &dims) {
            rest.remove(0);
        }
    }

    let mut constants: Vec<DMatrix<f64>> = dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    let mut coeffs: Vec<BTreeMap<usize, BTreeMap<(usize, usize), f64>>> =
        vec![BTreeMap::new(); nb];
    for (l, s) in rest {
        let f = numbers(s);
        if f.len() < 5 {
            return Err(perr(l, "entry lines need 5 fields"));
        }
        let k: usize = f[0].parse().map_err(|_| perr(l, "bad matrix index"))?;
        let b: usize = f[1].parse().map_err(|_| perr(l, "bad block index"))?;
        let i: usize = f[2].parse().map_err(|_| perr(l, "bad row index"))?;
        let j: usize = f[3].parse().map_err(|_| perr(l, "bad column index"))?;
        let v: f64 = f[4].parse().map_err(|_| perr(l, "bad value"))?;
        if k > m || b == 0 || b > nb {
            return Err(perr(l, "matrix or block index out of range"));
        }
        let d = dims[b - 1];
        if i == 0 || j == 0 || i > d || j > d {
            return Err(perr(l, "entry outside its block"));
        }
        if diagonal[b - 1] && i != j {
            return Err(perr(l, "off-diagonal entry in a diagonal block"));
        }
        let (i, j) = (i.min(j) - 1, i.max(j) - 1);
        if k == 0 {
            constants[b - 1][(i, j)] = v;
            constants[b - 1][(j, i)] = v;
        } else {
            coeffs[b - 1].entry(k - 1).or_default().insert((i, j), v);
        }
    }

    let mut blocks = Vec::with_capacity(nb);
    for (b, (g0, gk)) in constants.into_iter().zip(coeffs).enumerate() {
        let (sense, label) = senses
            .remove(&(b + 1))
            .unwrap_or((Sense::PosSemiDef, format!("block{}", b + 1)));
        // invert the export sign convention
        let (c0, ck) = match sense {
            Sense::NegDef => (1.0, -1.0),
            Sense::PosSemiDef => (-1.0, 1.0),
        };
        let coeffs = gk
            .into_iter()
            .map(|(k, e)| {
                let entries: SparseSym = e
                    .into_iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|((i, j), v)| (i, j, ck * v))
                    .collect();
                (k, entries)
            })
            .filter(|(_, e)| !e.is_empty())
            .collect();
        blocks.push(SdpBlock {
            label,
            dim: dims[b],
            sense,
            constant: g0 * c0,
            coeffs,
        });
    }

    if directory.is_empty() && m > 0 {
        directory.push(VarRange {
            variable: MatrixVariable::general("x", m, 1),
            offset: 0,
        });
    }
    let p = SdpFeasibilityProblem {
        num_vars: m,
        blocks,
        directory,
    };
    p.check()?;
    Ok(p)
}

fn is_entry(line: &str, m: usize, dims: &[usize]) -> bool {
    let f = numbers(line);
    if f.len() != 5 {
        return false;
    }
    let idx: Vec<Option<usize>> = f[..4].iter().map(|t| t.parse().ok()).collect();
    match (idx[0], idx[1], idx[2], idx[3]) {
        (Some(k), Some(b), Some(i), Some(j)) => {
            k <= m && b >= 1 && b <= dims.len() && i >= 1 && j >= 1 && i.max(j) <= dims[b - 1]
        }
        _ => false,
    }
}
