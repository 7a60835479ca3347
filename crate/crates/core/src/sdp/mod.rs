//! Canonical block semidefinite feasibility form and the bundled solver.

mod sdpa;
mod solver;

use std::collections::BTreeMap;
use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{LmiProblem, MatrixVariable};

pub use sdpa::{export_sdpa, import_sdpa};
pub use solver::{solve_feasibility, SolveStatus, SolverOptions, SolverReport};

/// Required sign of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    NegDef,
    PosSemiDef,
}

/// Symmetric matrix stored as its upper-triangle nonzeros `(i, j, v)`, `i <= j`.
pub type SparseSym = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpBlock {
    pub label: String,
    pub dim: usize,
    pub sense: Sense,
    pub constant: DMatrix<f64>,
    /// `(k, F_k)` sorted by `k`, only nonzero coefficient matrices.
    pub coeffs: Vec<(usize, SparseSym)>,
}

impl SdpBlock {
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (k, entries) in &self.coeffs {
            let xk = x[*k];
            if xk == 0.0 {
                continue;
            }
            for &(i, j, v) in entries {
                m[(i, j)] += xk * v;
                if i != j {
                    m[(j, i)] += xk * v;
                }
            }
        }
        m
    }

    /// Largest eigenvalue of `F(x)` (negdef) or of `-F(x)` (psd): the
    /// block satisfies its sense strictly iff this is negative.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let m = self.eval(x);
        let eig = m.symmetric_eigenvalues();
        match self.sense {
            Sense::NegDef => eig.max(),
            Sense::PosSemiDef => -eig.min(),
        }
    }
}

/// Where a named matrix variable lives in the decision vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarRange {
    pub variable: MatrixVariable,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpFeasibilityProblem {
    pub num_vars: usize,
    pub blocks: Vec<SdpBlock>,
    pub directory: Vec<VarRange>,
}

impl SdpFeasibilityProblem {
    /// Unpacks a decision vector into named matrices.
    pub fn unpack(&self, x: &[f64]) -> HashMap<String, DMatrix<f64>> {
        self.directory
            .iter()
            .map(|r| {
                let len = r.variable.num_unknowns();
                (
                    r.variable.name.clone(),
                    r.variable.from_unknowns(&x[r.offset..r.offset + len]),
                )
            })
            .collect()
    }

    /// Packs named matrices into a decision vector (missing names stay 0).
    pub fn pack(&self, values: &HashMap<String, DMatrix<f64>>) -> Vec<f64> {
        let mut x = vec![0.0; self.num_vars];
        for r in &self.directory {
            if let Some(m) = values.get(&r.variable.name) {
                for (k, v) in r.variable.to_unknowns(m).into_iter().enumerate() {
                    x[r.offset + k] = v;
                }
            }
        }
        x
    }

    pub fn check(&self) -> Result<()> {
        for b in &self.blocks {
            if b.constant.shape() != (b.dim, b.dim) {
                return Err(Error::Dimension {
                    location: b.label.clone(),
                    detail: "constant matrix has the wrong shape".into(),
                });
            }
            for (k, entries) in &b.coeffs {
                if *k >= self.num_vars {
                    return Err(Error::InvalidArgument(format!(
                        "block {} references variable {k} >= {}",
                        b.label, self.num_vars
                    )));
                }
                if entries.iter().any(|&(i, j, _)| i > j || j >= b.dim) {
                    return Err(Error::Dimension {
                        location: b.label.clone(),
                        detail: format!("coefficient {k} has an entry outside the upper triangle"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Worst block margin at `x`: the maximum over negdef blocks of
/// `lambda_max(F(x))` and over psd blocks of `-lambda_min(F(x))`.
/// All senses hold strictly iff the result is negative.
pub fn eigen_margin(problem: &SdpFeasibilityProblem, x: &[f64]) -> f64 {
    assert_eq!(x.len(), problem.num_vars);
    problem
        .blocks
        .iter()
        .map(|b| b.margin(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Vectorizes every matrix variable (lower triangle for symmetric ones,
/// unscaled, so each scalar unknown is the matrix entry itself) and
/// expands each block into per-unknown sparse coefficient matrices.
pub fn canonicalize(problem: &LmiProblem) -> Result<SdpFeasibilityProblem> {
    problem.check()?;
    let mut directory = Vec::with_capacity(problem.variables.len());
    let mut index = HashMap::new();
    let mut offset = 0;
    for v in &problem.variables {
        index.insert(v.name.as_str(), directory.len());
        directory.push(VarRange {
            variable: v.clone(),
            offset,
        });
        offset += v.num_unknowns();
    }

    let mut blocks = Vec::new();
    let all = problem
        .negdef_blocks
        .iter()
        .map(|b| (b, Sense::NegDef))
        .chain(problem.possemidef_blocks.iter().map(|b| (b, Sense::PosSemiDef)));
    for (expr, sense) in all {
        let mut acc: BTreeMap<usize, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
        for t in &expr.terms {
            let r = &directory[*index
                .get(t.var.as_str())
                .ok_or_else(|| Error::UndeclaredVariable(t.var.clone()))?];
            let var = &r.variable;
            for u in 0..var.num_unknowns() {
                let (i, j) = var.position(u);
                let mut x = t.left.column(i) * t.right.row(j);
                if var.structure == crate::lmi::Structure::Symmetric && i != j {
                    x += t.left.column(j) * t.right.row(i);
                }
                let entry = acc.entry(r.offset + u).or_default();
                for a in 0..x.nrows() {
                    for b in 0..x.ncols() {
                        let v = x[(a, b)];
                        if v == 0.0 {
                            continue;
                        }
                        let (p, q) = (t.row + a, t.col + b);
                        if p == q {
                            *entry.entry((p, p)).or_default() += 2.0 * v;
                        } else {
                            *entry.entry((p.min(q), p.max(q))).or_default() += v;
                        }
                    }
                }
            }
        }
        let coeffs = acc
            .into_iter()
            .map(|(k, m)| {
                let entries: SparseSym = m
                    .into_iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|((i, j), v)| (i, j, v))
                    .collect();
                (k, entries)
            })
            .filter(|(_, e)| !e.is_empty())
            .collect();
        blocks.push(SdpBlock {
            label: expr.label.clone(),
            dim: expr.dim,
            sense,
            constant: expr.constant.clone(),
            coeffs,
        });
    }

    let out = SdpFeasibilityProblem {
        num_vars: offset,
        blocks,
        directory,
    };
    out.check()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::{self, AffineBlockExpr, DelayRateMode, LmiMeta, LmiSettings, ProblemKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(var: MatrixVariable, block: AffineBlockExpr) -> LmiProblem {
        LmiProblem {
            variables: vec![var],
            negdef_blocks: vec![block],
            possemidef_blocks: vec![],
            meta: LmiMeta {
                kind: ProblemKind::Analysis,
                settings: LmiSettings {
                    h: 1.0,
                    rho: 0.0,
                    omega: 1.0,
                    gamma: 1.0,
                    delay_rate_mode: DelayRateMode::Plain,
                },
                slack_structure: None,
            },
        }
    }

    #[test]
    fn symmetric_two_by_two_has_three_unknowns() {
        let mut b = AffineBlockExpr::new("S", 2);
        b.add_scaled_diag("S", 1.0, 2, 0);
        let p = canonicalize(&tiny(MatrixVariable::symmetric("S", 2), b)).unwrap();
        assert_eq!(p.num_vars, 3);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(
            p.blocks[0].eval(&x),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0])
        );
    }

    #[test]
    fn undeclared_variable_is_rejected() {
        let mut b = AffineBlockExpr::new("S", 2);
        b.add_scaled_diag("T", 1.0, 2, 0);
        let err = canonicalize(&tiny(MatrixVariable::symmetric("S", 2), b));
        assert!(matches!(err, Err(Error::UndeclaredVariable(v)) if v == "T"));
    }

    #[test]
    fn example1_theorem1_canonical_sizes_and_evaluation() {
        let m = crate::example1();
        let s = LmiSettings {
            h: 0.5,
            rho: 0.2,
            omega: 2.0,
            gamma: 0.17,
            delay_rate_mode: DelayRateMode::Rho,
        };
        let prob = lmi::build_theorem1(&m, &s).unwrap();
        let sdp = canonicalize(&prob).unwrap();
        assert_eq!(sdp.num_vars, 42);
        let neg: Vec<_> = sdp.blocks.iter().filter(|b| b.sense == Sense::NegDef).collect();
        assert_eq!(neg.len(), 3);
        assert!(neg.iter().all(|b| b.dim == 22));
        assert_eq!(sdp.blocks.len(), 6);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let exprs: Vec<_> = prob.negdef_blocks.iter().chain(&prob.possemidef_blocks).collect();
        for _ in 0..100 {
            let x: Vec<f64> = (0..sdp.num_vars).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let vals = sdp.unpack(&x);
            assert_eq!(sdp.pack(&vals), x);
            for (blk, expr) in sdp.blocks.iter().zip(&exprs) {
                let d = blk.eval(&x) - expr.eval(&vals).unwrap();
                assert!(d.amax() < 1e-12);
            }
        }
    }

    #[test]
    fn eigen_margin_of_constant_identity() {
        let mut b = AffineBlockExpr::new("I", 2);
        b.add_const_diag(0, &DMatrix::identity(2, 2));
        b.add_scaled_diag("x", 0.0, 1, 0);
        let mut prob = tiny(MatrixVariable::symmetric("x", 1), b);
        prob.negdef_blocks[0].terms.clear();
        let sdp = canonicalize(&prob).unwrap();
        assert_eq!(eigen_margin(&sdp, &[0.0]), 1.0);
    }
}
