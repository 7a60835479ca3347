//! Symbolic LMI assembly.
//!
//! Every block is an affine expression in named matrix variables. A term
//! `left * V * right` is written at block offset `(row, col)` and its
//! transpose at `(col, row)`, so every expression is symmetric by
//! construction; a term on the diagonal therefore contributes
//! `Sym{left * V * right}`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{augment, FuzzyFilter, PairBlocks, ProductBounds, TsDelayModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Symmetric,
    General,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixVariable {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub structure: Structure,
}

impl MatrixVariable {
    pub fn symmetric(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            rows: dim,
            cols: dim,
            structure: Structure::Symmetric,
        }
    }

    pub fn general(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            structure: Structure::General,
        }
    }

    /// Number of scalar unknowns (lower triangle for symmetric variables).
    pub fn num_unknowns(&self) -> usize {
        match self.structure {
            Structure::Symmetric => self.rows * (self.rows + 1) / 2,
            Structure::General => self.rows * self.cols,
        }
    }

    /// Matrix position `(i, j)` of scalar unknown `k`. For symmetric
    /// variables `i >= j` and the unknown also occupies `(j, i)`.
    pub fn position(&self, k: usize) -> (usize, usize) {
        match self.structure {
            Structure::General => (k / self.cols, k % self.cols),
            Structure::Symmetric => {
                // column-major lower triangle
                let mut col = 0;
                let mut rem = k;
                while rem >= self.rows - col {
                    rem -= self.rows - col;
                    col += 1;
                }
                (col + rem, col)
            }
        }
    }

    pub fn from_unknowns(&self, x: &[f64]) -> DMatrix<f64> {
        assert_eq!(x.len(), self.num_unknowns());
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (k, &v) in x.iter().enumerate() {
            let (i, j) = self.position(k);
            m[(i, j)] = v;
            if self.structure == Structure::Symmetric {
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn to_unknowns(&self, m: &DMatrix<f64>) -> Vec<f64> {
        (0..self.num_unknowns())
            .map(|k| {
                let (i, j) = self.position(k);
                m[(i, j)]
            })
            .collect()
    }
}

/// `left * V * right` at `(row, col)`, mirrored at `(col, row)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub var: String,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineBlockExpr {
    pub label: String,
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<Term>,
}

fn place(target: &mut DMatrix<f64>, row: usize, col: usize, x: &DMatrix<f64>) {
    let (r, c) = x.shape();
    let mut v = target.view_mut((row, col), (r, c));
    v += x;
    let mut v = target.view_mut((col, row), (c, r));
    v += x.transpose();
}

impl AffineBlockExpr {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self {
            label: label.into(),
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    /// Adds `m` at `(row, col)` and `m^T` at `(col, row)`.
    pub fn add_const(&mut self, row: usize, col: usize, m: &DMatrix<f64>) {
        place(&mut self.constant, row, col, m);
    }

    /// Adds a symmetric constant `m` once on the diagonal at `(at, at)`.
    pub fn add_const_diag(&mut self, at: usize, m: &DMatrix<f64>) {
        self.add_const(at, at, &(m * 0.5));
    }

    pub fn add_term(
        &mut self,
        var: &str,
        left: DMatrix<f64>,
        right: DMatrix<f64>,
        row: usize,
        col: usize,
    ) {
        debug_assert!(row + left.nrows() <= self.dim && col + right.ncols() <= self.dim);
        self.terms.push(Term {
            var: var.to_string(),
            left,
            right,
            row,
            col,
        });
    }

    /// `scale * V` at `(row, col)` (mirrored), `V` of shape `rows x cols`.
    pub fn add_scaled(&mut self, var: &str, scale: f64, rows: usize, cols: usize, row: usize, col: usize) {
        self.add_term(
            var,
            DMatrix::identity(rows, rows) * scale,
            DMatrix::identity(cols, cols),
            row,
            col,
        );
    }

    /// `scale * V` on the diagonal at `(at, at)` for a symmetric variable.
    pub fn add_scaled_diag(&mut self, var: &str, scale: f64, dim: usize, at: usize) {
        self.add_scaled(var, 0.5 * scale, dim, dim, at, at);
    }

    pub fn extend(&mut self, other: AffineBlockExpr) {
        assert_eq!(self.dim, other.dim);
        self.constant += other.constant;
        self.terms.extend(other.terms);
    }

    pub fn eval(&self, values: &HashMap<String, DMatrix<f64>>) -> Result<DMatrix<f64>> {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let v = values
                .get(&t.var)
                .ok_or_else(|| Error::UndeclaredVariable(t.var.clone()))?;
            let x = &t.left * v * &t.right;
            place(&mut out, t.row, t.col, &x);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DelayRateMode {
    /// Delayed-state block `-Y`.
    Plain,
    /// Delayed-state block `-(1 - rho) Y`.
    #[default]
    Rho,
}

impl std::str::FromStr for DelayRateMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "plain" => Ok(Self::Plain),
            "rho" => Ok(Self::Rho),
            _ => Err(format!("unknown delay-rate term `{s}` (expected plain|rho)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SlackStructure {
    #[default]
    Full,
    BlockDiagonal,
}

impl std::str::FromStr for SlackStructure {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Self::Full),
            "block-diagonal" | "block_diagonal" => Ok(Self::BlockDiagonal),
            _ => Err(format!("unknown slack structure `{s}` (expected full|block-diagonal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Theorem1,
    Theorem2,
    Analysis,
}

/// Scalar design parameters shared by every builder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmiSettings {
    pub h: f64,
    pub rho: f64,
    pub omega: f64,
    pub gamma: f64,
    pub delay_rate_mode: DelayRateMode,
}

impl LmiSettings {
    fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidArgument(format!("h must be > 0, got {}", self.h)));
        }
        if !self.rho.is_finite() || !self.omega.is_finite() {
            return Err(Error::InvalidArgument("rho and omega must be finite".into()));
        }
        Ok(())
    }

    fn delayed_state_weight(&self) -> f64 {
        match self.delay_rate_mode {
            DelayRateMode::Plain => 1.0,
            DelayRateMode::Rho => 1.0 - self.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiMeta {
    pub kind: ProblemKind,
    pub settings: LmiSettings,
    pub slack_structure: Option<SlackStructure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub variables: Vec<MatrixVariable>,
    /// Each required `< 0`.
    pub negdef_blocks: Vec<AffineBlockExpr>,
    /// Each required `> 0` (strictness handled by the solver margin).
    pub possemidef_blocks: Vec<AffineBlockExpr>,
    pub meta: LmiMeta,
}

impl LmiProblem {
    pub fn num_unknowns(&self) -> usize {
        self.variables.iter().map(MatrixVariable::num_unknowns).sum()
    }

    pub fn variable(&self, name: &str) -> Option<&MatrixVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Checks name uniqueness, term references, and term shapes.
    pub fn check(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for v in &self.variables {
            if v.structure == Structure::Symmetric && v.rows != v.cols {
                return Err(Error::InvalidArgument(format!(
                    "symmetric variable {} is not square",
                    v.name
                )));
            }
            if seen.insert(v.name.as_str(), v).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate variable {}", v.name)));
            }
        }
        for b in self.negdef_blocks.iter().chain(&self.possemidef_blocks) {
            for t in &b.terms {
                let v = seen
                    .get(t.var.as_str())
                    .ok_or_else(|| Error::UndeclaredVariable(t.var.clone()))?;
                let ok = t.left.ncols() == v.rows
                    && t.right.nrows() == v.cols
                    && t.row + t.left.nrows() <= b.dim
                    && t.col + t.right.ncols() <= b.dim;
                if !ok {
                    return Err(Error::Dimension {
                        location: format!("{} / {}", b.label, t.var),
                        detail: "term shape does not fit the variable or block".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Random assignment of every variable, symmetric where declared.
    pub fn random_assignment(&self, rng: &mut impl rand::Rng) -> HashMap<String, DMatrix<f64>> {
        self.variables
            .iter()
            .map(|v| {
                let x: Vec<f64> = (0..v.num_unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (v.name.clone(), v.from_unknowns(&x))
            })
            .collect()
    }
}

/// Coefficients of the free-matrix elimination block, before the `3/h`
/// factor. Rows/columns index `zeta(t)`, `zeta(t - tau)`, the single and
/// the double integral average.
pub const LAMBDA_COEFFS: [[f64; 4]; 4] = [
    [-3.0, 1.0, 12.0, -10.0],
    [1.0, -3.0, -8.0, 10.0],
    [12.0, -8.0, -64.0, 60.0],
    [-10.0, 10.0, 60.0, -60.0],
];

/// The `(8n + n_w)`-dimensional block `(3/h) [c_pq Z]` with a zero
/// disturbance band, where `zdim = 2n` is the dimension of `Z`.
pub fn build_lambda(h: f64, z: &str, zdim: usize, n_w: usize) -> AffineBlockExpr {
    build_lambda_with(h, z, zdim, n_w, &LAMBDA_COEFFS)
}

pub fn build_lambda_with(
    h: f64,
    z: &str,
    zdim: usize,
    n_w: usize,
    coeffs: &[[f64; 4]; 4],
) -> AffineBlockExpr {
    let mut e = AffineBlockExpr::new("Lambda", 4 * zdim + n_w);
    add_lambda(&mut e, h, z, zdim, coeffs);
    e
}

fn add_lambda(e: &mut AffineBlockExpr, h: f64, z: &str, zdim: usize, coeffs: &[[f64; 4]; 4]) {
    let s = 3.0 / h;
    for p in 0..4 {
        e.add_scaled_diag(z, s * coeffs[p][p], zdim, p * zdim);
        for q in p + 1..4 {
            e.add_scaled(z, s * coeffs[p][q], zdim, zdim, p * zdim, q * zdim);
        }
    }
}

/// Row/column offsets of the post-Schur block.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    n_w: usize,
    n_z: usize,
}

impl Layout {
    fn of(model: &TsDelayModel) -> Self {
        Self {
            n: model.n,
            n_w: model.n_w,
            n_z: model.n_z,
        }
    }
    fn zeta(&self) -> usize {
        2 * self.n
    }
    /// Start of the `k`-th `zeta`-sized segment of `mu(t)`.
    fn seg(&self, k: usize) -> usize {
        k * self.zeta()
    }
    fn w(&self) -> usize {
        8 * self.n
    }
    fn gamma_col(&self) -> usize {
        8 * self.n + self.n_w
    }
    fn e_col(&self) -> usize {
        10 * self.n + self.n_w
    }
    fn dim(&self) -> usize {
        10 * self.n + self.n_w + self.n_z
    }
    /// Diagonal segment sizes, used for block-diagonal slack matrices.
    fn segments(&self) -> Vec<(usize, usize)> {
        let z = self.zeta();
        vec![
            (0, z),
            (z, z),
            (2 * z, z),
            (3 * z, z),
            (self.w(), self.n_w),
            (self.gamma_col(), z),
            (self.e_col(), self.n_z),
        ]
    }
}

/// Names of the transformed decision variables.
pub mod names {
    pub const P11: &str = "P11";
    pub const P22: &str = "P22";
    pub const Y: &str = "Y";
    pub const Z: &str = "Z";
    pub const P: &str = "P";

    pub fn a(j: usize) -> String {
        format!("A{}", j + 1)
    }
    pub fn b(j: usize) -> String {
        format!("B{}", j + 1)
    }
    pub fn c(j: usize) -> String {
        format!("C{}", j + 1)
    }
    pub fn j(a: usize, b: usize) -> String {
        format!("J{}{}", a + 1, b + 1)
    }
    pub fn k(a: usize, b: usize) -> String {
        format!("K{}{}", a + 1, b + 1)
    }
}

fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Adds `scale * [P11 P22; P22 P22]` on the diagonal at `at`.
fn add_ptilde(e: &mut AffineBlockExpr, n: usize, scale: f64, at: usize) {
    e.add_scaled_diag(names::P11, scale, n, at);
    e.add_scaled(names::P22, scale, n, n, at, at + n);
    e.add_scaled_diag(names::P22, scale, n, at + n);
}

/// Writes `rows x [P11 M + B_j N ; P22 M + B_j N]`-shaped products into `e`
/// at `(row, col)`, scaled by `s`. These are the transformed counterparts
/// of `P A_bar`, `P A_bar_tau`, `P B_bar`.
fn add_lambda_col(
    e: &mut AffineBlockExpr,
    n: usize,
    j: usize,
    plant: &DMatrix<f64>,
    meas: &DMatrix<f64>,
    s: f64,
    row: usize,
    col: usize,
) {
    let id = eye(n) * s;
    e.add_term(names::P11, id.clone(), plant.clone(), row, col);
    e.add_term(names::P22, id.clone(), plant.clone(), row + n, col);
    e.add_term(&names::b(j), id.clone(), meas.clone(), row, col);
    e.add_term(&names::b(j), id, meas.clone(), row + n, col);
}

/// Upsilon_ij: plant rule `i`, filter rule `j`.
fn add_upsilon(
    e: &mut AffineBlockExpr,
    model: &TsDelayModel,
    s: &LmiSettings,
    i: usize,
    j: usize,
) {
    let l = Layout::of(model);
    let n = l.n;
    let r = &model.rules[i];
    let aj = names::a(j);
    let cj = names::c(j);
    let sqh = s.h.sqrt();

    add_lambda(e, s.h, names::Z, l.zeta(), &LAMBDA_COEFFS);

    // Sym{lambda1} + Y
    add_lambda_col(e, n, j, &r.a, &r.c, 1.0, 0, 0);
    e.add_scaled(&aj, 1.0, n, n, 0, n);
    e.add_scaled(&aj, 1.0, n, n, n, n);
    e.add_scaled_diag(names::Y, 1.0, l.zeta(), 0);
    // lambda2, lambda3
    add_lambda_col(e, n, j, &r.a_tau, &r.c_tau, 1.0, 0, l.seg(1));
    add_lambda_col(e, n, j, &r.b, &r.d, 1.0, 0, l.w());
    e.add_scaled_diag(names::Y, -s.delayed_state_weight(), l.zeta(), l.seg(1));
    e.add_const_diag(l.w(), &(eye(l.n_w) * -(s.gamma * s.gamma)));

    // sqrt(h) Gamma1^T column: Gamma1 = [lambda1, lambda2, 0, 0, lambda3]
    let g = l.gamma_col();
    add_lambda_col(e, n, j, &r.a, &r.c, sqh, g, 0);
    e.add_scaled(&aj, sqh, n, n, g, n);
    e.add_scaled(&aj, sqh, n, n, g + n, n);
    add_lambda_col(e, n, j, &r.a_tau, &r.c_tau, sqh, g, l.seg(1));
    add_lambda_col(e, n, j, &r.b, &r.d, sqh, g, l.w());

    // Gamma2^T column: [E_i, -C_j], [E_tau_i, 0], 0, 0, 0
    let ec = l.e_col();
    e.add_const(ec, 0, &r.e);
    e.add_scaled(&cj, -1.0, l.n_z, n, ec, n);
    e.add_const(ec, l.seg(1), &r.e_tau);

    // -2 omega P + omega^2 Z
    add_ptilde(e, n, -2.0 * s.omega, g);
    e.add_scaled_diag(names::Z, s.omega * s.omega, l.zeta(), g);

    e.add_const_diag(ec, &-eye(l.n_z));
}

/// Phi_ij of the fixed-filter condition (P, Y, Z untransformed).
fn add_phi(e: &mut AffineBlockExpr, l: Layout, pb: &PairBlocks, s: &LmiSettings) {
    let z = l.zeta();
    let sqh = s.h.sqrt();
    add_lambda(e, s.h, names::Z, z, &LAMBDA_COEFFS);

    e.add_term(names::P, eye(z), pb.a_bar.clone(), 0, 0);
    e.add_scaled_diag(names::Y, 1.0, z, 0);
    e.add_term(names::P, eye(z), pb.a_bar_tau.clone(), 0, l.seg(1));
    e.add_term(names::P, eye(z), pb.b_bar.clone(), 0, l.w());
    e.add_scaled_diag(names::Y, -s.delayed_state_weight(), z, l.seg(1));
    e.add_const_diag(l.w(), &(eye(l.n_w) * -(s.gamma * s.gamma)));

    let g = l.gamma_col();
    e.add_term(names::P, eye(z) * sqh, pb.a_bar.clone(), g, 0);
    e.add_term(names::P, eye(z) * sqh, pb.a_bar_tau.clone(), g, l.seg(1));
    e.add_term(names::P, eye(z) * sqh, pb.b_bar.clone(), g, l.w());

    let ec = l.e_col();
    e.add_const(ec, 0, &pb.e_bar);
    e.add_const(ec, l.seg(1), &pb.e_bar_tau);

    e.add_scaled_diag(names::P, -2.0 * s.omega, z, g);
    e.add_scaled_diag(names::Z, s.omega * s.omega, z, g);
    e.add_const_diag(ec, &-eye(l.n_z));
}

fn pair_label(prefix: &str, i: usize, j: usize) -> String {
    format!("{prefix}({},{})", i + 1, j + 1)
}

fn posdef(label: &str, var: &str, dim: usize) -> AffineBlockExpr {
    let mut e = AffineBlockExpr::new(label, dim);
    e.add_scaled_diag(var, 1.0, dim, 0);
    e
}

/// Synthesis LMIs with a common Lyapunov weight: one block
/// `Upsilon_ij + Upsilon_ji < 0` per pair `i <= j`.
pub fn build_theorem1(model: &TsDelayModel, s: &LmiSettings) -> Result<LmiProblem> {
    model.ensure_valid()?;
    s.check()?;
    let l = Layout::of(model);
    let (n, p) = (model.n, model.p());

    let mut variables = vec![
        MatrixVariable::symmetric(names::P11, n),
        MatrixVariable::symmetric(names::P22, n),
        MatrixVariable::symmetric(names::Y, 2 * n),
        MatrixVariable::symmetric(names::Z, 2 * n),
    ];
    for j in 0..p {
        variables.push(MatrixVariable::general(names::a(j), n, n));
        variables.push(MatrixVariable::general(names::b(j), n, model.n_y));
        variables.push(MatrixVariable::general(names::c(j), model.n_z, n));
    }

    let mut negdef_blocks = Vec::new();
    for i in 0..p {
        for j in i..p {
            let mut e = AffineBlockExpr::new(pair_label("Upsilon", i, j), l.dim());
            add_upsilon(&mut e, model, s, i, j);
            add_upsilon(&mut e, model, s, j, i);
            negdef_blocks.push(e);
        }
    }

    let mut pt = AffineBlockExpr::new("P", 2 * n);
    add_ptilde(&mut pt, n, 1.0, 0);
    let possemidef_blocks = vec![pt, posdef("Y", names::Y, 2 * n), posdef("Z", names::Z, 2 * n)];

    let problem = LmiProblem {
        variables,
        negdef_blocks,
        possemidef_blocks,
        meta: LmiMeta {
            kind: ProblemKind::Theorem1,
            settings: *s,
            slack_structure: None,
        },
    };
    problem.check()?;
    Ok(problem)
}

/// Declares the membership slack matrices and returns, per `(a, b)`, the
/// (variable name, offset, size) pieces that make up `J_ab` / `K_ab`.
fn declare_slacks(
    variables: &mut Vec<MatrixVariable>,
    possemidef: &mut Vec<AffineBlockExpr>,
    p: usize,
    l: Layout,
    structure: SlackStructure,
) -> BTreeMap<String, Vec<(String, usize, usize)>> {
    let segments = match structure {
        SlackStructure::Full => vec![(0, l.dim())],
        SlackStructure::BlockDiagonal => l.segments(),
    };
    let mut pieces = BTreeMap::new();
    for a in 0..p {
        for b in 0..p {
            for base in [names::j(a, b), names::k(a, b)] {
                let mut parts = Vec::new();
                for (si, &(off, size)) in segments.iter().enumerate() {
                    let name = if segments.len() == 1 {
                        base.clone()
                    } else {
                        format!("{base}.{}", si + 1)
                    };
                    variables.push(MatrixVariable::symmetric(&name, size));
                    possemidef.push(posdef(&name, &name, size));
                    parts.push((name, off, size));
                }
                pieces.insert(base, parts);
            }
        }
    }
    pieces
}

fn add_slack(
    e: &mut AffineBlockExpr,
    pieces: &BTreeMap<String, Vec<(String, usize, usize)>>,
    base: &str,
    coef: f64,
) {
    if coef == 0.0 {
        return;
    }
    for (name, off, size) in &pieces[base] {
        e.add_scaled_diag(name, coef, *size, *off);
    }
}

/// Adds `-J_ij - J_ji + K_ij + K_ji + 2 sum(upper_ab J_ab) - 2 sum(lower_ab K_ab)`.
fn add_membership_slack_terms(
    e: &mut AffineBlockExpr,
    pieces: &BTreeMap<String, Vec<(String, usize, usize)>>,
    bounds: &ProductBounds,
    i: usize,
    j: usize,
) {
    let p = bounds.p();
    let mut jc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut kc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    *jc.entry((i, j)).or_default() -= 1.0;
    *jc.entry((j, i)).or_default() -= 1.0;
    *kc.entry((i, j)).or_default() += 1.0;
    *kc.entry((j, i)).or_default() += 1.0;
    for a in 0..p {
        for b in 0..p {
            *jc.entry((a, b)).or_default() += 2.0 * bounds.upper[(a, b)];
            *kc.entry((a, b)).or_default() -= 2.0 * bounds.lower[(a, b)];
        }
    }
    for (&(a, b), &c) in &jc {
        add_slack(e, pieces, &names::j(a, b), c);
    }
    for (&(a, b), &c) in &kc {
        add_slack(e, pieces, &names::k(a, b), c);
    }
}

/// Membership-dependent synthesis LMIs: blocks `Omega_ij + Omega_ji < 0`
/// with `Omega_ij = Upsilon_ij - J_ij + K_ij + sum upper_ab J_ab
/// - sum lower_kl K_kl`, `J, K >= 0`.
pub fn build_theorem2(
    model: &TsDelayModel,
    s: &LmiSettings,
    bounds: &ProductBounds,
    slack: SlackStructure,
) -> Result<LmiProblem> {
    let mut problem = build_theorem1(model, s)?;
    bounds.check(model.p())?;
    let l = Layout::of(model);
    let pieces = declare_slacks(
        &mut problem.variables,
        &mut problem.possemidef_blocks,
        model.p(),
        l,
        slack,
    );
    let p = model.p();
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            let e = &mut problem.negdef_blocks[k];
            e.label = pair_label("Omega", i, j);
            add_membership_slack_terms(e, &pieces, bounds, i, j);
            k += 1;
        }
    }
    problem.meta.kind = ProblemKind::Theorem2;
    problem.meta.slack_structure = Some(slack);
    problem.check()?;
    Ok(problem)
}

/// Fixed-filter analysis LMIs in `P, Y, Z` (`2n x 2n`). With `membership`
/// the blocks receive the same slack relaxation as the membership-dependent
/// synthesis conditions.
pub fn build_lemma2_analysis(
    model: &TsDelayModel,
    filter: &FuzzyFilter,
    s: &LmiSettings,
    membership: Option<(&ProductBounds, SlackStructure)>,
) -> Result<LmiProblem> {
    model.ensure_valid()?;
    s.check()?;
    let aug = augment(model, filter)?;
    let l = Layout::of(model);
    let z = l.zeta();
    let p = model.p();

    let mut variables = vec![
        MatrixVariable::symmetric(names::P, z),
        MatrixVariable::symmetric(names::Y, z),
        MatrixVariable::symmetric(names::Z, z),
    ];
    let mut possemidef_blocks = vec![
        posdef("P", names::P, z),
        posdef("Y", names::Y, z),
        posdef("Z", names::Z, z),
    ];
    let pieces = match membership {
        Some((bounds, structure)) => {
            bounds.check(p)?;
            Some((
                bounds,
                declare_slacks(&mut variables, &mut possemidef_blocks, p, l, structure),
            ))
        }
        None => None,
    };

    let mut negdef_blocks = Vec::new();
    for i in 0..p {
        for j in i..p {
            let mut e = AffineBlockExpr::new(pair_label("Phi", i, j), l.dim());
            add_phi(&mut e, l, aug.pair(i, j), s);
            add_phi(&mut e, l, aug.pair(j, i), s);
            if let Some((bounds, pieces)) = &pieces {
                add_membership_slack_terms(&mut e, pieces, bounds, i, j);
            }
            negdef_blocks.push(e);
        }
    }

    let problem = LmiProblem {
        variables,
        negdef_blocks,
        possemidef_blocks,
        meta: LmiMeta {
            kind: ProblemKind::Analysis,
            settings: *s,
            slack_structure: membership.map(|(_, st)| st),
        },
    };
    problem.check()?;
    Ok(problem)
}
