//! T-S fuzzy plant with time-varying state delay, the PDC fuzzy filter, and
//! the augmented filtering-error system built from the two.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_serde;

/// Local linear model of one plant rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMatrices {
    #[serde(rename = "A", with = "matrix_serde")]
    pub a: DMatrix<f64>,
    #[serde(rename = "A_tau", with = "matrix_serde")]
    pub a_tau: DMatrix<f64>,
    #[serde(rename = "B", with = "matrix_serde")]
    pub b: DMatrix<f64>,
    #[serde(rename = "C", with = "matrix_serde")]
    pub c: DMatrix<f64>,
    #[serde(rename = "C_tau", with = "matrix_serde")]
    pub c_tau: DMatrix<f64>,
    #[serde(rename = "D", with = "matrix_serde")]
    pub d: DMatrix<f64>,
    #[serde(rename = "E", with = "matrix_serde")]
    pub e: DMatrix<f64>,
    #[serde(rename = "E_tau", with = "matrix_serde")]
    pub e_tau: DMatrix<f64>,
}

/// Delay class: `0 <= tau(t) < h`, `d tau/dt <= rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub h: f64,
    pub rho: f64,
}

/// Parametric membership grade of one rule as a function of the premise
/// variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Grade {
    /// `1 - a / (1 + exp(-b - c x))`
    LogisticComplement { a: f64, b: f64, c: f64 },
    /// `a / (1 + exp(-b - c x))`
    Logistic { a: f64, b: f64, c: f64 },
    Gaussian { center: f64, width: f64 },
    Triangular { l: f64, m: f64, r: f64 },
    Constant { v: f64 },
    /// Piecewise-linear interpolation, held constant outside the breakpoints.
    Table { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl Grade {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Grade::LogisticComplement { a, b, c } => 1.0 - a / (1.0 + (-b - c * x).exp()),
            Grade::Logistic { a, b, c } => a / (1.0 + (-b - c * x).exp()),
            Grade::Gaussian { center, width } => {
                let u = (x - center) / width;
                (-0.5 * u * u).exp()
            }
            Grade::Triangular { l, m, r } => {
                if x < l || x > r {
                    0.0
                } else if x <= m {
                    if m == l {
                        1.0
                    } else {
                        (x - l) / (m - l)
                    }
                } else if r == m {
                    1.0
                } else {
                    (r - x) / (r - m)
                }
            }
            Grade::Constant { v } => v,
            Grade::Table {
                ref breakpoints,
                ref values,
            } => {
                let k = breakpoints.partition_point(|&b| b <= x);
                if k == 0 {
                    values[0]
                } else if k == breakpoints.len() {
                    values[k - 1]
                } else {
                    let (x0, x1) = (breakpoints[k - 1], breakpoints[k]);
                    let (v0, v1) = (values[k - 1], values[k]);
                    v0 + (v1 - v0) * (x - x0) / (x1 - x0)
                }
            }
        }
    }

    fn check(&self, path: &str, out: &mut Vec<Violation>) {
        let mut bad = |msg: &str| out.push(Violation::new(path, msg));
        match self {
            Grade::LogisticComplement { a, b, c } => {
                if ![*a, *b, *c].iter().all(|v| v.is_finite()) {
                    bad("non-finite parameter");
                } else if !(0.0..=1.0).contains(a) {
                    bad("parameter a must lie in [0, 1] for a nonnegative grade");
                }
            }
            Grade::Logistic { a, b, c } => {
                if ![*a, *b, *c].iter().all(|v| v.is_finite()) {
                    bad("non-finite parameter");
                } else if *a < 0.0 {
                    bad("parameter a must be nonnegative");
                }
            }
            Grade::Gaussian { center, width } => {
                if !center.is_finite() || !width.is_finite() || *width <= 0.0 {
                    bad("gaussian needs finite center and positive width");
                }
            }
            Grade::Triangular { l, m, r } => {
                if !(l <= m && m <= r) || !(l.is_finite() && r.is_finite()) || l == r {
                    bad("triangular needs finite l <= m <= r with l < r");
                }
            }
            Grade::Constant { v } => {
                if !v.is_finite() || *v < 0.0 {
                    bad("constant grade must be finite and nonnegative");
                }
            }
            Grade::Table {
                breakpoints,
                values,
            } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    bad("table needs equally many (>= 1) breakpoints and values");
                } else if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
                    bad("table breakpoints must be strictly increasing");
                } else if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    bad("table values must be finite and nonnegative");
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipSpec {
    /// Which state component is the premise variable.
    pub premise_index: usize,
    pub grades: Vec<Grade>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsDelayModel {
    pub n: usize,
    pub n_w: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub rules: Vec<RuleMatrices>,
    pub delay: DelaySpec,
    pub membership: MembershipSpec,
}

/// One failed model invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn check_matrix(
    path: String,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
    out: &mut Vec<Violation>,
) {
    if m.shape() != (rows, cols) {
        out.push(Violation::new(
            path,
            format!("expected {rows}x{cols}, found {}x{}", m.nrows(), m.ncols()),
        ));
    } else if m.iter().any(|v| !v.is_finite()) {
        out.push(Violation::new(path, "non-finite entry"));
    }
}

impl TsDelayModel {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Number of fuzzy rules.
    pub fn p(&self) -> usize {
        self.rules.len()
    }

    /// Every invariant violation, each with a path into the model document.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (n, nw, ny, nz) = (self.n, self.n_w, self.n_y, self.n_z);
        for (name, v) in [("n", n), ("n_w", nw), ("n_y", ny), ("n_z", nz)] {
            if v == 0 {
                out.push(Violation::new(name, "must be positive"));
            }
        }
        if self.rules.is_empty() {
            out.push(Violation::new("rules", "at least one rule is required"));
        }
        for (i, r) in self.rules.iter().enumerate() {
            let p = |f: &str| format!("rules[{i}].{f}");
            check_matrix(p("A"), &r.a, n, n, &mut out);
            check_matrix(p("A_tau"), &r.a_tau, n, n, &mut out);
            check_matrix(p("B"), &r.b, n, nw, &mut out);
            check_matrix(p("C"), &r.c, ny, n, &mut out);
            check_matrix(p("C_tau"), &r.c_tau, ny, n, &mut out);
            check_matrix(p("D"), &r.d, ny, nw, &mut out);
            check_matrix(p("E"), &r.e, nz, n, &mut out);
            check_matrix(p("E_tau"), &r.e_tau, nz, n, &mut out);
        }
        if !(self.delay.h > 0.0) || !self.delay.h.is_finite() {
            out.push(Violation::new("delay.h", "must be finite and > 0"));
        }
        if !self.delay.rho.is_finite() {
            out.push(Violation::new("delay.rho", "must be finite"));
        }
        if self.membership.premise_index >= n.max(1) {
            out.push(Violation::new(
                "membership.premise_index",
                format!("index {} out of range for n = {n}", self.membership.premise_index),
            ));
        }
        if self.membership.grades.len() != self.rules.len() {
            out.push(Violation::new(
                "membership.grades",
                format!(
                    "expected {} grades (one per rule), found {}",
                    self.rules.len(),
                    self.membership.grades.len()
                ),
            ));
        }
        for (i, g) in self.membership.grades.iter().enumerate() {
            g.check(&format!("membership.grades[{i}]"), &mut out);
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msg = v.iter().map(ToString::to_string).collect::<Vec<_>>();
            Err(Error::InvalidModel(msg.join("; ")))
        }
    }

    /// Normalized memberships as a function of the premise variable itself.
    pub fn memberships_at_premise(&self, psi: f64) -> Result<DVector<f64>> {
        let grades = DVector::from_iterator(
            self.membership.grades.len(),
            self.membership.grades.iter().map(|g| g.eval(psi).max(0.0)),
        );
        let sum = grades.sum();
        if !(sum > 1e-12) || !sum.is_finite() {
            return Err(Error::DegenerateMembership { value: psi, sum });
        }
        Ok(grades / sum)
    }

    /// Normalized memberships `upsilon_i` at a full state vector.
    pub fn normalized_memberships(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        let idx = self.membership.premise_index;
        if idx >= state.len() {
            return Err(Error::Dimension {
                location: "state".into(),
                detail: format!("premise index {idx} but state has length {}", state.len()),
            });
        }
        self.memberships_at_premise(state[idx])
    }

    /// Grid bounds on the membership products `upsilon_i * upsilon_j` over
    /// a premise interval, widened outward by `margin` and clipped to [0, 1].
    pub fn membership_product_bounds(
        &self,
        domain_lo: f64,
        domain_hi: f64,
        grid_points: usize,
        margin: f64,
    ) -> Result<ProductBounds> {
        if grid_points < 2 {
            return Err(Error::InvalidArgument("grid_points must be >= 2".into()));
        }
        if !(domain_lo < domain_hi) {
            return Err(Error::InvalidArgument(
                "domain_lo must be below domain_hi".into(),
            ));
        }
        if !(margin >= 0.0) {
            return Err(Error::InvalidArgument("margin must be nonnegative".into()));
        }
        let p = self.p();
        let mut upper = DMatrix::from_element(p, p, f64::NEG_INFINITY);
        let mut lower = DMatrix::from_element(p, p, f64::INFINITY);
        let step = (domain_hi - domain_lo) / (grid_points - 1) as f64;
        for k in 0..grid_points {
            let x = if k + 1 == grid_points {
                domain_hi
            } else {
                domain_lo + step * k as f64
            };
            let v = self.memberships_at_premise(x)?;
            for i in 0..p {
                for j in 0..p {
                    let m = v[i] * v[j];
                    upper[(i, j)] = upper[(i, j)].max(m);
                    lower[(i, j)] = lower[(i, j)].min(m);
                }
            }
        }
        upper.apply(|u| *u = (*u + margin).clamp(0.0, 1.0));
        lower.apply(|l| *l = (*l - margin).clamp(0.0, 1.0));
        Ok(ProductBounds { upper, lower })
    }
}

/// Bounds `lower_ij <= upsilon_i upsilon_j <= upper_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductBounds {
    #[serde(with = "matrix_serde")]
    pub upper: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub lower: DMatrix<f64>,
}

impl ProductBounds {
    pub fn p(&self) -> usize {
        self.upper.nrows()
    }

    pub fn check(&self, p: usize) -> Result<()> {
        if self.upper.shape() != (p, p) || self.lower.shape() != (p, p) {
            return Err(Error::Dimension {
                location: "bounds".into(),
                detail: format!("expected {p}x{p} bound matrices"),
            });
        }
        for (u, l) in self.upper.iter().zip(self.lower.iter()) {
            if !(0.0 <= *l && l <= u && *u <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "bounds must satisfy 0 <= lower <= upper <= 1 (found {l}, {u})"
                )));
            }
        }
        Ok(())
    }
}

/// Per-rule filter matrices `(A_hat_j, B_hat_j, C_hat_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyFilter {
    #[serde(rename = "A_hat", with = "matrix_serde::list")]
    pub a_hat: Vec<DMatrix<f64>>,
    #[serde(rename = "B_hat", with = "matrix_serde::list")]
    pub b_hat: Vec<DMatrix<f64>>,
    #[serde(rename = "C_hat", with = "matrix_serde::list")]
    pub c_hat: Vec<DMatrix<f64>>,
}

impl FuzzyFilter {
    pub fn zeros(model: &TsDelayModel) -> Self {
        let p = model.p();
        Self {
            a_hat: vec![DMatrix::zeros(model.n, model.n); p],
            b_hat: vec![DMatrix::zeros(model.n, model.n_y); p],
            c_hat: vec![DMatrix::zeros(model.n_z, model.n); p],
        }
    }

    pub fn check(&self, model: &TsDelayModel) -> Result<()> {
        let p = model.p();
        if self.a_hat.len() != p || self.b_hat.len() != p || self.c_hat.len() != p {
            return Err(Error::Dimension {
                location: "filter".into(),
                detail: format!("expected {p} matrices per list"),
            });
        }
        for j in 0..p {
            let ok = self.a_hat[j].shape() == (model.n, model.n)
                && self.b_hat[j].shape() == (model.n, model.n_y)
                && self.c_hat[j].shape() == (model.n_z, model.n);
            if !ok {
                return Err(Error::Dimension {
                    location: format!("filter rule {j}"),
                    detail: format!(
                        "A_hat {:?}, B_hat {:?}, C_hat {:?} do not match n={}, n_y={}, n_z={}",
                        self.a_hat[j].shape(),
                        self.b_hat[j].shape(),
                        self.c_hat[j].shape(),
                        model.n,
                        model.n_y,
                        model.n_z
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Closed-loop matrices of one rule pair `(i, j)`: plant rule `i`, filter
/// rule `j`, acting on `zeta = [x; x_hat]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBlocks {
    pub a_bar: DMatrix<f64>,
    pub a_bar_tau: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub e_bar: DMatrix<f64>,
    pub e_bar_tau: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub p: usize,
    /// Row-major over `(i, j)`: index `i * p + j`.
    pub pairs: Vec<PairBlocks>,
}

impl AugmentedSystem {
    pub fn pair(&self, i: usize, j: usize) -> &PairBlocks {
        &self.pairs[i * self.p + j]
    }
}

/// Builds the filtering-error system for every rule pair.
pub fn augment(model: &TsDelayModel, filter: &FuzzyFilter) -> Result<AugmentedSystem> {
    filter.check(model)?;
    let (n, nw, nz) = (model.n, model.n_w, model.n_z);
    let p = model.p();
    let mut pairs = Vec::with_capacity(p * p);
    for rule in &model.rules {
        for j in 0..p {
            let (ah, bh, ch) = (&filter.a_hat[j], &filter.b_hat[j], &filter.c_hat[j]);
            let mut a_bar = DMatrix::zeros(2 * n, 2 * n);
            a_bar.view_mut((0, 0), (n, n)).copy_from(&rule.a);
            a_bar.view_mut((n, 0), (n, n)).copy_from(&(bh * &rule.c));
            a_bar.view_mut((n, n), (n, n)).copy_from(ah);

            let mut a_bar_tau = DMatrix::zeros(2 * n, 2 * n);
            a_bar_tau.view_mut((0, 0), (n, n)).copy_from(&rule.a_tau);
            a_bar_tau.view_mut((n, 0), (n, n)).copy_from(&(bh * &rule.c_tau));

            let mut b_bar = DMatrix::zeros(2 * n, nw);
            b_bar.view_mut((0, 0), (n, nw)).copy_from(&rule.b);
            b_bar.view_mut((n, 0), (n, nw)).copy_from(&(bh * &rule.d));

            let mut e_bar = DMatrix::zeros(nz, 2 * n);
            e_bar.view_mut((0, 0), (nz, n)).copy_from(&rule.e);
            e_bar.view_mut((0, n), (nz, n)).copy_from(&(-ch));

            let mut e_bar_tau = DMatrix::zeros(nz, 2 * n);
            e_bar_tau.view_mut((0, 0), (nz, n)).copy_from(&rule.e_tau);

            pairs.push(PairBlocks {
                a_bar,
                a_bar_tau,
                b_bar,
                e_bar,
                e_bar_tau,
            });
        }
    }
    Ok(AugmentedSystem { p, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> TsDelayModel {
        TsDelayModel::from_json(crate::EXAMPLE1_JSON).unwrap()
    }

    fn scalar_model(a: f64) -> TsDelayModel {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        TsDelayModel {
            n: 1,
            n_w: 1,
            n_y: 1,
            n_z: 1,
            rules: vec![RuleMatrices {
                a: m(a),
                a_tau: m(0.0),
                b: m(1.0),
                c: m(1.0),
                c_tau: m(0.0),
                d: m(0.0),
                e: m(1.0),
                e_tau: m(0.0),
            }],
            delay: DelaySpec { h: 1.0, rho: 0.0 },
            membership: MembershipSpec {
                premise_index: 0,
                grades: vec![Grade::Constant { v: 1.0 }],
            },
        }
    }

    #[test]
    fn example1_is_valid() {
        assert!(example1().validate().is_empty());
    }

    #[test]
    fn wrong_rule_dimension_is_reported_once() {
        let mut m = example1();
        m.rules[1].a = DMatrix::zeros(3, 3);
        let v = m.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].path, "rules[1].A");
    }

    #[test]
    fn zero_delay_bound_is_reported() {
        let mut m = example1();
        m.delay.h = 0.0;
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "delay.h");
    }

    #[test]
    fn example1_memberships() {
        let m = example1();
        let far = m.memberships_at_premise(-100.0).unwrap();
        assert!((far[0] - 1.0).abs() < 1e-12 && far[1].abs() < 1e-12);
        let mid = m.memberships_at_premise(-3.0).unwrap();
        assert!((mid[0] - 0.75).abs() < 1e-15);
        assert!((mid[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn degenerate_membership_is_an_error() {
        let mut m = example1();
        m.membership.grades = vec![
            Grade::Triangular { l: 0.0, m: 1.0, r: 2.0 },
            Grade::Triangular { l: 0.0, m: 1.0, r: 2.0 },
        ];
        let err = m.normalized_memberships(&DVector::from_vec(vec![5.0, 0.0]));
        assert!(matches!(err, Err(Error::DegenerateMembership { value, .. }) if value == 5.0));
    }

    #[test]
    fn zero_filter_augmentation() {
        let m = example1();
        let aug = augment(&m, &FuzzyFilter::zeros(&m)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let b = aug.pair(i, j);
                let mut expect = DMatrix::zeros(4, 4);
                expect.view_mut((0, 0), (2, 2)).copy_from(&m.rules[i].a);
                assert_eq!(b.a_bar, expect);
                let mut bb = DMatrix::zeros(4, 1);
                bb.view_mut((0, 0), (2, 1)).copy_from(&m.rules[i].b);
                assert_eq!(b.b_bar, bb);
                let mut eb = DMatrix::zeros(1, 4);
                eb.view_mut((0, 0), (1, 2)).copy_from(&m.rules[i].e);
                assert_eq!(b.e_bar, eb);
            }
        }
    }

    #[test]
    fn printed_filter_keeps_plant_block() {
        let m = example1();
        let f = FuzzyFilter {
            a_hat: vec![
                DMatrix::from_row_slice(2, 2, &[-5.4988, 0.7614, 0.6899, -1.6958]),
                DMatrix::from_row_slice(2, 2, &[-0.0367, -8.6368, -3.3984, -10.8002]),
            ],
            b_hat: vec![
                DMatrix::from_row_slice(2, 1, &[-3.3721, 0.1692]),
                DMatrix::from_row_slice(2, 1, &[-2.1468, 0.0148]),
            ],
            c_hat: vec![
                DMatrix::from_row_slice(1, 2, &[-1.0777, 0.1460]),
                DMatrix::from_row_slice(1, 2, &[-0.5006, 0.0419]),
            ],
        };
        let aug = augment(&m, &f).unwrap();
        let top = aug.pair(0, 0).a_bar.view((0, 0), (2, 2)).clone_owned();
        assert_eq!(top, DMatrix::from_row_slice(2, 2, &[-2.1, 0.1, 1.0, -2.0]));
    }

    #[test]
    fn scalar_toy_augmentation() {
        let m = scalar_model(-1.0);
        let f = FuzzyFilter {
            a_hat: vec![DMatrix::from_element(1, 1, -2.0)],
            b_hat: vec![DMatrix::from_element(1, 1, 1.0)],
            c_hat: vec![DMatrix::from_element(1, 1, 0.0)],
        };
        let aug = augment(&m, &f).unwrap();
        assert_eq!(
            aug.pair(0, 0).a_bar,
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -2.0])
        );
    }

    #[test]
    fn filter_dimension_mismatch_names_rule() {
        let m = example1();
        let mut f = FuzzyFilter::zeros(&m);
        f.b_hat[1] = DMatrix::zeros(3, 1);
        match augment(&m, &f) {
            Err(Error::Dimension { location, .. }) => assert_eq!(location, "filter rule 1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn example1_product_bounds() {
        let b = example1()
            .membership_product_bounds(-50.0, 50.0, 10001, 1e-6)
            .unwrap();
        let close = |x: f64, y: f64| (x - y).abs() < 1e-3;
        assert!(close(b.upper[(0, 0)], 1.0) && close(b.lower[(0, 0)], 0.25));
        assert!(close(b.upper[(0, 1)], 0.25) && close(b.upper[(1, 0)], 0.25));
        assert!(close(b.lower[(0, 1)], 0.0));
        assert!(close(b.upper[(1, 1)], 0.25) && close(b.lower[(1, 1)], 0.0));
    }

    #[test]
    fn single_rule_and_constant_bounds() {
        let b = scalar_model(-1.0)
            .membership_product_bounds(-1.0, 1.0, 5, 0.0)
            .unwrap();
        assert_eq!(b.upper[(0, 0)], 1.0);
        assert_eq!(b.lower[(0, 0)], 1.0);

        let mut m = example1();
        m.membership.grades = vec![Grade::Constant { v: 0.5 }, Grade::Constant { v: 0.5 }];
        let b = m.membership_product_bounds(-1.0, 1.0, 3, 0.0).unwrap();
        assert!(b.upper.iter().chain(b.lower.iter()).all(|&v| v == 0.25));
    }

    #[test]
    fn bounds_reject_bad_grid() {
        let m = example1();
        assert!(m.membership_product_bounds(0.0, 1.0, 1, 0.0).is_err());
        assert!(m.membership_product_bounds(1.0, 1.0, 10, 0.0).is_err());
    }

    #[test]
    fn json_round_trip_preserves_model() {
        let m = example1();
        let back = TsDelayModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }
}
