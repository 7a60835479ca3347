//! Numerical checks of the integral inequality behind the stability
//! conditions and of the free-matrix elimination that produces `Lambda`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{build_lambda_with, LAMBDA_COEFFS};

/// `x(s) = sum_j c_j (s - alpha)^j` on `[alpha, beta]`; column `j` of
/// `coeffs` is `c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTrajectory {
    pub coeffs: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl PolyTrajectory {
    pub fn new(coeffs: DMatrix<f64>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha < beta) || coeffs.iter().any(|c| !c.is_finite()) || coeffs.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "trajectory needs alpha < beta and finite coefficients".into(),
            ));
        }
        Ok(Self { coeffs, alpha, beta })
    }

    pub fn random(rng: &mut impl Rng, n: usize, degree: usize, alpha: f64, beta: f64) -> Self {
        let coeffs = DMatrix::from_fn(n, degree + 1, |_, _| rng.gen_range(-1.0..1.0));
        Self { coeffs, alpha, beta }
    }

    pub fn n(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn tau(&self) -> f64 {
        self.beta - self.alpha
    }

    pub fn eval(&self, s: f64) -> DVector<f64> {
        let u = s - self.alpha;
        // Horner
        let mut v = DVector::zeros(self.n());
        for j in (0..self.coeffs.ncols()).rev() {
            v = v * u + self.coeffs.column(j);
        }
        v
    }

    pub fn derivative(&self, s: f64) -> DVector<f64> {
        let u = s - self.alpha;
        let mut v = DVector::zeros(self.n());
        for j in (1..self.coeffs.ncols()).rev() {
            v = v * u + self.coeffs.column(j) * j as f64;
        }
        v
    }

    /// `int_alpha^beta x'(s)^T R x'(s) ds`, from the coefficients.
    pub fn derivative_energy(&self, r: &DMatrix<f64>) -> f64 {
        let tau = self.tau();
        let k = self.coeffs.ncols();
        let mut s = 0.0;
        for j in 1..k {
            for l in 1..k {
                let cj = self.coeffs.column(j);
                let cl = self.coeffs.column(l);
                let p = (j + l - 1) as i32;
                s += (j * l) as f64 * (cj.transpose() * r * cl)[(0, 0)] * tau.powi(p) / p as f64;
            }
        }
        s
    }

    /// `xi = [x(beta); x(alpha); (1/tau) int x; (2/tau^2) int_alpha^beta int_alpha^s x]`.
    pub fn xi(&self) -> DVector<f64> {
        let n = self.n();
        let tau = self.tau();
        let mut xi = DVector::zeros(4 * n);
        for j in 0..self.coeffs.ncols() {
            let c = self.coeffs.column(j);
            let tj = tau.powi(j as i32);
            let jf = j as f64;
            xi.rows_mut(0, n).axpy(tj, &c, 1.0);
            xi.rows_mut(2 * n, n).axpy(tj / (jf + 1.0), &c, 1.0);
            xi.rows_mut(3 * n, n).axpy(2.0 * tj / ((jf + 1.0) * (jf + 2.0)), &c, 1.0);
        }
        xi.rows_mut(n, n).copy_from(&self.coeffs.column(0));
        xi
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on `P_m`).
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Instance {
    pub r: DMatrix<f64>,
    pub n1: DMatrix<f64>,
    pub n2: DMatrix<f64>,
    pub n3: DMatrix<f64>,
}

impl Lemma1Instance {
    pub fn new(r: DMatrix<f64>, n1: DMatrix<f64>, n2: DMatrix<f64>, n3: DMatrix<f64>) -> Result<Self> {
        let n = r.nrows();
        if r.shape() != (n, n) || [&n1, &n2, &n3].iter().any(|m| m.shape() != (4 * n, n)) {
            return Err(Error::Dimension {
                location: "integral inequality instance".into(),
                detail: format!("R must be {n}x{n} and each N_i {}x{n}", 4 * n),
            });
        }
        if (&r - r.transpose()).amax() > 1e-12 * (1.0 + r.amax()) || r.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("R".into()));
        }
        Ok(Self { r, n1, n2, n3 })
    }

    pub fn random(rng: &mut impl Rng, n: usize) -> Self {
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let r = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
        let mut nm = || DMatrix::from_fn(4 * n, n, |_, _| rng.gen_range(-2.0..2.0));
        let (n1, n2, n3) = (nm(), nm(), nm());
        Self { r, n1, n2, n3 }
    }

    /// The elimination choice `N_1 = -(1/tau) Pi_1^T R`, `N_2 = -(3/tau) Pi_2^T R`,
    /// `N_3 = -(5/tau) Pi_3^T R`.
    pub fn elimination(r: DMatrix<f64>, tau: f64) -> Result<Self> {
        let n = r.nrows();
        let [p1, p2, p3] = pis(n);
        Self::new(
            r.clone(),
            -(p1.transpose() * &r) / tau,
            -(p2.transpose() * &r) * (3.0 / tau),
            -(p3.transpose() * &r) * (5.0 / tau),
        )
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn omega(&self, tau: f64) -> Result<DMatrix<f64>> {
        let n = self.n();
        let rinv = self
            .r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("R".into()))?
            .inverse();
        let [p1, p2, p3] = pis(n);
        let quad = &self.n1 * &rinv * self.n1.transpose()
            + &self.n2 * &rinv * self.n2.transpose() / 3.0
            + &self.n3 * &rinv * self.n3.transpose() / 5.0;
        let s = &self.n1 * p1 + &self.n2 * p2 + &self.n3 * p3;
        Ok(quad * tau + &s + s.transpose())
    }
}

/// `e_i` selectors over `k` blocks of size `m`.
fn selector(i: usize, m: usize, k: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(m, k * m);
    e.view_mut((0, i * m), (m, m)).fill_with_identity();
    e
}

/// `Pi_1 = e1 - e2`, `Pi_2 = e1 + e2 - 2 e3`, `Pi_3 = e1 - e2 - 6 e3 + 6 e4`
/// over `blocks` blocks of size `m`.
fn pis_over(m: usize, blocks: usize) -> [DMatrix<f64>; 3] {
    let e: Vec<_> = (0..4).map(|i| selector(i, m, blocks)).collect();
    [
        &e[0] - &e[1],
        &e[0] + &e[1] - &e[2] * 2.0,
        &e[0] - &e[1] - &e[2] * 6.0 + &e[3] * 6.0,
    ]
}

fn pis(n: usize) -> [DMatrix<f64>; 3] {
    pis_over(n, 4)
}

/// `RHS - LHS` of `-int x'^T R x' <= xi^T Omega xi`; nonnegative when the
/// inequality holds.
pub fn check_integral_inequality(traj: &PolyTrajectory, inst: &Lemma1Instance) -> Result<f64> {
    if traj.n() != inst.n() {
        return Err(Error::Dimension {
            location: "integral inequality".into(),
            detail: format!("trajectory has {} components, R is {}x{}", traj.n(), inst.n(), inst.n()),
        });
    }
    let lhs = -traj.derivative_energy(&inst.r);
    let xi = traj.xi();
    let rhs = (xi.transpose() * inst.omega(traj.tau())? * &xi)[(0, 0)];
    Ok(rhs - lhs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub min_margin: f64,
    /// Smallest margin relative to the magnitude of the two sides.
    pub min_relative_margin: f64,
    pub passed: bool,
}

/// Random trajectories (degree <= 5, n in 1..=3) against random instances.
pub fn lemma1_monte_carlo(rng: &mut impl Rng, trials: usize, tol: f64) -> Result<MonteCarloSummary> {
    let mut min_margin = f64::INFINITY;
    let mut min_rel = f64::INFINITY;
    for _ in 0..trials {
        let n = rng.gen_range(1..=3);
        let degree = rng.gen_range(0..=5);
        let alpha = rng.gen_range(-2.0..2.0);
        let beta = alpha + rng.gen_range(0.05..2.0);
        let traj = PolyTrajectory::random(rng, n, degree, alpha, beta);
        let inst = Lemma1Instance::random(rng, n);
        let m = check_integral_inequality(&traj, &inst)?;
        let scale = traj.derivative_energy(&inst.r).abs() + 1.0;
        min_margin = min_margin.min(m);
        min_rel = min_rel.min(m / scale);
    }
    Ok(MonteCarloSummary {
        trials,
        min_margin,
        min_relative_margin: min_rel,
        passed: min_margin >= -tol,
    })
}

/// Max entrywise gap between the elimination result
/// `h M1 Z^-1 M1^T + (h/3) M2 Z^-1 M2^T + (h/5) M3 Z^-1 M3^T + Sym{M1 Pi1 + M2 Pi2 + M3 Pi3}`
/// and the `Lambda` block assembled from the production coefficient table.
pub fn check_lambda_identity(h: f64, z: &DMatrix<f64>) -> Result<f64> {
    check_lambda_identity_with(h, z, &LAMBDA_COEFFS)
}

/// As [`check_lambda_identity`] against an arbitrary coefficient table.
pub fn check_lambda_identity_with(h: f64, z: &DMatrix<f64>, coeffs: &[[f64; 4]; 4]) -> Result<f64> {
    let m = z.nrows();
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be > 0, got {h}")));
    }
    if z.shape() != (m, m) {
        return Err(Error::Dimension {
            location: "Z".into(),
            detail: "must be square".into(),
        });
    }
    let zinv = z
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Z".into()))?
        .inverse();

    // five blocks of size m: zeta(t), zeta(t - tau), two averages, w band
    let k = 5;
    let stack = |blocks: [f64; 4]| {
        let mut out = DMatrix::zeros(k * m, m);
        for (i, c) in blocks.iter().enumerate() {
            out.view_mut((i * m, 0), (m, m)).copy_from(&(z * *c));
        }
        out
    };
    let m1 = stack([-1.0, 1.0, 0.0, 0.0]) / h;
    let m2 = stack([-1.0, -1.0, 2.0, 0.0]) * (3.0 / h);
    let m3 = stack([-1.0, 1.0, 6.0, -6.0]) * (5.0 / h);
    let [p1, p2, p3] = pis_over(m, k);
    let quad = (&m1 * &zinv * m1.transpose()) * h
        + (&m2 * &zinv * m2.transpose()) * (h / 3.0)
        + (&m3 * &zinv * m3.transpose()) * (h / 5.0);
    let s = &m1 * p1 + &m2 * p2 + &m3 * p3;
    let lhs = quad + &s + s.transpose();

    let expr = build_lambda_with(h, "Z", m, m, coeffs);
    let rhs = expr.eval(&HashMap::from([("Z".to_string(), z.clone())]))?;
    Ok((lhs - rhs).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn constant_trajectory_has_nonnegative_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = PolyTrajectory::new(DMatrix::from_column_slice(2, 1, &[0.7, -0.2]), 0.0, 1.3).unwrap();
        let inst = Lemma1Instance::random(&mut rng, 2);
        assert_eq!(traj.derivative_energy(&inst.r), 0.0);
        let xi = traj.xi();
        for p in pis(2) {
            assert!((p * &xi).amax() < 1e-15);
        }
        assert!(check_integral_inequality(&traj, &inst).unwrap() >= 0.0);
    }

    #[test]
    fn moments_match_gauss_legendre() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gl = gauss_legendre(12);
        for _ in 0..50 {
            let n = rng.gen_range(1..=3);
            let alpha = rng.gen_range(-1.0..1.0);
            let beta = alpha + rng.gen_range(0.1..2.0);
            let traj = PolyTrajectory::random(&mut rng, n, 5, alpha, beta);
            let r = spd(&mut rng, n);
            let (mid, half) = (0.5 * (alpha + beta), 0.5 * (beta - alpha));
            let mut energy = 0.0;
            let mut avg = DVector::zeros(n);
            let mut double = DVector::zeros(n);
            for &(x, w) in &gl {
                let s = mid + half * x;
                let d = traj.derivative(s);
                energy += w * half * (d.transpose() * &r * &d)[(0, 0)];
                avg += traj.eval(s) * (w * half);
                // int_alpha^beta int_alpha^s x = int_alpha^beta (beta - u) x(u) du
                double += traj.eval(s) * (w * half * (beta - s));
            }
            let tau = traj.tau();
            let xi = traj.xi();
            assert!((energy - traj.derivative_energy(&r)).abs() < 1e-12 * (1.0 + energy.abs()));
            assert!((avg / tau - xi.rows(2 * n, n)).amax() < 1e-12);
            assert!((double * (2.0 / (tau * tau)) - xi.rows(3 * n, n)).amax() < 1e-12);
            assert!((traj.eval(beta) - xi.rows(0, n)).amax() < 1e-12);
        }
    }

    #[test]
    fn random_instances_satisfy_the_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = lemma1_monte_carlo(&mut rng, 300, 1e-9).unwrap();
        assert!(s.passed, "{s:?}");
    }

    #[test]
    fn elimination_choice_is_tight_on_linear_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=3 {
            let r = spd(&mut rng, n);
            let traj = PolyTrajectory::random(&mut rng, n, 1, 0.0, 0.8);
            let tight = check_integral_inequality(&traj, &Lemma1Instance::elimination(r.clone(), 0.8).unwrap()).unwrap();
            let mut loose = Lemma1Instance::random(&mut rng, n);
            loose.r = r;
            let random = check_integral_inequality(&traj, &loose).unwrap();
            assert!(tight >= -1e-9);
            assert!(tight.abs() < 1e-12 * (1.0 + random.abs()), "{tight} vs {random}");
        }
    }

    #[test]
    fn non_positive_definite_weight_is_rejected() {
        let z = DMatrix::zeros(4, 1);
        let r = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(matches!(
            Lemma1Instance::new(r, z.clone(), z.clone(), z),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn lambda_identity_for_unit_weight() {
        assert!(check_lambda_identity(1.0, &DMatrix::identity(1, 1)).unwrap() < 1e-12);
    }

    #[test]
    fn lambda_identity_random_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let z = spd(&mut rng, 4);
            let h = rng.gen_range(0.1..2.0);
            assert!(check_lambda_identity(h, &z).unwrap() < 1e-10);
            assert!(check_lambda_identity(h, &(z * 7.5)).unwrap() < 1e-10);
        }
    }

    #[test]
    fn corrupted_table_is_detected() {
        let mut bad = LAMBDA_COEFFS;
        bad[0][2] = -12.0;
        bad[2][0] = -12.0;
        assert!(check_lambda_identity_with(1.0, &DMatrix::identity(2, 2), &bad).unwrap() > 1.0);
        assert!(matches!(
            check_lambda_identity(1.0, &DMatrix::zeros(2, 2)),
            Err(Error::NotPositiveDefinite(_))
        ));
    }
}
