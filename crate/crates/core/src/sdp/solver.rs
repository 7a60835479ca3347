//! Phase-I feasibility by a primal-dual interior-point method.
//!
//! The feasibility question `F_b(x) < 0` (negdef blocks), `G_b(x) > 0`
//! (psd blocks) is posed as
//!
//! ```text
//!   minimize t  s.t.  S_b = t I - F_b(x) >= 0,   S_b = t I + G_b(x) >= 0,
//!                     t - t_floor >= 0
//! ```
//!
//! whose dual is `max <C, Z>` over `Z >= 0` with `<A_k, Z> = 0` for every
//! `x_k` and `<A_t, Z> = 1`. Both sides are strictly feasible, so the
//! HKM search direction with a Mehrotra predictor-corrector converges to a
//! primal-dual optimal pair. The primal iterate certifies feasibility as
//! soon as `t < -eps`; a dual-feasible `Z` with positive objective
//! certifies infeasibility.

use std::time::Instant;

use faer::Side;
use log::{debug, trace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{eigen_margin, Sense, SdpFeasibilityProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Strictness margin: feasible means every block holds with slack `eps`.
    pub eps: f64,
    pub max_iter: usize,
    /// Lower bound on `t`; keeps the phase-I problem bounded.
    pub t_floor: f64,
    /// Stop as soon as `t` drops below `-early_stop_margin`
    /// (`None`: run to optimality for a deep-interior point).
    pub early_stop_margin: Option<f64>,
    pub step_fraction: f64,
    pub gap_tol: f64,
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps: 1e-7,
            max_iter: 120,
            t_floor: -1.0,
            early_stop_margin: None,
            step_fraction: 0.95,
            gap_tol: 1e-9,
            residual_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolveStatus,
    /// Decision vector of the last primal iterate (present when feasible).
    pub x: Option<Vec<f64>>,
    /// Phase-I objective at the last iterate.
    pub t: f64,
    /// Dual objective (a lower bound on the optimal `t` when the dual
    /// residual is small).
    pub lower_bound: f64,
    pub dual_residual: f64,
    /// Independently recomputed worst block margin at `x` (see
    /// [`super::eigen_margin`]); `NaN` when no point is returned.
    pub worst_margin: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub message: String,
}

/// One block of `S = sum_i y_i A_i - C`, variable `t` last.
struct Block {
    dim: usize,
    c: DMatrix<f64>,
    /// `(global index, upper-triangle entries)` sorted by index.
    vars: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

impl Block {
    fn slack(&self, y: &[f64]) -> DMatrix<f64> {
        let mut s = -&self.c;
        for (k, e) in &self.vars {
            accumulate(&mut s, e, y[*k]);
        }
        s
    }

    fn apply(&self, dy: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for (k, e) in &self.vars {
            accumulate(&mut s, e, dy[*k]);
        }
        s
    }
}

fn accumulate(m: &mut DMatrix<f64>, entries: &[(usize, usize, f64)], scale: f64) {
    if scale == 0.0 {
        return;
    }
    for &(i, j, v) in entries {
        m[(i, j)] += scale * v;
        if i != j {
            m[(j, i)] += scale * v;
        }
    }
}

/// `<A, X>` for symmetric `A` given by its upper triangle.
fn inner_sparse(entries: &[(usize, usize, f64)], x: &DMatrix<f64>) -> f64 {
    entries
        .iter()
        .map(|&(i, j, v)| {
            if i == j {
                v * x[(i, i)]
            } else {
                v * (x[(i, j)] + x[(j, i)])
            }
        })
        .sum()
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest `alpha` with `x + alpha dx >= 0` (infinite when `dx >= 0`).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 1 {
        return if dx[(0, 0)] < 0.0 {
            -x[(0, 0)] / dx[(0, 0)]
        } else {
            f64::INFINITY
        };
    }
    let Some(ch) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(m) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let lmin = sym(m).symmetric_eigenvalues().min();
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn build_blocks(problem: &SdpFeasibilityProblem, t_floor: f64) -> Vec<Block> {
    let t = problem.num_vars;
    let mut blocks: Vec<Block> = problem
        .blocks
        .iter()
        .map(|b| {
            let sign = match b.sense {
                Sense::NegDef => -1.0,
                Sense::PosSemiDef => 1.0,
            };
            let mut vars: Vec<(usize, Vec<(usize, usize, f64)>)> = b
                .coeffs
                .iter()
                .map(|(k, e)| (*k, e.iter().map(|&(i, j, v)| (i, j, sign * v)).collect()))
                .collect();
            vars.push((t, (0..b.dim).map(|i| (i, i, 1.0)).collect()));
            Block {
                dim: b.dim,
                c: &b.constant * -sign,
                vars,
            }
        })
        .collect();
    blocks.push(Block {
        dim: 1,
        c: DMatrix::from_element(1, 1, t_floor),
        vars: vec![(t, vec![(0, 0, 1.0)])],
    });
    blocks
}

/// Schur complement `M_ij = sum_b tr(A_i S^-1 A_j Z)` (lower triangle).
fn schur_matrix(blocks: &[Block], w: &[DMatrix<f64>], z: &[DMatrix<f64>], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for (b, blk) in blocks.iter().enumerate() {
        let (wb, zb) = (&w[b], &z[b]);
        let mut g = DMatrix::zeros(blk.dim, blk.dim);
        for (jj, (gj, aj)) in blk.vars.iter().enumerate() {
            g.fill(0.0);
            for &(p, q, a) in aj {
                g.ger(a, &wb.column(p), &zb.row(q).transpose(), 1.0);
                if p != q {
                    g.ger(a, &wb.column(q), &zb.row(p).transpose(), 1.0);
                }
            }
            let gt = g.transpose();
            for (gi, ai) in &blk.vars[jj..] {
                let s = inner_sparse(ai, &gt);
                out[gi * m + gj] += s;
            }
        }
    }
    out
}

enum Factor {
    Chol(faer::solvers::Cholesky<f64>),
    Lu(faer::solvers::PartialPivLu<f64>),
}

impl Factor {
    fn new(mut lower: Vec<f64>, m: usize) -> Option<Self> {
        let maxdiag = (0..m).map(|i| lower[i * m + i].abs()).fold(0.0, f64::max);
        let full = |lower: &[f64]| {
            faer::Mat::from_fn(m, m, |i, j| {
                if i >= j {
                    lower[i * m + j]
                } else {
                    lower[j * m + i]
                }
            })
        };
        for attempt in 0..3 {
            if attempt > 0 {
                let reg = maxdiag * 1e-14 * 100f64.powi(attempt);
                for i in 0..m {
                    lower[i * m + i] += reg;
                }
            }
            if let Ok(ch) = full(&lower).cholesky(Side::Lower) {
                return Some(Factor::Chol(ch));
            }
        }
        Some(Factor::Lu(full(&lower).partial_piv_lu()))
    }

    fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        use faer::solvers::SpSolver;
        let b = faer::Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = match self {
            Factor::Chol(c) => c.solve(&b),
            Factor::Lu(l) => l.solve(&b),
        };
        let out: Vec<f64> = (0..rhs.len()).map(|i| x.read(i, 0)).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Decides strict feasibility of the block system.
pub fn solve_feasibility(problem: &SdpFeasibilityProblem, opts: &SolverOptions) -> SolverReport {
    let start = Instant::now();
    let d = problem.num_vars;
    let m = d + 1;
    let blocks = build_blocks(problem, opts.t_floor);
    let total_dim: usize = blocks.iter().map(|b| b.dim).sum();

    // b = e_t
    let mut y = vec![0.0; m];
    let t0 = blocks
        .iter()
        .map(|b| {
            let s0 = b.slack(&y);
            if b.dim == 1 {
                -s0[(0, 0)]
            } else {
                -s0.symmetric_eigenvalues().min()
            }
        })
        .fold(opts.t_floor, f64::max);
    y[d] = t0 + 1.0;
    let mut s: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.slack(&y)).collect();
    let mut z: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|b| DMatrix::identity(b.dim, b.dim) / total_dim as f64)
        .collect();

    let finish = |status: SolveStatus,
                  y: &[f64],
                  lb: f64,
                  res: f64,
                  iterations: usize,
                  message: String| {
        let x = y[..d].to_vec();
        let worst = eigen_margin(problem, &x);
        let status = if status == SolveStatus::Feasible && !(worst < -opts.eps / 2.0) {
            SolveStatus::Indeterminate
        } else {
            status
        };
        debug!(
            "phase-I {:?} after {} iterations: t = {:.3e}, lower bound = {:.3e}, margin = {:.3e}",
            status, iterations, y[d], lb, worst
        );
        SolverReport {
            status,
            x: (status == SolveStatus::Feasible).then_some(x),
            t: y[d],
            lower_bound: lb,
            dual_residual: res,
            worst_margin: if status == SolveStatus::Feasible { worst } else { f64::NAN },
            iterations,
            wall_time: start.elapsed().as_secs_f64(),
            message,
        }
    };

    let mut stalled = 0;
    let mut stalled_gap = 0;
    for iter in 0..=opts.max_iter {
        let t = y[d];
        let gap: f64 = s.iter().zip(&z).map(|(a, b)| inner(a, b)).sum();
        let lb: f64 = blocks.iter().zip(&z).map(|(b, zb)| inner(&b.c, zb)).sum();
        let mut resid = vec![0.0; m];
        resid[d] = 1.0;
        for (blk, zb) in blocks.iter().zip(&z) {
            for (k, e) in &blk.vars {
                resid[*k] -= inner_sparse(e, zb);
            }
        }
        let res = resid.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        trace!("iter {iter}: t = {t:.6e}, lb = {lb:.6e}, gap = {gap:.3e}, res = {res:.3e}");

        if let Some(margin) = opts.early_stop_margin {
            if t < -margin.max(opts.eps) {
                return finish(SolveStatus::Feasible, &y, lb, res, iter, "early stop".into());
            }
        }
        if res <= opts.residual_tol && lb > 0.0 {
            return finish(
                SolveStatus::Infeasible,
                &y,
                lb,
                res,
                iter,
                "dual certificate: lower bound on t is positive".into(),
            );
        }
        // Rounding keeps the dual residual from dropping much below ~1e-7
        // on large problems once the gap has closed.
        let converged = gap <= opts.gap_tol * (1.0 + t.abs())
            && (res <= opts.residual_tol || res <= 1e3 * opts.residual_tol && stalled_gap >= 3);
        if gap <= opts.gap_tol * (1.0 + t.abs()) {
            stalled_gap += 1;
        }
        if converged {
            let (status, msg) = if t < -opts.eps {
                (SolveStatus::Feasible, "converged")
            } else if t >= 0.0 && gap < 1e-6 {
                (SolveStatus::Infeasible, "converged with t >= 0")
            } else {
                (SolveStatus::Indeterminate, "converged inside the strictness band")
            };
            return finish(status, &y, lb, res, iter, msg.into());
        }
        if iter == opts.max_iter || stalled >= 5 {
            let status = if t < -opts.eps {
                SolveStatus::Feasible
            } else {
                SolveStatus::Indeterminate
            };
            let why = if stalled >= 5 { "stalled" } else { "iteration cap" };
            return finish(status, &y, lb, res, iter, format!("{why} (t = {t:.3e}, gap = {gap:.3e})"));
        }

        let mu = gap / total_dim as f64;
        let mut w = Vec::with_capacity(s.len());
        for sb in &s {
            match sb.clone().cholesky() {
                Some(ch) => w.push(ch.inverse()),
                None => {
                    return finish(
                        if t < -opts.eps { SolveStatus::Feasible } else { SolveStatus::Indeterminate },
                        &y,
                        lb,
                        res,
                        iter,
                        "slack lost positive definiteness".into(),
                    )
                }
            }
        }
        let Some(factor) = Factor::new(schur_matrix(&blocks, &w, &z, m), m) else {
            return finish(SolveStatus::Indeterminate, &y, lb, res, iter, "singular Schur complement".into());
        };

        // rhs_i = <A_i, target_b> - b_i
        let direction = |target: Option<&[DMatrix<f64>]>| -> Option<Vec<f64>> {
            let mut r = vec![0.0; m];
            r[d] = -1.0;
            if let Some(target) = target {
                for (blk, x) in blocks.iter().zip(target) {
                    for (k, e) in &blk.vars {
                        r[*k] += inner_sparse(e, x);
                    }
                }
            }
            factor.solve(&r)
        };

        // predictor
        let Some(dy_p) = direction(None) else {
            return finish(SolveStatus::Indeterminate, &y, lb, res, iter, "singular Schur complement".into());
        };
        let ds_p: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.apply(&dy_p)).collect();
        let dz_p: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|b| -&z[b] - sym(&w[b] * &ds_p[b] * &z[b]))
            .collect();
        let ap = (0..blocks.len())
            .map(|b| max_step(&s[b], &ds_p[b]))
            .fold(f64::INFINITY, f64::min)
            .min(1.0);
        let ad = (0..blocks.len())
            .map(|b| max_step(&z[b], &dz_p[b]))
            .fold(f64::INFINITY, f64::min)
            .min(1.0);
        let gap_aff: f64 = (0..blocks.len())
            .map(|b| inner(&(&s[b] + &ds_p[b] * ap), &(&z[b] + &dz_p[b] * ad)))
            .sum();
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // corrector
        let r: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|b| sym(&w[b] * &ds_p[b] * &dz_p[b]))
            .collect();
        let target: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|b| &w[b] * (sigma * mu) - &r[b])
            .collect();
        let Some(dy) = direction(Some(&target)) else {
            return finish(SolveStatus::Indeterminate, &y, lb, res, iter, "singular Schur complement".into());
        };
        let ds: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.apply(&dy)).collect();
        let dz: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|b| &target[b] - &z[b] - sym(&w[b] * &ds[b] * &z[b]))
            .collect();
        let ap = (0..blocks.len())
            .map(|b| max_step(&s[b], &ds[b]))
            .fold(f64::INFINITY, f64::min);
        let ad = (0..blocks.len())
            .map(|b| max_step(&z[b], &dz[b]))
            .fold(f64::INFINITY, f64::min);
        let ap = (opts.step_fraction * ap).min(1.0);
        let ad = (opts.step_fraction * ad).min(1.0);

        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
        } else {
            stalled = 0;
        }
        for (yi, di) in y.iter_mut().zip(&dy) {
            *yi += ap * di;
        }
        s = blocks.iter().map(|b| b.slack(&y)).collect();
        for (zb, dzb) in z.iter_mut().zip(&dz) {
            *zb += dzb * ad;
            *zb = sym(zb.clone());
        }
    }
    unreachable!("loop returns on the final iteration")
}
