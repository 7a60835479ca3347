//! Filter synthesis, bisection on the attenuation level, and certification
//! of a fixed filter.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{self, names, DelayRateMode, LmiSettings, SlackStructure};
use crate::model::{FuzzyFilter, ProductBounds, TsDelayModel};
use crate::sdp::{self, SolveStatus, SolverOptions, SolverReport};

/// Largest condition number of `P22` accepted for filter recovery.
pub const MAX_P22_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Common quadratic conditions over all rule pairs.
    Basic,
    /// Adds membership-bound slack matrices.
    MembershipDependent,
}

impl Theorem {
    pub fn number(self) -> u8 {
        match self {
            Theorem::Basic => 1,
            Theorem::MembershipDependent => 2,
        }
    }
}

impl std::str::FromStr for Theorem {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "1" | "basic" => Ok(Theorem::Basic),
            "2" | "membership" | "membership_dependent" => Ok(Theorem::MembershipDependent),
            _ => Err(format!("unknown theorem `{s}` (expected 1 or 2)")),
        }
    }
}

/// Membership grid used to derive product bounds when none are supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsDomain {
    pub lo: f64,
    pub hi: f64,
    pub grid_points: usize,
    pub margin: f64,
}

impl Default for BoundsDomain {
    fn default() -> Self {
        Self {
            lo: -50.0,
            hi: 50.0,
            grid_points: 10001,
            margin: 1e-6,
        }
    }
}

impl BoundsDomain {
    pub fn bounds(&self, model: &TsDelayModel) -> Result<ProductBounds> {
        model.membership_product_bounds(self.lo, self.hi, self.grid_points, self.margin)
    }
}

/// Everything except `gamma` that defines a synthesis problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSettings {
    pub h: f64,
    pub rho: f64,
    pub omega: f64,
    pub theorem: Theorem,
    pub delay_rate_mode: DelayRateMode,
    pub slack_structure: SlackStructure,
    /// Required for the membership-dependent theorem.
    pub bounds: Option<ProductBounds>,
}

impl SynthesisSettings {
    /// Settings with default mode/structure; bounds derived over
    /// [`BoundsDomain::default`] when `theorem` needs them.
    pub fn new(model: &TsDelayModel, h: f64, rho: f64, omega: f64, theorem: Theorem) -> Result<Self> {
        let bounds = match theorem {
            Theorem::Basic => None,
            Theorem::MembershipDependent => Some(BoundsDomain::default().bounds(model)?),
        };
        Ok(Self {
            h,
            rho,
            omega,
            theorem,
            delay_rate_mode: DelayRateMode::default(),
            slack_structure: SlackStructure::default(),
            bounds,
        })
    }

    pub fn lmi(&self, gamma: f64) -> LmiSettings {
        LmiSettings {
            h: self.h,
            rho: self.rho,
            omega: self.omega,
            gamma,
            delay_rate_mode: self.delay_rate_mode,
        }
    }

    pub fn build(&self, model: &TsDelayModel, gamma: f64) -> Result<lmi::LmiProblem> {
        let s = self.lmi(gamma);
        match self.theorem {
            Theorem::Basic => lmi::build_theorem1(model, &s),
            Theorem::MembershipDependent => {
                let bounds = self.bounds.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("the membership-dependent theorem needs product bounds".into())
                })?;
                lmi::build_theorem2(model, &s, bounds, self.slack_structure)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub filter: FuzzyFilter,
    pub gamma: f64,
    /// Decision matrices at the solver point, by variable name.
    #[serde(with = "crate::matrix_serde::map")]
    pub certificate: BTreeMap<String, DMatrix<f64>>,
    pub settings: SynthesisSettings,
    pub report: SolverReport,
}

impl SynthesisResult {
    /// `P = [[P11, P22], [P22, P22]]`.
    pub fn p_tilde(&self) -> DMatrix<f64> {
        let p11 = &self.certificate[names::P11];
        let p22 = &self.certificate[names::P22];
        let n = p11.nrows();
        let mut p = DMatrix::zeros(2 * n, 2 * n);
        p.view_mut((0, 0), (n, n)).copy_from(p11);
        p.view_mut((0, n), (n, n)).copy_from(p22);
        p.view_mut((n, 0), (n, n)).copy_from(p22);
        p.view_mut((n, n), (n, n)).copy_from(p22);
        p
    }

    /// Largest deviation in `P22 A_hat_j = A_j`, `P22 B_hat_j = B_j`,
    /// `C_hat_j = C_j`.
    pub fn recovery_residual(&self) -> f64 {
        let p22 = &self.certificate[names::P22];
        let mut worst: f64 = 0.0;
        for j in 0..self.filter.a_hat.len() {
            let a = &self.certificate[&names::a(j)];
            let b = &self.certificate[&names::b(j)];
            let c = &self.certificate[&names::c(j)];
            worst = worst
                .max((p22 * &self.filter.a_hat[j] - a).amax())
                .max((p22 * &self.filter.b_hat[j] - b).amax())
                .max((&self.filter.c_hat[j] - c).amax());
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub enum SynthesisOutcome {
    Feasible(Box<SynthesisResult>),
    /// The solver proved (or, when indeterminate, failed to disprove)
    /// infeasibility; the report says which.
    NotFeasible(SolverReport),
}

impl SynthesisOutcome {
    pub fn feasible(self) -> Option<SynthesisResult> {
        match self {
            SynthesisOutcome::Feasible(r) => Some(*r),
            SynthesisOutcome::NotFeasible(_) => None,
        }
    }

    pub fn report(&self) -> &SolverReport {
        match self {
            SynthesisOutcome::Feasible(r) => &r.report,
            SynthesisOutcome::NotFeasible(r) => r,
        }
    }
}

/// 2-norm condition number of a symmetric matrix.
fn condition(m: &DMatrix<f64>) -> f64 {
    let e = m.symmetric_eigenvalues().map(f64::abs);
    e.max() / e.min()
}

/// Solves the synthesis LMIs at `gamma` and recovers the filter.
pub fn synthesize(
    model: &TsDelayModel,
    settings: &SynthesisSettings,
    gamma: f64,
    options: &SolverOptions,
) -> Result<SynthesisOutcome> {
    let problem = settings.build(model, gamma)?;
    let sdp = sdp::canonicalize(&problem)?;
    let report = sdp::solve_feasibility(&sdp, options);
    let Some(x) = report.x.as_ref().filter(|_| report.status == SolveStatus::Feasible) else {
        return Ok(SynthesisOutcome::NotFeasible(report));
    };
    let certificate: BTreeMap<String, DMatrix<f64>> = sdp.unpack(x).into_iter().collect();

    let p22 = &certificate[names::P22];
    let cond = condition(p22);
    if !(cond < MAX_P22_CONDITION) {
        return Err(Error::IllConditioned {
            what: names::P22.into(),
            cond,
        });
    }
    let lu = p22.clone().lu();
    let p = model.p();
    let mut filter = FuzzyFilter::zeros(model);
    for j in 0..p {
        let solve = |m: &DMatrix<f64>| {
            lu.solve(m).ok_or_else(|| Error::IllConditioned {
                what: names::P22.into(),
                cond,
            })
        };
        filter.a_hat[j] = solve(&certificate[&names::a(j)])?;
        filter.b_hat[j] = solve(&certificate[&names::b(j)])?;
        filter.c_hat[j] = certificate[&names::c(j)].clone();
    }
    Ok(SynthesisOutcome::Feasible(Box::new(SynthesisResult {
        filter,
        gamma,
        certificate,
        settings: settings.clone(),
        report,
    })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaStep {
    pub gamma: f64,
    pub status: SolveStatus,
    pub wall_time: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaSearchLog {
    pub steps: Vec<GammaStep>,
    pub gamma_star: Option<f64>,
    pub tol: f64,
    pub bracket: (f64, f64),
    /// Steps whose indeterminate status was counted as infeasible.
    pub indeterminate: usize,
}

#[derive(Debug, Clone)]
pub struct GammaSearch {
    pub tol: f64,
    pub bracket: (f64, f64),
    /// Used while bisecting (an early-stop margin keeps feasible probes cheap).
    pub probe: SolverOptions,
    /// Used for the final re-solve at the returned level.
    pub finish: SolverOptions,
}

impl Default for GammaSearch {
    fn default() -> Self {
        Self {
            tol: 5e-3,
            bracket: (1e-3, 10.0),
            probe: SolverOptions {
                early_stop_margin: Some(1e-6),
                ..SolverOptions::default()
            },
            finish: SolverOptions::default(),
        }
    }
}

/// Bisection for the smallest feasible attenuation level.
///
/// Returns `Ok((None, log))` when the upper end of the bracket is not
/// feasible.
pub fn gamma_min(
    model: &TsDelayModel,
    settings: &SynthesisSettings,
    search: &GammaSearch,
) -> Result<(Option<SynthesisResult>, GammaSearchLog)> {
    let (lo, hi) = search.bracket;
    if !(lo > 0.0 && lo <= hi && search.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < lo <= hi and tol > 0, got bracket ({lo}, {hi}), tol {}",
            search.tol
        )));
    }
    let mut log = GammaSearchLog {
        steps: Vec::new(),
        gamma_star: None,
        tol: search.tol,
        bracket: (lo, hi),
        indeterminate: 0,
    };
    let probe = |gamma: f64, log: &mut GammaSearchLog, opts: &SolverOptions| -> Result<SynthesisOutcome> {
        let t0 = Instant::now();
        let out = synthesize(model, settings, gamma, opts)?;
        let r = out.report();
        if r.status == SolveStatus::Indeterminate {
            warn!("indeterminate at gamma = {gamma}: {} (treated as infeasible)", r.message);
            log.indeterminate += 1;
        }
        info!("gamma = {gamma:.5}: {:?} ({} iterations)", r.status, r.iterations);
        log.steps.push(GammaStep {
            gamma,
            status: r.status,
            wall_time: t0.elapsed().as_secs_f64(),
            iterations: r.iterations,
        });
        Ok(out)
    };

    if probe(hi, &mut log, &search.probe)?.feasible().is_none() {
        return Ok((None, log));
    }
    let (mut lo, mut hi) = (lo, hi);
    if lo < hi && probe(lo, &mut log, &search.probe)?.feasible().is_some() {
        hi = lo;
    }
    while hi - lo > search.tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut log, &search.probe)?.feasible().is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // clean certificate at the returned level
    let result = match probe(hi, &mut log, &search.finish)?.feasible() {
        Some(r) => r,
        None => {
            // the probe accepted hi with an early stop; keep the deeper solve honest
            warn!("final re-solve at gamma = {hi} was not feasible; widening by tol");
            hi += search.tol;
            probe(hi, &mut log, &search.finish)?
                .feasible()
                .ok_or_else(|| Error::InvalidArgument(format!("re-solve failed near gamma = {hi}")))?
        }
    };
    log.gamma_star = Some(hi);
    Ok((Some(result), log))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certification {
    pub feasible: bool,
    pub gamma: f64,
    #[serde(with = "crate::matrix_serde::map")]
    pub certificate: BTreeMap<String, DMatrix<f64>>,
    pub report: SolverReport,
}

/// Analysis-mode check of a fixed filter at `gamma`. With `membership`, the
/// membership-bound slacks are included (needed to certify filters from the
/// membership-dependent theorem).
pub fn certify_filter(
    model: &TsDelayModel,
    filter: &FuzzyFilter,
    settings: &LmiSettings,
    membership: Option<(&ProductBounds, SlackStructure)>,
    options: &SolverOptions,
) -> Result<Certification> {
    let problem = lmi::build_lemma2_analysis(model, filter, settings, membership)?;
    let sdp = sdp::canonicalize(&problem)?;
    let report = sdp::solve_feasibility(&sdp, options);
    let feasible = report.status == SolveStatus::Feasible;
    let certificate = match (&report.x, feasible) {
        (Some(x), true) => sdp.unpack(x).into_iter().collect(),
        _ => BTreeMap::new(),
    };
    Ok(Certification {
        feasible,
        gamma: settings.gamma,
        certificate,
        report,
    })
}

/// On-disk filter: `{"gamma", "A_hat", "B_hat", "C_hat", "certificate", "settings"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterFile {
    pub gamma: f64,
    #[serde(flatten)]
    pub filter: FuzzyFilter,
    #[serde(with = "crate::matrix_serde::map", default)]
    pub certificate: BTreeMap<String, DMatrix<f64>>,
    pub settings: Option<SynthesisSettings>,
}

impl From<&SynthesisResult> for FilterFile {
    fn from(r: &SynthesisResult) -> Self {
        Self {
            gamma: r.gamma,
            filter: r.filter.clone(),
            certificate: r.certificate.clone(),
            settings: Some(r.settings.clone()),
        }
    }
}

impl FilterFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic(h: f64, omega: f64) -> SynthesisSettings {
        let mut s = SynthesisSettings::new(&crate::example1(), h, 0.2, omega, Theorem::Basic).unwrap();
        s.delay_rate_mode = DelayRateMode::Plain;
        s
    }

    #[test]
    fn recovered_filter_satisfies_the_change_of_variables() {
        let m = crate::example1();
        let r = synthesize(&m, &basic(0.5, 2.0), 0.5, &SolverOptions::default())
            .unwrap()
            .feasible()
            .unwrap();
        assert!(r.recovery_residual() < 1e-8);
        assert!(r.p_tilde().symmetric_eigenvalues().min() > 0.0);
        assert!(r.report.worst_margin < 0.0);
    }

    #[test]
    fn tiny_gamma_is_not_feasible() {
        let m = crate::example1();
        let out = synthesize(&m, &basic(0.5, 2.0), 0.01, &SolverOptions::default()).unwrap();
        assert_eq!(out.report().status, SolveStatus::Infeasible);
    }

    #[test]
    fn zero_width_bracket_returns_its_end() {
        let m = crate::example1();
        let search = GammaSearch {
            bracket: (0.6, 0.6),
            ..GammaSearch::default()
        };
        let (r, log) = gamma_min(&m, &basic(0.5, 2.0), &search).unwrap();
        assert_eq!(r.unwrap().gamma, 0.6);
        assert_eq!(log.gamma_star, Some(0.6));
    }

    #[test]
    fn infeasible_upper_end_is_reported() {
        let m = crate::example1();
        let search = GammaSearch {
            bracket: (0.01, 0.02),
            ..GammaSearch::default()
        };
        let (r, log) = gamma_min(&m, &basic(0.5, 2.0), &search).unwrap();
        assert!(r.is_none());
        assert_eq!(log.steps.len(), 1);
    }

    #[test]
    fn bisection_brackets_the_threshold() {
        let m = crate::example1();
        let (r, log) = gamma_min(&m, &basic(0.5, 2.0), &GammaSearch::default()).unwrap();
        let g = log.gamma_star.unwrap();
        assert_eq!(r.unwrap().gamma, g);
        let infeasible_below = log
            .steps
            .iter()
            .filter(|s| s.status != SolveStatus::Feasible)
            .map(|s| s.gamma)
            .fold(0.0, f64::max);
        assert!(g - infeasible_below <= 5e-3 + 1e-12);
        assert!(log.steps.iter().all(|s| s.status != SolveStatus::Feasible || s.gamma >= infeasible_below));
    }

    #[test]
    fn passive_filter_certifies_only_at_large_gamma() {
        // A_hat = 0 leaves the filter state marginally stable, so use -I
        let m = crate::example1();
        let mut f = FuzzyFilter::zeros(&m);
        for a in &mut f.a_hat {
            *a = -DMatrix::identity(2, 2);
        }
        let mut s = basic(0.5, 2.0).lmi(1000.0);
        let ok = certify_filter(&m, &f, &s, None, &SolverOptions::default()).unwrap();
        assert!(ok.feasible);
        s.gamma = 0.01;
        let bad = certify_filter(&m, &f, &s, None, &SolverOptions::default()).unwrap();
        assert!(!bad.feasible);
    }

    #[test]
    fn filter_file_round_trip() {
        let m = crate::example1();
        let r = synthesize(&m, &basic(0.5, 2.0), 0.5, &SolverOptions::default())
            .unwrap()
            .feasible()
            .unwrap();
        let file = FilterFile::from(&r);
        let text = file.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["gamma", "A_hat", "B_hat", "C_hat", "certificate", "settings"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back = FilterFile::from_json(&text).unwrap();
        assert_eq!(back.filter, r.filter);
        assert_eq!(back.gamma, 0.5);
    }
}
