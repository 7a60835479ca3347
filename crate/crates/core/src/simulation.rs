//! Fixed-step simulation of the plant/filter pair with time-varying delay,
//! empirical gain estimation and a Lyapunov-Krasovskii functional monitor.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::names;
use crate::model::{FuzzyFilter, TsDelayModel};
use crate::synthesis::SynthesisResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayTrajectory {
    Constant { value: f64 },
    /// `tau(t) = (h - margin)/2 * (1 + sin(2 rho t / (h - margin)))`.
    Sine { h: f64, rho: f64, margin: f64 },
}

pub fn make_delay_sine(h: f64, rho: f64, margin: f64) -> Result<DelayTrajectory> {
    if !(h > 0.0) || !(rho >= 0.0) || !(margin > 0.0 && margin < h) {
        return Err(Error::InvalidArgument(format!(
            "sine delay needs h > 0, rho >= 0 and 0 < margin < h (got h={h}, rho={rho}, margin={margin})"
        )));
    }
    Ok(DelayTrajectory::Sine { h, rho, margin })
}

impl DelayTrajectory {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DelayTrajectory::Constant { value } => value,
            DelayTrajectory::Sine { h, rho, margin } => {
                let a = h - margin;
                0.5 * a * (1.0 + (2.0 * rho * t / a).sin())
            }
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            DelayTrajectory::Constant { .. } => 0.0,
            DelayTrajectory::Sine { h, rho, margin } => rho * (2.0 * rho * t / (h - margin)).cos(),
        }
    }

    /// Closed-form `(inf tau, sup tau, sup |tau'|)`.
    pub fn analytic_bounds(&self) -> (f64, f64, f64) {
        match *self {
            DelayTrajectory::Constant { value } => (value, value, 0.0),
            DelayTrajectory::Sine { h, rho, margin } => {
                if rho == 0.0 {
                    let c = 0.5 * (h - margin);
                    (c, c, 0.0)
                } else {
                    (0.0, h - margin, rho)
                }
            }
        }
    }

    /// `0 <= tau < h` and `|tau'| <= rho`, from the closed-form bounds.
    pub fn admissible(&self, h: f64, rho: f64) -> bool {
        let (lo, hi, rate) = self.analytic_bounds();
        lo >= 0.0 && hi < h && rate <= rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    Zero,
    Pulse { t0: f64, t1: f64, level: f64 },
    /// `w(t) = exp(-a t) sin(b t)`.
    DecayingSine { a: f64, b: f64 },
    /// Smooth band-limited signal: 16 random tones below `bandwidth` (rad/s).
    SeededNoise { seed: u64, bandwidth: f64 },
}

struct Tone {
    amp: f64,
    freq: f64,
    phase: f64,
}

/// Disturbance ready for evaluation (noise tones drawn once).
pub struct Signal {
    kind: Disturbance,
    tones: Vec<Vec<Tone>>,
    n_w: usize,
}

impl Signal {
    pub fn new(kind: &Disturbance, n_w: usize) -> Self {
        let tones = match *kind {
            Disturbance::SeededNoise { seed, bandwidth } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n_w)
                    .map(|_| {
                        (0..16)
                            .map(|_| Tone {
                                amp: rng.gen_range(-1.0..1.0) / 4.0,
                                freq: rng.gen_range(0.05..1.0) * bandwidth,
                                phase: rng.gen_range(0.0..2.0 * PI),
                            })
                            .collect()
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        Self {
            kind: kind.clone(),
            tones,
            n_w,
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self.kind {
            Disturbance::Zero => DVector::zeros(self.n_w),
            Disturbance::Pulse { t0, t1, level } => {
                DVector::from_element(self.n_w, if t >= t0 && t < t1 { level } else { 0.0 })
            }
            Disturbance::DecayingSine { a, b } => DVector::from_element(self.n_w, (-a * t).exp() * (b * t).sin()),
            Disturbance::SeededNoise { .. } => DVector::from_iterator(
                self.n_w,
                self.tones
                    .iter()
                    .map(|ch| ch.iter().map(|k| k.amp * (k.freq * t + k.phase).sin()).sum()),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Delay bound; also the length of the stored history window.
    pub h: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Constant plant history on `[-h, 0]`.
    pub phi: Vec<f64>,
    pub filter_init: Vec<f64>,
    pub delay: DelayTrajectory,
    pub disturbance: Disturbance,
}

impl SimConfig {
    /// Zero initial data, `dt = h/100`, `t_final = max(30, 10 h)`.
    pub fn new(model: &TsDelayModel, h: f64, delay: DelayTrajectory, disturbance: Disturbance) -> Self {
        Self {
            h,
            t_final: (10.0 * h).max(30.0),
            dt: h / 100.0,
            phi: vec![0.0; model.n],
            filter_init: vec![0.0; model.n],
            delay,
            disturbance,
        }
    }

    pub fn check(&self, model: &TsDelayModel) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.h > 0.0) {
            return bad(format!("h must be > 0, got {}", self.h));
        }
        if !(self.dt > 0.0) || self.dt > self.h / 20.0 + 1e-15 {
            return bad(format!("dt must lie in (0, h/20], got {}", self.dt));
        }
        if !(self.t_final >= 10.0 * self.h) {
            return bad(format!("t_final must be >= 10 h, got {}", self.t_final));
        }
        if self.phi.len() != model.n || self.filter_init.len() != model.n {
            return Err(Error::Dimension {
                location: "simulation initial data".into(),
                detail: format!("expected {} entries for phi and filter_init", model.n),
            });
        }
        let (lo, hi, _) = self.delay.analytic_bounds();
        if lo < 0.0 || hi > self.h {
            return bad(format!("delay range [{lo}, {hi}] leaves [0, h]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    pub h: f64,
    pub dt: f64,
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub xh: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub zh: Vec<DVector<f64>>,
    pub e: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub tau: Vec<f64>,
    /// `d/dt [x; xh]` at each sample.
    pub zeta_dot: Vec<DVector<f64>>,
    /// Running trapezoid integrals of `|e|^2` and `|w|^2`.
    pub e_energy: Vec<f64>,
    pub w_energy: Vec<f64>,
    pub divergent: bool,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn zeta(&self, k: usize) -> DVector<f64> {
        let n = self.x[k].len();
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.x[k]);
        z.rows_mut(n, n).copy_from(&self.xh[k]);
        z
    }

    /// `(zeta(s), zeta'(s))`, Hermite-interpolated; constant history
    /// (zero derivative) before the first sample.
    fn zeta_at(&self, s: f64) -> (DVector<f64>, DVector<f64>) {
        if s <= 0.0 {
            let z = self.zeta(0);
            let d = if s < 0.0 { DVector::zeros(z.len()) } else { self.zeta_dot[0].clone() };
            return (z, d);
        }
        let last = self.len() - 1;
        let k = ((s / self.dt).floor() as usize).min(last.saturating_sub(1));
        let u = ((s - self.t[k]) / self.dt).clamp(0.0, 1.0);
        let (z0, z1) = (self.zeta(k), self.zeta(k + 1));
        let (d0, d1) = (&self.zeta_dot[k], &self.zeta_dot[k + 1]);
        hermite(&z0, &z1, d0, d1, u, self.dt)
    }

    pub fn to_csv(&self) -> String {
        let n = self.x.first().map_or(0, |v| v.len());
        let nz = self.z.first().map_or(0, |v| v.len());
        let nw = self.w.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("xh{i}")));
        header.extend((1..=nz).map(|i| format!("z{i}")));
        header.extend((1..=nz).map(|i| format!("zh{i}")));
        header.extend((1..=nz).map(|i| format!("e{i}")));
        header.extend((1..=nw).map(|i| format!("w{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{}", self.t[k]);
            for v in [&self.x[k], &self.xh[k], &self.z[k], &self.zh[k], &self.e[k], &self.w[k]] {
                for a in v.iter() {
                    let _ = write!(out, ",{a}");
                }
            }
            out.push('\n');
        }
        out
    }
}

fn hermite(
    z0: &DVector<f64>,
    z1: &DVector<f64>,
    d0: &DVector<f64>,
    d1: &DVector<f64>,
    u: f64,
    dt: f64,
) -> (DVector<f64>, DVector<f64>) {
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let val = z0 * h00 + d0 * (h10 * dt) + z1 * h01 + d1 * (h11 * dt);
    let der = (z0 * (6.0 * u2 - 6.0 * u) + z1 * (6.0 * u - 6.0 * u2)) / dt
        + d0 * (3.0 * u2 - 4.0 * u + 1.0)
        + d1 * (3.0 * u2 - 2.0 * u);
    (val, der)
}

struct Outputs {
    zeta_dot: DVector<f64>,
    z: DVector<f64>,
    zh: DVector<f64>,
}

fn rhs(
    model: &TsDelayModel,
    filter: &FuzzyFilter,
    zeta: &DVector<f64>,
    x_delayed: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<Outputs> {
    let n = model.n;
    let x = zeta.rows(0, n).into_owned();
    let xh = zeta.rows(n, n).into_owned();
    let v = model.normalized_memberships(&x)?;
    let mut dx = DVector::zeros(n);
    let mut y = DVector::zeros(model.n_y);
    let mut z = DVector::zeros(model.n_z);
    for (i, r) in model.rules.iter().enumerate() {
        dx += (&r.a * &x + &r.a_tau * x_delayed + &r.b * w) * v[i];
        y += (&r.c * &x + &r.c_tau * x_delayed + &r.d * w) * v[i];
        z += (&r.e * &x + &r.e_tau * x_delayed) * v[i];
    }
    let mut dxh = DVector::zeros(n);
    let mut zh = DVector::zeros(model.n_z);
    for j in 0..model.p() {
        dxh += (&filter.a_hat[j] * &xh + &filter.b_hat[j] * &y) * v[j];
        zh += &filter.c_hat[j] * &xh * v[j];
    }
    let mut zeta_dot = DVector::zeros(2 * n);
    zeta_dot.rows_mut(0, n).copy_from(&dx);
    zeta_dot.rows_mut(n, n).copy_from(&dxh);
    Ok(Outputs { zeta_dot, z, zh })
}

/// RK4 on `[x; xh]`; the delayed plant state is read from the stored
/// trajectory by cubic Hermite interpolation.
pub fn simulate_filtering(model: &TsDelayModel, filter: &FuzzyFilter, config: &SimConfig) -> Result<SimResult> {
    model.ensure_valid()?;
    filter.check(model)?;
    config.check(model)?;
    let n = model.n;
    let signal = Signal::new(&config.disturbance, model.n_w);
    let steps = (config.t_final / config.dt).round() as usize;
    let dt = config.dt;

    let phi = DVector::from_column_slice(&config.phi);
    let mut zeta = DVector::zeros(2 * n);
    zeta.rows_mut(0, n).copy_from(&phi);
    zeta.rows_mut(n, n).copy_from(&DVector::from_column_slice(&config.filter_init));

    let mut res = SimResult {
        h: config.h,
        dt,
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        xh: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        zh: Vec::with_capacity(steps + 1),
        e: Vec::with_capacity(steps + 1),
        w: Vec::with_capacity(steps + 1),
        tau: Vec::with_capacity(steps + 1),
        zeta_dot: Vec::with_capacity(steps + 1),
        e_energy: Vec::with_capacity(steps + 1),
        w_energy: Vec::with_capacity(steps + 1),
        divergent: false,
    };

    // plant state at time s; s beyond the last stored sample is
    // extrapolated from the current step start
    let delayed = |res: &SimResult, s: f64, cur: &DVector<f64>, cur_dot: &DVector<f64>, tk: f64| -> DVector<f64> {
        if s <= 0.0 {
            return phi.clone();
        }
        if s >= tk {
            return (cur + cur_dot * (s - tk)).rows(0, n).into_owned();
        }
        let k = ((s / dt).floor() as usize).min(res.len() - 2);
        let u = ((s - res.t[k]) / dt).clamp(0.0, 1.0);
        let (v, _) = hermite(
            &res.zeta(k),
            &res.zeta(k + 1),
            &res.zeta_dot[k],
            &res.zeta_dot[k + 1],
            u,
            dt,
        );
        v.rows(0, n).into_owned()
    };

    for k in 0..=steps {
        let tk = k as f64 * dt;
        let tau = config.delay.eval(tk);
        let wk = signal.eval(tk);
        // derivative at the sample itself (history uses it below)
        let probe_dot = DVector::zeros(2 * n);
        let xd = delayed(&res, tk - tau, &zeta, &probe_dot, tk);
        let out = rhs(model, filter, &zeta, &xd, &wk)?;

        let e = &out.z - &out.zh;
        let (ee, we) = match res.t.len() {
            0 => (0.0, 0.0),
            _ => {
                let last = res.len() - 1;
                (
                    res.e_energy[last] + 0.5 * dt * (res.e[last].norm_squared() + e.norm_squared()),
                    res.w_energy[last] + 0.5 * dt * (res.w[last].norm_squared() + wk.norm_squared()),
                )
            }
        };
        res.t.push(tk);
        res.x.push(zeta.rows(0, n).into_owned());
        res.xh.push(zeta.rows(n, n).into_owned());
        res.z.push(out.z);
        res.zh.push(out.zh);
        res.e.push(e);
        res.w.push(wk);
        res.tau.push(tau);
        res.zeta_dot.push(out.zeta_dot.clone());
        res.e_energy.push(ee);
        res.w_energy.push(we);

        if k == steps {
            break;
        }

        let k1 = out.zeta_dot;
        let stage = |c: f64, state: &DVector<f64>| -> Result<DVector<f64>> {
            let ts = tk + c * dt;
            let xd = delayed(&res, ts - config.delay.eval(ts), &zeta, &k1, tk);
            Ok(rhs(model, filter, state, &xd, &signal.eval(ts))?.zeta_dot)
        };
        let k2 = stage(0.5, &(&zeta + &k1 * (0.5 * dt)))?;
        let k3 = stage(0.5, &(&zeta + &k2 * (0.5 * dt)))?;
        let k4 = stage(1.0, &(&zeta + &k3 * dt))?;
        zeta += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

        if !zeta.iter().all(|v| v.is_finite()) || zeta.amax() > 1e12 {
            res.divergent = true;
            break;
        }
    }
    Ok(res)
}

/// `sqrt(int |e|^2 / int |w|^2)` over the whole run. Requires zero initial
/// data, as in the attenuation definition.
pub fn l2_gain_estimate(result: &SimResult) -> Result<f64> {
    let Some(last) = result.len().checked_sub(1) else {
        return Err(Error::ZeroEnergy);
    };
    if result.x[0].amax() != 0.0 || result.xh[0].amax() != 0.0 {
        return Err(Error::InvalidArgument(
            "gain estimate needs zero initial history and filter state".into(),
        ));
    }
    let we = result.w_energy[last];
    if !(we > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok((result.e_energy[last] / we).sqrt())
}

/// Weights of the functional
/// `V = z'Pz + int_{t-tau}^t z'Yz + int_{-h}^0 int_{t+th}^t z''Zz'`.
#[derive(Debug, Clone)]
pub struct LkWeights {
    pub p: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub h: f64,
}

impl LkWeights {
    pub fn from_synthesis(r: &SynthesisResult) -> Result<Self> {
        Self::from_certificate(&r.certificate, r.settings.h)
    }

    /// Weights from stored decision matrices (`P11`, `P22`, `Y`, `Z`).
    pub fn from_certificate(cert: &BTreeMap<String, DMatrix<f64>>, h: f64) -> Result<Self> {
        for name in [names::P11, names::P22, names::Y, names::Z] {
            if !cert.contains_key(name) {
                return Err(Error::CertificateMismatch(format!("missing {name}")));
            }
        }
        let p11 = &cert[names::P11];
        let p22 = &cert[names::P22];
        let n = p11.nrows();
        if p22.shape() != (n, n) {
            return Err(Error::CertificateMismatch("P11 and P22 differ in size".into()));
        }
        let mut p = DMatrix::zeros(2 * n, 2 * n);
        p.view_mut((0, 0), (n, n)).copy_from(p11);
        p.view_mut((0, n), (n, n)).copy_from(p22);
        p.view_mut((n, 0), (n, n)).copy_from(p22);
        p.view_mut((n, n), (n, n)).copy_from(p22);
        Ok(Self {
            p,
            y: cert[names::Y].clone(),
            z: cert[names::Z].clone(),
            h,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovTrace {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub max_v: f64,
    /// Largest `V(t_{k+1}) - V(t_k)`.
    pub max_forward_difference: f64,
}

fn simpson(a: f64, b: f64, m: usize, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = m + m % 2;
    let hs = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * hs) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * hs / 3.0
}

/// Evaluates the functional along a `w = 0` run by quadrature over the
/// stored trajectory.
pub fn lyapunov_monitor(weights: &LkWeights, result: &SimResult) -> Result<LyapunovTrace> {
    let dim = result.zeta(0).len();
    for (name, m) in [("P", &weights.p), ("Y", &weights.y), ("Z", &weights.z)] {
        if m.shape() != (dim, dim) {
            return Err(Error::CertificateMismatch(format!(
                "{name} is {:?}, state dimension is {dim}",
                m.shape()
            )));
        }
    }
    if (weights.h - result.h).abs() > 1e-12 {
        return Err(Error::CertificateMismatch(format!(
            "certificate h = {} but simulation h = {}",
            weights.h, result.h
        )));
    }
    if result.w.iter().any(|w| w.amax() != 0.0) {
        return Err(Error::InvalidArgument("monitor needs a run with w = 0".into()));
    }
    let h = weights.h;
    let quad = |v: &DVector<f64>, m: &DMatrix<f64>| (m * v).dot(v);
    // nodes per integral, split at s = 0 where the derivative jumps
    let nodes = ((h / result.dt).ceil() as usize * 2).max(20);

    let mut v = Vec::with_capacity(result.len());
    for k in 0..result.len() {
        let t = result.t[k];
        let zeta = result.zeta(k);
        let mut val = quad(&zeta, &weights.p);
        let a = t - result.tau[k];
        let fy = |s: f64| quad(&result.zeta_at(s).0, &weights.y);
        val += simpson(a.min(0.0), 0.0f64.min(t), nodes, &fy) + simpson(a.max(0.0), t, nodes, &fy);
        // the double integral collapses to int_{t-h}^t (s - t + h) z'(s)'Zz'(s) ds;
        // the history is constant, so only s > 0 contributes
        let fz = |s: f64| (s - t + h) * quad(&result.zeta_at(s).1, &weights.z);
        val += simpson((t - h).max(0.0), t, nodes, fz);
        v.push(val);
    }
    let max_v = v.iter().cloned().fold(0.0, f64::max);
    let max_forward_difference = v
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovTrace {
        t: result.t.clone(),
        v,
        max_v,
        max_forward_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DelaySpec, Grade, MembershipSpec, RuleMatrices};

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
            delay: DelaySpec { h: 0.5, rho: 0.2 },
            membership: MembershipSpec {
                premise_index: 0,
                grades: vec![Grade::Constant { v: 1.0 }],
            },
        }
    }

    #[test]
    fn sine_delay_closed_form_values() {
        let d = make_delay_sine(0.5, 0.2, 0.05).unwrap();
        assert!((d.eval(0.0) - 0.225).abs() < 1e-15);
        assert_eq!(d.analytic_bounds(), (0.0, 0.45, 0.2));
        assert!(d.admissible(0.5, 0.2));
        let frozen = make_delay_sine(0.5, 0.0, 0.05).unwrap();
        assert!((frozen.eval(123.0) - 0.225).abs() < 1e-15);
        assert!(make_delay_sine(0.5, 0.2, 0.5).is_err());
        for k in 0..10_000 {
            assert!(d.eval(k as f64 * 0.01) < 0.5);
        }
    }

    #[test]
    fn equilibrium_stays_at_zero() {
        let m = crate::example1();
        let f = FuzzyFilter::zeros(&m);
        let cfg = SimConfig::new(&m, 0.5, make_delay_sine(0.5, 0.2, 0.05).unwrap(), Disturbance::Zero);
        let r = simulate_filtering(&m, &f, &cfg).unwrap();
        assert!(r.x.iter().chain(&r.xh).chain(&r.e).all(|v| v.amax() == 0.0));
    }

    #[test]
    fn scalar_exponential_decay() {
        let m = scalar_model(-1.0);
        let f = FuzzyFilter::zeros(&m);
        let mut cfg = SimConfig::new(&m, 0.5, DelayTrajectory::Constant { value: 0.25 }, Disturbance::Zero);
        cfg.phi = vec![1.0];
        cfg.t_final = 5.0;
        let r = simulate_filtering(&m, &f, &cfg).unwrap();
        let k = (1.0 / cfg.dt).round() as usize;
        assert!((r.t[k] - 1.0).abs() < 1e-12);
        assert!((r.x[k][0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order_with_delay() {
        // x' = -x + 0.5 x(t - 0.3), smooth after the first delay interval
        let mut m = scalar_model(-1.0);
        m.rules[0].a_tau[(0, 0)] = 0.5;
        let f = FuzzyFilter::zeros(&m);
        let run = |dt: f64| {
            let mut cfg = SimConfig::new(&m, 0.5, DelayTrajectory::Constant { value: 0.3 }, Disturbance::Zero);
            cfg.phi = vec![1.0];
            cfg.t_final = 5.0;
            cfg.dt = dt;
            let r = simulate_filtering(&m, &f, &cfg).unwrap();
            r.x.last().unwrap()[0]
        };
        let dt = 0.025;
        let reference = run(dt / 8.0);
        let e1 = (run(dt) - reference).abs();
        let e2 = (run(dt / 2.0) - reference).abs();
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let k = Disturbance::SeededNoise { seed: 9, bandwidth: 3.0 };
        let (a, b) = (Signal::new(&k, 2), Signal::new(&k, 2));
        for i in 0..100 {
            let t = i as f64 * 0.37;
            assert_eq!(a.eval(t), b.eval(t));
        }
        let c = Signal::new(&Disturbance::SeededNoise { seed: 10, bandwidth: 3.0 }, 2);
        assert_ne!(a.eval(1.0), c.eval(1.0));
    }

    #[test]
    fn gain_of_trivial_trajectories() {
        let m = scalar_model(-1.0);
        let f = FuzzyFilter::zeros(&m);
        let mut cfg = SimConfig::new(&m, 0.5, DelayTrajectory::Constant { value: 0.1 }, Disturbance::Zero);
        cfg.t_final = 5.0;
        let r = simulate_filtering(&m, &f, &cfg).unwrap();
        assert!(matches!(l2_gain_estimate(&r), Err(Error::ZeroEnergy)));

        let mut fake = r.clone();
        for k in 0..fake.len() {
            fake.w[k] = DVector::from_element(1, (k as f64 * 0.1).sin());
            fake.e[k] = fake.w[k].clone();
        }
        let mut ee = 0.0;
        fake.e_energy[0] = 0.0;
        fake.w_energy[0] = 0.0;
        for k in 1..fake.len() {
            ee += 0.5 * fake.dt * (fake.w[k - 1].norm_squared() + fake.w[k].norm_squared());
            fake.e_energy[k] = ee;
            fake.w_energy[k] = ee;
        }
        assert!((l2_gain_estimate(&fake).unwrap() - 1.0).abs() < 1e-15);
        for k in 0..fake.len() {
            fake.e_energy[k] = 0.0;
        }
        assert_eq!(l2_gain_estimate(&fake).unwrap(), 0.0);
    }

    #[test]
    fn csv_header_and_rows() {
        let m = crate::example1();
        let f = FuzzyFilter::zeros(&m);
        let mut cfg = SimConfig::new(&m, 0.5, DelayTrajectory::Constant { value: 0.2 }, Disturbance::DecayingSine { a: 0.1, b: 1.0 });
        cfg.t_final = 5.0;
        let r = simulate_filtering(&m, &f, &cfg).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,xh1,xh2,z1,zh1,e1,w1");
        assert_eq!(lines.count(), r.len());
        for k in 0..r.len() {
            assert!((&r.e[k] - (&r.z[k] - &r.zh[k])).amax() == 0.0);
        }
        assert!(r.e_energy.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn monitor_is_linear_in_p_and_zero_on_zero() {
        let m = scalar_model(-1.0);
        let f = FuzzyFilter::zeros(&m);
        let mut cfg = SimConfig::new(&m, 0.5, DelayTrajectory::Constant { value: 0.2 }, Disturbance::Zero);
        cfg.t_final = 5.0;
        let w = LkWeights {
            p: DMatrix::identity(2, 2),
            y: DMatrix::identity(2, 2),
            z: DMatrix::identity(2, 2),
            h: 0.5,
        };
        let zero = simulate_filtering(&m, &f, &cfg).unwrap();
        assert!(lyapunov_monitor(&w, &zero).unwrap().v.iter().all(|v| *v == 0.0));

        cfg.phi = vec![1.0];
        let r = simulate_filtering(&m, &f, &cfg).unwrap();
        let base = lyapunov_monitor(&w, &r).unwrap();
        let mut w2 = w.clone();
        w2.p *= 2.0;
        let doubled = lyapunov_monitor(&w2, &r).unwrap();
        for k in 0..r.len() {
            let first = r.zeta(k).norm_squared();
            assert!((doubled.v[k] - base.v[k] - first).abs() < 1e-12);
        }
        let mut bad = w.clone();
        bad.h = 0.6;
        assert!(matches!(lyapunov_monitor(&bad, &r), Err(Error::CertificateMismatch(_))));
    }
}
