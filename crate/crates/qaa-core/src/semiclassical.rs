//! Large-spin limit: the classical energy `G(tau, n_x, n_z)`, the effective
//! potential `U(q) = G(sqrt(1-q^2), q)` on the `p = 0` branch, its stationary
//! points, local/global bifurcations and the cusp (A3) point.

use std::ops::{Add, Mul, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QaaError, Result};
use crate::problem::{gp_deriv, gp_eval, HwpInstance};
use crate::spin_algebra::GammaCoefficients;

/// Truncated Taylor jet `(f, f', f'', f''')` in the single variable `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3(pub [f64; 4]);

impl Jet3 {
    pub fn constant(c: f64) -> Self {
        Jet3([c, 0.0, 0.0, 0.0])
    }

    pub fn variable(x: f64) -> Self {
        Jet3([x, 1.0, 0.0, 0.0])
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// Chain rule with outer derivatives `h = (h(u), h'(u), h''(u), h'''(u))`.
    fn compose(self, h: [f64; 4]) -> Self {
        let [_, u1, u2, u3] = self.0;
        Jet3([h[0], h[1] * u1, h[2] * u1 * u1 + h[1] * u2, h[3] * u1 * u1 * u1 + 3.0 * h[2] * u1 * u2 + h[1] * u3])
    }

    pub fn sqrt(self) -> Self {
        let s = self.0[0].sqrt();
        let u = self.0[0];
        self.compose([s, 0.5 / s, -0.25 / (u * s), 0.375 / (u * u * s)])
    }

    pub fn scale(self, c: f64) -> Self {
        Jet3(self.0.map(|v| v * c))
    }

    pub fn offset(self, c: f64) -> Self {
        let mut j = self.0;
        j[0] += c;
        Jet3(j)
    }
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(self, o: Jet3) -> Jet3 {
        Jet3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2], self.0[3] + o.0[3]])
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, o: Jet3) -> Jet3 {
        self + o.scale(-1.0)
    }
}

impl Mul for Jet3 {
    type Output = Jet3;
    fn mul(self, o: Jet3) -> Jet3 {
        let [a0, a1, a2, a3] = self.0;
        let [b0, b1, b2, b3] = o.0;
        Jet3([
            a0 * b0,
            a1 * b0 + a0 * b1,
            a2 * b0 + 2.0 * a1 * b1 + a0 * b2,
            a3 * b0 + 3.0 * a2 * b1 + 3.0 * a1 * b2 + a0 * b3,
        ])
    }
}

/// `G(tau, n_x, n_z) = (1-tau) 2(1-n_x) + tau(1-tau) G_E(n_x, n_z) + tau G_P(n_z)`
/// with `G_E = g1 x + g2 x^2 + g3 x^3 + g4 x z + g5 x z^2 + g6 x^2 z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub beta: [f64; 4],
    pub gamma: GammaCoefficients,
}

/// Partial derivatives of `G` with respect to `n_x`, `n_z`, `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GPartials {
    pub g: f64,
    pub gx: f64,
    pub gz: f64,
    pub gxx: f64,
    pub gxtau: f64,
}

impl EffectiveModel {
    pub fn new(beta: [f64; 4], gamma: GammaCoefficients) -> Self {
        EffectiveModel { beta, gamma }
    }

    pub fn from_instance(inst: &HwpInstance, gamma: GammaCoefficients) -> Self {
        EffectiveModel::new(inst.beta, gamma)
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().all(|b| b.is_finite()) && self.gamma.is_finite()
    }

    /// `q -> -q` image: `beta_1, beta_3` and the odd-in-`z` driver terms flip.
    pub fn mirrored(&self) -> Self {
        let [b0, b1, b2, b3] = self.beta;
        let [g1, g2, g3, g4, g5, g6] = self.gamma.gamma;
        EffectiveModel::new([b0, -b1, b2, -b3], GammaCoefficients::new([g1, g2, g3, -g4, g5, -g6]))
    }

    pub fn g_e(&self, x: f64, z: f64) -> f64 {
        let [g1, g2, g3, g4, g5, g6] = self.gamma.gamma;
        x * (g1 + x * (g2 + g3 * x) + z * (g4 + g5 * z + g6 * x))
    }

    pub fn g(&self, tau: f64, x: f64, z: f64) -> f64 {
        (1.0 - tau) * 2.0 * (1.0 - x) + tau * (1.0 - tau) * self.g_e(x, z) + tau * gp_eval(self.beta, z)
    }

    pub fn partials(&self, tau: f64, x: f64, z: f64) -> GPartials {
        let [g1, g2, g3, g4, g5, g6] = self.gamma.gamma;
        let ex = g1 + 2.0 * g2 * x + 3.0 * g3 * x * x + g4 * z + g5 * z * z + 2.0 * g6 * x * z;
        let ez = g4 * x + 2.0 * g5 * x * z + g6 * x * x;
        let exx = 2.0 * g2 + 6.0 * g3 * x + 2.0 * g6 * z;
        let s = tau * (1.0 - tau);
        GPartials {
            g: self.g(tau, x, z),
            gx: -2.0 * (1.0 - tau) + s * ex,
            gz: s * ez + tau * gp_deriv(self.beta, z),
            gxx: s * exx,
            gxtau: 2.0 + (1.0 - 2.0 * tau) * ex,
        }
    }

    fn g_e_jet(&self, x: Jet3, z: Jet3) -> Jet3 {
        let [g1, g2, g3, g4, g5, g6] = self.gamma.gamma;
        let c = Jet3::constant;
        let inner = c(g1) + x * (c(g2) + x.scale(g3)) + z * (c(g4) + z.scale(g5) + x.scale(g6));
        x * inner
    }

    fn g_p_jet(&self, z: Jet3) -> Jet3 {
        let [b0, b1, b2, b3] = self.beta;
        ((z.scale(b3).offset(b2) * z).offset(b1) * z).offset(b0)
    }

    fn arc(q: f64) -> (Jet3, Jet3) {
        let z = Jet3::variable(q);
        let x = (Jet3::constant(1.0) - z * z).sqrt();
        (x, z)
    }

    /// `U` and its first three `q`-derivatives.
    pub fn u_jet(&self, tau: f64, q: f64) -> Jet3 {
        let (x, z) = Self::arc(q);
        (Jet3::constant(1.0) - x).scale(2.0 * (1.0 - tau))
            + self.g_e_jet(x, z).scale(tau * (1.0 - tau))
            + self.g_p_jet(z).scale(tau)
    }

    /// `dU/dtau` and its `q`-derivatives.
    pub fn u_tau_jet(&self, tau: f64, q: f64) -> Jet3 {
        let (x, z) = Self::arc(q);
        (Jet3::constant(1.0) - x).scale(-2.0) + self.g_e_jet(x, z).scale(1.0 - 2.0 * tau) + self.g_p_jet(z)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(QaaError::InvalidInput(format!("tau must lie in [0, 1], got {tau}")))
    }
}

fn check_model(model: &EffectiveModel) -> Result<()> {
    if model.is_finite() {
        Ok(())
    } else {
        Err(QaaError::InvalidInput("model coefficients must be finite".into()))
    }
}

/// Effective potential on the `p = 0` branch.
pub fn u_eval(model: &EffectiveModel, tau: f64, q: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&q) {
        return Err(QaaError::InvalidInput(format!("q must lie in [-1, 1], got {q}")));
    }
    Ok(model.g(tau, (1.0 - q * q).max(0.0).sqrt(), q))
}

fn u(model: &EffectiveModel, tau: f64, q: f64) -> f64 {
    model.g(tau, (1.0 - q * q).max(0.0).sqrt(), q)
}

fn u_prime(model: &EffectiveModel, tau: f64, q: f64) -> f64 {
    model.u_jet(tau, q).0[1]
}

pub const U_GRID: usize = 2001;
const EDGE: f64 = 1.0 - 1e-15;

fn q_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub q: f64,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub q_star: f64,
    pub u_star: f64,
    /// Lowest coexisting local minimum other than the global one.
    pub secondary: Option<Minimum>,
}

/// Bisection on `U'` between `a` (where `U' < 0`) and `b` (where `U' > 0`).
fn refine_min(model: &EffectiveModel, tau: f64, mut a: f64, mut b: f64) -> f64 {
    let mut m = 0.5 * (a + b);
    for _ in 0..200 {
        m = 0.5 * (a + b);
        let d = u_prime(model, tau, m);
        if d.abs() <= 1e-10 && b - a < 1e-9 || m <= a || m >= b {
            break;
        }
        if d < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    m
}

/// All local minima of `U` on `[-1, 1]`, ascending in `U`.
pub fn local_minima(model: &EffectiveModel, tau: f64) -> Vec<Minimum> {
    let grid = q_grid(U_GRID);
    let vals: Vec<f64> = grid.iter().map(|&q| u(model, tau, q)).collect();
    let last = grid.len() - 1;
    let mut out: Vec<Minimum> = Vec::new();
    for i in 0..=last {
        let left = if i > 0 { vals[i - 1] } else { f64::INFINITY };
        let right = if i < last { vals[i + 1] } else { f64::INFINITY };
        // Plateaus count once, at their left end.
        if !(vals[i] < left && vals[i] <= right) {
            continue;
        }
        let lo = if i > 0 { grid[i - 1] } else { -EDGE };
        let hi = if i < last { grid[i + 1] } else { EDGE };
        let q = if i == 0 && u_prime(model, tau, -EDGE) >= 0.0 {
            -1.0
        } else if i == last && u_prime(model, tau, EDGE) <= 0.0 {
            1.0
        } else if u_prime(model, tau, lo) < 0.0 && u_prime(model, tau, hi) > 0.0 {
            refine_min(model, tau, lo, hi)
        } else {
            grid[i]
        };
        let m = Minimum { q, u: u(model, tau, q) };
        if !out.iter().any(|o| (o.q - m.q).abs() < 1e-9) {
            out.push(m);
        }
    }
    out.sort_by(|a, b| a.u.total_cmp(&b.u).then(a.q.total_cmp(&b.q)));
    out
}

/// Global minimizer of `U(., tau)` from a 2001-point grid refined by
/// derivative bisection, with the best competing local minimum if any.
pub fn minimize_u(model: &EffectiveModel, tau: f64) -> Result<MinimizeResult> {
    check_tau(tau)?;
    check_model(model)?;
    let mins = local_minima(model, tau);
    let first = mins.first().ok_or_else(|| QaaError::Numerical("no minimum of U found".into()))?;
    Ok(MinimizeResult { q_star: first.q, u_star: first.u, secondary: mins.get(1).copied() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Elliptic,
    Saddle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub tau: f64,
    pub q_star: f64,
    /// 0 on the branch favoured by `H_B`, `pi` when `omega_x < 0`.
    pub p_star: f64,
    pub kind: PointKind,
    pub omega_star_sq: f64,
    /// `None` when the mass is singular (`|omega_x| < 1e-8` or `q* = +-1`).
    pub mass: Option<f64>,
    pub omega_x: f64,
    pub u_second: f64,
    pub mass_singular: bool,
}

impl StationaryPoint {
    pub fn omega_star(&self) -> Option<f64> {
        (self.omega_star_sq >= 0.0).then(|| self.omega_star_sq.sqrt())
    }
}

pub const MASS_SINGULAR_TOL: f64 = 1e-8;

/// Oscillator data at `q = q*`: `omega_x = -dG/dn_x`, `1/m* = sqrt(1-q*^2) omega_x`,
/// `Omega*^2 = U''(q*) / m*`.
pub fn stationary_at(model: &EffectiveModel, tau: f64, q: f64) -> StationaryPoint {
    let r = (1.0 - q * q).max(0.0).sqrt();
    let omega_x = -model.partials(tau, r, q).gx;
    let inv_mass = r * omega_x;
    let u2 = if q.abs() < 1.0 { model.u_jet(tau, q).0[2] } else { f64::NAN };
    let omega_star_sq = u2 * inv_mass;
    let mass_singular = omega_x.abs() < MASS_SINGULAR_TOL || r == 0.0;
    StationaryPoint {
        tau,
        q_star: q,
        p_star: if omega_x < 0.0 { std::f64::consts::PI } else { 0.0 },
        kind: if omega_star_sq > 0.0 { PointKind::Elliptic } else { PointKind::Saddle },
        omega_star_sq,
        mass: (!mass_singular).then(|| 1.0 / inv_mass),
        omega_x,
        u_second: u2,
        mass_singular,
    }
}

pub fn stationary_analysis(model: &EffectiveModel, tau: f64) -> Result<StationaryPoint> {
    let m = minimize_u(model, tau)?;
    Ok(stationary_at(model, tau, m.q_star))
}

/// `omega_x` turning point where one minimum splits into two at `p != 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalBifurcation {
    pub tau0: f64,
    pub q0: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub d0: f64,
    /// Schedule point at which the split momenta are evaluated.
    pub probe_tau: f64,
    /// `+-sqrt(2 b0 (tau - tau0) / a0)`.
    pub p_star_pair: [f64; 2],
}

/// Below this `|a0|` the energy is linear in `n_x` and the minimum cannot split.
pub const A0_DEGENERATE: f64 = 1e-9;
pub const LOCAL_PROBE_OFFSET: f64 = 1e-3;

fn path_q(model: &EffectiveModel, tau_grid: &[f64]) -> Result<Vec<f64>> {
    for &t in tau_grid {
        check_tau(t)?;
    }
    check_model(model)?;
    tau_grid.par_iter().map(|&t| minimize_u(model, t).map(|m| m.q_star)).collect()
}

fn omega_x_on_path(model: &EffectiveModel, tau: f64) -> (f64, f64) {
    let q = local_minima(model, tau).first().map_or(0.0, |m| m.q);
    let r = (1.0 - q * q).max(0.0).sqrt();
    (-model.partials(tau, r, q).gx, q)
}

pub fn detect_local_bifurcation(model: &EffectiveModel, tau_grid: &[f64]) -> Result<Vec<LocalBifurcation>> {
    let qs = path_q(model, tau_grid)?;
    let om: Vec<f64> =
        tau_grid.iter().zip(&qs).map(|(&t, &q)| -model.partials(t, (1.0 - q * q).max(0.0).sqrt(), q).gx).collect();
    let mut out = Vec::new();
    for i in 1..tau_grid.len() {
        if om[i - 1] * om[i] >= 0.0 {
            continue;
        }
        let (mut a, mut b) = (tau_grid[i - 1], tau_grid[i]);
        let sa = om[i - 1].signum();
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if omega_x_on_path(model, m).0.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        let tau0 = 0.5 * (a + b);
        let (_, q0) = omega_x_on_path(model, tau0);
        let r = (1.0 - q0 * q0).max(0.0).sqrt();
        let gp = model.partials(tau0, r, q0);
        let a0 = gp.gxx * r * r;
        if a0.abs() < A0_DEGENERATE {
            continue;
        }
        let b0 = gp.gxtau * r;
        let c0 = model.u_jet(tau0, q0).0[2];
        let d0 = model.u_tau_jet(tau0, q0).0[1];
        let side = if b0 / a0 >= 0.0 { 1.0 } else { -1.0 };
        let probe_tau = (tau0 + side * LOCAL_PROBE_OFFSET).clamp(0.0, 1.0);
        let p = (2.0 * b0 * (probe_tau - tau0) / a0).max(0.0).sqrt();
        out.push(LocalBifurcation { tau0, q0, a0, b0, c0, d0, probe_tau, p_star_pair: [p, -p] });
    }
    Ok(out)
}

/// First-order exchange of the global minimum between two separated wells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalBifurcation {
    pub tau0: f64,
    pub q_left: f64,
    pub q_right: f64,
    pub barrier_height: f64,
}

pub const GLOBAL_JUMP: f64 = 0.05;

/// Largest `U` strictly between `a` and `b` on a fine grid.
fn max_between(model: &EffectiveModel, tau: f64, a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    const K: usize = 2000;
    (0..=K).map(|k| u(model, tau, lo + (hi - lo) * k as f64 / K as f64)).fold(f64::NEG_INFINITY, f64::max)
}

pub fn detect_global_bifurcation(model: &EffectiveModel, tau_grid: &[f64]) -> Result<Vec<GlobalBifurcation>> {
    let qs = path_q(model, tau_grid)?;
    let mut out = Vec::new();
    for i in 1..tau_grid.len() {
        if (qs[i] - qs[i - 1]).abs() <= GLOBAL_JUMP {
            continue;
        }
        let (mut a, mut b) = (tau_grid[i - 1], tau_grid[i]);
        let (mut qa, mut qb) = (qs[i - 1], qs[i]);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let qm = local_minima(model, m)[0].q;
            if (qm - qa).abs() <= (qm - qb).abs() {
                a = m;
                qa = qm;
            } else {
                b = m;
                qb = qm;
            }
        }
        // A continuous but steep drift collapses the bracket onto nearby q.
        if (qb - qa).abs() <= GLOBAL_JUMP {
            continue;
        }
        let tau0 = 0.5 * (a + b);
        let (ql, qr) = if qa <= qb { (qa, qb) } else { (qb, qa) };
        let base = u(model, tau0, ql).min(u(model, tau0, qr));
        let barrier_height = max_between(model, tau0, ql, qr) - base;
        out.push(GlobalBifurcation { tau0, q_left: ql, q_right: qr, barrier_height });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinodalHalt {
    pub tau: f64,
    pub q: f64,
    pub u_second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QStarTrajectory {
    pub tau: Vec<f64>,
    pub q: Vec<f64>,
    pub halted: Option<SpinodalHalt>,
}

pub const ODE_TOL: f64 = 1e-9;
pub const SPINODAL_U2: f64 = 1e-8;

enum Rhs {
    Ok(f64),
    Spinodal(f64),
}

fn q_rate(model: &EffectiveModel, tau: f64, q: f64) -> Rhs {
    let u2 = model.u_jet(tau, q).0[2];
    if !(u2 >= SPINODAL_U2) {
        return Rhs::Spinodal(u2);
    }
    Rhs::Ok(-model.u_tau_jet(tau, q).0[1] / u2)
}

fn rk4(model: &EffectiveModel, tau: f64, q: f64, h: f64) -> std::result::Result<f64, f64> {
    let f = |t: f64, y: f64| match q_rate(model, t, y.clamp(-EDGE, EDGE)) {
        Rhs::Ok(v) => Ok(v),
        Rhs::Spinodal(u2) => Err(u2),
    };
    let k1 = f(tau, q)?;
    let k2 = f(tau + 0.5 * h, q + 0.5 * h * k1)?;
    let k3 = f(tau + 0.5 * h, q + 0.5 * h * k2)?;
    let k4 = f(tau + h, q + h * k3)?;
    Ok(q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Follows the minimum `q*(tau)` by `dq*/dtau = -d_tau U'(q*) / U''(q*)` from
/// `q* = 0`, with RK4 step doubling. Stops at a spinodal (`U'' < 1e-8`) rather
/// than jumping to another well. `samples` fixes the output grid.
pub fn q_star_ode(model: &EffectiveModel, tau_span: (f64, f64), samples: usize) -> Result<QStarTrajectory> {
    let (t0, t1) = tau_span;
    check_tau(t0)?;
    check_tau(t1)?;
    check_model(model)?;
    if t1 <= t0 || samples < 2 {
        return Err(QaaError::InvalidInput("need tau_span with t0 < t1 and at least 2 samples".into()));
    }
    let q0 = if t0 == 0.0 { 0.0 } else { minimize_u(model, t0)?.q_star };
    let mut traj = QStarTrajectory { tau: vec![t0], q: vec![q0], halted: None };
    let (mut t, mut q) = (t0, q0);
    let mut h = (t1 - t0) / (samples - 1) as f64 / 4.0;
    let halt = |t: f64, q: f64, u2: f64| Some(SpinodalHalt { tau: t, q, u_second: u2 });
    for k in 1..samples {
        let target = t0 + (t1 - t0) * k as f64 / (samples - 1) as f64;
        while t < target {
            let step = h.min(target - t);
            let full = rk4(model, t, q, step);
            let half = rk4(model, t, q, 0.5 * step).and_then(|m| rk4(model, t + 0.5 * step, m, 0.5 * step));
            match (full, half) {
                (Ok(a), Ok(b)) => {
                    let err = (b - a).abs() / 15.0;
                    if err <= ODE_TOL || step < 1e-14 {
                        t += step;
                        q = (b + (b - a) / 15.0).clamp(-1.0, 1.0);
                        let grow = if err > 0.0 { 0.9 * (ODE_TOL / err).powf(0.2) } else { 4.0 };
                        h = step * grow.clamp(0.2, 4.0);
                    } else {
                        h = step * (0.9 * (ODE_TOL / err).powf(0.2)).clamp(0.1, 0.9);
                    }
                }
                (Err(u2), _) | (_, Err(u2)) => {
                    if step < 1e-12 {
                        traj.halted = halt(t, q, u2);
                        return Ok(traj);
                    }
                    h = 0.25 * step;
                }
            }
        }
        traj.tau.push(target);
        traj.q.push(q);
    }
    Ok(traj)
}

/// One root of the cusp system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct A3Candidate {
    pub tau: f64,
    pub gamma_4: f64,
    pub x: f64,
    /// The corresponding cusp of the full potential, when Newton continuation
    /// from the expanded root finds one.
    pub exact: Option<ExactCusp>,
    /// The exact cusp sits in the well holding the global minimum.
    pub in_global_well: bool,
    /// The line of first-order transitions ending at this cusp runs towards
    /// `gamma_4 = 0`, so it is the end point of the undriven path's tunnelling
    /// rather than a barrier created by the driver itself.
    pub ends_undriven_line: bool,
    pub relevant: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactCusp {
    pub tau: f64,
    pub gamma_4: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationSolution {
    pub tau_c: f64,
    pub gamma_4c: f64,
    pub x: f64,
    pub converged: bool,
    pub residuals: [f64; 3],
    pub candidates: Vec<A3Candidate>,
}

/// `U'`, `U''`, `U'''` of the quartic expansion of `U` around `q = 0` with only
/// `gamma_4` switched on:
/// `tau(beta1 + 2 beta2 x + 3 beta3 x^2) + (1-tau)[2x + x^3 + gamma tau (1 - 3x^2/2)]`,
/// `tau(2 beta2 + 6 beta3 x) + (1-tau)[2 + 3x^2 - 3 gamma tau x]`,
/// `6 tau beta3 + (1-tau)(6x - 3 gamma tau)`.
pub fn a3_residuals(beta: [f64; 4], tau: f64, gamma: f64, x: f64) -> [f64; 3] {
    let [_, b1, b2, b3] = beta;
    let s = 1.0 - tau;
    [
        tau * (b1 + 2.0 * b2 * x + 3.0 * b3 * x * x) + s * (2.0 * x + x * x * x + gamma * tau * (1.0 - 1.5 * x * x)),
        tau * (2.0 * b2 + 6.0 * b3 * x) + s * (2.0 + 3.0 * x * x - 3.0 * gamma * tau * x),
        6.0 * tau * b3 + s * (6.0 * x - 3.0 * gamma * tau),
    ]
}

pub const A3_SCAN: usize = 4000;

fn a3_x(beta: [f64; 4], tau: f64) -> f64 {
    let [_, b1, b2, b3] = beta;
    -3.0 * tau * (b1 + 2.0 * b3) / (2.0 * (4.0 - tau * (4.0 - b2)))
}

fn a3_denominator(beta: [f64; 4], tau: f64) -> f64 {
    4.0 - tau * (4.0 - beta[2])
}

fn a3_f(beta: [f64; 4], tau: f64) -> f64 {
    let x = a3_x(beta, tau);
    (1.0 - tau) * x * x - 2.0 / 3.0 * (1.0 - tau + tau * beta[2])
}

fn a3_gamma(beta: [f64; 4], tau: f64, x: f64) -> f64 {
    2.0 * (x + tau * beta[3] / (1.0 - tau)) / tau
}

/// Root of `f` in `[a, b]` given `f(a) = fa` of opposite sign to `f(b)`.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// True when no barrier of `U` separates `x` from the global minimum.
fn in_global_basin(model: &EffectiveModel, tau: f64, x: f64) -> bool {
    let Some(g) = local_minima(model, tau).first().copied() else { return false };
    let ux = u(model, tau, x);
    let tol = 1e-9 * (1.0 + ux.abs());
    max_between(model, tau, x, g.q) <= ux + tol
}

/// Direction (in the `(tau, gamma_4)` plane) along which the two wells
/// unfolding from the cusp at `(tau, gamma, x)` coexist, to first order: along
/// the `U' = 0` tangent, oriented so that `U''` turns negative.
fn bistable_direction(beta: [f64; 4], tau: f64, gamma: f64, x: f64) -> [f64; 2] {
    let m = EffectiveModel::new(beta, GammaCoefficients::gamma4(gamma));
    let dt = m.u_tau_jet(tau, x).0;
    // d/dgamma of U is tau(1-tau) q sqrt(1-q^2).
    let z = Jet3::variable(x);
    let qr = (z * (Jet3::constant(1.0) - z * z).sqrt()).scale(tau * (1.0 - tau)).0;
    let mut v = [-qr[1], dt[1]];
    if dt[2] * v[0] + qr[2] * v[1] > 0.0 {
        v = [-v[0], -v[1]];
    }
    v
}

fn classify_cusp(beta: [f64; 4], tau: f64, gamma_4: f64, x: f64) -> A3Candidate {
    let exact = refine_a3_exact(beta, (tau, gamma_4, x)).map(|(tau, gamma_4, x)| ExactCusp { tau, gamma_4, x });
    let (in_global_well, ends_undriven_line) = match exact {
        Some(e) => {
            let model = EffectiveModel::new(beta, GammaCoefficients::gamma4(e.gamma_4));
            let v = bistable_direction(beta, e.tau, e.gamma_4, e.x);
            let toward_zero = e.gamma_4.abs() < 1e-9 || v[1] * e.gamma_4 <= 0.0;
            (in_global_basin(&model, e.tau, e.x), toward_zero)
        }
        None => (false, false),
    };
    A3Candidate {
        tau,
        gamma_4,
        x,
        exact,
        in_global_well,
        ends_undriven_line,
        relevant: in_global_well && ends_undriven_line,
    }
}

/// Cusp point `(tau_c, gamma_4c, x)`. The third equation fixes `gamma tau`,
/// the second then gives `(1-tau) x^2 = 2/3 (1 - tau + tau beta2)`, and the
/// first gives `x(tau)` in closed form, leaving one scalar equation in `tau`
/// that is bracketed on a fine scan and bisected to machine precision. Roots
/// with `|x| > 1` are unphysical. A root counts only if it continues to a
/// cusp of the full potential that lies in the global well and terminates the
/// tunnelling line of the undriven path; the smallest such `tau` is selected.
pub fn solve_a3(beta: [f64; 4]) -> Result<BifurcationSolution> {
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(QaaError::InvalidInput("beta must be finite".into()));
    }
    let tau_at = |k: usize| k as f64 / A3_SCAN as f64;
    let mut candidates = Vec::new();
    let mut prev = (tau_at(1), a3_f(beta, tau_at(1)), a3_denominator(beta, tau_at(1)));
    for k in 2..A3_SCAN {
        let t = tau_at(k);
        let cur = (t, a3_f(beta, t), a3_denominator(beta, t));
        let (ta, fa, da) = prev;
        prev = cur;
        let bracketed = fa * cur.1 < 0.0 && da * cur.2 > 0.0;
        let root = if fa == 0.0 {
            ta
        } else if bracketed {
            bisect(|m| a3_f(beta, m), ta, t, fa)
        } else {
            continue;
        };
        if candidates.iter().any(|c: &A3Candidate| c.tau == root) {
            continue;
        }
        let x = a3_x(beta, root);
        if x.abs() > 1.0 {
            continue;
        }
        let gamma_4 = a3_gamma(beta, root, x);
        candidates.push(classify_cusp(beta, root, gamma_4, x));
    }
    let pick = candidates.iter().find(|c| c.relevant).copied();
    Ok(match pick {
        Some(c) => BifurcationSolution {
            tau_c: c.tau,
            gamma_4c: c.gamma_4,
            x: c.x,
            converged: true,
            residuals: a3_residuals(beta, c.tau, c.gamma_4, c.x),
            candidates,
        },
        None => BifurcationSolution {
            tau_c: f64::NAN,
            gamma_4c: f64::NAN,
            x: f64::NAN,
            converged: false,
            residuals: [f64::NAN; 3],
            candidates,
        },
    })
}

/// Cusp conditions `U' = U'' = U''' = 0` of the exact (non-expanded)
/// potential with only `gamma_4`, solved by damped Newton from `seed`.
pub fn refine_a3_exact(beta: [f64; 4], seed: (f64, f64, f64)) -> Option<(f64, f64, f64)> {
    let resid = |v: [f64; 3]| -> [f64; 3] {
        let m = EffectiveModel::new(beta, GammaCoefficients::gamma4(v[1]));
        let j = m.u_jet(v[0], v[2]).0;
        [j[1], j[2], j[3]]
    };
    let mut v = [seed.0, seed.1, seed.2];
    for _ in 0..200 {
        let r = resid(v);
        let norm = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if norm < 1e-12 {
            return Some((v[0], v[1], v[2]));
        }
        let mut jac = nalgebra::Matrix3::zeros();
        for c in 0..3 {
            let h = 1e-7 * (1.0 + v[c].abs());
            let (mut vp, mut vm) = (v, v);
            vp[c] += h;
            vm[c] -= h;
            let (rp, rm) = (resid(vp), resid(vm));
            for row in 0..3 {
                jac[(row, c)] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }
        let step = jac.lu().solve(&nalgebra::Vector3::new(-r[0], -r[1], -r[2]))?;
        let mut lambda = 1.0;
        loop {
            let trial = [v[0] + lambda * step[0], v[1] + lambda * step[1], v[2] + lambda * step[2]];
            let ok = trial[0] > 0.0 && trial[0] < 1.0 && trial[2].abs() < 1.0;
            if ok && resid(trial).iter().map(|x| x.abs()).fold(0.0, f64::max) < norm {
                v = trial;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return None;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::betas_from_p;

    const FARHI: [f64; 4] = [0.0, 3.0, 1.0, 1.0];

    fn farhi(gamma: GammaCoefficients) -> EffectiveModel {
        EffectiveModel::new(betas_from_p(FARHI), gamma)
    }

    #[test]
    fn jet_matches_finite_differences() {
        let m = EffectiveModel::new([0.1, 0.4, -0.7, 0.3], GammaCoefficients::new([0.3, -0.2, 0.5, 0.7, -0.4, 0.25]));
        let (t, q, h) = (0.37, 0.41, 1e-4);
        let j = m.u_jet(t, q).0;
        let f = |q: f64| u(&m, t, q);
        assert!((j[0] - f(q)).abs() < 1e-15);
        assert!((j[1] - (f(q + h) - f(q - h)) / (2.0 * h)).abs() < 1e-7);
        assert!((j[2] - (f(q + h) - 2.0 * f(q) + f(q - h)) / (h * h)).abs() < 1e-5);
        let d3 = (f(q + 2.0 * h) - 2.0 * f(q + h) + 2.0 * f(q - h) - f(q - 2.0 * h)) / (2.0 * h * h * h);
        assert!((j[3] - d3).abs() < 1e-3);
        let jt = m.u_tau_jet(t, q).0;
        let ft = |t: f64| m.u_jet(t, q).0[1];
        assert!((jt[1] - (ft(t + h) - ft(t - h)) / (2.0 * h)).abs() < 1e-7);
    }

    #[test]
    fn endpoints_of_schedule() {
        let m = farhi(GammaCoefficients::ZERO);
        let r = minimize_u(&m, 0.0).unwrap();
        assert!(r.q_star.abs() < 1e-9);
        assert_eq!(minimize_u(&m, 1.0).unwrap().q_star, 1.0);
        let q = 0.3;
        assert!((u_eval(&m, 1.0, q).unwrap() - gp_eval(m.beta, q)).abs() < 1e-15);
        assert!(u_eval(&m, 0.5, 1.5).is_err());
    }

    #[test]
    fn single_well_instance_has_interior_minimum() {
        let m = EffectiveModel::new(betas_from_p([0.5, 2.5, -2.0, 0.3]), GammaCoefficients::ZERO);
        let q = minimize_u(&m, 1.0).unwrap().q_star;
        assert!(q.abs() < 0.99);
        assert!(u_prime(&m, 1.0, q).abs() <= 1e-10);
    }

    #[test]
    fn oscillator_at_start() {
        let sp = stationary_analysis(&farhi(GammaCoefficients::ZERO), 0.0).unwrap();
        assert!((sp.omega_x - 2.0).abs() < 1e-12);
        assert!((sp.mass.unwrap() - 0.5).abs() < 1e-12);
        assert!((sp.omega_star_sq - 4.0).abs() < 1e-9);
        assert_eq!(sp.kind, PointKind::Elliptic);
        assert_eq!(sp.p_star, 0.0);
    }

    #[test]
    fn farhi_cusp_point() {
        let s = solve_a3(betas_from_p(FARHI)).unwrap();
        assert!(s.converged);
        assert!((s.tau_c - 0.3304).abs() < 1e-3, "{s:?}");
        assert!((s.gamma_4c + 0.965).abs() < 2e-3, "{s:?}");
        assert!(s.residuals.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn symmetric_cost_cusp() {
        let s = solve_a3([0.0, 0.0, -1.0, 0.0]).unwrap();
        assert!(s.converged);
        assert!((s.tau_c - 0.5).abs() < 1e-12);
        assert!(s.gamma_4c.abs() < 1e-12);
    }

    #[test]
    fn monotone_cost_has_no_cusp() {
        assert!(!solve_a3([0.0, 1.0, 0.0, 0.0]).unwrap().converged);
    }
}
