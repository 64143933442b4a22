//! Classical large-spin dynamics `dn/dt = omega x n` with `omega = dG/dn`,
//! swept along the schedule `tau = t / T`.

use serde::{Deserialize, Serialize};

use crate::error::{QaaError, Result};
use crate::semiclassical::EffectiveModel;

pub type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// `(dG/dn_x, 0, dG/dn_z)`; `G` does not depend on `n_y`.
pub fn omega_field(model: &EffectiveModel, tau: f64, n: Vec3) -> Vec3 {
    let p = model.partials(tau, n[0], n[2]);
    [p.gx, 0.0, p.gz]
}

/// Angle between `n` and the instantaneous ground direction `-omega/|omega|`.
pub fn misalignment(omega: Vec3, n: Vec3) -> f64 {
    let w = norm(omega);
    if w == 0.0 {
        return 0.0;
    }
    (-dot(omega, n) / (w * norm(n))).clamp(-1.0, 1.0).acos()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinOptions {
    /// Mixed absolute/relative error tolerance per step.
    pub tol: f64,
    pub max_steps: usize,
    /// Hold the schedule at this `tau` instead of sweeping it.
    pub frozen_tau: Option<f64>,
    /// Precession periods in the misalignment averaging window.
    pub window_periods: f64,
}

impl Default for SpinOptions {
    fn default() -> Self {
        SpinOptions { tol: 1e-12, max_steps: 50_000_000, frozen_tau: None, window_periods: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSample {
    pub t: f64,
    pub tau: f64,
    pub n: Vec3,
    /// Instantaneous angle to the ground direction.
    pub angle: f64,
    /// `angle` averaged over the precession window around `t`.
    pub misalignment: f64,
    /// `omega . n / |omega|`.
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinTrajectory {
    pub t_scaled: f64,
    pub samples: Vec<SpinSample>,
    pub max_norm_drift: f64,
    pub max_misalignment: f64,
    pub final_nz: f64,
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticDiagnostics {
    pub max_misalignment: f64,
    /// `tau` at which the averaged misalignment peaks.
    pub tau_at_max: f64,
    pub j_drift: f64,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

struct Rhs<'a> {
    model: &'a EffectiveModel,
    t_scaled: f64,
    frozen: Option<f64>,
}

impl Rhs<'_> {
    fn tau(&self, t: f64) -> f64 {
        self.frozen.unwrap_or((t / self.t_scaled).clamp(0.0, 1.0))
    }

    fn eval(&self, t: f64, n: Vec3) -> Vec3 {
        let w = omega_field(self.model, self.tau(t), n);
        [-w[2] * n[1], w[2] * n[0] - w[0] * n[2], w[0] * n[1]]
    }
}

fn sample(rhs: &Rhs, t: f64, n: Vec3) -> SpinSample {
    let tau = rhs.tau(t);
    let w = omega_field(rhs.model, tau, n);
    let wn = norm(w);
    SpinSample {
        t,
        tau,
        n,
        angle: misalignment(w, n),
        misalignment: f64::NAN,
        j: if wn > 0.0 { dot(w, n) / wn } else { 0.0 },
    }
}

/// Integrates from `n = (1, 0, 0)` (ground direction of the initial field) over
/// `t in [0, T]` with adaptive Dormand-Prince 5(4) steps; every accepted step
/// is recorded. No renormalization is applied, so the reported norm drift
/// measures the integration error.
pub fn integrate_spin(model: &EffectiveModel, t_scaled: f64, opts: &SpinOptions) -> Result<SpinTrajectory> {
    if !(t_scaled > 0.0 && t_scaled.is_finite()) {
        return Err(QaaError::InvalidInput(format!("T must be positive, got {t_scaled}")));
    }
    if !model.is_finite() {
        return Err(QaaError::InvalidInput("model coefficients must be finite".into()));
    }
    if !(opts.tol > 0.0) || opts.frozen_tau.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
        return Err(QaaError::InvalidInput("tolerance must be positive and frozen tau in [0, 1]".into()));
    }
    let rhs = Rhs { model, t_scaled, frozen: opts.frozen_tau };
    let mut n: Vec3 = [1.0, 0.0, 0.0];
    let mut t = 0.0;
    let w0 = norm(omega_field(model, rhs.tau(0.0), n)).max(1e-3);
    let mut h = (0.01 / w0).min(t_scaled);
    let h_min = 1e-14 * t_scaled;
    let mut samples = vec![sample(&rhs, t, n)];
    let mut k = [[0.0; 3]; 7];
    k[0] = rhs.eval(t, n);
    let (mut steps, mut rejected) = (0, 0);
    let mut max_norm_drift: f64 = 0.0;
    while t < t_scaled {
        if steps + rejected >= opts.max_steps {
            return Err(QaaError::Numerical(format!("step budget exhausted at t = {t}")));
        }
        let h_step = h.min(t_scaled - t);
        for s in 1..7 {
            let mut y = n;
            for (j, kj) in k.iter().enumerate().take(s) {
                for d in 0..3 {
                    y[d] += h_step * A[s][j] * kj[d];
                }
            }
            k[s] = rhs.eval(t + C[s] * h_step, y);
        }
        let mut y5 = n;
        let mut err: f64 = 0.0;
        for d in 0..3 {
            let (mut s5, mut s4) = (0.0, 0.0);
            for s in 0..7 {
                s5 += B5[s] * k[s][d];
                s4 += B4[s] * k[s][d];
            }
            y5[d] += h_step * s5;
            let scale = opts.tol * (1.0 + n[d].abs().max(y5[d].abs()));
            err = err.max((h_step * (s5 - s4)).abs() / scale);
        }
        if err <= 1.0 {
            t = if h_step == t_scaled - t { t_scaled } else { t + h_step };
            n = y5;
            k[0] = k[6];
            steps += 1;
            max_norm_drift = max_norm_drift.max((dot(n, n) - 1.0).abs());
            samples.push(sample(&rhs, t, n));
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = h_step * factor;
        if h < h_min && t < t_scaled {
            return Err(QaaError::Numerical(format!("step size underflow at t = {t}")));
        }
    }
    window_average(&rhs, &mut samples, opts.window_periods);
    let max_misalignment = samples.iter().map(|s| s.misalignment).fold(0.0, f64::max);
    Ok(SpinTrajectory { t_scaled, final_nz: n[2], samples, max_norm_drift, max_misalignment, steps, rejected })
}

/// Trapezoid average of the angle over a window of `periods` local precession
/// periods `2 pi / |omega|`, clamped to the recorded time range.
fn window_average(rhs: &Rhs, samples: &mut [SpinSample], periods: f64) {
    let len = samples.len();
    if len < 2 {
        for s in samples.iter_mut() {
            s.misalignment = s.angle;
        }
        return;
    }
    let mut prefix = vec![0.0; len];
    for i in 1..len {
        let dt = samples[i].t - samples[i - 1].t;
        prefix[i] = prefix[i - 1] + 0.5 * dt * (samples[i].angle + samples[i - 1].angle);
    }
    let t_end = samples[len - 1].t;
    let mut avg = vec![0.0; len];
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..len {
        let w = norm(omega_field(rhs.model, samples[i].tau, samples[i].n));
        let half = if w > 0.0 { 0.5 * periods * std::f64::consts::TAU / w } else { f64::INFINITY };
        let (a, b) = ((samples[i].t - half).max(0.0), (samples[i].t + half).min(t_end));
        while samples[lo].t < a {
            lo += 1;
        }
        while lo > 0 && samples[lo - 1].t >= a {
            lo -= 1;
        }
        hi = hi.max(i);
        while hi + 1 < len && samples[hi + 1].t <= b {
            hi += 1;
        }
        while hi > i && samples[hi].t > b {
            hi -= 1;
        }
        avg[i] = if hi > lo { (prefix[hi] - prefix[lo]) / (samples[hi].t - samples[lo].t) } else { samples[i].angle };
    }
    for (s, a) in samples.iter_mut().zip(avg) {
        s.misalignment = a;
    }
}

pub fn adiabatic_diagnostics(traj: &SpinTrajectory) -> AdiabaticDiagnostics {
    let j0 = traj.samples.first().map_or(0.0, |s| s.j);
    let mut out = AdiabaticDiagnostics { max_misalignment: 0.0, tau_at_max: 0.0, j_drift: 0.0 };
    for s in &traj.samples {
        if s.misalignment > out.max_misalignment {
            out.max_misalignment = s.misalignment;
            out.tau_at_max = s.tau;
        }
        out.j_drift = out.j_drift.max((s.j - j0).abs());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::betas_from_p;
    use crate::spin_algebra::GammaCoefficients;

    fn farhi(g4: f64) -> EffectiveModel {
        EffectiveModel::new(betas_from_p([0.0, 3.0, 1.0, 1.0]), GammaCoefficients::gamma4(g4))
    }

    #[test]
    fn field_examples() {
        let m = farhi(0.0);
        assert_eq!(omega_field(&m, 0.0, [0.3, 0.5, 0.2]), [-2.0, 0.0, 0.0]);
        let w = omega_field(&m, 1.0, [0.6, 0.0, 0.8]);
        assert_eq!(w[0], 0.0);
        assert!((w[2] - crate::problem::gp_deriv(m.beta, 0.8)).abs() < 1e-15);
        assert_eq!(misalignment([-2.0, 0.0, 0.0], [1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn frozen_field_precession() {
        let m = farhi(-8.0);
        let opts = SpinOptions { frozen_tau: Some(0.4), ..Default::default() };
        let tr = integrate_spin(&m, 20.0, &opts).unwrap();
        let g0 = m.g(0.4, 1.0, 0.0);
        for s in &tr.samples {
            assert!((m.g(0.4, s.n[0], s.n[2]) - g0).abs() < 1e-9);
        }
        assert!(tr.max_norm_drift < 1e-10);
    }

    #[test]
    fn uniform_field_keeps_cone_angle() {
        // G linear in n: omega is constant and J is an exact invariant.
        let m = EffectiveModel::new([0.0, 1.5, 0.0, 0.0], GammaCoefficients::ZERO);
        let opts = SpinOptions { frozen_tau: Some(0.5), ..Default::default() };
        let tr = integrate_spin(&m, 30.0, &opts).unwrap();
        assert!(adiabatic_diagnostics(&tr).j_drift < 1e-9);
        // Rotation of (1, 0, 0) about a = omega/|omega| = (-0.8, 0, 0.6) at rate 1.25.
        for s in tr.samples.iter().step_by(25) {
            let (c, sn) = ((1.25 * s.t).cos(), (1.25 * s.t).sin());
            let expect = [c + 0.64 * (1.0 - c), 0.6 * sn, -0.48 * (1.0 - c)];
            for d in 0..3 {
                assert!((s.n[d] - expect[d]).abs() < 1e-8, "{s:?}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let m = farhi(0.0);
        assert!(integrate_spin(&m, 0.0, &SpinOptions::default()).is_err());
        let opts = SpinOptions { frozen_tau: Some(1.5), ..Default::default() };
        assert!(integrate_spin(&m, 1.0, &opts).is_err());
    }
}
