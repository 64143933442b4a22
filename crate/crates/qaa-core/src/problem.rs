//! Generalized Hamming-weight problem: clause weights, the exact combinatorial
//! cost, its cubic large-`n` limit `G_P(q)`, and the diagonal Hamiltonians.

use serde::{Deserialize, Serialize};

use crate::error::{QaaError, Result};
use crate::spin_algebra::{build_nx, nz_values, SubspaceOperator};

/// Clause weights `p_m` (penalty for a 3-bit clause holding `m` unit bits)
/// together with the derived cubic coefficients of `G_P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "InstanceSpec", into = "InstanceSpec")]
pub struct HwpInstance {
    pub p: [f64; 4],
    pub beta: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceSpec {
    p: [f64; 4],
}

impl From<InstanceSpec> for HwpInstance {
    fn from(s: InstanceSpec) -> Self {
        HwpInstance::new(s.p)
    }
}

impl From<HwpInstance> for InstanceSpec {
    fn from(i: HwpInstance) -> Self {
        InstanceSpec { p: i.p }
    }
}

impl HwpInstance {
    pub fn new(p: [f64; 4]) -> Self {
        HwpInstance { p, beta: betas_from_p(p) }
    }

    /// The instance with bit values complemented: `p_m -> p_{3-m}`, which maps
    /// `G_P(q)` to `G_P(-q)`.
    pub fn complemented(&self) -> Self {
        let [a, b, c, d] = self.p;
        HwpInstance::new([d, c, b, a])
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|x| x.is_finite())
    }
}

/// `beta_k = xi_k/2 (p1 + (-1)^k p2) + C(3,k)/6 (p0 + (-1)^k p3)` with
/// `xi = (1, 1, -1, -1)`.
pub fn betas_from_p(p: [f64; 4]) -> [f64; 4] {
    const XI: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
    const C3: [f64; 4] = [1.0, 3.0, 3.0, 1.0];
    let mut beta = [0.0; 4];
    for k in 0..4 {
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        beta[k] = XI[k] / 2.0 * (p[1] + sgn * p[2]) + C3[k] / 6.0 * (p[0] + sgn * p[3]);
    }
    beta
}

// C(a, k) for k <= 3, exact in f64 for any realistic a.
fn binom_small(a: usize, k: usize) -> f64 {
    if k > a {
        return 0.0;
    }
    let a = a as f64;
    match k {
        0 => 1.0,
        1 => a,
        2 => a * (a - 1.0) / 2.0,
        3 => a * (a - 1.0) * (a - 2.0) / 6.0,
        _ => unreachable!("clauses have three bits"),
    }
}

/// Total clause penalty of any string with Hamming weight `w`.
pub fn exact_cost(n: usize, w: usize, p: [f64; 4]) -> Result<f64> {
    if n < 3 {
        return Err(QaaError::InvalidInput(format!("exact cost needs n >= 3, got {n}")));
    }
    if w > n {
        return Err(QaaError::InvalidInput(format!("weight {w} out of range 0..={n}")));
    }
    Ok((0..4).map(|m| p[m] * binom_small(w, m) * binom_small(n - w, 3 - m)).sum())
}

pub fn gp_eval(beta: [f64; 4], q: f64) -> f64 {
    ((beta[3] * q + beta[2]) * q + beta[1]) * q + beta[0]
}

pub fn gp_deriv(beta: [f64; 4], q: f64) -> f64 {
    (3.0 * beta[3] * q + 2.0 * beta[2]) * q + beta[1]
}

pub fn gp_deriv2(beta: [f64; 4], q: f64) -> f64 {
    6.0 * beta[3] * q + 2.0 * beta[2]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Monotonic,
    SingleMinimum,
    DoubleMinimum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub q: f64,
    pub value: f64,
    pub is_minimum: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostShape {
    pub kind: CostKind,
    /// Zeros of `G_P'` inside `[-1, 1]`.
    pub critical_points: Vec<CriticalPoint>,
    /// `G_P(-1)`, `G_P(1)`.
    pub endpoint_values: [f64; 2],
    /// All local minima on `[-1, 1]` (endpoints included), ascending in `q`.
    pub minima: Vec<f64>,
    pub q_star: f64,
    pub g_star: f64,
}

impl CostShape {
    /// Hamming weight of the global minimizer, `w* = n(1 - q*)/2`.
    pub fn w_star(&self, n: usize) -> f64 {
        n as f64 * (1.0 - self.q_star) / 2.0
    }
}

fn derivative_roots(beta: [f64; 4]) -> Vec<f64> {
    // G' = 3 b3 q^2 + 2 b2 q + b1
    let (a, b, c) = (3.0 * beta[3], 2.0 * beta[2], beta[1]);
    if a == 0.0 {
        if b == 0.0 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    let t = -0.5 * (b + b.signum() * sq);
    let mut r = if t == 0.0 { vec![0.0] } else { vec![t / a, c / t] };
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

/// Shape of `G_P` on `[-1, 1]`: critical points, local minima and the global
/// minimizer (ties prefer an interior point, then the larger `q`).
pub fn classify_cost(beta: [f64; 4]) -> CostShape {
    let scale = 1.0 + beta[1..].iter().map(|b| b.abs()).sum::<f64>();
    let tiny = 1e-12 * scale;
    let endpoint_values = [gp_eval(beta, -1.0), gp_eval(beta, 1.0)];

    if beta[1] == 0.0 && beta[2] == 0.0 && beta[3] == 0.0 {
        return CostShape {
            kind: CostKind::Monotonic,
            critical_points: vec![],
            endpoint_values,
            minima: vec![0.0],
            q_star: 0.0,
            g_star: beta[0],
        };
    }

    let mut critical_points = Vec::new();
    let mut interior_minima = Vec::new();
    let mut curved_interior = false;
    for q in derivative_roots(beta) {
        if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&q) {
            continue;
        }
        let q = q.clamp(-1.0, 1.0);
        let curv = gp_deriv2(beta, q);
        let interior = q.abs() < 1.0 - 1e-12;
        let is_minimum = interior && curv > tiny;
        if interior && curv.abs() > tiny {
            curved_interior = true;
        }
        if is_minimum {
            interior_minima.push(q);
        }
        critical_points.push(CriticalPoint { q, value: gp_eval(beta, q), is_minimum });
    }

    let lo_min = {
        let d = gp_deriv(beta, -1.0);
        d > tiny || (d.abs() <= tiny && gp_deriv2(beta, -1.0) > tiny)
    };
    let hi_min = {
        let d = gp_deriv(beta, 1.0);
        d < -tiny || (d.abs() <= tiny && gp_deriv2(beta, 1.0) > tiny)
    };
    for cp in critical_points.iter_mut() {
        if (cp.q == -1.0 && lo_min) || (cp.q == 1.0 && hi_min) {
            cp.is_minimum = true;
        }
    }

    let mut minima = Vec::new();
    if lo_min {
        minima.push(-1.0);
    }
    minima.extend(interior_minima.iter().copied());
    if hi_min {
        minima.push(1.0);
    }
    if minima.is_empty() {
        // Degenerate flat endpoints: fall back to comparing endpoint values.
        minima.push(if endpoint_values[0] < endpoint_values[1] { -1.0 } else { 1.0 });
    }

    let g_min = minima.iter().map(|&q| gp_eval(beta, q)).fold(f64::INFINITY, f64::min);
    let mut q_star = f64::NAN;
    let mut best_rank = (false, f64::NEG_INFINITY);
    for &q in &minima {
        if gp_eval(beta, q) - g_min > 1e-10 {
            continue;
        }
        let rank = (q.abs() < 1.0, q);
        if q_star.is_nan() || rank.0 > best_rank.0 || (rank.0 == best_rank.0 && rank.1 > best_rank.1) {
            best_rank = rank;
            q_star = q;
        }
    }

    let kind = if minima.len() >= 2 {
        CostKind::DoubleMinimum
    } else if curved_interior {
        CostKind::SingleMinimum
    } else {
        CostKind::Monotonic
    };

    CostShape { kind, critical_points, endpoint_values, minima, q_star, g_star: gp_eval(beta, q_star) }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// `l^3 G_P(1 - 2w/n)`.
    #[default]
    Asymptotic,
    /// The exact clause sum at every weight.
    Exact,
}

/// Total spin `l = n/2`.
pub fn spin_l(n: usize) -> f64 {
    n as f64 / 2.0
}

/// Diagonal problem Hamiltonian `H_P`.
pub fn build_hp(n: usize, inst: &HwpInstance, mode: CostMode) -> Result<SubspaceOperator> {
    if n < 3 {
        return Err(QaaError::InvalidInput(format!("problem Hamiltonian needs n >= 3, got {n}")));
    }
    let l3 = spin_l(n).powi(3);
    let diag: Vec<f64> = match mode {
        CostMode::Asymptotic => nz_values(n).into_iter().map(|q| l3 * gp_eval(inst.beta, q)).collect(),
        CostMode::Exact => (0..=n).map(|w| exact_cost(n, w, inst.p)).collect::<Result<_>>()?,
    };
    SubspaceOperator::from_diagonal(n, &diag)
}

/// Transverse-field driver `H_B = l^3 (2 I - 2 N_x)`; its ground state is the
/// image of the uniform superposition.
pub fn build_hb(n: usize) -> Result<SubspaceOperator> {
    let x = build_nx(n)?;
    let l3 = spin_l(n).powi(3);
    SubspaceOperator::identity(n).lin_comb(2.0 * l3, &x, -2.0 * l3)
}
