//! Critical driver strength `gamma_c(L)` over families of instances, and the
//! probability that a random clause driver gives an efficient path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{gammas_from_a, sample_a_stream};
use crate::error::{QaaError, Result};
use crate::problem::{betas_from_p, HwpInstance};
use crate::semiclassical::{detect_global_bifurcation, solve_a3, EffectiveModel};
use crate::spectral::{min_gap_scaling_with, uniform_grid, Driver, ProfileOptions, ScalingVerdict};
use crate::spin_algebra::GammaCoefficients;

/// Range of each clause weight `p_k` in a phase-curve sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDomain {
    /// `p_k in [0, L]`.
    #[default]
    ZeroToL,
    /// `p_k in [-L, L]`.
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub p: [f64; 4],
    pub gamma_4c: f64,
    pub tau_c: f64,
    pub solved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurvePoint {
    pub l: f64,
    pub gamma_c: f64,
    pub argmax_p: [f64; 4],
    pub tau_at_argmax: f64,
    pub solved: usize,
    pub total: usize,
}

pub fn phase_point(p: [f64; 4]) -> Result<PhasePoint> {
    let s = solve_a3(betas_from_p(p))?;
    Ok(PhasePoint { p, gamma_4c: s.gamma_4c, tau_c: s.tau_c, solved: s.converged })
}

fn axis(l: f64, grid: usize, domain: WeightDomain) -> Vec<f64> {
    let lo = match domain {
        WeightDomain::ZeroToL => 0.0,
        WeightDomain::Symmetric => -l,
    };
    (0..grid).map(|i| lo + (l - lo) * i as f64 / (grid - 1) as f64).collect()
}

/// Largest `|gamma_4c|` over a `grid^4` lattice of clause weights. Unsolved
/// lattice points (no relevant cusp) are skipped; ties keep the first point in
/// lexicographic lattice order.
pub fn gamma_c_of_l(l: f64, grid: usize, domain: WeightDomain) -> Result<PhaseCurvePoint> {
    if !(l > 0.0 && l.is_finite()) || grid < 5 {
        return Err(QaaError::InvalidInput(format!("need L > 0 and grid >= 5, got L={l}, grid={grid}")));
    }
    let ax = axis(l, grid, domain);
    let total = grid.pow(4);
    let points: Vec<PhasePoint> = (0..total)
        .into_par_iter()
        .map(|k| {
            let p = [ax[k / grid.pow(3)], ax[(k / grid.pow(2)) % grid], ax[(k / grid) % grid], ax[k % grid]];
            phase_point(p)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<&PhasePoint> = None;
    for pt in points.iter().filter(|p| p.solved) {
        if best.is_none_or(|b| pt.gamma_4c.abs() > b.gamma_4c.abs()) {
            best = Some(pt);
        }
    }
    let solved = points.iter().filter(|p| p.solved).count();
    Ok(match best {
        Some(b) => {
            PhaseCurvePoint { l, gamma_c: b.gamma_4c.abs(), argmax_p: b.p, tau_at_argmax: b.tau_c, solved, total }
        }
        None => PhaseCurvePoint { l, gamma_c: 0.0, argmax_p: [f64::NAN; 4], tau_at_argmax: f64::NAN, solved, total },
    })
}

/// The nonzero-effective-mass sufficient condition
/// `|g2| + |g6| <= 1 + (|g1| + 3|g3| + |g4| + |g5|) / 2`.
pub fn mass_condition(g: &GammaCoefficients) -> bool {
    let [g1, g2, g3, g4, g5, g6] = g.gamma.map(f64::abs);
    g2 + g6 <= 1.0 + 0.5 * (g1 + 3.0 * g3 + g4 + g5)
}

/// What the tunnelling-avoidance test compares `gamma_4` against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TunnellingThreshold {
    /// The undriven path has no first-order transition: every `gamma_4` passes.
    NoTunnelling,
    /// The relevant cusp of the instance.
    Cusp { gamma_4c: f64, tau_c: f64 },
    /// The undriven path tunnels but no relevant cusp was found: nothing passes.
    Unresolved,
}

impl TunnellingThreshold {
    pub fn accepts(&self, gamma_4: f64) -> bool {
        match *self {
            TunnellingThreshold::NoTunnelling => true,
            TunnellingThreshold::Cusp { gamma_4c, .. } => gamma_condition(gamma_4, gamma_4c),
            TunnellingThreshold::Unresolved => false,
        }
    }

    /// `gamma_4c` for the interval estimate; `None` when nothing passes.
    fn effective_gamma_4c(&self) -> Option<f64> {
        match *self {
            TunnellingThreshold::NoTunnelling => Some(0.0),
            TunnellingThreshold::Cusp { gamma_4c, .. } => Some(gamma_4c),
            TunnellingThreshold::Unresolved => None,
        }
    }
}

/// Schedule grid used to decide whether the undriven path tunnels.
pub const UNDRIVEN_GRID: usize = 401;

pub fn tunnelling_threshold(inst: &HwpInstance) -> Result<TunnellingThreshold> {
    let sol = solve_a3(inst.beta)?;
    if sol.converged {
        return Ok(TunnellingThreshold::Cusp { gamma_4c: sol.gamma_4c, tau_c: sol.tau_c });
    }
    let grid = uniform_grid(UNDRIVEN_GRID);
    let model = EffectiveModel::from_instance(inst, GammaCoefficients::ZERO);
    Ok(if detect_global_bifurcation(&model, &grid)?.is_empty() {
        TunnellingThreshold::NoTunnelling
    } else {
        TunnellingThreshold::Unresolved
    })
}

/// Tunnelling is avoided when `gamma_4` lies beyond `gamma_4c` on its side.
/// A vanishing `gamma_4c` accepts both sides.
pub fn gamma_condition(gamma_4: f64, gamma_4c: f64) -> bool {
    const TIE: f64 = 1e-9;
    if gamma_4c.abs() < TIE {
        return true;
    }
    if gamma_4c < 0.0 {
        gamma_4 <= gamma_4c
    } else {
        gamma_4 >= gamma_4c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub value: f64,
    /// Binomial standard error `sqrt(f(1-f)/N)`.
    pub std_err: f64,
}

impl Fraction {
    fn from_count(k: usize, total: usize) -> Self {
        let f = k as f64 / total as f64;
        Fraction { value: f, std_err: (f * (1.0 - f) / total as f64).sqrt() }
    }
}

/// Ranges used by the interval estimate, which treats `|g2| + |g6|`,
/// `(|g1| + 3|g3| + |g4| + |g5|)/2` and `gamma_4` as independent uniforms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalBounds {
    pub even_sum_max: f64,
    pub half_rest_max: f64,
    pub gamma4_max: f64,
}

impl IntervalBounds {
    /// Ranges quoted in the original probability estimate: `16L/3`, `25L/3`, `4L`.
    pub fn reference(l: f64) -> Self {
        IntervalBounds { even_sum_max: 16.0 * l / 3.0, half_rest_max: 25.0 * l / 3.0, gamma4_max: 4.0 * l }
    }

    /// Tight ranges implied by the coefficient table for entries in `[-L, L]`:
    /// `|g2| + |g6| <= 4L`, `(|g1| + 3|g3| + |g4| + |g5|)/2 <= 10L`, `|g4| <= 4L`.
    pub fn from_table(l: f64) -> Self {
        IntervalBounds { even_sum_max: 4.0 * l, half_rest_max: 10.0 * l, gamma4_max: 4.0 * l }
    }

    /// `P(S <= 1 + R)` for `S ~ U[0, a]`, `R ~ U[0, b]`.
    pub fn mass_fraction(&self) -> f64 {
        let (a, b) = (self.even_sum_max, self.half_rest_max);
        if a <= 1.0 {
            return 1.0;
        }
        let excess = a - 1.0;
        if excess <= b {
            1.0 - excess * excess / (2.0 * a * b)
        } else {
            (1.0 + 0.5 * b) / a
        }
    }

    /// `P(gamma_4 beyond gamma_4c)` for `gamma_4 ~ U[-g, g]`.
    pub fn gamma_fraction(&self, gamma_4c: f64) -> f64 {
        let g = self.gamma4_max;
        if gamma_4c.abs() < 1e-9 {
            return 1.0;
        }
        ((g - gamma_4c.abs()) / (2.0 * g)).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub l: f64,
    pub samples: usize,
    pub seed: u64,
    pub threshold: TunnellingThreshold,
    pub frac_mass_ok: Fraction,
    pub frac_gamma_ok: Fraction,
    pub frac_joint: Fraction,
    /// Same three fractions with the interval model sampled instead of clause
    /// entries (independent uniforms on the reference ranges).
    pub interval_mass_ok: Fraction,
    pub interval_gamma_ok: Fraction,
    pub interval_joint: Fraction,
    /// Product of the closed-form interval fractions on the reference ranges.
    pub analytic_estimate: f64,
    /// The same product with the `gamma_4` factor at its `L -> infinity` value 1/2.
    pub analytic_large_l: f64,
    /// Closed-form product on the tight ranges implied by the coefficient table.
    pub analytic_table_bounds: f64,
}

pub const MIN_SAMPLES: usize = 1000;

fn count<F: Fn(u64) -> (bool, bool) + Sync>(samples: usize, f: F) -> (usize, usize, usize) {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (m, g) = f(i);
            (m as usize, g as usize, (m && g) as usize)
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2))
}

/// Monte-Carlo fractions for `A ~ U[-L, L]^28`, with the instance's own
/// threshold for the tunnelling test. Each sample uses its own ChaCha20
/// stream, so results do not depend on thread scheduling.
pub fn success_fraction(inst: &HwpInstance, l: f64, samples: usize, seed: u64) -> Result<SuccessReport> {
    success_fraction_with(inst, l, samples, seed, tunnelling_threshold(inst)?)
}

/// As [`success_fraction`] with an externally supplied threshold.
pub fn success_fraction_with(
    inst: &HwpInstance,
    l: f64,
    samples: usize,
    seed: u64,
    threshold: TunnellingThreshold,
) -> Result<SuccessReport> {
    if samples < MIN_SAMPLES {
        return Err(QaaError::InvalidInput(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    if !inst.is_finite() {
        return Err(QaaError::InvalidInput("instance weights must be finite".into()));
    }
    // Validate L once up front; per-sample draws then cannot fail.
    sample_a_stream(l, seed, 0)?;
    let (m, g, j) = count(samples, |i| {
        let gam = gammas_from_a(&sample_a_stream(l, seed, i).expect("validated range"));
        (mass_condition(&gam), threshold.accepts(gam.gamma[3]))
    });
    let bounds = IntervalBounds::reference(l);
    // Interval-model draws live on streams disjoint from the entry draws.
    let (im, ig, ij) = count(samples, |i| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX - i);
        let s = rng.random_range(0.0..=bounds.even_sum_max);
        let r = rng.random_range(0.0..=bounds.half_rest_max);
        let g4 = rng.random_range(-bounds.gamma4_max..=bounds.gamma4_max);
        (s <= 1.0 + r, threshold.accepts(g4))
    });
    let table = IntervalBounds::from_table(l);
    let (g_ref, g_large, g_table) = match threshold.effective_gamma_4c() {
        Some(c) => (bounds.gamma_fraction(c), if c.abs() < 1e-9 { 1.0 } else { 0.5 }, table.gamma_fraction(c)),
        None => (0.0, 0.0, 0.0),
    };
    Ok(SuccessReport {
        l,
        samples,
        seed,
        threshold,
        frac_mass_ok: Fraction::from_count(m, samples),
        frac_gamma_ok: Fraction::from_count(g, samples),
        frac_joint: Fraction::from_count(j, samples),
        interval_mass_ok: Fraction::from_count(im, samples),
        interval_gamma_ok: Fraction::from_count(ig, samples),
        interval_joint: Fraction::from_count(ij, samples),
        analytic_estimate: bounds.mass_fraction() * g_ref,
        analytic_large_l: bounds.mass_fraction() * g_large,
        analytic_table_bounds: table.mass_fraction() * g_table,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCheckReport {
    pub samples: usize,
    pub n_list: Vec<usize>,
    pub power_law: usize,
    pub fraction: f64,
    /// Per-sample verdicts in sample order.
    pub verdicts: Vec<ScalingVerdict>,
}

/// Classifies each sampled path directly from exact minimum gaps over
/// `n_list`, using the large-spin driver model of the sampled clause matrix.
pub fn verify_success_by_gap(
    inst: &HwpInstance,
    l: f64,
    samples: usize,
    seed: u64,
    n_list: &[usize],
    grid: usize,
) -> Result<GapCheckReport> {
    if samples == 0 || samples > 1000 {
        return Err(QaaError::InvalidInput(format!("samples must be in 1..=1000, got {samples}")));
    }
    if n_list.iter().any(|&n| n > 200) {
        return Err(QaaError::InvalidInput("gap check is limited to n <= 200".into()));
    }
    sample_a_stream(l, seed, 0)?;
    let opts = ProfileOptions::default();
    let verdicts: Vec<ScalingVerdict> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let gam = gammas_from_a(&sample_a_stream(l, seed, i)?);
            min_gap_scaling_with(inst, &Driver::Gamma(gam), n_list, grid, &opts).map(|f| f.verdict)
        })
        .collect::<Result<_>>()?;
    let power_law = verdicts.iter().filter(|v| **v == ScalingVerdict::PowerLaw).count();
    Ok(GapCheckReport {
        samples,
        n_list: n_list.to_vec(),
        power_law,
        fraction: power_law as f64 / samples as f64,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_arithmetic_reference() {
        let b = IntervalBounds::reference(3.0);
        assert!((b.mass_fraction() - 0.71875).abs() < 1e-15);
        assert!((b.gamma_fraction(-0.95) - 11.05 / 24.0).abs() < 1e-15);
        assert_eq!(b.gamma_fraction(0.0), 1.0);
        assert_eq!(b.gamma_fraction(-100.0), 0.0);
    }

    #[test]
    fn conditions() {
        assert!(mass_condition(&GammaCoefficients::ZERO));
        assert!(!mass_condition(&GammaCoefficients::new([0.0, 2.0, 0.0, 0.0, 0.0, 0.0])));
        assert!(gamma_condition(-8.0, -0.95));
        assert!(!gamma_condition(-0.5, -0.95));
        assert!(gamma_condition(0.5, 1e-12) && gamma_condition(-0.5, 1e-12));
    }

    #[test]
    fn infinite_threshold_rejects_everything() {
        let t = TunnellingThreshold::Cusp { gamma_4c: f64::NEG_INFINITY, tau_c: 0.5 };
        let r = success_fraction_with(&HwpInstance::new([0.0, 3.0, 1.0, 1.0]), 3.0, 1000, 1, t).unwrap();
        assert_eq!(r.frac_gamma_ok.value, 0.0);
        assert_eq!(r.frac_joint.value, 0.0);
    }

    #[test]
    fn thresholds() {
        let farhi = tunnelling_threshold(&HwpInstance::new([0.0, 3.0, 1.0, 1.0])).unwrap();
        assert!(matches!(farhi, TunnellingThreshold::Cusp { gamma_4c, .. } if gamma_4c < 0.0));
        assert!(farhi.accepts(-8.0) && !farhi.accepts(0.0));
        // Cost increasing in the number of unit bits: the minimum never moves.
        let mono = tunnelling_threshold(&HwpInstance::new([0.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(mono, TunnellingThreshold::NoTunnelling);
        assert!(!TunnellingThreshold::Unresolved.accepts(-100.0));
    }

    #[test]
    fn too_few_samples() {
        assert!(success_fraction(&HwpInstance::new([0.0, 3.0, 1.0, 1.0]), 3.0, 10, 0).is_err());
    }
}
