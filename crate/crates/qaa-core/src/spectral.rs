//! Exact spectra along the schedule `H(tau) = (1-tau) H_B + tau(1-tau) H_E + tau H_P`.
//!
//! All energies are in units of `l^3` unless raw units are requested.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{build_he_symmetric, DriverMatrix};
use crate::error::{QaaError, Result};
use crate::problem::{build_hp, spin_l, CostMode, HwpInstance};
use crate::spin_algebra::{build_nx, eigh, sym_poly, GammaCoefficients, SubspaceOperator};

/// The path-deforming driver `H_E`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    None,
    /// Large-spin polynomial model.
    Gamma(GammaCoefficients),
    /// Exact clause driver, weight-preserving terms included.
    Matrix(DriverMatrix),
}

/// `H_B`, `H_E`, `H_P` for one `n`, each divided by `l^3`.
#[derive(Clone, Debug)]
pub struct ScheduleOps {
    pub n: usize,
    pub hb: SubspaceOperator,
    pub he: SubspaceOperator,
    pub hp: SubspaceOperator,
}

impl ScheduleOps {
    pub fn new(inst: &HwpInstance, driver: &Driver, n: usize, mode: CostMode) -> Result<Self> {
        let l3 = spin_l(n).powi(3);
        let hp = build_hp(n, inst, mode)?.scale(1.0 / l3);
        let x = build_nx(n)?;
        let hb = SubspaceOperator::identity(n).lin_comb(2.0, &x, -2.0)?;
        let he = match driver {
            Driver::None => SubspaceOperator::zeros(n),
            Driver::Gamma(g) => sym_poly(n, g)?,
            Driver::Matrix(a) => build_he_symmetric(a, n, true)?.scale(1.0 / l3),
        };
        Ok(ScheduleOps { n, hb, he, hp })
    }

    pub fn custom(hb: SubspaceOperator, he: SubspaceOperator, hp: SubspaceOperator) -> Result<Self> {
        for op in [&he, &hp] {
            if op.n() != hb.n() {
                return Err(QaaError::DimensionMismatch { expected: hb.dim(), found: op.dim() });
            }
        }
        Ok(ScheduleOps { n: hb.n(), hb, he, hp })
    }

    pub fn h(&self, tau: f64) -> Result<SubspaceOperator> {
        assemble_h(tau, &self.hb, &self.he, &self.hp)
    }

    /// `dH/dtau = H_P - H_B + (1 - 2 tau) H_E`.
    pub fn dh(&self, tau: f64) -> SubspaceOperator {
        let base = &self.hp - &self.hb;
        &base + &self.he.scale(1.0 - 2.0 * tau)
    }
}

pub fn assemble_h(
    tau: f64,
    hb: &SubspaceOperator,
    he: &SubspaceOperator,
    hp: &SubspaceOperator,
) -> Result<SubspaceOperator> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(QaaError::InvalidInput(format!("tau must lie in [0, 1], got {tau}")));
    }
    for op in [he, hp] {
        if op.n() != hb.n() {
            return Err(QaaError::DimensionMismatch { expected: hb.dim(), found: op.dim() });
        }
    }
    let m = hb.matrix() * (1.0 - tau) + he.matrix() * (tau * (1.0 - tau)) + hp.matrix() * tau;
    SubspaceOperator::from_matrix(hb.n(), m)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyUnits {
    #[default]
    SpinCubed,
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub mode: CostMode,
    pub units: EnergyUnits,
    /// Stop golden-section refinement once the bracket is this narrow in tau.
    pub tau_tol: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions { mode: CostMode::Asymptotic, units: EnergyUnits::SpinCubed, tau_tol: 1e-15 }
    }
}

/// Default number of schedule points.
pub const DEFAULT_GRID: usize = 201;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapProfile {
    pub n: usize,
    pub units: EnergyUnits,
    pub tau_grid: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub gap: Vec<f64>,
    pub min_gap: f64,
    pub tau_at_min: f64,
    pub hdot_max: f64,
    /// `hdot_max / min_gap^2` (hbar = 1, no safety factor).
    pub runtime_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub min_gap: f64,
    pub tau_at_min: f64,
    pub hdot_max: f64,
    pub runtime_bound: f64,
}

impl GapProfile {
    pub fn summary(&self) -> GapSummary {
        GapSummary {
            min_gap: self.min_gap,
            tau_at_min: self.tau_at_min,
            hdot_max: self.hdot_max,
            runtime_bound: self.runtime_bound,
        }
    }
}

struct Point {
    l0: f64,
    l1: f64,
    hdot: f64,
}

fn solve_point(ops: &ScheduleOps, tau: f64) -> Result<Point> {
    let spec = eigh(&ops.h(tau)?, true)?;
    let v0 = spec.vector(0).expect("vectors requested");
    let v1 = spec.vector(1).expect("vectors requested");
    let hdot = ops.dh(tau).bilinear(&v1, &v0).abs();
    Ok(Point { l0: spec.eigenvalues[0], l1: spec.eigenvalues[1], hdot })
}

/// Gap `lambda1 - lambda0` at a single schedule point.
pub fn gap_at(ops: &ScheduleOps, tau: f64) -> Result<f64> {
    let ev = eigh(&ops.h(tau)?, false)?.eigenvalues;
    Ok(ev[1] - ev[0])
}

/// Golden-section search for the minimum of `f` on `[a, b]`; returns the best
/// evaluated `(x, f(x))`, seeded with `start`.
pub(crate) fn golden_min<F>(mut a: f64, mut b: f64, tol: f64, start: (f64, f64), mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = start;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..300 {
        for (x, fx) in [(c, fc), (d, fd)] {
            if fx < best.1 {
                best = (x, fx);
            }
        }
        if b - a <= tol || c >= d {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(best)
}

pub fn uniform_grid(grid: usize) -> Vec<f64> {
    (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect()
}

pub fn gap_profile(inst: &HwpInstance, driver: &Driver, n: usize, grid: usize) -> Result<GapProfile> {
    gap_profile_with(inst, driver, n, grid, &ProfileOptions::default())
}

pub fn gap_profile_with(
    inst: &HwpInstance,
    driver: &Driver,
    n: usize,
    grid: usize,
    opts: &ProfileOptions,
) -> Result<GapProfile> {
    let ops = ScheduleOps::new(inst, driver, n, opts.mode)?;
    gap_profile_ops(&ops, grid, opts)
}

/// Scans a uniform tau grid (points solved in parallel, assembled in order),
/// then refines the smallest gap by golden section between its neighbours.
pub fn gap_profile_ops(ops: &ScheduleOps, grid: usize, opts: &ProfileOptions) -> Result<GapProfile> {
    if grid < 3 {
        return Err(QaaError::InvalidInput(format!("tau grid needs at least 3 points, got {grid}")));
    }
    let tau_grid = uniform_grid(grid);
    let points: Vec<Point> = tau_grid.par_iter().map(|&t| solve_point(ops, t)).collect::<Result<_>>()?;

    let gap: Vec<f64> = points.iter().map(|p| p.l1 - p.l0).collect();
    let (imin, gmin) =
        gap.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (i, g)| if g < acc.1 { (i, g) } else { acc });
    let a = tau_grid[imin.saturating_sub(1)];
    let b = tau_grid[(imin + 1).min(grid - 1)];
    let (tau_at_min, min_gap) = golden_min(a, b, opts.tau_tol, (tau_grid[imin], gmin), |t| gap_at(ops, t))?;

    let mut hdot_max = points.iter().map(|p| p.hdot).fold(0.0_f64, f64::max);
    hdot_max = hdot_max.max(solve_point(ops, tau_at_min)?.hdot);

    let s = match opts.units {
        EnergyUnits::SpinCubed => 1.0,
        EnergyUnits::Raw => spin_l(ops.n).powi(3),
    };
    let min_gap = min_gap * s;
    let hdot_max = hdot_max * s;
    let runtime_bound = if min_gap > 0.0 { hdot_max / (min_gap * min_gap) } else { f64::INFINITY };
    Ok(GapProfile {
        n: ops.n,
        units: opts.units,
        lambda0: points.iter().map(|p| p.l0 * s).collect(),
        lambda1: points.iter().map(|p| p.l1 * s).collect(),
        gap: gap.iter().map(|g| g * s).collect(),
        tau_grid,
        min_gap,
        tau_at_min,
        hdot_max,
        runtime_bound,
    })
}

/// Least-squares line `y = a - b x` with RMS residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub a: f64,
    pub b: f64,
    pub rms_residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    let a = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - slope * u).powi(2)).sum();
    LineFit { a, b: -slope, rms_residual: (ss / k).sqrt() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingVerdict {
    Exponential,
    PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub n_list: Vec<usize>,
    pub min_gaps: Vec<f64>,
    pub tau_at_min: Vec<f64>,
    /// `log gap = a - b n`.
    pub exponential: LineFit,
    /// `log gap = a - b log n`.
    pub power_law: LineFit,
    pub verdict: ScalingVerdict,
    /// Residual of the losing model divided by that of the winner.
    pub margin: f64,
}

pub fn fit_scaling(n_list: &[usize], min_gaps: &[f64]) -> Result<(LineFit, LineFit, ScalingVerdict, f64)> {
    if min_gaps.iter().any(|g| !(*g > 0.0)) {
        return Err(QaaError::Numerical("non-positive minimum gap; cannot fit log-gap".into()));
    }
    let ns: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let logn: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let logg: Vec<f64> = min_gaps.iter().map(|g| g.ln()).collect();
    let exp = fit_line(&ns, &logg);
    let pow = fit_line(&logn, &logg);
    let (verdict, margin) = if exp.rms_residual < pow.rms_residual {
        (ScalingVerdict::Exponential, pow.rms_residual / exp.rms_residual.max(f64::MIN_POSITIVE))
    } else {
        (ScalingVerdict::PowerLaw, exp.rms_residual / pow.rms_residual.max(f64::MIN_POSITIVE))
    };
    Ok((exp, pow, verdict, margin))
}

pub fn min_gap_scaling(inst: &HwpInstance, driver: &Driver, n_list: &[usize]) -> Result<ScalingFit> {
    min_gap_scaling_with(inst, driver, n_list, DEFAULT_GRID, &ProfileOptions::default())
}

pub fn min_gap_scaling_with(
    inst: &HwpInstance,
    driver: &Driver,
    n_list: &[usize],
    grid: usize,
    opts: &ProfileOptions,
) -> Result<ScalingFit> {
    if n_list.len() < 5 || n_list.iter().any(|&n| n < 20) {
        return Err(QaaError::InvalidInput("scaling needs at least 5 sizes, each >= 20".into()));
    }
    let mut min_gaps = Vec::with_capacity(n_list.len());
    let mut taus = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let prof = gap_profile_with(inst, driver, n, grid, opts)?;
        min_gaps.push(prof.min_gap);
        taus.push(prof.tau_at_min);
    }
    let (exponential, power_law, verdict, margin) = fit_scaling(n_list, &min_gaps)?;
    Ok(ScalingFit { n_list: n_list.to_vec(), min_gaps, tau_at_min: taus, exponential, power_law, verdict, margin })
}

/// Squared overlap of the instantaneous ground state with the weight states
/// minimizing the cost diagonal (the whole tied set when degenerate).
pub fn ground_overlap(inst: &HwpInstance, driver: &Driver, n: usize, tau: f64) -> Result<f64> {
    let ops = ScheduleOps::new(inst, driver, n, CostMode::Asymptotic)?;
    ground_overlap_ops(&ops, tau)
}

pub fn ground_overlap_ops(ops: &ScheduleOps, tau: f64) -> Result<f64> {
    let diag = ops.hp.diagonal();
    let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + lo.abs());
    let spec = eigh(&ops.h(tau)?, true)?;
    let vecs = spec.eigenvectors.as_ref().expect("vectors requested");
    // Project onto the (possibly degenerate) ground eigenspace.
    let e0 = spec.eigenvalues[0];
    let etol = 1e-10 * (1.0 + e0.abs());
    let ground: Vec<usize> = (0..spec.eigenvalues.len()).filter(|&k| spec.eigenvalues[k] - e0 <= etol).collect();
    let mut overlap = 0.0;
    let weight = 1.0 / ground.len() as f64;
    for &k in &ground {
        overlap += weight * (0..diag.len()).filter(|&w| diag[w] - lo <= tol).map(|w| vecs[(w, k)].powi(2)).sum::<f64>();
    }
    Ok(overlap)
}
