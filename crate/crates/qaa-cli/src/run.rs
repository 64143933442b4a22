use std::io;

use qaa_core::classical_spin::{adiabatic_diagnostics, integrate_spin, SpinOptions};
use qaa_core::driver::{
    build_he_dense, build_he_dense_with_leakage, build_he_symmetric, derive_gamma_table, gammas_from_a, parametrized_a,
    sample_a_stream, ClauseParams, DriverMatrix, GAMMA_TABLE_THIRDS, N_ENTRIES,
};
use qaa_core::phase_diagram::{gamma_c_of_l, success_fraction, tunnelling_threshold, verify_success_by_gap};
use qaa_core::problem::{classify_cost, HwpInstance};
use qaa_core::semiclassical::{
    detect_global_bifurcation, detect_local_bifurcation, solve_a3, stationary_analysis, u_eval, EffectiveModel,
};
use qaa_core::spectral::{gap_profile_with, min_gap_scaling_with, uniform_grid, Driver, ProfileOptions};
use qaa_core::spin_algebra::GammaCoefficients;
use qaa_core::QaaError;
use serde_json::json;

use crate::config::{Command, DriverSpec, RunConfig};
use crate::output::OutDir;

/// Oracle tolerance for `validate`.
pub const ORACLE_TOL: f64 = 1e-10;

pub enum RunError {
    /// Exit 2.
    Config(String),
    /// Exit 3; `kind` goes into the diagnostic JSON.
    Numerical { kind: &'static str, message: String },
}

impl From<QaaError> for RunError {
    fn from(e: QaaError) -> Self {
        if e.is_input_error() {
            RunError::Config(e.to_string())
        } else {
            RunError::Numerical { kind: "numerical-failure", message: e.to_string() }
        }
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Numerical { kind: "io-failure", message: e.to_string() }
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn instance(cfg: &RunConfig) -> HwpInstance {
    HwpInstance::new(cfg.p.expect("resolved config has p"))
}

fn driver(cfg: &RunConfig) -> Result<Driver> {
    Ok(match cfg.driver.as_ref().unwrap_or(&DriverSpec::None) {
        DriverSpec::None => Driver::None,
        DriverSpec::Gamma { gamma } => Driver::Gamma(GammaCoefficients::new(*gamma)),
        DriverSpec::Matrix { entries } => Driver::Matrix(matrix(entries)?),
        DriverSpec::Ensemble { .. } => return Err(RunError::Config("`driver`: not a fixed driver".into())),
    })
}

fn matrix(entries: &[f64]) -> Result<DriverMatrix> {
    let upper: [f64; N_ENTRIES] =
        entries.try_into().map_err(|_| RunError::Config(format!("`driver.entries`: need {N_ENTRIES} entries")))?;
    Ok(DriverMatrix::from_upper(upper)?)
}

/// Large-spin coefficients of the configured driver.
fn driver_gammas(cfg: &RunConfig) -> Result<GammaCoefficients> {
    Ok(match driver(cfg)? {
        Driver::None => GammaCoefficients::ZERO,
        Driver::Gamma(g) => g,
        Driver::Matrix(a) => gammas_from_a(&a),
    })
}

pub fn execute(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    match cfg.command.expect("resolved config has a command") {
        Command::Spectrum => spectrum(cfg, out),
        Command::Scaling => scaling(cfg, out),
        Command::Potential => potential(cfg, out),
        Command::Bifurcation => bifurcation(cfg, out),
        Command::PhaseDiagram => phase_diagram(cfg, out),
        Command::Ensemble => ensemble(cfg, out),
        Command::Classical => classical(cfg, out),
        Command::Validate => validate(cfg, out),
    }
}

fn profile_options(cfg: &RunConfig) -> ProfileOptions {
    ProfileOptions { mode: cfg.mode.unwrap_or_default(), ..ProfileOptions::default() }
}

fn spectrum(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let n = cfg.n.expect("resolved");
    let prof = gap_profile_with(&instance(cfg), &driver(cfg)?, n, cfg.grid.expect("resolved"), &profile_options(cfg))?;
    let rows = (0..prof.tau_grid.len()).map(|i| [prof.tau_grid[i], prof.lambda0[i], prof.lambda1[i], prof.gap[i]]);
    out.csv("spectrum.csv", &["tau", "lambda0", "lambda1", "gap"], rows)?;
    let s = prof.summary();
    out.json(
        "summary.json",
        &json!({
            "seed": cfg.seed,
            "n": n,
            "units": prof.units,
            "min_gap": s.min_gap,
            "tau_at_min": s.tau_at_min,
            "hdot_max": s.hdot_max,
            "runtime_bound": s.runtime_bound,
        }),
    )?;
    Ok(())
}

fn scaling(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let ns = cfg.n_list.as_deref().expect("resolved");
    let fit =
        min_gap_scaling_with(&instance(cfg), &driver(cfg)?, ns, cfg.grid.expect("resolved"), &profile_options(cfg))?;
    let rows = (0..ns.len()).map(|i| [ns[i] as f64, fit.min_gaps[i], fit.tau_at_min[i]]);
    out.csv("scaling.csv", &["n", "min_gap", "tau_at_min"], rows)?;
    out.json("scaling.json", &json!({ "seed": cfg.seed, "fit": fit }))?;
    Ok(())
}

fn potential(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let model = EffectiveModel::from_instance(&instance(cfg), driver_gammas(cfg)?);
    let taus = uniform_grid(cfg.grid.expect("resolved"));
    let qn = cfg.q_points.expect("resolved");
    let qs: Vec<f64> = (0..qn).map(|i| -1.0 + 2.0 * i as f64 / (qn - 1) as f64).collect();
    let mut surface = Vec::with_capacity(taus.len() * qn);
    let mut path = Vec::with_capacity(taus.len());
    for &t in &taus {
        for &q in &qs {
            surface.push([t, q, u_eval(&model, t, q)?]);
        }
        let sp = stationary_analysis(&model, t)?;
        path.push([t, sp.q_star, u_eval(&model, t, sp.q_star)?, sp.omega_x, sp.omega_star_sq]);
    }
    out.csv("potential.csv", &["tau", "q", "U"], surface)?;
    out.csv("path.csv", &["tau", "q_star", "u_star", "omega_x", "omega_star_sq"], path)?;
    Ok(())
}

fn bifurcation(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let inst = instance(cfg);
    let gam = driver_gammas(cfg)?;
    let sol = solve_a3(inst.beta)?;
    let model = EffectiveModel::from_instance(&inst, gam);
    let grid = uniform_grid(cfg.grid.expect("resolved"));
    out.json(
        "bifurcation.json",
        &json!({
            "seed": cfg.seed,
            "beta": inst.beta,
            "tau_c": sol.tau_c,
            "gamma_4c": sol.gamma_4c,
            "x": sol.x,
            "residuals": sol.residuals,
            "converged": sol.converged,
            "candidates": sol.candidates,
            "threshold": tunnelling_threshold(&inst)?,
            "cost": classify_cost(inst.beta),
            "driver_gamma": gam.gamma,
            "global_bifurcations": detect_global_bifurcation(&model, &grid)?,
            "local_bifurcations": detect_local_bifurcation(&model, &grid)?,
        }),
    )?;
    Ok(())
}

fn phase_diagram(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let grid = cfg.grid.expect("resolved");
    let domain = cfg.domain.unwrap_or_default();
    let points = cfg
        .l_list
        .as_deref()
        .expect("resolved")
        .iter()
        .map(|&l| gamma_c_of_l(l, grid, domain))
        .collect::<qaa_core::Result<Vec<_>>>()?;
    let rows = points.iter().map(|p| {
        let [a, b, c, d] = p.argmax_p;
        [p.l, p.gamma_c, a, b, c, d]
    });
    out.csv("phase_curve.csv", &["L", "gamma_c", "arg_p0", "arg_p1", "arg_p2", "arg_p3"], rows)?;
    out.json("phase_curve.json", &json!({ "seed": cfg.seed, "grid": grid, "domain": domain, "points": points }))?;
    Ok(())
}

fn ensemble(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let Some(DriverSpec::Ensemble { l, samples }) = cfg.driver else {
        return Err(RunError::Config("`driver`: ensemble needs --L and --samples".into()));
    };
    let inst = instance(cfg);
    let seed = cfg.seed.expect("resolved");
    out.json("ensemble.json", &success_fraction(&inst, l, samples, seed)?)?;
    if cfg.gap_check == Some(true) {
        let r = verify_success_by_gap(
            &inst,
            l,
            cfg.gap_samples.expect("resolved"),
            seed,
            cfg.n_list.as_deref().expect("resolved"),
            cfg.grid.expect("resolved"),
        )?;
        out.json("gap_check.json", &json!({ "seed": seed, "report": r }))?;
    }
    Ok(())
}

fn classical(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let inst = instance(cfg);
    let model = EffectiveModel::from_instance(&inst, driver_gammas(cfg)?);
    let opts = SpinOptions { tol: cfg.tol.expect("resolved"), ..SpinOptions::default() };
    let traj = integrate_spin(&model, cfg.t_scaled.expect("resolved"), &opts)?;
    let diag = adiabatic_diagnostics(&traj);
    let rows = traj.samples.iter().map(|s| [s.t, s.tau, s.n[0], s.n[1], s.n[2], s.misalignment]);
    out.csv("trajectory.csv", &["t", "tau", "nx", "ny", "nz", "misalignment"], rows)?;
    let q_star = classify_cost(inst.beta).q_star;
    out.json(
        "classical.json",
        &json!({
            "seed": cfg.seed,
            "t_scaled": traj.t_scaled,
            "final_nz": traj.final_nz,
            "max_norm_drift": traj.max_norm_drift,
            "max_misalignment": diag.max_misalignment,
            "tau_at_max_misalignment": diag.tau_at_max,
            "J_drift": diag.j_drift,
            "classical_minimizer": q_star,
            "final_distance": (traj.final_nz - q_star).abs(),
            "steps": traj.steps,
            "rejected": traj.rejected,
        }),
    )?;
    Ok(())
}

fn validate(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let (n_max, samples, seed) =
        (cfg.n.expect("resolved"), cfg.samples.expect("resolved"), cfg.seed.expect("resolved"));
    let mut per_n = Vec::new();
    let mut worst = 0.0f64;
    let mut leak = 0.0f64;
    for n in 3..=n_max {
        let mut dev = 0.0f64;
        for s in 0..samples as u64 {
            let a = sample_a_stream(1.0, seed, s)?;
            let dense = build_he_dense(&a, n)?;
            dev = dev.max(dense.max_abs_diff(&build_he_symmetric(&a, n, true)?));
            leak = leak.max(build_he_dense_with_leakage(&a.bit_symmetrized(), n)?.1);
        }
        worst = worst.max(dev);
        per_n.push(json!({ "n": n, "max_deviation": dev }));
    }
    let table = derive_gamma_table([40, 80, 160])?;
    let mut table_err = 0.0f64;
    for (row, want) in table.iter().zip(GAMMA_TABLE_THIRDS.iter()) {
        for (x, &w) in row.iter().zip(want.iter()) {
            table_err = table_err.max((x - w as f64 / 3.0).abs());
        }
    }
    let farhi = gammas_from_a(&parametrized_a(&ClauseParams::farhi())?).gamma;
    let pass = worst <= ORACLE_TOL && leak <= ORACLE_TOL && table_err <= 1e-6 && (farhi[3] + 8.0).abs() <= 1e-6;
    let report = json!({
        "seed": seed,
        "samples": samples,
        "n_range": [3, n_max],
        "tolerance": ORACLE_TOL,
        "max_deviation": worst,
        "per_n": per_n,
        "symmetrized_leakage": leak,
        "gamma_table_max_error": table_err,
        "farhi_gamma": farhi,
        "pass": pass,
    });
    out.json("validate.json", &report)?;
    if !pass {
        return Err(RunError::Numerical {
            kind: "oracle-mismatch",
            message: format!("max deviation {worst:.3e}, leakage {leak:.3e}, table error {table_err:.3e}"),
        });
    }
    Ok(())
}
