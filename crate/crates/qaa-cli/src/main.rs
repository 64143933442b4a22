//! `qaa`: seeded, reproducible runs of the randomized-path adiabatic
//! optimization analyses. Every run writes CSV/JSON outputs plus a
//! `manifest.json` into `--out`.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure
//! (details in `diagnostic.json`).

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qaa_core::phase_diagram::WeightDomain;
use qaa_core::problem::CostMode;
use serde_json::json;

use config::{Command, ConfigError, DriverSpec, RunConfig};
use output::OutDir;
use run::RunError;

#[derive(Parser)]
#[command(name = "qaa", version, about = "Adiabatic optimization with randomized paths", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Gap profile along the schedule (spectrum.csv, summary.json).
    Spectrum(Flags),
    /// Minimum gap versus n with exponential/power-law fits.
    Scaling(Flags),
    /// Effective potential surface U(q, tau) and its minimum path.
    Potential(Flags),
    /// Cusp point, tunnelling threshold and bifurcation detectors.
    Bifurcation(Flags),
    /// Critical driver strength gamma_c(L) over weight lattices.
    PhaseDiagram(Flags),
    /// Success fractions for random clause drivers.
    Ensemble(Flags),
    /// Classical large-spin precession along the schedule.
    Classical(Flags),
    /// Weight-basis builder against dense projections, and the gamma table.
    Validate(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON config file (or a previous manifest.json); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Clause weights p0,p1,p2,p3.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    p: Option<Vec<f64>>,
    /// Driver coefficients gamma1..gamma6.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gamma: Option<Vec<f64>>,
    /// Driver with only gamma4 switched on.
    #[arg(long, allow_negative_numbers = true)]
    gamma4: Option<f64>,
    /// Clause driver as JSON {"entries": [28 upper-triangle reals]}.
    #[arg(long = "A-file")]
    a_file: Option<PathBuf>,
    /// Range L of random clause entries, U[-L, L] (ensemble driver).
    #[arg(long = "L")]
    l: Option<f64>,
    /// Monte-Carlo samples (ensemble) or random drivers per size (validate).
    #[arg(long)]
    samples: Option<usize>,
    /// Number of qubits (largest size for validate).
    #[arg(long)]
    n: Option<usize>,
    /// Sizes for scaling fits.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Schedule points (or lattice points per axis for phase-diagram).
    #[arg(long)]
    grid: Option<usize>,
    /// Diagonal cost: asymptotic l^3 G_P or the exact clause sum.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<CostMode>,
    /// q points of the potential surface.
    #[arg(long)]
    q_points: Option<usize>,
    /// Weight ranges L for the phase curve.
    #[arg(long, value_delimiter = ',')]
    l_list: Option<Vec<f64>>,
    /// Weight lattice: zero-to-l or symmetric.
    #[arg(long, value_parser = parse_domain)]
    domain: Option<WeightDomain>,
    /// Scaled runtime of the classical sweep.
    #[arg(long)]
    t_scaled: Option<f64>,
    /// Integrator tolerance of the classical sweep.
    #[arg(long)]
    tol: Option<f64>,
    /// Also classify sampled paths from exact gaps (ensemble).
    #[arg(long)]
    gap_check: bool,
    /// Paths for the gap check.
    #[arg(long)]
    gap_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<CostMode, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown mode `{s}` (asymptotic, exact)"))
}

fn parse_domain(s: &str) -> Result<WeightDomain, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown domain `{s}` (zero-to-l, symmetric)"))
}

impl Flags {
    fn driver(&self) -> Result<Option<DriverSpec>, ConfigError> {
        let given: Vec<&str> = [
            ("--gamma", self.gamma.is_some()),
            ("--gamma4", self.gamma4.is_some()),
            ("--A-file", self.a_file.is_some()),
            ("--L", self.l.is_some()),
        ]
        .into_iter()
        .filter_map(|(k, set)| set.then_some(k))
        .collect();
        if given.len() > 1 {
            return Err(ConfigError(format!("`driver`: conflicting driver specs {}", given.join(" and "))));
        }
        Ok(if let Some(g) = &self.gamma {
            let gamma =
                g.as_slice().try_into().map_err(|_| ConfigError(format!("`gamma`: need 6 values, got {}", g.len())))?;
            Some(DriverSpec::Gamma { gamma })
        } else if let Some(g4) = self.gamma4 {
            Some(DriverSpec::Gamma { gamma: [0.0, 0.0, 0.0, g4, 0.0, 0.0] })
        } else if let Some(path) = &self.a_file {
            Some(config::load_driver_file(path)?)
        } else if let Some(l) = self.l {
            let samples = self.samples.ok_or_else(|| ConfigError("`driver`: --L needs --samples".into()))?;
            Some(DriverSpec::Ensemble { l, samples })
        } else {
            None
        })
    }

    fn into_config(self, command: Command) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => config::load_file(path)?,
            None => RunConfig::default(),
        };
        let driver = self.driver()?;
        // --samples belongs to the ensemble driver there, to the oracle suite here.
        let samples = if command == Command::Validate { self.samples } else { None };
        if let (Command::Ensemble, Some(n), None) = (command, self.samples, self.l) {
            match &mut cfg.driver {
                Some(DriverSpec::Ensemble { samples, .. }) => *samples = n,
                _ => return Err(ConfigError("`driver`: --samples needs --L".into())),
            }
        }
        let p = match &self.p {
            Some(v) => Some(
                v.as_slice().try_into().map_err(|_| ConfigError(format!("`p`: need 4 weights, got {}", v.len())))?,
            ),
            None => None,
        };
        let flags = RunConfig {
            command: None,
            p,
            driver,
            n: self.n,
            n_list: self.n_list,
            grid: self.grid,
            mode: self.mode,
            q_points: self.q_points,
            l_list: self.l_list,
            domain: self.domain,
            t_scaled: self.t_scaled,
            tol: self.tol,
            samples,
            gap_check: self.gap_check.then_some(true),
            gap_samples: self.gap_samples,
            seed: self.seed,
            jobs: self.jobs,
            out: self.out,
        };
        cfg.merged(flags).resolve(command)
    }
}

fn fail_config(msg: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": "invalid-config", "message": msg }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Sub::Spectrum(f) => (Command::Spectrum, f),
        Sub::Scaling(f) => (Command::Scaling, f),
        Sub::Potential(f) => (Command::Potential, f),
        Sub::Bifurcation(f) => (Command::Bifurcation, f),
        Sub::PhaseDiagram(f) => (Command::PhaseDiagram, f),
        Sub::Ensemble(f) => (Command::Ensemble, f),
        Sub::Classical(f) => (Command::Classical, f),
        Sub::Validate(f) => (Command::Validate, f),
    };
    let cfg = match flags.into_config(command) {
        Ok(c) => c,
        Err(e) => return fail_config(&e.0),
    };
    if let Some(jobs) = cfg.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            return fail_config(&format!("`jobs`: {e}"));
        }
    }
    let root = cfg.out.clone().expect("resolved config has an output directory");
    let mut out = match OutDir::create(&root) {
        Ok(o) => o,
        Err(e) => return fail_config(&format!("`out`: cannot create {}: {e}", root.display())),
    };

    let result = run::execute(&cfg, &mut out);
    let (status, code) = match &result {
        Ok(()) => ("ok", 0),
        Err(RunError::Config(_)) => ("invalid-config", 2),
        Err(RunError::Numerical { .. }) => ("numerical-failure", 3),
    };
    match &result {
        Ok(()) => {}
        Err(RunError::Config(msg)) => {
            eprintln!("{}", json!({ "error": "invalid-config", "message": msg }));
        }
        Err(RunError::Numerical { kind, message }) => {
            let diag = json!({ "error": kind, "command": command, "seed": cfg.seed, "message": message });
            eprintln!("{diag}");
            if let Err(e) = out.json("diagnostic.json", &diag) {
                eprintln!("cannot write diagnostic.json: {e}");
            }
        }
    }
    if let Err(e) = out.manifest(&cfg, status) {
        eprintln!("cannot write manifest: {e}");
        return ExitCode::from(3);
    }
    if code == 0 {
        println!("{}", out.path("manifest.json").display());
    }
    ExitCode::from(code)
}
