//! Run configuration: a JSON file and command-line flags merged into one
//! resolved, serializable `RunConfig`.

use std::fmt;
use std::path::{Path, PathBuf};

use qaa_core::driver::{DriverMatrix, N_ENTRIES};
use qaa_core::phase_diagram::WeightDomain;
use qaa_core::problem::CostMode;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    Scaling,
    Potential,
    Bifurcation,
    PhaseDiagram,
    Ensemble,
    Classical,
    Validate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

/// Path deformation. `Ensemble` draws random clause drivers instead of fixing one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriverSpec {
    None,
    Gamma { gamma: [f64; 6] },
    Matrix { entries: Vec<f64> },
    Ensemble { l: f64, samples: usize },
}

/// Both the config-file format and the resolved configuration echoed in the
/// manifest. Keys that do not apply to the command are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub driver: Option<DriverSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<CostMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<WeightDomain>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_scaled: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_check: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Reads a config file. A manifest written by a previous run is accepted too:
/// its `config` object is used.
pub fn load_file(path: &Path) -> Result<RunConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let value = match value.get("manifest_version") {
        Some(_) => value.get("config").cloned().unwrap_or_default(),
        None => value,
    };
    serde_json::from_value(value).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

pub fn load_driver_file(path: &Path) -> Result<DriverSpec, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let a: DriverMatrix =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("A-file {}: {e}", path.display())))?;
    Ok(DriverSpec::Matrix { entries: a.upper().to_vec() })
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    /// `top` wins wherever it sets a key.
    pub fn merged(mut self, top: RunConfig) -> RunConfig {
        overlay!(self, top; command, p, driver, n, n_list, grid, mode, q_points, l_list, domain,
                 t_scaled, tol, samples, gap_check, gap_samples, seed, jobs, out);
        self
    }

    fn set_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        macro_rules! collect {
            ($($f:ident),*) => { $( if self.$f.is_some() { keys.push(stringify!($f)); } )* };
        }
        collect!(
            p,
            driver,
            n,
            n_list,
            grid,
            mode,
            q_points,
            l_list,
            domain,
            t_scaled,
            tol,
            samples,
            gap_check,
            gap_samples
        );
        keys
    }

    /// Validates against `command`, fills defaults, and returns the config that
    /// is actually run.
    pub fn resolve(mut self, command: Command) -> Result<RunConfig, ConfigError> {
        if let Some(c) = self.command {
            if c != command {
                return err(format!("`command`: config is for `{c}`, but `{command}` was requested"));
            }
        }
        self.command = Some(command);
        let allowed: &[&str] = match command {
            Command::Spectrum => &["p", "driver", "n", "grid", "mode"],
            Command::Scaling => &["p", "driver", "n_list", "grid", "mode"],
            Command::Potential => &["p", "driver", "grid", "q_points"],
            Command::Bifurcation => &["p", "driver", "grid"],
            Command::PhaseDiagram => &["l_list", "grid", "domain"],
            Command::Ensemble => &["p", "driver", "gap_check", "gap_samples", "n_list", "grid"],
            Command::Classical => &["p", "driver", "t_scaled", "tol"],
            Command::Validate => &["n", "samples"],
        };
        if let Some(k) = self.set_keys().into_iter().find(|k| !allowed.contains(k)) {
            return err(format!("`{k}`: not a setting of `{command}`"));
        }
        self.seed.get_or_insert(0);
        if self.jobs == Some(0) {
            return err("`jobs`: must be at least 1");
        }
        self.out.get_or_insert_with(|| PathBuf::from("qaa-out"));

        if allowed.contains(&"p") {
            match self.p {
                None => return err("`p`: required (four clause weights, e.g. --p 0,3,1,1)"),
                Some(p) if p.iter().any(|x| !x.is_finite()) => return err("`p`: weights must be finite"),
                _ => {}
            }
        }
        let driver = self.driver.get_or_insert(DriverSpec::None).clone();
        match (&driver, command) {
            (DriverSpec::Ensemble { .. }, Command::Ensemble) => {}
            (_, Command::Ensemble) => return err("`driver`: ensemble needs an ensemble driver (--L and --samples)"),
            (DriverSpec::Ensemble { .. }, _) => return err("`driver`: ensemble drivers only apply to `ensemble`"),
            _ => {}
        }
        match &driver {
            DriverSpec::Gamma { gamma } if gamma.iter().any(|g| !g.is_finite()) => {
                return err("`driver.gamma`: coefficients must be finite")
            }
            DriverSpec::Matrix { entries } if entries.len() != N_ENTRIES => {
                return err(format!("`driver.entries`: need {N_ENTRIES} upper-triangle entries, got {}", entries.len()))
            }
            DriverSpec::Matrix { entries } if entries.iter().any(|x| !x.is_finite()) => {
                return err("`driver.entries`: entries must be finite")
            }
            DriverSpec::Ensemble { l, samples } if !(*l > 0.0 && l.is_finite()) || *samples == 0 => {
                return err("`driver`: ensemble needs L > 0 and samples > 0")
            }
            _ => {}
        }
        if !allowed.contains(&"driver") {
            self.driver = None;
        }

        match command {
            Command::Spectrum => {
                let n = *self.n.get_or_insert(60);
                if n < 3 {
                    return err("`n`: must be at least 3");
                }
                self.default_grid(201, 3)?;
                self.mode.get_or_insert(CostMode::Asymptotic);
            }
            Command::Scaling => {
                self.n_list.get_or_insert_with(|| (20..=100).step_by(10).collect());
                self.check_n_list(5, usize::MAX)?;
                self.default_grid(201, 3)?;
                self.mode.get_or_insert(CostMode::Asymptotic);
            }
            Command::Potential => {
                self.default_grid(101, 2)?;
                let q = *self.q_points.get_or_insert(201);
                if q < 2 {
                    return err("`q_points`: must be at least 2");
                }
            }
            Command::Bifurcation => self.default_grid(401, 3)?,
            Command::PhaseDiagram => {
                let ls = self.l_list.get_or_insert_with(|| vec![3.0]);
                if ls.is_empty() || ls.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return err("`l_list`: need one or more positive ranges");
                }
                self.default_grid(21, 5)?;
                self.domain.get_or_insert(WeightDomain::ZeroToL);
            }
            Command::Ensemble => {
                if *self.gap_check.get_or_insert(false) {
                    let s = *self.gap_samples.get_or_insert(40);
                    if s == 0 || s > 1000 {
                        return err("`gap_samples`: must be in 1..=1000");
                    }
                    self.n_list.get_or_insert_with(|| vec![20, 30, 40, 50, 60]);
                    self.check_n_list(5, 200)?;
                    self.default_grid(101, 3)?;
                } else if self.gap_samples.is_some() || self.n_list.is_some() || self.grid.is_some() {
                    return err("`gap_check`: gap_samples, n_list and grid need --gap-check");
                }
            }
            Command::Classical => {
                let t = *self.t_scaled.get_or_insert(1000.0);
                if !(t > 0.0 && t.is_finite()) {
                    return err("`t_scaled`: must be positive");
                }
                let tol = *self.tol.get_or_insert(1e-12);
                if !(tol > 0.0 && tol < 1.0) {
                    return err("`tol`: must be in (0, 1)");
                }
            }
            Command::Validate => {
                let n = *self.n.get_or_insert(10);
                if !(3..=qaa_core::driver::DENSE_MAX_N).contains(&n) {
                    return err(format!("`n`: must be in 3..={}", qaa_core::driver::DENSE_MAX_N));
                }
                if *self.samples.get_or_insert(20) == 0 {
                    return err("`samples`: must be at least 1");
                }
            }
        }
        Ok(self)
    }

    fn default_grid(&mut self, default: usize, min: usize) -> Result<(), ConfigError> {
        if *self.grid.get_or_insert(default) < min {
            return err(format!("`grid`: must be at least {min}"));
        }
        Ok(())
    }

    fn check_n_list(&self, min_len: usize, max_n: usize) -> Result<(), ConfigError> {
        let ns = self.n_list.as_deref().unwrap_or_default();
        if ns.len() < min_len || ns.iter().any(|&n| n < 20 || n > max_n) {
            let upper = if max_n == usize::MAX { String::new() } else { format!(" and <= {max_n}") };
            return err(format!("`n_list`: need at least {min_len} sizes, each >= 20{upper}"));
        }
        if ns.windows(2).any(|w| w[1] <= w[0]) {
            return err("`n_list`: sizes must be strictly increasing");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn farhi() -> RunConfig {
        RunConfig { p: Some([0.0, 3.0, 1.0, 1.0]), ..Default::default() }
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig { n: Some(20), seed: Some(4), ..farhi() };
        let flags = RunConfig { n: Some(30), ..Default::default() };
        let r = file.merged(flags).resolve(Command::Spectrum).unwrap();
        assert_eq!((r.n, r.seed, r.grid), (Some(30), Some(4), Some(201)));
        assert_eq!(r.driver, Some(DriverSpec::None));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig { driver: Some(DriverSpec::Gamma { gamma: [0.0, 0.0, 0.0, -8.0, 0.0, 0.0] }), ..farhi() };
        let r = c.resolve(Command::Spectrum).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.resolve(Command::Spectrum).unwrap(), r);
    }

    #[test]
    fn rejects_foreign_and_unknown_keys() {
        let e = RunConfig { t_scaled: Some(5.0), ..farhi() }.resolve(Command::Spectrum).unwrap_err();
        assert!(e.0.contains("t_scaled"));
        let e = serde_json::from_str::<RunConfig>(r#"{"p":[0,3,1,1],"bogus":1}"#).unwrap_err();
        assert!(e.to_string().contains("bogus"));
        assert!(farhi().resolve(Command::Ensemble).is_err());
        assert!(RunConfig::default().resolve(Command::Spectrum).unwrap_err().0.contains("`p`"));
    }

    #[test]
    fn command_mismatch() {
        let c = RunConfig { command: Some(Command::Scaling), ..farhi() };
        assert!(c.resolve(Command::Spectrum).is_err());
    }
}
