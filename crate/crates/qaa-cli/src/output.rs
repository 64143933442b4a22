use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

pub const MANIFEST_VERSION: u32 = 1;

/// Output directory of one run; remembers what it wrote for the manifest.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

/// 17 significant digits, so every value round-trips.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

impl OutDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv<R: AsRef<[f64]>>(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = R>,
    ) -> io::Result<()> {
        let mut s = header.join(",");
        s.push('\n');
        for row in rows {
            let cells: Vec<String> = row.as_ref().iter().map(|&x| num(x)).collect();
            writeln!(s, "{}", cells.join(",")).expect("string write");
        }
        self.write(name, &s)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        s.push('\n');
        self.write(name, &s)
    }

    fn write(&mut self, name: &str, text: &str) -> io::Result<()> {
        std::fs::write(self.path(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json`: the resolved config, its seed, the run status
    /// and the files produced. No timestamps, so reruns are byte-identical.
    pub fn manifest(&mut self, config: &RunConfig, status: &str) -> io::Result<()> {
        let m = json!({
            "manifest_version": MANIFEST_VERSION,
            "tool": "qaa",
            "version": env!("CARGO_PKG_VERSION"),
            "command": config.command,
            "seed": config.seed,
            "status": status,
            "config": config,
            "outputs": self.written,
        });
        let mut s = serde_json::to_string_pretty(&m).map_err(io::Error::other)?;
        s.push('\n');
        std::fs::write(self.path("manifest.json"), s)
    }
}
