//! CSV tables with a one-line header, and run manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::fokker_planck::DensityField;
use crate::moments::{MeanState, MomentState};

/// Writes a header line and one comma-separated line per row. Numbers use the shortest
/// round-trip representation, so equal inputs give byte-identical files.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> std::io::Result<()>
where
    R: AsRef<[f64]>,
    I: IntoIterator<Item = R>,
{
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let mut first = true;
        for v in row.as_ref() {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_means(path: &Path, traj: &[MeanState]) -> std::io::Result<()> {
    write_csv(
        path,
        &["t", "m1", "m2"],
        traj.iter().map(|s| [s.t, s.m1, s.m2]),
    )
}

pub fn write_moments(path: &Path, traj: &[MomentState]) -> std::io::Result<()> {
    write_csv(
        path,
        &["t", "m1", "m2", "v1", "v2"],
        traj.iter().map(|s| [s.t, s.m1, s.m2, s.v1, s.v2]),
    )
}

/// Cell centers and values of a field.
pub fn write_field(path: &Path, field: &DensityField) -> std::io::Result<()> {
    write_csv(
        path,
        &["x", "f"],
        field
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| [field.grid.center(i), *v]),
    )
}

/// Record of how an output directory was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub params_hash: String,
    pub seed: u64,
    /// Grid and step settings and anything else worth recording, in insertion order.
    pub settings: Vec<(String, String)>,
    pub version: String,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, params_hash: String, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            params_hash,
            seed,
            settings: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.settings.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "subcommand={}\nparams_hash={}\nseed={}\nversion={}\n",
            self.subcommand, self.params_hash, self.seed, self.version
        );
        for (k, v) in &self.settings {
            s.push_str(&format!("{k}={v}\n"));
        }
        s.push_str(&format!("wall_clock_secs={:.3}\n", self.wall_clock_secs));
        s
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::write(dir.join("manifest.txt"), self.render())
    }
}
