//! Append-only run manifests: enough to re-run a command identically.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use crate::error::CliError;

pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub seed: u64,
    pub checkpoint_crc: Option<u64>,
    pub wall_seconds: f64,
    pub nfe: Option<usize>,
}

impl RunManifest {
    fn render(&self) -> String {
        let mut s = String::from("[run]\n");
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config = {}", self.config);
        let _ = writeln!(
            s,
            "checkpoint_crc = {}",
            self.checkpoint_crc
                .map(|c| format!("{c:016x}"))
                .unwrap_or_else(|| "-".into())
        );
        let _ = writeln!(s, "wall_seconds = {:.3}", self.wall_seconds);
        let _ = writeln!(
            s,
            "nfe = {}",
            self.nfe.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
        );
        s.push('\n');
        s
    }

    /// Appends this entry; never truncates what is already there.
    pub fn append(&self, path: &Path) -> Result<(), CliError> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(self.render().as_bytes())?;
        Ok(())
    }
}
