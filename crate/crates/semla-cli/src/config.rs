//! Run configuration: defaults, `key = value` config files, flag overrides.

use std::fmt::Write as _;
use std::path::Path;

use semla_core::arch::SemlaConfig;
use semla_core::flow::FlowConfig;
use semla_core::molecule::Vocabulary;
use semla_core::trainer::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct AppConfig {
    pub n_layers: usize,
    pub d_inv: usize,
    pub d_equi: usize,
    pub d_l: usize,
    pub n_heads: usize,
    pub d_edge: usize,
    pub seed: u64,
    pub steps: usize,
    pub schedule_base: f64,
    pub n_mols: usize,
    pub n_atoms: Option<usize>,
    pub atoms_per_batch: usize,
    pub self_cond: bool,
    pub lr: f64,
    pub warmup_steps: usize,
    pub grad_clip: f64,
    pub sigma: f64,
    /// 0 keeps only the final checkpoint.
    pub checkpoint_every: usize,
    pub bench_atoms: usize,
    pub bench_reps: usize,
    pub bench_warmups: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            d_inv: 32,
            d_equi: 8,
            d_l: 8,
            n_heads: 4,
            d_edge: 8,
            seed: 0,
            steps: 200,
            schedule_base: 10.0,
            n_mols: 10,
            n_atoms: None,
            atoms_per_batch: 128,
            self_cond: true,
            lr: 3e-4,
            warmup_steps: 2000,
            grad_clip: 1.0,
            sigma: 0.2,
            checkpoint_every: 0,
            bench_atoms: 32,
            bench_reps: 21,
            bench_warmups: 3,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{value}`")))
}

impl AppConfig {
    /// Applies a `key = value` file on top of the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config {} line {}: expected `key = value`",
                    path.display(),
                    no + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "n_layers" => self.n_layers = parse(key, value)?,
            "d_inv" => self.d_inv = parse(key, value)?,
            "d_equi" => self.d_equi = parse(key, value)?,
            "d_l" => self.d_l = parse(key, value)?,
            "n_heads" => self.n_heads = parse(key, value)?,
            "d_edge" => self.d_edge = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "schedule_base" => self.schedule_base = parse(key, value)?,
            "n_mols" => self.n_mols = parse(key, value)?,
            "n_atoms" => self.n_atoms = Some(parse(key, value)?),
            "atoms_per_batch" => self.atoms_per_batch = parse(key, value)?,
            "self_cond" => self.self_cond = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "bench_atoms" => self.bench_atoms = parse(key, value)?,
            "bench_reps" => self.bench_reps = parse(key, value)?,
            "bench_warmups" => self.bench_warmups = parse(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn model(&self) -> SemlaConfig {
        let vocab = Vocabulary::default();
        SemlaConfig {
            n_layers: self.n_layers,
            d_inv: self.d_inv,
            d_equi: self.d_equi,
            d_l: self.d_l,
            n_heads: self.n_heads,
            d_edge: self.d_edge,
            n_atom_types: vocab.n_atom_types(),
            n_charges: vocab.n_charges(),
            n_bond_kinds: vocab.n_bond_kinds(),
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            flow: FlowConfig {
                sigma: self.sigma,
                self_cond: self.self_cond,
                ..FlowConfig::default()
            },
            lr: self.lr,
            warmup_steps: self.warmup_steps,
            grad_clip: self.grad_clip,
            atoms_per_batch: self.atoms_per_batch,
            seed: self.seed,
        }
    }

    /// One-line snapshot for the manifest.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            if !s.is_empty() {
                s.push_str("; ");
            }
            let _ = write!(s, "{k}={v}");
        };
        put("n_layers", self.n_layers.to_string());
        put("d_inv", self.d_inv.to_string());
        put("d_equi", self.d_equi.to_string());
        put("d_l", self.d_l.to_string());
        put("n_heads", self.n_heads.to_string());
        put("d_edge", self.d_edge.to_string());
        put("seed", self.seed.to_string());
        put("steps", self.steps.to_string());
        put("schedule_base", self.schedule_base.to_string());
        put("n_mols", self.n_mols.to_string());
        put(
            "n_atoms",
            self.n_atoms.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
        );
        put("atoms_per_batch", self.atoms_per_batch.to_string());
        put("self_cond", self.self_cond.to_string());
        put("lr", self.lr.to_string());
        put("warmup_steps", self.warmup_steps.to_string());
        put("grad_clip", self.grad_clip.to_string());
        put("sigma", self.sigma.to_string());
        s
    }
}
