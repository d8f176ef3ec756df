//! Quality metrics for generated molecule batches: valence stability,
//! light validity, duplicate detection through canonical graph keys, and a
//! surrogate geometry energy with relaxation strain.

pub mod canon;
pub mod energy;
pub mod valence;

use std::collections::HashSet;

pub use canon::canonical_key;
pub use energy::{energy_grad, relax, strain, ForceField, RelaxOutcome, FORCE_FIELD_VERSION};
pub use valence::{
    atom_stability, molecule_stability, validity_lite, ValenceTable, VALENCE_TABLE_VERSION,
};

use crate::molecule::{Molecule, Vocabulary};

/// Per-molecule scores, one row of the report.
#[derive(Debug, Clone)]
pub struct MoleculeRow {
    pub index: usize,
    pub n_atoms: usize,
    pub stable_atom_fraction: f64,
    pub stable: bool,
    pub valid: bool,
    pub energy_per_atom: Option<f64>,
    pub strain_per_atom: Option<f64>,
    pub key: String,
}

/// Batch-level aggregates plus the rows they came from.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub rows: Vec<MoleculeRow>,
    /// Fraction of molecules whose atoms are all stable.
    pub molecule_stability: f64,
    /// Stable atoms over all atoms in the batch.
    pub atom_stability: f64,
    pub validity: f64,
    pub uniqueness: f64,
    /// Fraction of keys absent from the reference set; None without one.
    pub novelty: Option<f64>,
    pub mean_energy: Option<f64>,
    pub mean_strain: Option<f64>,
    /// Molecules whose relaxation diverged and were left out of the means.
    pub strain_excluded: usize,
    pub sample_seconds: Option<f64>,
    /// Model forward passes per molecule during sampling.
    pub nfe: Option<usize>,
    pub valence_version: &'static str,
    pub force_field_version: &'static str,
}

/// Distinct canonical keys over total molecules.
pub fn uniqueness(keys: &[String]) -> f64 {
    if keys.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&String> = keys.iter().collect();
    distinct.len() as f64 / keys.len() as f64
}

/// Fraction of molecules whose key does not appear in the reference set.
pub fn novelty(keys: &[String], reference: &HashSet<String>) -> f64 {
    if keys.is_empty() {
        return 0.0;
    }
    let fresh = keys.iter().filter(|k| !reference.contains(*k)).count();
    fresh as f64 / keys.len() as f64
}

/// Score a batch. `reference` enables the novelty column.
pub fn evaluate(
    molecules: &[Molecule],
    vocab: &Vocabulary,
    table: &ValenceTable,
    ff: &ForceField,
    reference: Option<&HashSet<String>>,
) -> MetricsReport {
    let mut rows = Vec::with_capacity(molecules.len());
    let mut stable_atoms = 0usize;
    let mut total_atoms = 0usize;
    let mut stable_mols = 0usize;
    let mut valid_mols = 0usize;
    let mut energy_sum = 0.0;
    let mut energy_count = 0usize;
    let mut strain_sum = 0.0;
    let mut strain_count = 0usize;
    let mut excluded = 0usize;
    let mut keys = Vec::with_capacity(molecules.len());

    for (index, mol) in molecules.iter().enumerate() {
        let (fraction, flags) = atom_stability(mol, vocab, table);
        let stable = !flags.is_empty() && flags.iter().all(|&f| f);
        let valid = validity_lite(mol, vocab, table);
        let energy_total = energy::energy(mol.coords(), mol, vocab, ff)
            .filter(|e| e.is_finite())
            .map(|e| e / mol.n_atoms() as f64);
        let strain_value = strain(mol, vocab, ff);
        let key = canonical_key(mol, vocab);

        stable_atoms += flags.iter().filter(|&&f| f).count();
        total_atoms += mol.n_atoms();
        stable_mols += stable as usize;
        valid_mols += valid as usize;
        if let Some(e) = energy_total {
            energy_sum += e;
            energy_count += 1;
        }
        match strain_value {
            Some(s) => {
                strain_sum += s;
                strain_count += 1;
            }
            None => excluded += 1,
        }
        keys.push(key.clone());
        rows.push(MoleculeRow {
            index,
            n_atoms: mol.n_atoms(),
            stable_atom_fraction: fraction,
            stable,
            valid,
            energy_per_atom: energy_total,
            strain_per_atom: strain_value,
            key,
        });
    }

    let n = molecules.len();
    let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    MetricsReport {
        molecule_stability: frac(stable_mols),
        atom_stability: if total_atoms == 0 {
            0.0
        } else {
            stable_atoms as f64 / total_atoms as f64
        },
        validity: frac(valid_mols),
        uniqueness: uniqueness(&keys),
        novelty: reference.map(|r| novelty(&keys, r)),
        mean_energy: (energy_count > 0).then(|| energy_sum / energy_count as f64),
        mean_strain: (strain_count > 0).then(|| strain_sum / strain_count as f64),
        strain_excluded: excluded,
        sample_seconds: None,
        nfe: None,
        valence_version: VALENCE_TABLE_VERSION,
        force_field_version: FORCE_FIELD_VERSION,
        rows,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    /// One CSV row per molecule.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,n_atoms,stable_atom_fraction,mol_stable,valid,energy_per_atom,strain_per_atom,key\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.index,
                r.n_atoms,
                r.stable_atom_fraction,
                r.stable,
                r.valid,
                opt(r.energy_per_atom),
                opt(r.strain_per_atom),
                r.key,
            ));
        }
        out
    }

    /// Single-row batch summary.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "mol_stability,atom_stability,validity,uniqueness,novelty,mean_energy,mean_strain,strain_excluded,sample_seconds,nfe,valence_version,force_field_version\n",
        );
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.molecule_stability,
            self.atom_stability,
            self.validity,
            self.uniqueness,
            opt(self.novelty),
            opt(self.mean_energy),
            opt(self.mean_strain),
            self.strain_excluded,
            opt(self.sample_seconds),
            self.nfe.map(|v| v.to_string()).unwrap_or_default(),
            self.valence_version,
            self.force_field_version,
        ));
        out
    }
}
