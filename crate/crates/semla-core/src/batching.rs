//! Padded batch construction and atom-budget bucketing.
//!
//! Batches group molecules of the same atom count so no compute is spent on
//! padding during training. The padded tensor form still supports mixed
//! sizes; the mask marks live atoms.

use crate::molecule::{Molecule, MoleculeError, Vocabulary};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("batch must contain at least one molecule")]
    Empty,
    #[error("molecule with {size} atoms exceeds the batch budget of {budget} atoms")]
    TooLarge { size: usize, budget: usize },
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
}

/// Dense padded view of a set of molecules. Pad positions carry the
/// one-past-vocabulary index and zero coordinates so embedding tables can
/// reserve a dedicated row for them.
#[derive(Debug, Clone)]
pub struct MoleculeBatch {
    pub n_mols: usize,
    pub max_atoms: usize,
    /// `[n_mols * max_atoms]` atom type indices.
    pub atom_types: Vec<usize>,
    /// `[n_mols * max_atoms]` formal charge indices.
    pub charges: Vec<usize>,
    /// `[n_mols * max_atoms * max_atoms]` bond kind indices, symmetric.
    pub bonds: Vec<usize>,
    /// `[n_mols * max_atoms * 3]` coordinates, zero at pad positions.
    pub coords: Vec<f64>,
    /// `[n_mols * max_atoms]` true at live atoms.
    pub mask: Vec<bool>,
    pub sizes: Vec<usize>,
}

impl MoleculeBatch {
    pub fn from_molecules(mols: &[Molecule], vocab: &Vocabulary) -> Result<Self, BatchError> {
        if mols.is_empty() {
            return Err(BatchError::Empty);
        }
        for mol in mols {
            mol.validate_against(vocab)?;
        }
        let n_mols = mols.len();
        let max_atoms = mols.iter().map(Molecule::n_atoms).max().unwrap();
        let mut atom_types = vec![vocab.atom_pad_index(); n_mols * max_atoms];
        let mut charges = vec![vocab.charge_pad_index(); n_mols * max_atoms];
        let mut bonds = vec![vocab.bond_pad_index(); n_mols * max_atoms * max_atoms];
        let mut coords = vec![0.0; n_mols * max_atoms * 3];
        let mut mask = vec![false; n_mols * max_atoms];
        let mut sizes = Vec::with_capacity(n_mols);
        for (b, mol) in mols.iter().enumerate() {
            let n = mol.n_atoms();
            sizes.push(n);
            for i in 0..n {
                atom_types[b * max_atoms + i] = mol.atom_types()[i];
                charges[b * max_atoms + i] = mol.charges()[i];
                mask[b * max_atoms + i] = true;
                for d in 0..3 {
                    coords[(b * max_atoms + i) * 3 + d] = mol.coords()[i][d];
                }
                for j in 0..n {
                    bonds[(b * max_atoms + i) * max_atoms + j] = mol.bond(i, j) as usize;
                }
            }
        }
        Ok(Self {
            n_mols,
            max_atoms,
            atom_types,
            charges,
            bonds,
            coords,
            mask,
            sizes,
        })
    }

    pub fn total_live_atoms(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// Plans one epoch: groups molecule indices by exact atom count, shuffles
/// each group with a seed-determined stream, and cuts groups into batches of
/// `floor(atoms_per_batch / size)` molecules. Every index appears exactly
/// once; within a batch all sizes are equal, so batches carry no padding.
pub fn bucket_batches(
    sizes: &[usize],
    atoms_per_batch: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, BatchError> {
    if sizes.is_empty() {
        return Err(BatchError::Empty);
    }
    let mut buckets: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut sorted: Vec<usize> = (0..sizes.len()).collect();
    sorted.sort_by_key(|&i| (sizes[i], i));
    for idx in sorted {
        let size = sizes[idx];
        if size > atoms_per_batch {
            return Err(BatchError::TooLarge {
                size,
                budget: atoms_per_batch,
            });
        }
        match buckets.last_mut() {
            Some((s, members)) if *s == size => members.push(idx),
            _ => buckets.push((size, vec![idx])),
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut batches = Vec::new();
    for (size, mut members) in buckets {
        members.shuffle(&mut rng);
        let per_batch = atoms_per_batch / size;
        for chunk in members.chunks(per_batch) {
            batches.push(chunk.to_vec());
        }
    }
    Ok(batches)
}
