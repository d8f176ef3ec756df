//! Molecular data model: atoms, bonds, charges, and the vocabularies that
//! give categorical indices their meaning.

use rand::Rng;
use thiserror::Error;

/// Number of bond categories (including "none").
pub const BOND_KINDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum BondKind {
    None = 0,
    Single = 1,
    Double = 2,
    Triple = 3,
    Aromatic = 4,
}

impl BondKind {
    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Self::None),
            1 => Some(Self::Single),
            2 => Some(Self::Double),
            3 => Some(Self::Triple),
            4 => Some(Self::Aromatic),
            _ => None,
        }
    }

    /// Contribution to an atom's total bond-order sum.
    pub fn order(self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Single => 1.0,
            Self::Double => 2.0,
            Self::Triple => 3.0,
            Self::Aromatic => 1.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum MoleculeError {
    #[error("molecule must contain at least one atom")]
    Empty,
    #[error("field lengths disagree: {0}")]
    Ragged(&'static str),
    #[error("bond matrix must be N*N, got {got} entries for {n} atoms")]
    BondShape { got: usize, n: usize },
    #[error("bond matrix asymmetric at ({i}, {j})")]
    AsymmetricBond { i: usize, j: usize },
    #[error("bond matrix diagonal must be empty at atom {0}")]
    SelfBond(usize),
    #[error("unknown bond kind {0}")]
    UnknownBondKind(u8),
    #[error("atom type index {index} out of range (vocabulary size {size})")]
    AtomIndex { index: usize, size: usize },
    #[error("charge index {index} out of range (vocabulary size {size})")]
    ChargeIndex { index: usize, size: usize },
    #[error("no unmasked atoms")]
    AllMasked,
    #[error("empty molecule set")]
    EmptySet,
}

/// One molecule: coordinates in Ångström-scale units, categorical atom
/// types and formal charges (indices into a [`Vocabulary`]), and a dense
/// symmetric bond matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    coords: Vec<[f64; 3]>,
    atom_types: Vec<usize>,
    bonds: Vec<u8>,
    charges: Vec<usize>,
}

impl Molecule {
    pub fn new(
        coords: Vec<[f64; 3]>,
        atom_types: Vec<usize>,
        bonds: Vec<u8>,
        charges: Vec<usize>,
    ) -> Result<Self, MoleculeError> {
        let n = coords.len();
        if n == 0 {
            return Err(MoleculeError::Empty);
        }
        if atom_types.len() != n {
            return Err(MoleculeError::Ragged("atom_types"));
        }
        if charges.len() != n {
            return Err(MoleculeError::Ragged("charges"));
        }
        if bonds.len() != n * n {
            return Err(MoleculeError::BondShape {
                got: bonds.len(),
                n,
            });
        }
        for i in 0..n {
            if bonds[i * n + i] != BondKind::None as u8 {
                return Err(MoleculeError::SelfBond(i));
            }
            for j in 0..n {
                if BondKind::from_index(bonds[i * n + j]).is_none() {
                    return Err(MoleculeError::UnknownBondKind(bonds[i * n + j]));
                }
                if bonds[i * n + j] != bonds[j * n + i] {
                    return Err(MoleculeError::AsymmetricBond { i, j });
                }
            }
        }
        Ok(Self {
            coords,
            atom_types,
            bonds,
            charges,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.coords
    }

    pub fn atom_types(&self) -> &[usize] {
        &self.atom_types
    }

    pub fn charges(&self) -> &[usize] {
        &self.charges
    }

    pub fn bonds(&self) -> &[u8] {
        &self.bonds
    }

    pub fn bond(&self, i: usize, j: usize) -> BondKind {
        BondKind::from_index(self.bonds[i * self.n_atoms() + j]).unwrap()
    }

    pub fn set_bond(&mut self, i: usize, j: usize, kind: BondKind) {
        let n = self.n_atoms();
        debug_assert_ne!(i, j);
        self.bonds[i * n + j] = kind as u8;
        self.bonds[j * n + i] = kind as u8;
    }

    /// Total bond-order sum for atom `i` (aromatic bonds count 1.5).
    pub fn bond_order_sum(&self, i: usize) -> f64 {
        let n = self.n_atoms();
        (0..n).map(|j| self.bond(i, j).order()).sum()
    }

    /// Checks that all categorical indices are valid for `vocab`.
    pub fn validate_against(&self, vocab: &Vocabulary) -> Result<(), MoleculeError> {
        for &a in &self.atom_types {
            if a >= vocab.n_atom_types() {
                return Err(MoleculeError::AtomIndex {
                    index: a,
                    size: vocab.n_atom_types(),
                });
            }
        }
        for &c in &self.charges {
            if c >= vocab.n_charges() {
                return Err(MoleculeError::ChargeIndex {
                    index: c,
                    size: vocab.n_charges(),
                });
            }
        }
        Ok(())
    }
}

/// Ordered atom-type symbols and formal-charge values. Categorical indices
/// stored in molecules and checkpoints are meaningless without this, so it
/// is persisted alongside both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    atoms: Vec<String>,
    charges: Vec<i8>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self {
            atoms: ["H", "C", "N", "O", "F", "P", "S", "Cl", "Br"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            charges: vec![-2, -1, 0, 1, 2, 3],
        }
    }
}

impl Vocabulary {
    pub fn new(atoms: Vec<String>, charges: Vec<i8>) -> Self {
        Self { atoms, charges }
    }

    pub fn n_atom_types(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_charges(&self) -> usize {
        self.charges.len()
    }

    pub fn n_bond_kinds(&self) -> usize {
        BOND_KINDS
    }

    /// Index used for padded positions; one past the vocabulary and never a
    /// legal molecule value, so mask violations surface as range errors.
    pub fn atom_pad_index(&self) -> usize {
        self.atoms.len()
    }

    pub fn charge_pad_index(&self) -> usize {
        self.charges.len()
    }

    pub fn bond_pad_index(&self) -> usize {
        BOND_KINDS
    }

    pub fn atom_index(&self, symbol: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a == symbol)
    }

    pub fn atom_symbol(&self, index: usize) -> Option<&str> {
        self.atoms.get(index).map(|s| s.as_str())
    }

    pub fn charge_index(&self, value: i8) -> Option<usize> {
        self.charges.iter().position(|&c| c == value)
    }

    pub fn charge_value(&self, index: usize) -> Option<i8> {
        self.charges.get(index).copied()
    }

    pub fn atom_symbols(&self) -> &[String] {
        &self.atoms
    }

    pub fn charge_values(&self) -> &[i8] {
        &self.charges
    }

    /// Single-line text form used inside checkpoints and manifests.
    pub fn serialize(&self) -> String {
        let charges: Vec<String> = self.charges.iter().map(|c| c.to_string()).collect();
        format!("atoms={};charges={}", self.atoms.join(","), charges.join(","))
    }

    pub fn deserialize(text: &str) -> Option<Self> {
        let mut atoms = None;
        let mut charges = None;
        for part in text.trim().split(';') {
            let (key, value) = part.split_once('=')?;
            match key {
                "atoms" => {
                    atoms = Some(value.split(',').map(|s| s.to_string()).collect::<Vec<_>>())
                }
                "charges" => {
                    charges = Some(
                        value
                            .split(',')
                            .map(|s| s.parse::<i8>())
                            .collect::<Result<Vec<_>, _>>()
                            .ok()?,
                    )
                }
                _ => return None,
            }
        }
        Some(Self {
            atoms: atoms?,
            charges: charges?,
        })
    }
}

/// Subtracts the centroid of the unmasked rows from the unmasked rows.
/// Masked rows are untouched. The centroid is formed with a canonical
/// summation order, so the result is invariant to atom order.
pub fn zero_center(
    coords: &mut [[f64; 3]],
    mask: Option<&[bool]>,
) -> Result<(), MoleculeError> {
    let live: Vec<usize> = (0..coords.len())
        .filter(|&i| mask.map_or(true, |m| m[i]))
        .collect();
    if live.is_empty() {
        return Err(MoleculeError::AllMasked);
    }
    let mut centroid = [0.0; 3];
    let mut buf = Vec::with_capacity(live.len());
    for (d, c) in centroid.iter_mut().enumerate() {
        buf.clear();
        buf.extend(live.iter().map(|&i| coords[i][d]));
        *c = crate::tensor::canonical_sum(&mut buf) / live.len() as f64;
    }
    for &i in &live {
        for d in 0..3 {
            coords[i][d] -= centroid[d];
        }
    }
    Ok(())
}

/// Draws an atom count from the empirical size histogram of `mols`.
pub fn sample_size_distribution<R: Rng + ?Sized>(
    mols: &[Molecule],
    rng: &mut R,
) -> Result<usize, MoleculeError> {
    if mols.is_empty() {
        return Err(MoleculeError::EmptySet);
    }
    let pick = rng.random_range(0..mols.len());
    Ok(mols[pick].n_atoms())
}
