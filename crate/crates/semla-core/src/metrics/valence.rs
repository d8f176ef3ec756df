//! Allowed valence lookup used by the stability metrics.

use std::collections::HashMap;

use crate::molecule::{BondKind, Molecule, Vocabulary};

/// Table version string recorded in reports so that numbers stay comparable.
pub const VALENCE_TABLE_VERSION: &str = "valence-v1";

/// Maps (element symbol, formal charge) to the set of allowed bond-order sums.
///
/// Sums are stored doubled so aromatic halves stay exact integers.
#[derive(Debug, Clone)]
pub struct ValenceTable {
    allowed: HashMap<(String, i8), Vec<u32>>,
}

impl ValenceTable {
    pub fn empty() -> Self {
        Self {
            allowed: HashMap::new(),
        }
    }

    pub fn insert(&mut self, element: &str, charge: i8, sums: &[f64]) {
        let doubled = sums.iter().map(|s| (s * 2.0).round() as u32).collect();
        self.allowed.insert((element.to_string(), charge), doubled);
    }

    /// Whether (element, charge) with the given total bond order is allowed.
    /// Unknown (element, charge) pairs are simply not allowed.
    pub fn is_stable(&self, element: &str, charge: i8, order_sum: f64) -> bool {
        let doubled = (order_sum * 2.0).round() as u32;
        if ((doubled as f64) - order_sum * 2.0).abs() > 1e-9 {
            return false;
        }
        self.allowed
            .get(&(element.to_string(), charge))
            .is_some_and(|sums| sums.contains(&doubled))
    }

    /// Largest allowed bond-order sum for the element across every charge
    /// state, or None when the element is absent from the table.
    pub fn max_order(&self, element: &str) -> Option<f64> {
        self.allowed
            .iter()
            .filter(|((e, _), _)| e == element)
            .flat_map(|(_, sums)| sums.iter())
            .max()
            .map(|&d| d as f64 / 2.0)
    }
}

impl Default for ValenceTable {
    fn default() -> Self {
        let mut t = Self::empty();
        t.insert("H", 0, &[1.0]);
        t.insert("H", 1, &[0.0]);
        t.insert("H", -1, &[0.0]);
        t.insert("C", 0, &[4.0]);
        t.insert("C", 1, &[3.0]);
        t.insert("C", -1, &[3.0]);
        t.insert("N", 0, &[3.0]);
        t.insert("N", 1, &[4.0]);
        t.insert("N", -1, &[2.0]);
        t.insert("O", 0, &[2.0]);
        t.insert("O", 1, &[3.0]);
        t.insert("O", -1, &[1.0]);
        t.insert("F", 0, &[1.0]);
        t.insert("F", -1, &[0.0]);
        t.insert("P", 0, &[3.0, 5.0]);
        t.insert("P", 1, &[4.0]);
        t.insert("S", 0, &[2.0, 4.0, 6.0]);
        t.insert("S", 1, &[3.0, 5.0]);
        t.insert("S", -1, &[1.0]);
        t.insert("Cl", 0, &[1.0]);
        t.insert("Cl", -1, &[0.0]);
        t.insert("Br", 0, &[1.0]);
        t.insert("Br", -1, &[0.0]);
        t
    }
}

/// Per-atom stability flags plus the stable fraction.
pub fn atom_stability(
    mol: &Molecule,
    vocab: &Vocabulary,
    table: &ValenceTable,
) -> (f64, Vec<bool>) {
    let n = mol.n_atoms();
    let mut flags = Vec::with_capacity(n);
    for i in 0..n {
        let element = vocab.atom_symbol(mol.atom_types()[i]);
        let charge = vocab.charge_value(mol.charges()[i]);
        let stable = match (element, charge) {
            (Some(e), Some(c)) => table.is_stable(e, c, mol.bond_order_sum(i)),
            _ => false,
        };
        flags.push(stable);
    }
    let stable_count = flags.iter().filter(|&&f| f).count();
    let fraction = if n == 0 {
        0.0
    } else {
        stable_count as f64 / n as f64
    };
    (fraction, flags)
}

/// A molecule is stable when every atom is stable.
pub fn molecule_stability(mol: &Molecule, vocab: &Vocabulary, table: &ValenceTable) -> bool {
    let (_, flags) = atom_stability(mol, vocab, table);
    !flags.is_empty() && flags.iter().all(|&f| f)
}

/// Relaxed sanity check: no atom exceeds its element's maximum valence in any
/// charge state, and the bond graph is connected.
pub fn validity_lite(mol: &Molecule, vocab: &Vocabulary, table: &ValenceTable) -> bool {
    let n = mol.n_atoms();
    if n == 0 {
        return false;
    }
    for i in 0..n {
        let Some(element) = vocab.atom_symbol(mol.atom_types()[i]) else {
            return false;
        };
        let Some(max) = table.max_order(element) else {
            return false;
        };
        if mol.bond_order_sum(i) > max + 1e-9 {
            return false;
        }
    }
    is_connected(mol)
}

fn is_connected(mol: &Molecule) -> bool {
    let n = mol.n_atoms();
    if n <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = vec![0usize];
    seen[0] = true;
    while let Some(i) = queue.pop() {
        for j in 0..n {
            if !seen[j] && mol.bond(i, j) != BondKind::None {
                seen[j] = true;
                queue.push(j);
            }
        }
    }
    seen.iter().all(|&s| s)
}
