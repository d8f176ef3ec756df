//! Canonical string keys for molecular graphs.
//!
//! Two molecules get the same key exactly when some atom relabeling maps one
//! onto the other with identical elements, charges, and bond kinds.
//! Coordinates are ignored.

use std::collections::BTreeMap;

use crate::molecule::{BondKind, Molecule, Vocabulary};

/// Canonical key: refine labels to a fixed point, then break remaining ties
/// by individualizing each candidate and keeping the smallest serialization.
pub fn canonical_key(mol: &Molecule, vocab: &Vocabulary) -> String {
    let n = mol.n_atoms();
    let mut seed: Vec<Vec<u64>> = (0..n)
        .map(|i| vec![mol.atom_types()[i] as u64, mol.charges()[i] as u64])
        .collect();
    let labels = rank(&mut seed);
    canonical_from(mol, vocab, &labels)
}

fn canonical_from(mol: &Molecule, vocab: &Vocabulary, labels: &[usize]) -> String {
    let labels = refine(mol, labels);
    match first_tied_cell(&labels) {
        None => serialize(mol, vocab, &labels),
        Some(cell_label) => {
            let mut best: Option<String> = None;
            for v in 0..labels.len() {
                if labels[v] != cell_label {
                    continue;
                }
                let split = individualize(&labels, v);
                let key = canonical_from(mol, vocab, &split);
                if best.as_ref().is_none_or(|b| key < *b) {
                    best = Some(key);
                }
            }
            best.expect("tied cell is nonempty")
        }
    }
}

/// Iterated neighborhood refinement: each round a label becomes (old label,
/// sorted multiset of (bond kind, neighbor label)), then ranks are reassigned.
/// Stops when the assignment no longer changes.
fn refine(mol: &Molecule, start: &[usize]) -> Vec<usize> {
    let n = mol.n_atoms();
    let mut labels = start.to_vec();
    loop {
        let mut keys: Vec<Vec<u64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut key = vec![labels[i] as u64];
            let mut edges: Vec<(u64, u64)> = (0..n)
                .filter(|&j| j != i && mol.bond(i, j) != BondKind::None)
                .map(|j| (mol.bond(i, j) as u64, labels[j] as u64))
                .collect();
            edges.sort_unstable();
            for (kind, label) in edges {
                key.push(kind);
                key.push(label);
            }
            keys.push(key);
        }
        let next = rank(&mut keys);
        if next == labels {
            return labels;
        }
        labels = next;
    }
}

/// Dense ranks of the keys in sorted order; equal keys share a rank.
fn rank(keys: &mut [Vec<u64>]) -> Vec<usize> {
    let mut order: BTreeMap<&[u64], usize> = BTreeMap::new();
    for key in keys.iter() {
        order.insert(key, 0);
    }
    let mut next = 0usize;
    for slot in order.values_mut() {
        *slot = next;
        next += 1;
    }
    keys.iter().map(|k| order[k.as_slice()]).collect()
}

/// Smallest label shared by more than one atom, if any.
fn first_tied_cell(labels: &[usize]) -> Option<usize> {
    let mut counts = vec![0usize; labels.len()];
    for &l in labels {
        counts[l] += 1;
    }
    (0..labels.len()).find(|&l| counts[l] > 1)
}

/// Pull one atom out of its cell by giving it a strictly smaller label.
fn individualize(labels: &[usize], v: usize) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| if i == v { 2 * l } else { 2 * l + 1 })
        .collect()
}

/// Atoms in label order (discrete partition, so the order is unique), then
/// the upper-triangle bond list in that order.
fn serialize(mol: &Molecule, vocab: &Vocabulary, labels: &[usize]) -> String {
    let n = mol.n_atoms();
    debug_assert!(first_tied_cell(labels).is_none());
    let mut pos = vec![0usize; n];
    for (atom, &label) in labels.iter().enumerate() {
        pos[label] = atom;
    }
    let atoms: Vec<String> = pos
        .iter()
        .map(|&a| {
            let sym = vocab.atom_symbol(mol.atom_types()[a]).unwrap_or("?");
            let chg = vocab.charge_value(mol.charges()[a]).unwrap_or(i8::MAX);
            format!("{sym}{chg:+}")
        })
        .collect();
    let mut bonds = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let kind = mol.bond(pos[i], pos[j]);
            if kind != BondKind::None {
                bonds.push(format!("{i}-{j}:{}", kind as u8));
            }
        }
    }
    format!("{}|{}", atoms.join(","), bonds.join(","))
}
