//! Random small molecules with exact valences and relaxed geometries.
//! Used as toy training corpora and as test fixtures.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::metrics::{relax, ForceField};
use crate::molecule::{BondKind, Molecule, Vocabulary};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub min_atoms: usize,
    pub max_atoms: usize,
    /// Largest heavy-atom skeleton attempted before hydrogen fill.
    pub max_heavy: usize,
    /// Chance that an eligible new bond becomes a double bond.
    pub double_bond_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_atoms: 6,
            max_atoms: 12,
            max_heavy: 4,
            double_bond_prob: 0.25,
        }
    }
}

const HEAVY: [(&str, usize); 4] = [("C", 4), ("N", 3), ("O", 2), ("F", 1)];

struct Skeleton {
    elements: Vec<&'static str>,
    capacity: Vec<usize>,
    parent: Vec<Option<(usize, BondKind)>>,
}

/// Random heavy-atom tree: each new atom attaches to a uniformly chosen
/// existing atom that still has free valence.
fn grow_skeleton<R: Rng + ?Sized>(rng: &mut R, n_heavy: usize, cfg: &SynthConfig) -> Skeleton {
    let mut sk = Skeleton {
        elements: Vec::new(),
        capacity: Vec::new(),
        parent: Vec::new(),
    };
    for i in 0..n_heavy {
        let (symbol, valence) = HEAVY[rng.random_range(0..HEAVY.len())];
        if i == 0 {
            sk.elements.push(symbol);
            sk.capacity.push(valence);
            sk.parent.push(None);
            continue;
        }
        let open: Vec<usize> = (0..sk.elements.len())
            .filter(|&j| sk.capacity[j] >= 1)
            .collect();
        if open.is_empty() {
            // Saturated early (e.g. O=O); rejection sampling handles size.
            break;
        }
        let anchor = open[rng.random_range(0..open.len())];
        let double = valence >= 2
            && sk.capacity[anchor] >= 2
            && rng.random_bool(cfg.double_bond_prob);
        let kind = if double {
            BondKind::Double
        } else {
            BondKind::Single
        };
        let used = kind.order() as usize;
        sk.elements.push(symbol);
        sk.capacity.push(valence - used);
        sk.capacity[anchor] -= used;
        sk.parent.push(Some((anchor, kind)));
    }
    sk
}

/// Direction for a new neighbor of `center`: the candidate most separated
/// from the bonds already placed there.
fn pick_direction<R: Rng + ?Sized>(
    rng: &mut R,
    coords: &[[f64; 3]],
    center: usize,
    neighbors: &[usize],
) -> [f64; 3] {
    let mut best = [1.0, 0.0, 0.0];
    let mut best_score = f64::NEG_INFINITY;
    for _ in 0..24 {
        let mut d = [0.0; 3];
        let mut len2 = 0.0;
        while len2 < 1e-4 {
            for c in d.iter_mut() {
                *c = rng.random::<f64>() * 2.0 - 1.0;
            }
            len2 = d.iter().map(|c| c * c).sum();
            if len2 > 1.0 {
                len2 = 0.0;
            }
        }
        let len = len2.sqrt();
        for c in d.iter_mut() {
            *c /= len;
        }
        let score = neighbors
            .iter()
            .map(|&j| {
                let mut dot = 0.0;
                let mut n2 = 0.0;
                for c in 0..3 {
                    let e = coords[j][c] - coords[center][c];
                    dot += e * d[c];
                    n2 += e * e;
                }
                -dot / n2.sqrt().max(1e-9)
            })
            .fold(f64::INFINITY, f64::min);
        if score > best_score {
            best_score = score;
            best = d;
        }
    }
    best
}

fn build_once<R: Rng + ?Sized>(rng: &mut R, cfg: &SynthConfig, vocab: &Vocabulary) -> Molecule {
    let ff = ForceField::default();
    let n_heavy = rng.random_range(1..=cfg.max_heavy);
    let sk = grow_skeleton(rng, n_heavy, cfg);

    // Heavy atoms first, then hydrogens filling every remaining slot.
    let mut elements: Vec<&str> = sk.elements.clone();
    let mut edges: Vec<(usize, usize, BondKind)> = Vec::new();
    for (i, parent) in sk.parent.iter().enumerate() {
        if let Some((p, kind)) = parent {
            edges.push((*p, i, *kind));
        }
    }
    for i in 0..sk.elements.len() {
        for _ in 0..sk.capacity[i] {
            let h = elements.len();
            elements.push("H");
            edges.push((i, h, BondKind::Single));
        }
    }

    let n = elements.len();
    let mut bonds = vec![0u8; n * n];
    for &(i, j, kind) in &edges {
        bonds[i * n + j] = kind as u8;
        bonds[j * n + i] = kind as u8;
    }

    // Coordinates: children placed along repelled directions at rest length,
    // in index order so parents always exist.
    let mut coords = vec![[0.0f64; 3]; n];
    let mut placed_neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(p, child, kind) in edges.iter() {
        let r0 = ff
            .rest_length(elements[p], elements[child], kind)
            .expect("all corpus elements are parameterized");
        let dir = pick_direction(rng, &coords, p, &placed_neighbors[p]);
        for c in 0..3 {
            coords[child][c] = coords[p][c] + r0 * dir[c];
        }
        placed_neighbors[p].push(child);
        placed_neighbors[child].push(p);
    }

    let types = elements
        .iter()
        .map(|s| vocab.atom_index(s).expect("corpus vocabulary"))
        .collect();
    let charge = vocab.charge_index(0).expect("neutral charge");
    let mol = Molecule::new(coords, types, bonds, vec![charge; n]).expect("constructed valid");

    let settled = relax(mol.coords(), &mol, vocab, &ff, 1e-6, 3000).expect("parameterized");
    Molecule::new(
        settled.coords,
        mol.atom_types().to_vec(),
        mol.bonds().to_vec(),
        mol.charges().to_vec(),
    )
    .expect("relaxation preserves shape")
}

/// One random molecule with the configured size bounds (rejection sampled).
pub fn random_molecule<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &SynthConfig,
    vocab: &Vocabulary,
) -> Molecule {
    loop {
        let mol = build_once(rng, cfg, vocab);
        if (cfg.min_atoms..=cfg.max_atoms).contains(&mol.n_atoms()) {
            return mol;
        }
    }
}

/// Deterministic corpus: same seed, same molecules.
pub fn corpus(count: usize, seed: u64, cfg: &SynthConfig, vocab: &Vocabulary) -> Vec<Molecule> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| random_molecule(&mut rng, cfg, vocab))
        .collect()
}
