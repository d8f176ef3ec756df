//! Hand-labeled scoring fixtures: 50 small molecules whose stability,
//! validity, and graph-duplicate structure were worked out by hand against
//! the strict valence table. Labels are frozen literals on purpose; the
//! tests recompute aggregates from them with the same arithmetic the
//! scorer uses, so every comparison can demand exact equality.
//!
//! Label conventions:
//! - `stable_atoms`: atoms whose bond-order sum is allowed for their
//!   (element, charge) row; `stable` means all of them are.
//! - `valid`: no atom exceeds its element's maximum order over any charge
//!   and the bond graph is connected.
//! - `graph_class`: two entries share a class iff their labeled graphs are
//!   isomorphic (coordinates never matter).

use semla_core::molecule::{BondKind, Molecule, Vocabulary};

pub struct GoldenEntry {
    pub name: &'static str,
    pub molecule: Molecule,
    pub stable_atoms: usize,
    pub stable: bool,
    pub valid: bool,
    pub graph_class: usize,
}

struct Spec {
    name: &'static str,
    symbols: &'static [&'static str],
    charges: &'static [i8],
    bonds: &'static [(usize, usize, BondKind)],
    coords: &'static [[f64; 3]],
    stable_atoms: usize,
    stable: bool,
    valid: bool,
    graph_class: usize,
}

fn build(spec: &Spec, vocab: &Vocabulary) -> GoldenEntry {
    let n = spec.symbols.len();
    assert_eq!(spec.charges.len(), n, "{}: charges", spec.name);
    assert_eq!(spec.coords.len(), n, "{}: coords", spec.name);
    let types = spec
        .symbols
        .iter()
        .map(|s| vocab.atom_index(s).expect("known element"))
        .collect();
    let charges = spec
        .charges
        .iter()
        .map(|&c| vocab.charge_index(c).expect("known charge"))
        .collect();
    let mut bonds = vec![0u8; n * n];
    for &(i, j, kind) in spec.bonds {
        bonds[i * n + j] = kind as u8;
        bonds[j * n + i] = kind as u8;
    }
    GoldenEntry {
        name: spec.name,
        molecule: Molecule::new(spec.coords.to_vec(), types, bonds, charges)
            .expect("well-formed fixture"),
        stable_atoms: spec.stable_atoms,
        stable: spec.stable,
        valid: spec.valid,
        graph_class: spec.graph_class,
    }
}

use BondKind::{Aromatic, Double, Single, Triple};

const S: BondKind = Single;

static SPECS: &[Spec] = &[
    // saturated neutral standards
    Spec {
        name: "methane",
        symbols: &["C", "H", "H", "H", "H"],
        charges: &[0; 5],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [0.63, 0.63, 0.63],
            [-0.63, -0.63, 0.63],
            [-0.63, 0.63, -0.63],
            [0.63, -0.63, -0.63],
        ],
        stable_atoms: 5,
        stable: true,
        valid: true,
        graph_class: 0,
    },
    Spec {
        name: "methane_shifted",
        symbols: &["C", "H", "H", "H", "H"],
        charges: &[0; 5],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S)],
        coords: &[
            [1.5, -0.7, 2.0],
            [2.13, -0.07, 2.63],
            [0.87, -1.33, 2.63],
            [0.87, -0.07, 1.37],
            [2.13, -1.33, 1.37],
        ],
        stable_atoms: 5,
        stable: true,
        valid: true,
        graph_class: 0,
    },
    Spec {
        name: "methane_rotated",
        symbols: &["C", "H", "H", "H", "H"],
        charges: &[0; 5],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [-0.66, 0.66, 0.66],
            [0.66, -0.66, 0.66],
            [-0.66, -0.66, -0.66],
            [0.66, 0.66, -0.66],
        ],
        stable_atoms: 5,
        stable: true,
        valid: true,
        graph_class: 0,
    },
    Spec {
        name: "ammonia",
        symbols: &["N", "H", "H", "H"],
        charges: &[0; 4],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [0.94, 0.0, -0.33],
            [-0.47, 0.81, -0.33],
            [-0.47, -0.81, -0.33],
        ],
        stable_atoms: 4,
        stable: true,
        valid: true,
        graph_class: 1,
    },
    Spec {
        name: "water",
        symbols: &["O", "H", "H"],
        charges: &[0; 3],
        bonds: &[(0, 1, S), (0, 2, S)],
        coords: &[[0.0, 0.0, 0.0], [0.76, 0.59, 0.0], [-0.76, 0.59, 0.0]],
        stable_atoms: 3,
        stable: true,
        valid: true,
        graph_class: 2,
    },
    Spec {
        name: "water_copy",
        symbols: &["O", "H", "H"],
        charges: &[0; 3],
        bonds: &[(0, 1, S), (0, 2, S)],
        coords: &[[3.0, 1.0, -2.0], [3.76, 1.59, -2.0], [2.24, 1.59, -2.0]],
        stable_atoms: 3,
        stable: true,
        valid: true,
        graph_class: 2,
    },
    Spec {
        name: "water_stretched",
        symbols: &["O", "H", "H"],
        charges: &[0; 3],
        bonds: &[(0, 1, S), (0, 2, S)],
        coords: &[[0.0, 0.0, 0.0], [1.2, 0.0, 0.0], [-0.3, 1.16, 0.0]],
        stable_atoms: 3,
        stable: true,
        valid: true,
        graph_class: 2,
    },
    Spec {
        name: "hydrogen_fluoride",
        symbols: &["F", "H"],
        charges: &[0; 2],
        bonds: &[(0, 1, S)],
        coords: &[[0.0, 0.0, 0.0], [0.92, 0.0, 0.0]],
        stable_atoms: 2,
        stable: true,
        valid: true,
        graph_class: 3,
    },
    Spec {
        name: "ethane",
        symbols: &["C", "C", "H", "H", "H", "H", "H", "H"],
        charges: &[0; 8],
        bonds: &[
            (0, 1, S),
            (0, 2, S),
            (0, 3, S),
            (0, 4, S),
            (1, 5, S),
            (1, 6, S),
            (1, 7, S),
        ],
        coords: &[
            [0.0, 0.0, 0.77],
            [0.0, 0.0, -0.77],
            [1.02, 0.0, 1.16],
            [-0.51, 0.88, 1.16],
            [-0.51, -0.88, 1.16],
            [-1.02, 0.0, -1.16],
            [0.51, 0.88, -1.16],
            [0.51, -0.88, -1.16],
        ],
        stable_atoms: 8,
        stable: true,
        valid: true,
        graph_class: 4,
    },
    Spec {
        name: "ethene",
        symbols: &["C", "C", "H", "H", "H", "H"],
        charges: &[0; 6],
        bonds: &[(0, 1, Double), (0, 2, S), (0, 3, S), (1, 4, S), (1, 5, S)],
        coords: &[
            [0.0, 0.0, 0.67],
            [0.0, 0.0, -0.67],
            [0.92, 0.0, 1.23],
            [-0.92, 0.0, 1.23],
            [0.92, 0.0, -1.23],
            [-0.92, 0.0, -1.23],
        ],
        stable_atoms: 6,
        stable: true,
        valid: true,
        graph_class: 5,
    },
    Spec {
        name: "ethyne",
        symbols: &["C", "C", "H", "H"],
        charges: &[0; 4],
        bonds: &[(0, 1, Triple), (0, 2, S), (1, 3, S)],
        coords: &[
            [0.0, 0.0, 0.6],
            [0.0, 0.0, -0.6],
            [0.0, 0.0, 1.66],
            [0.0, 0.0, -1.66],
        ],
        stable_atoms: 4,
        stable: true,
        valid: true,
        graph_class: 6,
    },
    Spec {
        name: "benzene",
        symbols: &["C", "C", "C", "C", "C", "C", "H", "H", "H", "H", "H", "H"],
        charges: &[0; 12],
        bonds: &[
            (0, 1, Aromatic),
            (1, 2, Aromatic),
            (2, 3, Aromatic),
            (3, 4, Aromatic),
            (4, 5, Aromatic),
            (5, 0, Aromatic),
            (0, 6, S),
            (1, 7, S),
            (2, 8, S),
            (3, 9, S),
            (4, 10, S),
            (5, 11, S),
        ],
        coords: &[
            [1.39, 0.0, 0.0],
            [0.7, 1.2, 0.0],
            [-0.7, 1.2, 0.0],
            [-1.39, 0.0, 0.0],
            [-0.7, -1.2, 0.0],
            [0.7, -1.2, 0.0],
            [2.48, 0.0, 0.0],
            [1.24, 2.15, 0.0],
            [-1.24, 2.15, 0.0],
            [-2.48, 0.0, 0.0],
            [-1.24, -2.15, 0.0],
            [1.24, -2.15, 0.0],
        ],
        stable_atoms: 12,
        stable: true,
        valid: true,
        graph_class: 7,
    },
    Spec {
        name: "benzene_copy",
        symbols: &["C", "C", "C", "C", "C", "C", "H", "H", "H", "H", "H", "H"],
        charges: &[0; 12],
        bonds: &[
            (0, 1, Aromatic),
            (1, 2, Aromatic),
            (2, 3, Aromatic),
            (3, 4, Aromatic),
            (4, 5, Aromatic),
            (5, 0, Aromatic),
            (0, 6, S),
            (1, 7, S),
            (2, 8, S),
            (3, 9, S),
            (4, 10, S),
            (5, 11, S),
        ],
        coords: &[
            [1.39, 0.0, 5.0],
            [0.7, 1.2, 5.0],
            [-0.7, 1.2, 5.0],
            [-1.39, 0.0, 5.0],
            [-0.7, -1.2, 5.0],
            [0.7, -1.2, 5.0],
            [2.48, 0.0, 5.0],
            [1.24, 2.15, 5.0],
            [-1.24, 2.15, 5.0],
            [-2.48, 0.0, 5.0],
            [-1.24, -2.15, 5.0],
            [1.24, -2.15, 5.0],
        ],
        stable_atoms: 12,
        stable: true,
        valid: true,
        graph_class: 7,
    },
    Spec {
        name: "formaldehyde",
        symbols: &["C", "O", "H", "H"],
        charges: &[0; 4],
        bonds: &[(0, 1, Double), (0, 2, S), (0, 3, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.21],
            [0.94, 0.0, -0.54],
            [-0.94, 0.0, -0.54],
        ],
        stable_atoms: 4,
        stable: true,
        valid: true,
        graph_class: 8,
    },
    Spec {
        name: "methanol",
        symbols: &["C", "O", "H", "H", "H", "H"],
        charges: &[0; 6],
        bonds: &[(0, 1, S), (1, 2, S), (0, 3, S), (0, 4, S), (0, 5, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.43, 0.0, 0.0],
            [1.76, 0.89, 0.0],
            [-0.39, -1.02, 0.0],
            [-0.39, 0.51, 0.89],
            [-0.39, 0.51, -0.89],
        ],
        stable_atoms: 6,
        stable: true,
        valid: true,
        graph_class: 9,
    },
    Spec {
        name: "methylamine",
        symbols: &["C", "N", "H", "H", "H", "H", "H"],
        charges: &[0; 7],
        bonds: &[
            (0, 1, S),
            (0, 2, S),
            (0, 3, S),
            (0, 4, S),
            (1, 5, S),
            (1, 6, S),
        ],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.47, 0.0, 0.0],
            [-0.37, -1.03, 0.0],
            [-0.37, 0.51, 0.89],
            [-0.37, 0.51, -0.89],
            [1.85, -0.95, 0.0],
            [1.85, 0.48, 0.83],
        ],
        stable_atoms: 7,
        stable: true,
        valid: true,
        graph_class: 10,
    },
    Spec {
        name: "hydrogen_cyanide",
        symbols: &["H", "C", "N"],
        charges: &[0; 3],
        bonds: &[(0, 1, S), (1, 2, Triple)],
        coords: &[[0.0, 0.0, -1.07], [0.0, 0.0, 0.0], [0.0, 0.0, 1.15]],
        stable_atoms: 3,
        stable: true,
        valid: true,
        graph_class: 11,
    },
    Spec {
        name: "carbon_dioxide",
        symbols: &["O", "C", "O"],
        charges: &[0; 3],
        bonds: &[(0, 1, Double), (1, 2, Double)],
        coords: &[[0.0, 0.0, -1.16], [0.0, 0.0, 0.0], [0.0, 0.0, 1.16]],
        stable_atoms: 3,
        stable: true,
        valid: true,
        graph_class: 12,
    },
    Spec {
        name: "hydrogen_peroxide",
        symbols: &["O", "O", "H", "H"],
        charges: &[0; 4],
        bonds: &[(0, 1, S), (0, 2, S), (1, 3, S)],
        coords: &[
            [0.0, 0.73, 0.0],
            [0.0, -0.73, 0.0],
            [0.85, 0.95, 0.3],
            [-0.85, -0.95, 0.3],
        ],
        stable_atoms: 4,
        stable: true,
        valid: true,
        graph_class: 13,
    },
    Spec {
        name: "hydrazine",
        symbols: &["N", "N", "H", "H", "H", "H"],
        charges: &[0; 6],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (1, 4, S), (1, 5, S)],
        coords: &[
            [0.0, 0.72, 0.0],
            [0.0, -0.72, 0.0],
            [0.9, 1.05, 0.25],
            [-0.72, 1.05, -0.55],
            [0.9, -1.05, 0.25],
            [-0.72, -1.05, -0.55],
        ],
        stable_atoms: 6,
        stable: true,
        valid: true,
        graph_class: 14,
    },
    Spec {
        name: "methanimine",
        symbols: &["C", "N", "H", "H", "H"],
        charges: &[0; 5],
        bonds: &[(0, 1, Double), (0, 2, S), (0, 3, S), (1, 4, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.27, 0.0, 0.0],
            [-0.55, 0.95, 0.0],
            [-0.55, -0.95, 0.0],
            [1.85, 0.85, 0.0],
        ],
        stable_atoms: 5,
        stable: true,
        valid: true,
        graph_class: 15,
    },
    Spec {
        name: "formic_acid",
        symbols: &["C", "O", "O", "H", "H"],
        charges: &[0; 5],
        bonds: &[(0, 1, Double), (0, 2, S), (0, 3, S), (2, 4, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [0.63, 1.03, 0.0],
            [0.63, -1.03, 0.0],
            [-1.1, 0.0, 0.0],
            [1.6, -1.03, 0.0],
        ],
        stable_atoms: 5,
        stable: true,
        valid: true,
        graph_class: 16,
    },
    Spec {
        name: "acetonitrile",
        symbols: &["C", "C", "N", "H", "H", "H"],
        charges: &[0; 6],
        bonds: &[(0, 1, S), (1, 2, Triple), (0, 3, S), (0, 4, S), (0, 5, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.46, 0.0, 0.0],
            [2.62, 0.0, 0.0],
            [-0.37, -1.03, 0.0],
            [-0.37, 0.51, 0.89],
            [-0.37, 0.51, -0.89],
        ],
        stable_atoms: 6,
        stable: true,
        valid: true,
        graph_class: 17,
    },
    // lone aromatic bond: order sums land on 3.5, which no carbon row allows
    Spec {
        name: "aromatic_stub",
        symbols: &["C", "C", "H", "H", "H", "H"],
        charges: &[0; 6],
        bonds: &[(0, 1, Aromatic), (0, 2, S), (0, 3, S), (1, 4, S), (1, 5, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.4, 0.0, 0.0],
            [-0.55, 0.95, 0.0],
            [-0.55, -0.95, 0.0],
            [1.95, 0.95, 0.0],
            [1.95, -0.95, 0.0],
        ],
        stable_atoms: 4,
        stable: false,
        valid: true,
        graph_class: 18,
    },
    Spec {
        name: "pyridine",
        symbols: &["N", "C", "C", "C", "C", "C", "H", "H", "H", "H", "H"],
        charges: &[0; 11],
        bonds: &[
            (0, 1, Aromatic),
            (1, 2, Aromatic),
            (2, 3, Aromatic),
            (3, 4, Aromatic),
            (4, 5, Aromatic),
            (5, 0, Aromatic),
            (1, 6, S),
            (2, 7, S),
            (3, 8, S),
            (4, 9, S),
            (5, 10, S),
        ],
        coords: &[
            [1.37, 0.0, 0.0],
            [0.69, 1.19, 0.0],
            [-0.69, 1.19, 0.0],
            [-1.37, 0.0, 0.0],
            [-0.69, -1.19, 0.0],
            [0.69, -1.19, 0.0],
            [1.23, 2.12, 0.0],
            [-1.23, 2.12, 0.0],
            [-2.45, 0.0, 0.0],
            [-1.23, -2.12, 0.0],
            [1.23, -2.12, 0.0],
        ],
        stable_atoms: 11,
        stable: true,
        valid: true,
        graph_class: 19,
    },
    // charged but allowed rows
    Spec {
        name: "ammonium",
        symbols: &["N", "H", "H", "H", "H"],
        charges: &[1, 0, 0, 0, 0],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [0.59, 0.59, 0.59],
            [-0.59, -0.59, 0.59],
            [-0.59, 0.59, -0.59],
            [0.59, -0.59, -0.59],
        ],
        stable_atoms: 5,
        stable: true,
        valid: true,
        graph_class: 20,
    },
    Spec {
        name: "hydroxide",
        symbols: &["O", "H"],
        charges: &[-1, 0],
        bonds: &[(0, 1, S)],
        coords: &[[0.0, 0.0, 0.0], [0.97, 0.0, 0.0]],
        stable_atoms: 2,
        stable: true,
        valid: true,
        graph_class: 21,
    },
    Spec {
        name: "hydronium",
        symbols: &["O", "H", "H", "H"],
        charges: &[1, 0, 0, 0],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [0.94, 0.0, -0.3],
            [-0.47, 0.81, -0.3],
            [-0.47, -0.81, -0.3],
        ],
        stable_atoms: 4,
        stable: true,
        valid: true,
        graph_class: 22,
    },
    Spec {
        name: "methyl_anion",
        symbols: &["C", "H", "H", "H"],
        charges: &[-1, 0, 0, 0],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.04, 0.0, -0.3],
            [-0.52, 0.9, -0.3],
            [-0.52, -0.9, -0.3],
        ],
        stable_atoms: 4,
        stable: true,
        valid: true,
        graph_class: 23,
    },
    Spec {
        name: "methyl_cation",
        symbols: &["C", "H", "H", "H"],
        charges: &[1, 0, 0, 0],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.09, 0.0, 0.0],
            [-0.54, 0.94, 0.0],
            [-0.54, -0.94, 0.0],
        ],
        stable_atoms: 4,
        stable: true,
        valid: true,
        graph_class: 24,
    },
    Spec {
        name: "iminium",
        symbols: &["C", "N", "H", "H", "H", "H"],
        charges: &[0, 1, 0, 0, 0, 0],
        bonds: &[(0, 1, Double), (0, 2, S), (0, 3, S), (1, 4, S), (1, 5, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.29, 0.0, 0.0],
            [-0.55, 0.95, 0.0],
            [-0.55, -0.95, 0.0],
            [1.85, 0.85, 0.0],
            [1.85, -0.85, 0.0],
        ],
        stable_atoms: 6,
        stable: true,
        valid: true,
        graph_class: 25,
    },
    // the table reasons about order sums only, so O=O counts as stable
    Spec {
        name: "dioxygen",
        symbols: &["O", "O"],
        charges: &[0; 2],
        bonds: &[(0, 1, Double)],
        coords: &[[0.0, 0.0, 0.0], [1.21, 0.0, 0.0]],
        stable_atoms: 2,
        stable: true,
        valid: true,
        graph_class: 26,
    },
    // carbon monoxide drawn as the zwitterion: both rows allow order 3
    Spec {
        name: "carbon_monoxide_zwitterion",
        symbols: &["C", "O"],
        charges: &[-1, 1],
        bonds: &[(0, 1, Triple)],
        coords: &[[0.0, 0.0, 0.0], [1.13, 0.0, 0.0]],
        stable_atoms: 2,
        stable: true,
        valid: true,
        graph_class: 27,
    },
    Spec {
        name: "fluoride",
        symbols: &["F"],
        charges: &[-1],
        bonds: &[],
        coords: &[[0.0, 0.0, 0.0]],
        stable_atoms: 1,
        stable: true,
        valid: true,
        graph_class: 28,
    },
    // (element, charge) rows missing from the table are unstable by policy
    Spec {
        name: "methylene_dianion",
        symbols: &["C", "H", "H"],
        charges: &[-2, 0, 0],
        bonds: &[(0, 1, S), (0, 2, S)],
        coords: &[[0.0, 0.0, 0.0], [0.95, 0.4, 0.0], [-0.95, 0.4, 0.0]],
        stable_atoms: 2,
        stable: false,
        valid: true,
        graph_class: 29,
    },
    Spec {
        name: "proton",
        symbols: &["H"],
        charges: &[1],
        bonds: &[],
        coords: &[[0.0, 0.0, 0.0]],
        stable_atoms: 1,
        stable: true,
        valid: true,
        graph_class: 30,
    },
    Spec {
        name: "hydrogen_chloride",
        symbols: &["Cl", "H"],
        charges: &[0; 2],
        bonds: &[(0, 1, S)],
        coords: &[[0.0, 0.0, 0.0], [1.27, 0.0, 0.0]],
        stable_atoms: 2,
        stable: true,
        valid: true,
        graph_class: 31,
    },
    Spec {
        name: "hydrogen_sulfide",
        symbols: &["S", "H", "H"],
        charges: &[0; 3],
        bonds: &[(0, 1, S), (0, 2, S)],
        coords: &[[0.0, 0.0, 0.0], [1.2, 0.8, 0.0], [-1.2, 0.8, 0.0]],
        stable_atoms: 3,
        stable: true,
        valid: true,
        graph_class: 32,
    },
    Spec {
        name: "sulfur_dioxide",
        symbols: &["S", "O", "O"],
        charges: &[0; 3],
        bonds: &[(0, 1, Double), (0, 2, Double)],
        coords: &[[0.0, 0.0, 0.0], [1.24, 0.72, 0.0], [-1.24, 0.72, 0.0]],
        stable_atoms: 3,
        stable: true,
        valid: true,
        graph_class: 33,
    },
    Spec {
        name: "phosphine",
        symbols: &["P", "H", "H", "H"],
        charges: &[0; 4],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.33, 0.0, -0.5],
            [-0.66, 1.15, -0.5],
            [-0.66, -1.15, -0.5],
        ],
        stable_atoms: 4,
        stable: true,
        valid: true,
        graph_class: 34,
    },
    Spec {
        name: "phosphorus_pentafluoride",
        symbols: &["P", "F", "F", "F", "F", "F"],
        charges: &[0; 6],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S), (0, 5, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.57, 0.0, 0.0],
            [-0.78, 1.36, 0.0],
            [-0.78, -1.36, 0.0],
            [0.0, 0.0, 1.58],
            [0.0, 0.0, -1.58],
        ],
        stable_atoms: 6,
        stable: true,
        valid: true,
        graph_class: 35,
    },
    Spec {
        name: "sulfur_hexafluoride",
        symbols: &["S", "F", "F", "F", "F", "F", "F"],
        charges: &[0; 7],
        bonds: &[
            (0, 1, S),
            (0, 2, S),
            (0, 3, S),
            (0, 4, S),
            (0, 5, S),
            (0, 6, S),
        ],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.56, 0.0, 0.0],
            [-1.56, 0.0, 0.0],
            [0.0, 1.56, 0.0],
            [0.0, -1.56, 0.0],
            [0.0, 0.0, 1.56],
            [0.0, 0.0, -1.56],
        ],
        stable_atoms: 7,
        stable: true,
        valid: true,
        graph_class: 36,
    },
    Spec {
        name: "bromomethane",
        symbols: &["C", "Br", "H", "H", "H"],
        charges: &[0; 5],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.93, 0.0, 0.0],
            [-0.36, -1.03, 0.0],
            [-0.36, 0.51, 0.89],
            [-0.36, 0.51, -0.89],
        ],
        stable_atoms: 5,
        stable: true,
        valid: true,
        graph_class: 37,
    },
    Spec {
        name: "methanethiol",
        symbols: &["C", "S", "H", "H", "H", "H"],
        charges: &[0; 6],
        bonds: &[(0, 1, S), (1, 2, S), (0, 3, S), (0, 4, S), (0, 5, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.82, 0.0, 0.0],
            [2.2, 1.25, 0.0],
            [-0.37, -1.03, 0.0],
            [-0.37, 0.51, 0.89],
            [-0.37, 0.51, -0.89],
        ],
        stable_atoms: 6,
        stable: true,
        valid: true,
        graph_class: 38,
    },
    // open-shell shapes the table rejects
    Spec {
        name: "methyl_radical",
        symbols: &["C", "H", "H", "H"],
        charges: &[0; 4],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.08, 0.0, 0.0],
            [-0.54, 0.94, 0.0],
            [-0.54, -0.94, 0.0],
        ],
        stable_atoms: 3,
        stable: false,
        valid: true,
        graph_class: 39,
    },
    Spec {
        name: "nitric_oxide",
        symbols: &["N", "O"],
        charges: &[0; 2],
        bonds: &[(0, 1, Double)],
        coords: &[[0.0, 0.0, 0.0], [1.15, 0.0, 0.0]],
        stable_atoms: 1,
        stable: false,
        valid: true,
        graph_class: 40,
    },
    // order 4 on neutral nitrogen fails, yet stays under nitrogen's cap
    Spec {
        name: "nitrogen_tetrahydride",
        symbols: &["N", "H", "H", "H", "H"],
        charges: &[0; 5],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [0.61, 0.61, 0.61],
            [-0.61, -0.61, 0.61],
            [-0.61, 0.61, -0.61],
            [0.61, -0.61, -0.61],
        ],
        stable_atoms: 4,
        stable: false,
        valid: true,
        graph_class: 41,
    },
    Spec {
        name: "carbene",
        symbols: &["C", "H", "H"],
        charges: &[0; 3],
        bonds: &[(0, 1, S), (0, 2, S)],
        coords: &[[0.0, 0.0, 0.0], [1.05, 0.3, 0.0], [-1.05, 0.3, 0.0]],
        stable_atoms: 2,
        stable: false,
        valid: true,
        graph_class: 42,
    },
    // order 5 exceeds carbon's cap over every charge: unstable and invalid
    Spec {
        name: "pentavalent_carbon",
        symbols: &["C", "H", "H", "H", "H", "H"],
        charges: &[0; 6],
        bonds: &[(0, 1, S), (0, 2, S), (0, 3, S), (0, 4, S), (0, 5, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [1.09, 0.0, 0.0],
            [-1.09, 0.0, 0.0],
            [0.0, 1.09, 0.0],
            [0.0, -1.09, 0.0],
            [0.0, 0.0, 1.09],
        ],
        stable_atoms: 5,
        stable: false,
        valid: false,
        graph_class: 43,
    },
    // every atom satisfied but two components: stable yet invalid
    Spec {
        name: "water_pair",
        symbols: &["O", "H", "H", "O", "H", "H"],
        charges: &[0; 6],
        bonds: &[(0, 1, S), (0, 2, S), (3, 4, S), (3, 5, S)],
        coords: &[
            [0.0, 0.0, 0.0],
            [0.76, 0.59, 0.0],
            [-0.76, 0.59, 0.0],
            [4.0, 0.0, 0.0],
            [4.76, 0.59, 0.0],
            [3.24, 0.59, 0.0],
        ],
        stable_atoms: 6,
        stable: true,
        valid: false,
        graph_class: 44,
    },
];

pub fn golden_corpus(vocab: &Vocabulary) -> Vec<GoldenEntry> {
    let entries: Vec<GoldenEntry> = SPECS.iter().map(|s| build(s, vocab)).collect();
    assert_eq!(entries.len(), 50, "fixture count is part of the contract");
    entries
}
