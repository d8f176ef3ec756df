//! Surrogate geometry energy: bond springs, angle bending, and a soft
//! clash penalty between distant pairs. Deliberately crude but smooth,
//! deterministic, and cheap; used for per-atom energy and strain scores.

use std::collections::HashMap;

use crate::molecule::{BondKind, Molecule, Vocabulary};

/// Parameter set version recorded in reports.
pub const FORCE_FIELD_VERSION: &str = "ff-v1";

#[derive(Debug, Clone)]
pub struct ForceField {
    pub k_bond: f64,
    pub k_angle: f64,
    pub k_clash: f64,
    /// Clash onset distance for pairs at graph distance three or more.
    pub r_clash: f64,
    radii: HashMap<String, f64>,
}

impl Default for ForceField {
    fn default() -> Self {
        let radii = [
            ("H", 0.31),
            ("C", 0.76),
            ("N", 0.71),
            ("O", 0.66),
            ("F", 0.57),
            ("P", 1.07),
            ("S", 1.05),
            ("Cl", 1.02),
            ("Br", 1.20),
        ]
        .into_iter()
        .map(|(s, r)| (s.to_string(), r))
        .collect();
        Self {
            k_bond: 300.0,
            k_angle: 50.0,
            k_clash: 100.0,
            r_clash: 2.0,
            radii,
        }
    }
}

impl ForceField {
    pub fn radius(&self, element: &str) -> Option<f64> {
        self.radii.get(element).copied()
    }

    /// Rest length: covalent radii sum scaled down for higher bond orders.
    pub fn rest_length(&self, a: &str, b: &str, kind: BondKind) -> Option<f64> {
        let factor = match kind {
            BondKind::None => return None,
            BondKind::Single => 1.0,
            BondKind::Double => 0.87,
            BondKind::Triple => 0.78,
            BondKind::Aromatic => 0.92,
        };
        Some((self.radius(a)? + self.radius(b)?) * factor)
    }

    /// Rest angle at a center: linear with a triple bond, trigonal with a
    /// double or aromatic bond, tetrahedral otherwise.
    pub fn rest_angle(&self, center_kinds: &[BondKind]) -> f64 {
        if center_kinds.contains(&BondKind::Triple) {
            std::f64::consts::PI
        } else if center_kinds.contains(&BondKind::Double)
            || center_kinds.contains(&BondKind::Aromatic)
        {
            2.0 * std::f64::consts::FRAC_PI_3
        } else {
            (-1.0f64 / 3.0).acos()
        }
    }
}

/// Precomputed term lists so repeated evaluations during relaxation skip the
/// graph scans.
struct Terms {
    bonds: Vec<(usize, usize, f64)>,
    angles: Vec<(usize, usize, usize, f64)>,
    clashes: Vec<(usize, usize)>,
}

fn build_terms(mol: &Molecule, vocab: &Vocabulary, ff: &ForceField) -> Option<Terms> {
    let n = mol.n_atoms();
    let symbol = |i: usize| vocab.atom_symbol(mol.atom_types()[i]);
    let mut bonds = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let kind = mol.bond(i, j);
            if kind != BondKind::None {
                bonds.push((i, j, ff.rest_length(symbol(i)?, symbol(j)?, kind)?));
            }
        }
    }
    let mut angles = Vec::new();
    for center in 0..n {
        let neighbors: Vec<usize> = (0..n)
            .filter(|&j| j != center && mol.bond(center, j) != BondKind::None)
            .collect();
        let kinds: Vec<BondKind> = neighbors.iter().map(|&j| mol.bond(center, j)).collect();
        let theta0 = ff.rest_angle(&kinds);
        for a in 0..neighbors.len() {
            for b in (a + 1)..neighbors.len() {
                angles.push((neighbors[a], center, neighbors[b], theta0));
            }
        }
    }
    let mut clashes = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if mol.bond(i, j) != BondKind::None {
                continue;
            }
            let shares_neighbor = (0..n).any(|k| {
                k != i
                    && k != j
                    && mol.bond(i, k) != BondKind::None
                    && mol.bond(j, k) != BondKind::None
            });
            if !shares_neighbor {
                clashes.push((i, j));
            }
        }
    }
    Some(Terms {
        bonds,
        angles,
        clashes,
    })
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64; 3], alpha: f64, x: [f64; 3]) {
    for k in 0..3 {
        y[k] += alpha * x[k];
    }
}

fn eval(terms: &Terms, coords: &[[f64; 3]], ff: &ForceField, grad: Option<&mut [[f64; 3]]>) -> f64 {
    let mut energy = 0.0;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.fill([0.0; 3]);
    }
    for &(i, j, r0) in &terms.bonds {
        let d = sub(coords[i], coords[j]);
        let len = norm(d).max(1e-12);
        let delta = len - r0;
        energy += ff.k_bond * delta * delta;
        if let Some(g) = grad.as_deref_mut() {
            let scale = 2.0 * ff.k_bond * delta / len;
            axpy(&mut g[i], scale, d);
            axpy(&mut g[j], -scale, d);
        }
    }
    for &(i, center, k, theta0) in &terms.angles {
        let u = sub(coords[i], coords[center]);
        let v = sub(coords[k], coords[center]);
        let (lu, lv) = (norm(u).max(1e-12), norm(v).max(1e-12));
        let cos = (dot(u, v) / (lu * lv)).clamp(-1.0, 1.0);
        let theta = cos.acos();
        let delta = theta - theta0;
        energy += ff.k_angle * delta * delta;
        if let Some(g) = grad.as_deref_mut() {
            let sin = (1.0 - cos * cos).sqrt();
            if sin > 1e-8 {
                let de = 2.0 * ff.k_angle * delta;
                // dtheta/dxi = -(v_hat - cos u_hat) / (|u| sin)
                let mut gi = [0.0; 3];
                let mut gk = [0.0; 3];
                for c in 0..3 {
                    let uh = u[c] / lu;
                    let vh = v[c] / lv;
                    gi[c] = -(vh - cos * uh) / (lu * sin);
                    gk[c] = -(uh - cos * vh) / (lv * sin);
                }
                axpy(&mut g[i], de, gi);
                axpy(&mut g[k], de, gk);
                axpy(&mut g[center], -de, [gi[0] + gk[0], gi[1] + gk[1], gi[2] + gk[2]]);
            }
        }
    }
    for &(i, j) in &terms.clashes {
        let d = sub(coords[i], coords[j]);
        let len = norm(d).max(1e-12);
        if len < ff.r_clash {
            let gap = ff.r_clash - len;
            energy += ff.k_clash * gap * gap;
            if let Some(g) = grad.as_deref_mut() {
                let scale = -2.0 * ff.k_clash * gap / len;
                axpy(&mut g[i], scale, d);
                axpy(&mut g[j], -scale, d);
            }
        }
    }
    energy
}

/// Total surrogate energy of the molecule at the given coordinates.
/// None when an element has no parameters.
pub fn energy(
    coords: &[[f64; 3]],
    mol: &Molecule,
    vocab: &Vocabulary,
    ff: &ForceField,
) -> Option<f64> {
    let terms = build_terms(mol, vocab, ff)?;
    Some(eval(&terms, coords, ff, None))
}

/// Energy and its analytic coordinate gradient.
pub fn energy_grad(
    coords: &[[f64; 3]],
    mol: &Molecule,
    vocab: &Vocabulary,
    ff: &ForceField,
) -> Option<(f64, Vec<[f64; 3]>)> {
    let terms = build_terms(mol, vocab, ff)?;
    let mut grad = vec![[0.0; 3]; coords.len()];
    let e = eval(&terms, coords, ff, Some(&mut grad));
    Some((e, grad))
}

#[derive(Debug, Clone)]
pub struct RelaxOutcome {
    pub coords: Vec<[f64; 3]>,
    pub energy: f64,
    pub converged: bool,
    pub finite: bool,
    pub iterations: usize,
}

/// Gradient descent with a backtracking line search, run until the gradient
/// norm drops below `tol` or `max_iters` steps elapse. The line search only
/// accepts strict decreases, so the result never ends above the start.
pub fn relax(
    coords: &[[f64; 3]],
    mol: &Molecule,
    vocab: &Vocabulary,
    ff: &ForceField,
    tol: f64,
    max_iters: usize,
) -> Option<RelaxOutcome> {
    let terms = build_terms(mol, vocab, ff)?;
    let n = coords.len();
    let mut x = coords.to_vec();
    let mut grad = vec![[0.0; 3]; n];
    let mut e = eval(&terms, &x, ff, Some(&mut grad));
    let mut step = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        if !e.is_finite() || grad.iter().flatten().any(|g| !g.is_finite()) {
            return Some(RelaxOutcome {
                coords: x,
                energy: e,
                converged: false,
                finite: false,
                iterations,
            });
        }
        let gsq: f64 = grad.iter().flatten().map(|g| g * g).sum();
        if gsq.sqrt() < tol {
            converged = true;
            break;
        }
        let mut alpha = step;
        let mut accepted = false;
        while alpha > 1e-18 {
            let trial: Vec<[f64; 3]> = x
                .iter()
                .zip(&grad)
                .map(|(p, g)| [p[0] - alpha * g[0], p[1] - alpha * g[1], p[2] - alpha * g[2]])
                .collect();
            let et = eval(&terms, &trial, ff, None);
            if et.is_finite() && et <= e - 1e-4 * alpha * gsq {
                x = trial;
                e = eval(&terms, &x, ff, Some(&mut grad));
                step = (alpha * 1.5).min(0.1);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // No descent direction at working precision: treat as converged.
            converged = true;
            break;
        }
    }
    Some(RelaxOutcome {
        coords: x,
        energy: e,
        converged,
        finite: e.is_finite(),
    iterations,
    })
}

/// Per-atom strain: energy above the relaxed geometry, never negative.
/// None when relaxation diverged or parameters are missing.
pub fn strain(mol: &Molecule, vocab: &Vocabulary, ff: &ForceField) -> Option<f64> {
    let start = energy(mol.coords(), mol, vocab, ff)?;
    if !start.is_finite() {
        return None;
    }
    let outcome = relax(mol.coords(), mol, vocab, ff, 1e-6, 5000)?;
    if !outcome.finite {
        return None;
    }
    let per_atom = (start - outcome.energy) / mol.n_atoms() as f64;
    // The line search never accepts increases, so anything below zero is
    // floating-point dust.
    debug_assert!(per_atom >= -1e-8);
    Some(per_atom.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn water() -> Molecule {
        let vocab = Vocabulary::default();
        let types = vec![
            vocab.atom_index("O").unwrap(),
            vocab.atom_index("H").unwrap(),
            vocab.atom_index("H").unwrap(),
        ];
        let mut bonds = vec![0u8; 9];
        bonds[1] = 1;
        bonds[3] = 1;
        bonds[2] = 1;
        bonds[6] = 1;
        let coords = vec![[0.0, 0.0, 0.0], [0.97, 0.0, 0.0], [-0.3, 0.92, 0.0]];
        Molecule::new(coords, types, bonds, vec![2; 3]).unwrap()
    }

    fn chain(n_heavy: usize) -> Molecule {
        // Straight carbon chain with exact rest lengths but deliberately
        // collinear, so the angle terms carry strain.
        let vocab = Vocabulary::default();
        let ff = ForceField::default();
        let r = ff.rest_length("C", "C", BondKind::Single).unwrap();
        let coords = (0..n_heavy).map(|i| [i as f64 * r, 0.0, 0.0]).collect();
        let types = vec![vocab.atom_index("C").unwrap(); n_heavy];
        let mut bonds = vec![0u8; n_heavy * n_heavy];
        for i in 0..n_heavy - 1 {
            bonds[i * n_heavy + i + 1] = 1;
            bonds[(i + 1) * n_heavy + i] = 1;
        }
        Molecule::new(coords, types, bonds, vec![2; n_heavy]).unwrap()
    }

    #[test]
    fn bond_at_rest_length_has_zero_energy() {
        let vocab = Vocabulary::default();
        let ff = ForceField::default();
        let r = ff.rest_length("O", "H", BondKind::Single).unwrap();
        let types = vec![
            vocab.atom_index("O").unwrap(),
            vocab.atom_index("H").unwrap(),
        ];
        let bonds = vec![0, 1, 1, 0];
        let mol = Molecule::new(
            vec![[0.0; 3], [r, 0.0, 0.0]],
            types,
            bonds,
            vec![2; 2],
        )
        .unwrap();
        let e = energy(mol.coords(), &mol, &vocab, &ff).unwrap();
        assert!(e.abs() < 1e-12, "{e}");
    }

    #[test]
    fn stretched_bond_energy_matches_the_quadratic_by_hand() {
        let vocab = Vocabulary::default();
        let ff = ForceField::default();
        let r = ff.rest_length("C", "C", BondKind::Single).unwrap();
        let mol = Molecule::new(
            vec![[0.0; 3], [r + 0.1, 0.0, 0.0]],
            vec![vocab.atom_index("C").unwrap(); 2],
            vec![0, 1, 1, 0],
            vec![2; 2],
        )
        .unwrap();
        let e = energy(mol.coords(), &mol, &vocab, &ff).unwrap();
        assert!((e - ff.k_bond * 0.01).abs() < 1e-10);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let vocab = Vocabulary::default();
        let ff = ForceField::default();
        let mut rng = StdRng::seed_from_u64(5);
        for (mol_idx, base) in [water(), chain(4)].into_iter().enumerate() {
            let mut coords = base.coords().to_vec();
            // Random displacement wakes every term, including clashes.
            for p in &mut coords {
                for c in p.iter_mut() {
                    *c += 0.35 * (rng.random::<f64>() - 0.5);
                }
            }
            let (_, grad) = energy_grad(&coords, &base, &vocab, &ff).unwrap();
            let h = 1e-6;
            for i in 0..coords.len() {
                for c in 0..3 {
                    let mut plus = coords.clone();
                    plus[i][c] += h;
                    let mut minus = coords.clone();
                    minus[i][c] -= h;
                    let fd = (energy(&plus, &base, &vocab, &ff).unwrap()
                        - energy(&minus, &base, &vocab, &ff).unwrap())
                        / (2.0 * h);
                    let ad = grad[i][c];
                    let denom = ad.abs().max(fd.abs()).max(1e-3);
                    assert!(
                        (ad - fd).abs() / denom < 1e-5,
                        "mol {mol_idx} atom {i} axis {c}: ad {ad} fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn relaxing_a_perturbed_geometry_recovers_near_zero_strain() {
        let vocab = Vocabulary::default();
        let ff = ForceField::default();
        let mol = water();
        let relaxed = relax(mol.coords(), &mol, &vocab, &ff, 1e-6, 5000).unwrap();
        assert!(relaxed.converged);
        assert!(relaxed.energy < 1e-8, "energy {}", relaxed.energy);
        let settled = Molecule::new(
            relaxed.coords,
            mol.atom_types().to_vec(),
            mol.bonds().to_vec(),
            mol.charges().to_vec(),
        )
        .unwrap();
        let s = strain(&settled, &vocab, &ff).unwrap();
        assert!(s.abs() < 1e-9, "strain {s}");
    }

    #[test]
    fn strain_is_nonnegative_and_grows_with_perturbation() {
        let vocab = Vocabulary::default();
        let ff = ForceField::default();
        let mol = water();
        let relaxed = relax(mol.coords(), &mol, &vocab, &ff, 1e-6, 5000).unwrap();
        let mut rng = StdRng::seed_from_u64(17);
        // One fixed displacement direction, scaled up from the minimum.
        let direction: Vec<[f64; 3]> = (0..3)
            .map(|_| std::array::from_fn(|_| rng.random::<f64>() - 0.5))
            .collect();
        let mut last = 0.0;
        for scale in [0.02, 0.06, 0.12, 0.2] {
            let coords: Vec<[f64; 3]> = relaxed
                .coords
                .iter()
                .zip(&direction)
                .map(|(p, d)| {
                    let mut q = *p;
                    for (c, dc) in q.iter_mut().zip(d) {
                        *c += scale * dc;
                    }
                    q
                })
                .collect();
            let bumped = Molecule::new(
                coords,
                mol.atom_types().to_vec(),
                mol.bonds().to_vec(),
                mol.charges().to_vec(),
            )
            .unwrap();
            let s = strain(&bumped, &vocab, &ff).unwrap();
            assert!(s >= 0.0);
            assert!(s >= last, "strain should grow: {s} vs {last}");
            last = s;
        }
        assert!(last > 1e-4);
    }

    #[test]
    fn separated_fragments_feel_the_clash_term_only_when_close() {
        let vocab = Vocabulary::default();
        let ff = ForceField::default();
        let types = vec![vocab.atom_index("C").unwrap(); 2];
        let far = Molecule::new(
            vec![[0.0; 3], [5.0, 0.0, 0.0]],
            types.clone(),
            vec![0; 4],
            vec![2; 2],
        )
        .unwrap();
        assert_eq!(energy(far.coords(), &far, &vocab, &ff).unwrap(), 0.0);
        let near = Molecule::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0]],
            types,
            vec![0; 4],
            vec![2; 2],
        )
        .unwrap();
        let e = energy(near.coords(), &near, &vocab, &ff).unwrap();
        assert!((e - ff.k_clash * 1.0).abs() < 1e-12);
    }
}
