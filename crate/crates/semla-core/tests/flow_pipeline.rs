//! Flow-matching pipeline checks: the loss against an independent scalar
//! oracle, interpolant coordinate statistics, alignment invariance, and
//! finite-difference gradients through forward + loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use semla_core::arch::{forward, ModelInput, ModelParams, Prediction, SemlaConfig};
use semla_core::flow::{interpolate, loss, FlowConfig, FlowError, LossTarget};
use semla_core::molecule::{zero_center, Molecule, Vocabulary};
use semla_core::ot::{equivariant_align, random_rotation, rotate_point};
use semla_core::tensor::Tape;

fn mini_config() -> SemlaConfig {
    SemlaConfig {
        n_layers: 2,
        d_inv: 8,
        d_equi: 4,
        d_l: 4,
        n_heads: 2,
        d_edge: 4,
        n_atom_types: 9,
        n_charges: 6,
        n_bond_kinds: 5,
    }
}

fn awake_params(cfg: SemlaConfig, seed: u64) -> ModelParams {
    let mut params = ModelParams::init(cfg, seed).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let (_, vals) = params.entry(&name).unwrap();
        if vals.iter().all(|&v| v == 0.0) {
            for v in params.entry_mut(&name).unwrap() {
                *v = rng.random_range(-0.4..0.4);
            }
        }
    }
    params
}

struct Case {
    coords: Vec<f64>,
    coords_rows: Vec<[f64; 3]>,
    atom_types: Vec<usize>,
    charges: Vec<usize>,
    bonds: Vec<usize>,
    bonds_u8: Vec<u8>,
    mask: Vec<bool>,
}

impl Case {
    fn random(n: usize, n_pad: usize, cfg: &SemlaConfig, rng: &mut ChaCha12Rng) -> Self {
        let m = n + n_pad;
        let mut coords_rows: Vec<[f64; 3]> = (0..m)
            .map(|_| [0, 1, 2].map(|_| rng.random_range(-2.0..2.0)))
            .collect();
        for row in coords_rows.iter_mut().skip(n) {
            *row = [0.0; 3];
        }
        let atom_types: Vec<usize> = (0..m)
            .map(|i| {
                if i < n {
                    rng.random_range(0..cfg.n_atom_types)
                } else {
                    cfg.n_atom_types
                }
            })
            .collect();
        let charges: Vec<usize> = (0..m)
            .map(|i| {
                if i < n {
                    rng.random_range(0..cfg.n_charges)
                } else {
                    cfg.n_charges
                }
            })
            .collect();
        let mut bonds = vec![cfg.n_bond_kinds; m * m];
        let mut bonds_u8 = vec![0u8; m * m];
        for i in 0..n {
            bonds[i * m + i] = 0;
            for j in i + 1..n {
                let k = rng.random_range(0..cfg.n_bond_kinds);
                bonds[i * m + j] = k;
                bonds[j * m + i] = k;
                bonds_u8[i * m + j] = k as u8;
                bonds_u8[j * m + i] = k as u8;
            }
        }
        let mut mask = vec![true; n];
        mask.extend(vec![false; n_pad]);
        Case {
            coords: coords_rows.iter().flatten().copied().collect(),
            coords_rows,
            atom_types,
            charges,
            bonds,
            bonds_u8,
            mask,
        }
    }

    fn target(&self) -> LossTarget<'_> {
        LossTarget {
            coords: &self.coords_rows,
            atom_types: &self.atom_types,
            charges: &self.charges,
            bonds: &self.bonds_u8,
            mask: &self.mask,
        }
    }
}

/// Plain-scalar recomputation of the weighted loss from raw output values.
fn oracle_loss(
    coords: &[f64],
    atom_logits: &[f64],
    charge_logits: &[f64],
    bond_logits: &[f64],
    case: &Case,
    cfg: &FlowConfig,
    na: usize,
    nc: usize,
    nb: usize,
) -> f64 {
    let m = case.mask.len();
    let live: Vec<usize> = (0..m).filter(|&i| case.mask[i]).collect();
    let mut mse = 0.0;
    for &i in &live {
        for d in 0..3 {
            mse += (coords[i * 3 + d] - case.coords[i * 3 + d]).powi(2);
        }
    }
    mse /= 3.0 * live.len() as f64;

    let ce = |row: &[f64], target: usize| -> f64 {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lse - row[target]
    };
    let atom: f64 = live
        .iter()
        .map(|&i| ce(&atom_logits[i * na..(i + 1) * na], case.atom_types[i]))
        .sum::<f64>()
        / live.len() as f64;
    let charge: f64 = live
        .iter()
        .map(|&i| ce(&charge_logits[i * nc..(i + 1) * nc], case.charges[i]))
        .sum::<f64>()
        / live.len() as f64;
    let mut bond = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            bond += ce(
                &bond_logits[(i * m + j) * nb..(i * m + j + 1) * nb],
                case.bonds_u8[i * m + j] as usize,
            );
            pairs += 1;
        }
    }
    if pairs > 0 {
        bond /= pairs as f64;
    }
    cfg.lambda_coord * mse + cfg.lambda_atom * atom + cfg.lambda_bond * bond + cfg.lambda_charge * charge
}

#[test]
fn loss_matches_independent_scalar_recomputation() {
    let cfg = mini_config();
    let params = awake_params(cfg.clone(), 1);
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let fcfg = FlowConfig::default();
    for trial in 0..5 {
        let case = Case::random(4 + trial % 3, trial % 2, &cfg, &mut rng);
        let mut tape = Tape::new();
        let b = params.bind(&mut tape).unwrap();
        let input = ModelInput {
            coords: &case.coords,
            atom_types: &case.atom_types,
            charges: &case.charges,
            bonds: &case.bonds,
            t: 0.43,
            mask: &case.mask,
            self_cond: None,
        };
        let pred = forward(&mut tape, &params, &b, &input).unwrap();
        let (total, parts) = loss(&mut tape, &pred, &case.target(), &fcfg).unwrap();
        let want = oracle_loss(
            tape.values(pred.coords),
            tape.values(pred.atom_logits),
            tape.values(pred.charge_logits),
            tape.values(pred.bond_logits),
            &case,
            &fcfg,
            cfg.n_atom_types,
            cfg.n_charges,
            cfg.n_bond_kinds,
        );
        let got = tape.values(total)[0];
        assert!((got - want).abs() < 1e-10, "trial {trial}: {got} vs {want}");
        assert!((parts.total - got).abs() < 1e-15);
        let recombined = fcfg.lambda_coord * parts.coord
            + fcfg.lambda_atom * parts.atom
            + fcfg.lambda_bond * parts.bond
            + fcfg.lambda_charge * parts.charge;
        assert!((recombined - got).abs() < 1e-12);
    }
}

fn one_hot_logits(targets: &[usize], classes: usize, magnitude: f64) -> Vec<f64> {
    let mut out = vec![0.0; targets.len() * classes];
    for (i, &t) in targets.iter().enumerate() {
        out[i * classes + t] = magnitude;
    }
    out
}

#[test]
fn perfect_prediction_has_zero_coordinate_loss_and_vanishing_entropy() {
    let cfg = mini_config();
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut case = Case::random(5, 0, &cfg, &mut rng);
    // targets must be centered for a prediction to reproduce them exactly
    zero_center(&mut case.coords_rows, None).unwrap();
    case.coords = case.coords_rows.iter().flatten().copied().collect();

    let n = 5;
    let mut tape = Tape::new();
    let coords = tape.leaf(&[n, 3], case.coords.clone()).unwrap();
    let atom_logits = tape
        .leaf(&[n, cfg.n_atom_types], one_hot_logits(&case.atom_types, cfg.n_atom_types, 50.0))
        .unwrap();
    let charge_logits = tape
        .leaf(&[n, cfg.n_charges], one_hot_logits(&case.charges, cfg.n_charges, 50.0))
        .unwrap();
    let bond_targets: Vec<usize> = case.bonds_u8.iter().map(|&b| b as usize).collect();
    let bond_flat = one_hot_logits(&bond_targets, cfg.n_bond_kinds, 50.0);
    let bond_logits = tape.leaf(&[n, n, cfg.n_bond_kinds], bond_flat).unwrap();
    let pred = Prediction {
        coords,
        atom_logits,
        charge_logits,
        bond_logits,
    };
    let (_, parts) = loss(&mut tape, &pred, &case.target(), &FlowConfig::default()).unwrap();
    assert_eq!(parts.coord, 0.0, "MSE of an exact match is exactly zero");
    assert!(parts.atom < 1e-9);
    assert!(parts.bond < 1e-9);
    assert!(parts.charge < 1e-9);
    assert!(parts.total < 1e-9);
}

#[test]
fn zero_weights_give_exactly_zero_total() {
    let cfg = mini_config();
    let params = awake_params(cfg.clone(), 4);
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let case = Case::random(4, 1, &cfg, &mut rng);
    let mut tape = Tape::new();
    let b = params.bind(&mut tape).unwrap();
    let input = ModelInput {
        coords: &case.coords,
        atom_types: &case.atom_types,
        charges: &case.charges,
        bonds: &case.bonds,
        t: 0.1,
        mask: &case.mask,
        self_cond: None,
    };
    let pred = forward(&mut tape, &params, &b, &input).unwrap();
    let zeroed = FlowConfig {
        lambda_coord: 0.0,
        lambda_atom: 0.0,
        lambda_bond: 0.0,
        lambda_charge: 0.0,
        ..FlowConfig::default()
    };
    let (total, parts) = loss(&mut tape, &pred, &case.target(), &zeroed).unwrap();
    assert_eq!(tape.values(total)[0], 0.0);
    assert_eq!(parts.total, 0.0);
}

#[test]
fn non_finite_predictions_are_rejected() {
    let cfg = mini_config();
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let case = Case::random(3, 0, &cfg, &mut rng);
    let n = 3;
    let mut tape = Tape::new();
    let coords = tape.leaf(&[n, 3], case.coords.clone()).unwrap();
    let mut bad = vec![0.0; n * cfg.n_atom_types];
    bad[4] = f64::NAN;
    let atom_logits = tape.leaf(&[n, cfg.n_atom_types], bad).unwrap();
    let charge_logits = tape.zeros(&[n, cfg.n_charges]);
    let bond_logits = tape.zeros(&[n, n, cfg.n_bond_kinds]);
    let pred = Prediction {
        coords,
        atom_logits,
        charge_logits,
        bond_logits,
    };
    let err = loss(&mut tape, &pred, &case.target(), &FlowConfig::default()).unwrap_err();
    assert!(matches!(err, FlowError::NonFinite("atom logits")), "{err}");
}

#[test]
fn interpolant_statistics_recover_the_mean_and_noise_scale() {
    let vocab = Vocabulary::default();
    let fcfg = FlowConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let n = 4;
    let mut x1: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-2.0..2.0))).collect();
    zero_center(&mut x1, None).unwrap();
    let mut x0: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-2.0..2.0))).collect();
    zero_center(&mut x0, None).unwrap();
    let data = Molecule::new(
        x1.clone(),
        vec![1; n],
        {
            let mut b = vec![0u8; n * n];
            b[1] = 1;
            b[n] = 1;
            b
        },
        vec![vocab.charge_index(0).unwrap(); n],
    )
    .unwrap();

    let t = 0.5;
    let draws = 60_000;
    let mut sums = vec![[0.0f64; 3]; n];
    let mut sq_dev = 0.0f64;
    for _ in 0..draws {
        let zt = interpolate(&data, &x0, t, &vocab, &fcfg, &mut rng).unwrap();
        for i in 0..n {
            for d in 0..3 {
                sums[i][d] += zt.coords[i][d];
            }
        }
        // deviation from the centered path mean estimates sigma^2 (1 - 1/n)
        for i in 0..n {
            for d in 0..3 {
                let mean = t * x1[i][d] + (1.0 - t) * x0[i][d];
                sq_dev += (zt.coords[i][d] - mean).powi(2);
            }
        }
    }
    // the path mean is already centered (x0, x1 both centered), so centering
    // the noisy draw leaves its expectation at the path mean
    let se = fcfg.sigma / (draws as f64).sqrt();
    for i in 0..n {
        for d in 0..3 {
            let want = t * x1[i][d] + (1.0 - t) * x0[i][d];
            let got = sums[i][d] / draws as f64;
            assert!(
                (got - want).abs() < 5.0 * se,
                "atom {i} axis {d}: {got} vs {want}"
            );
        }
    }
    let var = sq_dev / (draws * n * 3) as f64;
    let sigma_hat = (var * n as f64 / (n as f64 - 1.0)).sqrt();
    assert!(
        (sigma_hat - fcfg.sigma).abs() / fcfg.sigma < 0.02,
        "sigma {sigma_hat}"
    );
}

#[test]
fn alignment_cost_is_unchanged_when_the_data_rotates() {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    for _ in 0..5 {
        let n = rng.random_range(3..8);
        let mut x1: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-2.0..2.0))).collect();
        zero_center(&mut x1, None).unwrap();
        let mut x0: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-2.0..2.0))).collect();
        zero_center(&mut x0, None).unwrap();
        let r = random_rotation(&mut rng);
        let x1_rot: Vec<[f64; 3]> = x1.iter().map(|&p| rotate_point(&r, p)).collect();

        let plain = equivariant_align(&x0, &x1).unwrap();
        let rotated = equivariant_align(&x0, &x1_rot).unwrap();
        assert!(
            (plain.cost() - rotated.cost()).abs() < 1e-6,
            "{} vs {}",
            plain.cost(),
            rotated.cost()
        );
        // aligned cost never exceeds the identity pairing
        let identity: f64 = x0
            .iter()
            .zip(&x1)
            .map(|(p, q)| (0..3).map(|d| (p[d] - q[d]).powi(2)).sum::<f64>())
            .sum();
        assert!(plain.cost() <= identity + 1e-12);
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let cfg = mini_config();
    let mut params = awake_params(cfg.clone(), 9);
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    let case = Case::random(3, 1, &cfg, &mut rng);
    let fcfg = FlowConfig::default();

    let eval = |params: &ModelParams, want_grad: bool| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let b = params.bind(&mut tape).unwrap();
        let input = ModelInput {
            coords: &case.coords,
            atom_types: &case.atom_types,
            charges: &case.charges,
            bonds: &case.bonds,
            t: 0.7,
            mask: &case.mask,
            self_cond: None,
        };
        let pred = forward(&mut tape, params, &b, &input).unwrap();
        let (total, _) = loss(&mut tape, &pred, &case.target(), &fcfg).unwrap();
        let value = tape.values(total)[0];
        let grads = if want_grad {
            tape.backward(total).unwrap();
            b.refs()
                .iter()
                .map(|&r| tape.grad(r).map(<[f64]>::to_vec).unwrap_or_default())
                .collect()
        } else {
            Vec::new()
        };
        (value, grads)
    };

    let (_, grads) = eval(&params, true);
    let h = 1e-5;
    for idx in 0..params.n_tensors() {
        let name = params.name(idx).to_string();
        for e in 0..params.values(idx).len() {
            let orig = params.values(idx)[e];
            params.values_mut(idx)[e] = orig + h;
            let (up, _) = eval(&params, false);
            params.values_mut(idx)[e] = orig - h;
            let (down, _) = eval(&params, false);
            params.values_mut(idx)[e] = orig;
            let fd = (up - down) / (2.0 * h);
            let ad = grads[idx].get(e).copied().unwrap_or(0.0);
            let abs = (ad - fd).abs();
            let rel = abs / ad.abs().max(fd.abs()).max(1e-3);
            assert!(
                abs < 1e-7 || rel < 1e-4,
                "{name}[{e}]: analytic {ad} vs central difference {fd}"
            );
        }
    }
}
