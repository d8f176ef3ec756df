//! Conditional flow matching over molecules: prior sampling, time sampling,
//! the joint interpolant (Gaussian coordinates, resampled categoricals), and
//! the weighted training loss.

use crate::arch::Prediction;
use crate::molecule::{zero_center, Molecule, MoleculeError, Vocabulary};
use crate::tensor::{Tape, TensorError, TensorRef};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("time {0} outside [0, 1]")]
    BadTime(f64),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("no live atoms under the mask")]
    AllMasked,
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Training-time hyperparameters for the interpolant and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Coordinate noise scale around the interpolated mean.
    pub sigma: f64,
    /// Beta-distribution parameters for drawing training times.
    pub beta_alpha: f64,
    pub beta_beta: f64,
    /// Loss weights: coordinates, atom types, bonds, charges.
    pub lambda_coord: f64,
    pub lambda_atom: f64,
    pub lambda_bond: f64,
    pub lambda_charge: f64,
    /// Fraction of batches that receive self-conditioning inputs.
    pub self_cond: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            sigma: 0.2,
            beta_alpha: 2.0,
            beta_beta: 1.0,
            lambda_coord: 1.0,
            lambda_atom: 0.2,
            lambda_bond: 0.5,
            lambda_charge: 1.0,
            self_cond: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(FlowError::SizeMismatch(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        for (name, w) in [
            ("lambda_coord", self.lambda_coord),
            ("lambda_atom", self.lambda_atom),
            ("lambda_bond", self.lambda_bond),
            ("lambda_charge", self.lambda_charge),
        ] {
            if w < 0.0 || !w.is_finite() {
                return Err(FlowError::SizeMismatch(format!(
                    "{name} must be non-negative, got {w}"
                )));
            }
        }
        if !(self.beta_alpha > 0.0 && self.beta_beta > 0.0) {
            return Err(FlowError::SizeMismatch(
                "beta parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A molecule-shaped point on the noising path at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyState {
    pub t: f64,
    pub coords: Vec<[f64; 3]>,
    pub atom_types: Vec<usize>,
    pub charges: Vec<usize>,
    /// Symmetric `n*n` bond-kind matrix, diagonal zero.
    pub bonds: Vec<u8>,
}

impl NoisyState {
    pub fn n_atoms(&self) -> usize {
        self.coords.len()
    }
}

/// Draws the time-zero state: isotropic Gaussian coordinates re-centered at
/// the origin and uniform categoricals, bonds sampled on the upper triangle
/// and mirrored.
pub fn sample_prior<R: Rng + ?Sized>(
    n: usize,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<NoisyState, FlowError> {
    if n == 0 {
        return Err(FlowError::SizeMismatch("prior needs n >= 1".into()));
    }
    let mut coords: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ]
        })
        .collect();
    zero_center(&mut coords, None)?;
    let atom_types = (0..n).map(|_| rng.random_range(0..vocab.n_atom_types())).collect();
    let charges = (0..n).map(|_| rng.random_range(0..vocab.n_charges())).collect();
    let mut bonds = vec![0u8; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let k = rng.random_range(0..vocab.n_bond_kinds()) as u8;
            bonds[i * n + j] = k;
            bonds[j * n + i] = k;
        }
    }
    Ok(NoisyState {
        t: 0.0,
        coords,
        atom_types,
        charges,
        bonds,
    })
}

/// Draws a training time from Beta(alpha, beta).
pub fn sample_time<R: Rng + ?Sized>(cfg: &FlowConfig, rng: &mut R) -> f64 {
    Beta::new(cfg.beta_alpha, cfg.beta_beta)
        .expect("validated parameters")
        .sample(rng)
}

/// One draw from the categorical interpolant: the data value with
/// probability `t`, otherwise uniform over all `n_kinds` values. Marginally
/// the data value carries mass t + (1-t)/n_kinds and every other value
/// (1-t)/n_kinds.
pub fn interpolate_category<R: Rng + ?Sized>(
    data: usize,
    n_kinds: usize,
    t: f64,
    rng: &mut R,
) -> usize {
    if rng.random::<f64>() < t {
        data
    } else {
        rng.random_range(0..n_kinds)
    }
}

/// Samples the joint interpolant at time `t` given the data molecule and
/// aligned prior coordinates. Coordinates are Gaussian around the linear
/// interpolation and re-centered; categoricals are drawn independently per
/// atom and per (upper-triangle) pair.
pub fn interpolate<R: Rng + ?Sized>(
    data: &Molecule,
    prior_coords: &[[f64; 3]],
    t: f64,
    vocab: &Vocabulary,
    cfg: &FlowConfig,
    rng: &mut R,
) -> Result<NoisyState, FlowError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::BadTime(t));
    }
    let n = data.n_atoms();
    if prior_coords.len() != n {
        return Err(FlowError::SizeMismatch(format!(
            "prior has {} atoms, data has {n}",
            prior_coords.len()
        )));
    }
    let mut coords: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let x1 = data.coords()[i];
            let x0 = prior_coords[i];
            [0, 1, 2].map(|d| {
                let eps: f64 = StandardNormal.sample(rng);
                t * x1[d] + (1.0 - t) * x0[d] + cfg.sigma * eps
            })
        })
        .collect();
    zero_center(&mut coords, None)?;
    let atom_types = data
        .atom_types()
        .iter()
        .map(|&a| interpolate_category(a, vocab.n_atom_types(), t, rng))
        .collect();
    let charges = data
        .charges()
        .iter()
        .map(|&c| interpolate_category(c, vocab.n_charges(), t, rng))
        .collect();
    let mut bonds = vec![0u8; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let k =
                interpolate_category(data.bonds()[i * n + j] as usize, vocab.n_bond_kinds(), t, rng)
                    as u8;
            bonds[i * n + j] = k;
            bonds[j * n + i] = k;
        }
    }
    Ok(NoisyState {
        t,
        coords,
        atom_types,
        charges,
        bonds,
    })
}

/// Ground truth consumed by the loss; slices follow the padded layout of the
/// prediction, with `mask` marking live rows.
pub struct LossTarget<'a> {
    pub coords: &'a [[f64; 3]],
    pub atom_types: &'a [usize],
    pub charges: &'a [usize],
    pub bonds: &'a [u8],
    pub mask: &'a [bool],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub coord: f64,
    pub atom: f64,
    pub bond: f64,
    pub charge: f64,
    pub total: f64,
}

/// Weighted training loss on the tape: coordinate MSE over live atoms plus
/// cross-entropies for atom types, bonds (strict upper triangle of live
/// pairs), and charges. Fails fast on non-finite inputs. Returns the scalar
/// node for backprop and the unweighted per-term values.
pub fn loss(
    tape: &mut Tape,
    pred: &Prediction,
    target: &LossTarget,
    cfg: &FlowConfig,
) -> Result<(TensorRef, LossBreakdown), FlowError> {
    let n = target.mask.len();
    if target.coords.len() != n
        || target.atom_types.len() != n
        || target.charges.len() != n
        || target.bonds.len() != n * n
    {
        return Err(FlowError::SizeMismatch(
            "target slices disagree with mask length".into(),
        ));
    }
    if tape.shape(pred.coords) != [n, 3] {
        return Err(FlowError::SizeMismatch(format!(
            "prediction is for {} atoms, target for {n}",
            tape.shape(pred.coords)[0]
        )));
    }
    for (name, t) in [
        ("predicted coordinates", pred.coords),
        ("atom logits", pred.atom_logits),
        ("charge logits", pred.charge_logits),
        ("bond logits", pred.bond_logits),
    ] {
        if tape.values(t).iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite(name));
        }
    }
    if target.coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite("target coordinates"));
    }
    let live: Vec<usize> = (0..n).filter(|&i| target.mask[i]).collect();
    if live.is_empty() {
        return Err(FlowError::AllMasked);
    }

    // coordinate MSE over live atoms; padded rows of both sides are zero
    let mut flat = vec![0.0; n * 3];
    for &i in &live {
        flat[i * 3..(i + 1) * 3].copy_from_slice(&target.coords[i]);
    }
    let target_xyz = tape.leaf(&[n, 3], flat)?;
    let diff = tape.sub(pred.coords, target_xyz)?;
    let sq = tape.mul(diff, diff)?;
    let total_sq = tape.sum_all(sq);
    let mse = tape.scale(total_sq, 1.0 / (3.0 * live.len() as f64));

    let gather_targets = |src: &[usize]| -> Vec<usize> { live.iter().map(|&i| src[i]).collect() };
    let atom_rows = tape.gather_rows(pred.atom_logits, &live)?;
    let atom_ce = tape.cross_entropy_mean(atom_rows, &gather_targets(target.atom_types))?;
    let charge_rows = tape.gather_rows(pred.charge_logits, &live)?;
    let charge_ce = tape.cross_entropy_mean(charge_rows, &gather_targets(target.charges))?;

    let mut pair_rows = Vec::new();
    let mut pair_targets = Vec::new();
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            pair_rows.push(i * n + j);
            pair_targets.push(target.bonds[i * n + j] as usize);
        }
    }
    let nb = tape.shape(pred.bond_logits)[2];
    let bond_ce = if pair_rows.is_empty() {
        tape.scalar(0.0)
    } else {
        let flat_logits = tape.reshape(pred.bond_logits, &[n * n, nb])?;
        let rows = tape.gather_rows(flat_logits, &pair_rows)?;
        tape.cross_entropy_mean(rows, &pair_targets)?
    };

    let weighted = [
        tape.scale(mse, cfg.lambda_coord),
        tape.scale(atom_ce, cfg.lambda_atom),
        tape.scale(bond_ce, cfg.lambda_bond),
        tape.scale(charge_ce, cfg.lambda_charge),
    ];
    let mut total = weighted[0];
    for w in &weighted[1..] {
        total = tape.add(total, *w)?;
    }
    let breakdown = LossBreakdown {
        coord: tape.values(mse)[0],
        atom: tape.values(atom_ce)[0],
        bond: tape.values(bond_ce)[0],
        charge: tape.values(charge_ce)[0],
        total: tape.values(total)[0],
    };
    if !breakdown.total.is_finite() {
        return Err(FlowError::NonFinite("loss"));
    }
    Ok((total, breakdown))
}
