//! Generation: integrates the learned coordinate vector field with Euler
//! steps on a log-spaced schedule while categoricals follow a
//! discrete-flow resampling rule. Trajectories are deterministic given
//! (params, seed, schedule) and independent across molecules.

use crate::arch::{forward, ModelInput, ModelParams, SelfCondData};
use crate::flow::{sample_prior, NoisyState};
use crate::molecule::{zero_center, Molecule, MoleculeError, Vocabulary};
use crate::tensor::Tape;
use rand::Rng;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("schedule needs at least one step")]
    EmptySchedule,
    #[error("schedule base must exceed 1, got {0}")]
    BadBase(f64),
    #[error("integration time {t} outside [0, 1) or step {dt} invalid")]
    BadTime { t: f64, dt: f64 },
    #[error("categorical distribution sums to {0}, expected 1 within 1e-6")]
    BadDistribution(f64),
    #[error(transparent)]
    Arch(#[from] crate::arch::ArchError),
    #[error(transparent)]
    Flow(#[from] crate::flow::FlowError),
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// Strictly increasing times 0 = t_0 < ... < t_S = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    times: Vec<f64>,
}

impl Schedule {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Log-spaced schedule: t_k = log(1 + k (base-1)/steps) / log(base). Step
/// sizes shrink as t grows, so more work happens near t = 1. Endpoints are
/// pinned to exactly 0 and 1.
pub fn make_log_schedule(steps: usize, base: f64) -> Result<Schedule, SampleError> {
    if steps == 0 {
        return Err(SampleError::EmptySchedule);
    }
    if !(base > 1.0) || !base.is_finite() {
        return Err(SampleError::BadBase(base));
    }
    let ln_base = base.ln();
    let mut times = Vec::with_capacity(steps + 1);
    times.push(0.0);
    for k in 1..steps {
        times.push((1.0 + k as f64 * (base - 1.0) / steps as f64).ln() / ln_base);
    }
    times.push(1.0);
    debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
    Ok(Schedule { times })
}

/// One Euler step of dx/dt = (x1 - x)/(1 - t) from `t` to `t + dt`. When the
/// step reaches t = 1 the prediction is returned exactly.
pub fn euler_coord_step(
    x: &[[f64; 3]],
    x1_pred: &[[f64; 3]],
    t: f64,
    dt: f64,
) -> Result<Vec<[f64; 3]>, SampleError> {
    if !(0.0..1.0).contains(&t) || !(dt > 0.0) || t + dt > 1.0 + 1e-9 {
        return Err(SampleError::BadTime { t, dt });
    }
    if t + dt >= 1.0 - 1e-12 {
        return Ok(x1_pred.to_vec());
    }
    let rate = dt / (1.0 - t);
    Ok(x
        .iter()
        .zip(x1_pred)
        .map(|(p, q)| [0, 1, 2].map(|d| p[d] + rate * (q[d] - p[d])))
        .collect())
}

/// Discrete-flow update: resample from the predicted terminal distribution
/// with probability min(1, dt/(1-t)), otherwise keep the current value. The
/// final step always resamples.
pub fn dfm_categorical_step<R: Rng + ?Sized>(
    current: usize,
    p1: &[f64],
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Result<usize, SampleError> {
    if !(0.0..1.0).contains(&t) || !(dt > 0.0) || t + dt > 1.0 + 1e-9 {
        return Err(SampleError::BadTime { t, dt });
    }
    let total: f64 = p1.iter().sum();
    if (total - 1.0).abs() > 1e-6 || p1.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
        return Err(SampleError::BadDistribution(total));
    }
    let prob = if t + dt >= 1.0 - 1e-12 {
        1.0
    } else {
        (dt / (1.0 - t)).min(1.0)
    };
    if rng.random::<f64>() >= prob {
        return Ok(current);
    }
    let draw: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in p1.iter().enumerate() {
        acc += p;
        if draw < acc {
            return Ok(i);
        }
    }
    Ok(p1.len() - 1)
}

pub mod tag {
    pub const PRIOR: u64 = 16;
    pub const ATOMS: u64 = 17;
    pub const BONDS: u64 = 18;
    pub const CHARGES: u64 = 19;
}

fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row_in, row_out) in logits.chunks(classes).zip(out.chunks_mut(classes)) {
        let max = row_in.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut denom = 0.0;
        for v in row_in {
            denom += (v - max).exp();
        }
        for (o, v) in row_out.iter_mut().zip(row_in) {
            *o = (v - max).exp() / denom;
        }
    }
    out
}

/// Integrates one trajectory and assembles the final molecule: coordinates
/// from the last prediction, atom and bond states from the last categorical
/// resample, charges as the argmax of the final charge logits.
pub fn generate(
    params: &ModelParams,
    n_atoms: usize,
    schedule: &Schedule,
    self_cond: bool,
    seed: u64,
    trajectory: u64,
) -> Result<Molecule, SampleError> {
    let vocab = Vocabulary::default();
    let mut prior_rng = crate::trainer::stream(seed, u64::MAX, trajectory, tag::PRIOR);
    let state = sample_prior(n_atoms, &vocab, &mut prior_rng)?;
    generate_from(params, state, schedule, self_cond, seed, trajectory)
}

/// Same trajectory integration, but starting from a caller-supplied state
/// instead of a freshly drawn prior.
pub fn generate_from(
    params: &ModelParams,
    state: NoisyState,
    schedule: &Schedule,
    self_cond: bool,
    seed: u64,
    trajectory: u64,
) -> Result<Molecule, SampleError> {
    let cfg = &params.config;
    let n = state.n_atoms();
    let stream = |step: u64, purpose: u64| crate::trainer::stream(seed, step, trajectory, purpose);

    let mut coords = state.coords;
    let mut atoms = state.atom_types;
    let mut charges = state.charges;
    let mut bonds = state.bonds;
    let mut conditioning: Option<SelfCondData> = None;
    let mut final_charge_logits: Vec<f64> = Vec::new();

    let mask = vec![true; n];
    for k in 0..schedule.steps() {
        let t = schedule.times()[k];
        let t_next = schedule.times()[k + 1];
        let dt = t_next - t;

        let coords_flat: Vec<f64> = coords.iter().flatten().copied().collect();
        let bonds_idx: Vec<usize> = bonds.iter().map(|&b| b as usize).collect();
        let input = ModelInput {
            coords: &coords_flat,
            atom_types: &atoms,
            charges: &charges,
            bonds: &bonds_idx,
            t,
            mask: &mask,
            self_cond: conditioning.as_ref().filter(|_| self_cond),
        };
        let mut tape = Tape::new();
        let b = params.bind(&mut tape)?;
        let pred = forward(&mut tape, params, &b, &input)?;

        let coord_values = tape.values(pred.coords);
        let x1: Vec<[f64; 3]> = coord_values
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        let atom_probs = softmax_rows(tape.values(pred.atom_logits), cfg.n_atom_types);
        let bond_probs = softmax_rows(tape.values(pred.bond_logits), cfg.n_bond_kinds);
        let charge_probs = softmax_rows(tape.values(pred.charge_logits), cfg.n_charges);

        coords = euler_coord_step(&coords, &x1, t, dt)?;
        let mut atom_rng = stream(k as u64, tag::ATOMS);
        for (i, a) in atoms.iter_mut().enumerate() {
            *a = dfm_categorical_step(
                *a,
                &atom_probs[i * cfg.n_atom_types..(i + 1) * cfg.n_atom_types],
                t,
                dt,
                &mut atom_rng,
            )?;
        }
        let mut charge_rng = stream(k as u64, tag::CHARGES);
        for (i, c) in charges.iter_mut().enumerate() {
            *c = dfm_categorical_step(
                *c,
                &charge_probs[i * cfg.n_charges..(i + 1) * cfg.n_charges],
                t,
                dt,
                &mut charge_rng,
            )?;
        }
        let mut bond_rng = stream(k as u64, tag::BONDS);
        for i in 0..n {
            for j in i + 1..n {
                let row = &bond_probs[(i * n + j) * cfg.n_bond_kinds..(i * n + j + 1) * cfg.n_bond_kinds];
                let next = dfm_categorical_step(bonds[i * n + j] as usize, row, t, dt, &mut bond_rng)? as u8;
                bonds[i * n + j] = next;
                bonds[j * n + i] = next;
            }
        }
        if self_cond {
            conditioning = Some(SelfCondData {
                coords: coord_values.to_vec(),
                atom_probs,
                bond_probs,
            });
        }
        if k + 1 == schedule.steps() {
            final_charge_logits = tape.values(pred.charge_logits).to_vec();
        }
    }

    zero_center(&mut coords, None)?;
    let final_charges: Vec<usize> = (0..n)
        .map(|i| {
            let row = &final_charge_logits[i * cfg.n_charges..(i + 1) * cfg.n_charges];
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(idx, _)| idx)
                .unwrap_or(0)
        })
        .collect();
    Ok(Molecule::new(coords, atoms, bonds, final_charges)?)
}

/// Generates `sizes.len()` molecules concurrently; output `i` depends only
/// on (params, seed, schedule, i).
pub fn generate_batch(
    params: &ModelParams,
    sizes: &[usize],
    schedule: &Schedule,
    self_cond: bool,
    seed: u64,
) -> Result<Vec<Molecule>, SampleError> {
    let results: Vec<Result<Molecule, SampleError>> = crate::exec::par_map_range(sizes.len(), |i| {
        generate(params, sizes[i], schedule, self_cond, seed, i as u64)
    });
    results.into_iter().collect()
}
