//! Training loop: per-molecule interpolation and loss, batch-averaged
//! gradients, global-norm clipping, AMSGrad updates with linear warm-up,
//! self-conditioning on half the batches, and checkpoint round-tripping.
//! Every random draw comes from a stream keyed by (seed, step, element,
//! purpose), so runs are reproducible and resumable regardless of thread
//! count.

use crate::arch::{forward, ModelInput, ModelParams, SelfCondData, SemlaConfig};
use crate::batching::{bucket_batches, BatchError};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::flow::{interpolate, loss, sample_prior, sample_time, FlowConfig, FlowError, LossBreakdown, LossTarget};
use crate::molecule::{zero_center, Molecule, MoleculeError, Vocabulary};
use crate::ot::{equivariant_align, OtError};
use crate::tensor::{canonical_sum, Tape, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("non-finite loss at step {step} (element {element})")]
    NonFinite { step: usize, element: usize },
    #[error("checkpoint disagrees with expected configuration: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Arch(#[from] crate::arch::ArchError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub flow: FlowConfig,
    pub lr: f64,
    pub warmup_steps: usize,
    pub grad_clip: f64,
    pub atoms_per_batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            flow: FlowConfig::default(),
            lr: 3e-4,
            warmup_steps: 2000,
            grad_clip: 1.0,
            atoms_per_batch: 128,
            seed: 0,
        }
    }
}

/// Learning rate after `step` completed optimizer steps (1-based inside the
/// warm-up window).
pub fn warmup_lr(base: f64, step: usize, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * step as f64 / warmup as f64
    }
}

/// Moment-based optimizer keeping the running maximum of the second moment,
/// bias-corrected like the reference implementation.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsGrad {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    vhat: Vec<f64>,
}

impl AmsGrad {
    pub fn new(n_scalars: usize) -> Self {
        AmsGrad {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_scalars],
            v: vec![0.0; n_scalars],
            vhat: vec![0.0; n_scalars],
        }
    }

    /// One update over the flattened parameter vector.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &[Vec<f64>], lr: f64) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut offset = 0usize;
        for idx in 0..params.n_tensors() {
            let values = params.values_mut(idx);
            let g = &grads[idx];
            for (e, value) in values.iter_mut().enumerate() {
                let k = offset + e;
                let gk = g[e];
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gk;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gk * gk;
                if self.v[k] > self.vhat[k] {
                    self.vhat[k] = self.v[k];
                }
                let denom = (self.vhat[k] / bias2).sqrt() + self.eps;
                *value -= lr * (self.m[k] / bias1) / denom;
            }
            offset += g.len();
        }
    }

    pub fn state(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.m, &self.v, &self.vhat)
    }

    pub fn restore(n_scalars: usize, step: usize, m: &[f64], v: &[f64], vhat: &[f64]) -> Self {
        assert_eq!(m.len(), n_scalars);
        AmsGrad {
            step,
            m: m.to_vec(),
            v: v.to_vec(),
            vhat: vhat.to_vec(),
            ..AmsGrad::new(n_scalars)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
    pub self_cond: bool,
    pub n_mols: usize,
}

/// Purpose tags for the per-draw random streams.
mod purpose {
    pub const TIME: u64 = 0;
    pub const PRIOR: u64 = 1;
    pub const INTERPOLATE: u64 = 2;
    pub const SELF_COND_COIN: u64 = 3;
    pub const BATCH_ORDER: u64 = 4;
}

/// Stateless stream: the four keys fill the 32-byte cipher seed directly.
pub fn stream(seed: u64, step: u64, element: u64, tag: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&element.to_le_bytes());
    key[24..32].copy_from_slice(&tag.to_le_bytes());
    ChaCha12Rng::from_seed(key)
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

/// Runs one forward pass and turns the prediction into detached
/// self-conditioning inputs.
fn detached_self_cond(
    params: &ModelParams,
    input: &ModelInput,
) -> Result<SelfCondData, TrainError> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape)?;
    let pred = forward(&mut tape, params, &b, input)?;
    let cfg = &params.config;
    Ok(SelfCondData {
        coords: tape.values(pred.coords).to_vec(),
        atom_probs: softmax_rows(tape.values(pred.atom_logits), cfg.n_atom_types),
        bond_probs: softmax_rows(tape.values(pred.bond_logits), cfg.n_bond_kinds),
    })
}

struct ElementResult {
    grads: Vec<Vec<f64>>,
    loss: LossBreakdown,
    finite: bool,
}

/// Interpolates one molecule at its own size, runs forward + loss +
/// backward, and returns per-parameter gradients.
fn run_element(
    params: &ModelParams,
    mol: &Molecule,
    cfg: &TrainConfig,
    step: usize,
    element_key: u64,
    self_cond_batch: bool,
) -> Result<ElementResult, TrainError> {
    let vocab = Vocabulary::default();
    let n = mol.n_atoms();

    let t = sample_time(
        &cfg.flow,
        &mut stream(cfg.seed, step as u64, element_key, purpose::TIME),
    );
    let prior = sample_prior(
        n,
        &vocab,
        &mut stream(cfg.seed, step as u64, element_key, purpose::PRIOR),
    )?;
    let aligned = if n > 1 {
        equivariant_align(&prior.coords, mol.coords())?.apply(&prior.coords)
    } else {
        prior.coords.clone()
    };
    let zt = interpolate(
        mol,
        &aligned,
        t,
        &vocab,
        &cfg.flow,
        &mut stream(cfg.seed, step as u64, element_key, purpose::INTERPOLATE),
    )?;

    let coords_flat: Vec<f64> = zt.coords.iter().flatten().copied().collect();
    let bonds_idx: Vec<usize> = zt.bonds.iter().map(|&b| b as usize).collect();
    let mask = vec![true; n];
    let mut input = ModelInput {
        coords: &coords_flat,
        atom_types: &zt.atom_types,
        charges: &zt.charges,
        bonds: &bonds_idx,
        t,
        mask: &mask,
        self_cond: None,
    };
    let sc;
    if self_cond_batch {
        sc = detached_self_cond(params, &input)?;
        input.self_cond = Some(&sc);
    }

    let mut tape = Tape::new();
    let b = params.bind(&mut tape)?;
    let pred = forward(&mut tape, params, &b, &input)?;
    let target = LossTarget {
        coords: mol.coords(),
        atom_types: mol.atom_types(),
        charges: mol.charges(),
        bonds: mol.bonds(),
        mask: &mask,
    };
    let (total, breakdown) = loss(&mut tape, &pred, &target, &cfg.flow)?;
    let finite = breakdown.total.is_finite();
    let grads = if finite {
        tape.backward(total)?;
        b.refs()
            .iter()
            .map(|&r| tape.grad(r).map(<[f64]>::to_vec).unwrap_or_default())
            .collect()
    } else {
        Vec::new()
    };
    Ok(ElementResult {
        grads,
        loss: breakdown,
        finite,
    })
}

/// One optimizer step over a batch of molecules. Returns gradients applied
/// and the averaged statistics.
pub fn training_step(
    params: &mut ModelParams,
    opt: &mut AmsGrad,
    batch: &[&Molecule],
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepStats, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let vocab = Vocabulary::default();
    let c = &params.config;
    if (c.n_atom_types, c.n_charges, c.n_bond_kinds)
        != (vocab.n_atom_types(), vocab.n_charges(), vocab.n_bond_kinds())
    {
        return Err(TrainError::ConfigMismatch(
            "model vocabulary sizes disagree with the molecule vocabulary".into(),
        ));
    }
    let self_cond_batch = cfg.flow.self_cond
        && stream(cfg.seed, step as u64, 0, purpose::SELF_COND_COIN).random_bool(0.5);

    let frozen: &ModelParams = params;
    let results: Vec<Result<ElementResult, TrainError>> = crate::exec::par_map_range(
        batch.len(),
        |i| run_element(frozen, batch[i], cfg, step, i as u64, self_cond_batch),
    );

    let inv_b = 1.0 / batch.len() as f64;
    let mut grads: Vec<Vec<f64>> = (0..params.n_tensors())
        .map(|idx| vec![0.0; params.values(idx).len()])
        .collect();
    let mut agg = LossBreakdown {
        coord: 0.0,
        atom: 0.0,
        bond: 0.0,
        charge: 0.0,
        total: 0.0,
    };
    for (element, result) in results.into_iter().enumerate() {
        let r = result?;
        if !r.finite {
            return Err(TrainError::NonFinite { step, element });
        }
        for (acc, g) in grads.iter_mut().zip(&r.grads) {
            for (a, &v) in acc.iter_mut().zip(g) {
                *a += v * inv_b;
            }
        }
        agg.coord += r.loss.coord * inv_b;
        agg.atom += r.loss.atom * inv_b;
        agg.bond += r.loss.bond * inv_b;
        agg.charge += r.loss.charge * inv_b;
        agg.total += r.loss.total * inv_b;
    }

    let mut squares: Vec<f64> = grads.iter().flatten().map(|&g| g * g).collect();
    let grad_norm = canonical_sum(&mut squares).sqrt();
    if !grad_norm.is_finite() {
        return Err(TrainError::NonFinite { step, element: usize::MAX });
    }
    if grad_norm > cfg.grad_clip {
        let scale = cfg.grad_clip / grad_norm;
        for g in grads.iter_mut().flat_map(|g| g.iter_mut()) {
            *g *= scale;
        }
    }

    let lr = warmup_lr(cfg.lr, opt.step + 1, cfg.warmup_steps);
    opt.apply(params, &grads, lr);
    Ok(StepStats {
        step,
        lr,
        loss: agg,
        grad_norm,
        self_cond: self_cond_batch,
        n_mols: batch.len(),
    })
}

/// Zero-centers every molecule in place; training targets live at the
/// origin like the predictions.
pub fn center_corpus(molecules: &mut [Molecule]) -> Result<(), MoleculeError> {
    for mol in molecules {
        zero_center(mol.coords_mut(), None)?;
    }
    Ok(())
}

/// Deterministic batch plan for one epoch: bucketed by size, shuffled by a
/// seed derived from (seed, epoch).
fn epoch_batches(
    sizes: &[usize],
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<Vec<Vec<usize>>, BatchError> {
    let mix = stream(cfg.seed, epoch, 0, purpose::BATCH_ORDER).random::<u64>();
    bucket_batches(sizes, cfg.atoms_per_batch, mix)
}

/// Trains for `steps` optimizer steps, invoking `observer` after each. The
/// step counter continues from `opt.step`, so resuming a checkpoint replays
/// exactly the schedule a longer run would have taken.
pub fn train(
    params: &mut ModelParams,
    opt: &mut AmsGrad,
    molecules: &[Molecule],
    cfg: &TrainConfig,
    steps: usize,
    mut observer: impl FnMut(&StepStats),
) -> Result<(), TrainError> {
    if molecules.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let sizes: Vec<usize> = molecules.iter().map(Molecule::n_atoms).collect();
    let mut plan = epoch_batches(&sizes, cfg, 0)?;
    let mut epoch = 0u64;
    for _ in 0..steps {
        let step = opt.step;
        let within = step % plan.len();
        let want_epoch = (step / plan.len()) as u64;
        if want_epoch != epoch {
            epoch = want_epoch;
            plan = epoch_batches(&sizes, cfg, epoch)?;
        }
        let batch: Vec<&Molecule> = plan[within].iter().map(|&i| &molecules[i]).collect();
        let stats = training_step(params, opt, &batch, cfg, step)?;
        observer(&stats);
    }
    Ok(())
}

/// Serializes parameters, optimizer moments, and the step counter.
pub fn to_checkpoint(params: &ModelParams, opt: &AmsGrad, cfg: &TrainConfig) -> Checkpoint {
    let mut ckpt = Checkpoint::new();
    let c = &params.config;
    for (key, value) in [
        ("n_layers", c.n_layers),
        ("d_inv", c.d_inv),
        ("d_equi", c.d_equi),
        ("d_l", c.d_l),
        ("n_heads", c.n_heads),
        ("d_edge", c.d_edge),
        ("n_atom_types", c.n_atom_types),
        ("n_charges", c.n_charges),
        ("n_bond_kinds", c.n_bond_kinds),
        ("step", opt.step),
    ] {
        ckpt.meta.insert(key.into(), value.to_string());
    }
    ckpt.meta.insert("lr".into(), format!("{}", cfg.lr));
    ckpt.meta
        .insert("warmup_steps".into(), cfg.warmup_steps.to_string());
    for idx in 0..params.n_tensors() {
        ckpt.insert(params.name(idx), params.shape(idx), params.values(idx));
    }
    let (m, v, vhat) = opt.state();
    ckpt.insert("opt.m", &[m.len()], m);
    ckpt.insert("opt.v", &[v.len()], v);
    ckpt.insert("opt.vhat", &[vhat.len()], vhat);
    ckpt
}

fn meta_usize(ckpt: &Checkpoint, key: &str) -> Result<usize, TrainError> {
    ckpt.meta
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| TrainError::ConfigMismatch(format!("missing or bad meta key {key}")))
}

/// Rebuilds parameters and optimizer state from a checkpoint.
pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(ModelParams, AmsGrad), TrainError> {
    let config = SemlaConfig {
        n_layers: meta_usize(ckpt, "n_layers")?,
        d_inv: meta_usize(ckpt, "d_inv")?,
        d_equi: meta_usize(ckpt, "d_equi")?,
        d_l: meta_usize(ckpt, "d_l")?,
        n_heads: meta_usize(ckpt, "n_heads")?,
        d_edge: meta_usize(ckpt, "d_edge")?,
        n_atom_types: meta_usize(ckpt, "n_atom_types")?,
        n_charges: meta_usize(ckpt, "n_charges")?,
        n_bond_kinds: meta_usize(ckpt, "n_bond_kinds")?,
    };
    let step = meta_usize(ckpt, "step")?;
    let mut params = ModelParams::init(config, 0)?;
    for idx in 0..params.n_tensors() {
        let name = params.name(idx).to_string();
        let (shape, values) = ckpt.tensor(&name)?;
        if shape != params.shape(idx) {
            return Err(TrainError::ConfigMismatch(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                params.shape(idx)
            )));
        }
        params.values_mut(idx).copy_from_slice(values);
    }
    let n = params.n_scalars();
    let get = |name: &str| -> Result<Vec<f64>, TrainError> {
        let (_, v) = ckpt.tensor(name)?;
        if v.len() != n {
            return Err(TrainError::ConfigMismatch(format!(
                "{name} holds {} scalars, model has {n}",
                v.len()
            )));
        }
        Ok(v.to_vec())
    };
    let opt = AmsGrad::restore(n, step, &get("opt.m")?, &get("opt.v")?, &get("opt.vhat")?);
    Ok((params, opt))
}
