//! The equivariant latent-attention network.
//!
//! Node state is a pair (h, x): h holds rotation-invariant features per atom,
//! x holds `d_equi` vector channels of 3 components that rotate with the
//! molecule. Each layer runs a feature feed-forward, compresses h into a
//! `d_l`-wide latent space to form pairwise attention logits, and applies
//! separate invariant and equivariant attention updates. Bond information
//! enters through the first layer's message module and leaves through the
//! last layer's extra message outputs, which a refinement head turns into
//! bond logits.

mod layer;
mod model;

pub use layer::{
    attend_equivariant, attend_invariant, feed_forward, latent_messages, norm_equi, norm_inv,
    LayerIo,
};
pub use model::{embed_inputs, forward, refine_bonds, EmbedOut};

use crate::tensor::{Tape, TensorError, TensorRef};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Model dimensions. Vocabulary sizes count live entries; embedding tables
/// reserve one extra trailing row for padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemlaConfig {
    pub n_layers: usize,
    pub d_inv: usize,
    pub d_equi: usize,
    pub d_l: usize,
    pub n_heads: usize,
    pub d_edge: usize,
    pub n_atom_types: usize,
    pub n_charges: usize,
    pub n_bond_kinds: usize,
}

impl SemlaConfig {
    pub fn validate(&self) -> Result<(), ArchError> {
        let all = [
            self.n_layers,
            self.d_inv,
            self.d_equi,
            self.d_l,
            self.n_heads,
            self.d_edge,
            self.n_atom_types,
            self.n_charges,
            self.n_bond_kinds,
        ];
        if all.iter().any(|&v| v == 0) {
            return Err(ArchError::Config("all dimensions must be positive".into()));
        }
        if self.d_inv % self.n_heads != 0 {
            return Err(ArchError::Config(format!(
                "n_heads {} must divide d_inv {}",
                self.n_heads, self.d_inv
            )));
        }
        if self.d_l > self.d_inv {
            return Err(ArchError::Config(format!(
                "d_l {} must not exceed d_inv {}",
                self.d_l, self.d_inv
            )));
        }
        Ok(())
    }

    /// Desk-scale configuration used across tests.
    pub fn toy(vocab: &crate::molecule::Vocabulary) -> Self {
        Self {
            n_layers: 2,
            d_inv: 32,
            d_equi: 8,
            d_l: 8,
            n_heads: 4,
            d_edge: 8,
            n_atom_types: vocab.n_atom_types(),
            n_charges: vocab.n_charges(),
            n_bond_kinds: vocab.n_bond_kinds(),
        }
    }

    /// Omega input width at layer `l`: latent features of both endpoints,
    /// channel-aligned dots, plus edge features on the first layer.
    pub(crate) fn omega_in(&self, l: usize) -> usize {
        2 * self.d_l + self.d_equi + if l == 0 { self.d_edge } else { 0 }
    }

    /// Omega output width at layer `l`: one logit per attention head pair,
    /// plus generated edge features on the last layer.
    pub(crate) fn omega_out(&self, l: usize) -> usize {
        2 * self.n_heads + if l + 1 == self.n_layers { self.d_edge } else { 0 }
    }
}

enum Init {
    /// Uniform(+-sqrt(3/fan_in)); keeps activation variance flat.
    Kaiming { fan_in: usize },
    Zero,
    One,
    Const(f64),
}

/// Named, shaped parameter tensors in a fixed creation order. The order is
/// the binding order on every tape, so gradient slots line up with entries.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: SemlaConfig,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

pub struct Bindings {
    refs: Vec<TensorRef>,
}

impl Bindings {
    pub fn refs(&self) -> &[TensorRef] {
        &self.refs
    }
}

impl ModelParams {
    pub fn init(config: SemlaConfig, seed: u64) -> Result<Self, ArchError> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut p = Self {
            config: config.clone(),
            names: Vec::new(),
            shapes: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        };
        let c = &config;
        let (di, de, dl, k, dg) = (c.d_inv, c.d_equi, c.d_l, c.n_heads, c.d_edge);
        let (na, nc, nb) = (c.n_atom_types, c.n_charges, c.n_bond_kinds);

        let mut add = |p: &mut Self, name: String, shape: Vec<usize>, init: Init| {
            let n = shape.iter().product::<usize>();
            let values = match init {
                Init::Kaiming { fan_in } => {
                    let bound = (3.0 / fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                }
                Init::Zero => vec![0.0; n],
                Init::One => vec![1.0; n],
                Init::Const(v) => vec![v; n],
            };
            p.index.insert(name.clone(), p.names.len());
            p.names.push(name);
            p.shapes.push(shape);
            p.values.push(values);
        };

        add(&mut p, "embed.atom_table".into(), vec![na + 1, di], Init::Kaiming { fan_in: di });
        add(&mut p, "embed.charge_table".into(), vec![nc + 1, di], Init::Kaiming { fan_in: di });
        let h_in = 2 * di + 1 + na;
        add(&mut p, "embed.h_in.w".into(), vec![h_in, di], Init::Kaiming { fan_in: h_in });
        add(&mut p, "embed.h_in.b".into(), vec![di], Init::Zero);
        add(&mut p, "embed.x_in.w".into(), vec![de, 2], Init::Kaiming { fan_in: 2 });
        add(&mut p, "embed.bond_table".into(), vec![nb + 1, dg], Init::Kaiming { fan_in: dg });
        add(&mut p, "embed.e_in.w".into(), vec![dg + nb, dg], Init::Kaiming { fan_in: dg + nb });
        add(&mut p, "embed.e_in.b".into(), vec![dg], Init::Zero);

        for l in 0..c.n_layers {
            let pre = |s: &str| format!("l{l}.{s}");
            add(&mut p, pre("norm1_inv.gain"), vec![di], Init::One);
            add(&mut p, pre("norm1_inv.bias"), vec![di], Init::Zero);
            add(&mut p, pre("norm1_equi.gain"), vec![de], Init::One);
            add(&mut p, pre("norm2_inv.gain"), vec![di], Init::One);
            add(&mut p, pre("norm2_inv.bias"), vec![di], Init::Zero);
            add(&mut p, pre("norm2_equi.gain"), vec![de], Init::One);

            add(&mut p, pre("ff.w1"), vec![de, de], Init::Kaiming { fan_in: de });
            add(&mut p, pre("ff.phi.w1"), vec![di + de, 4 * di], Init::Kaiming { fan_in: di + de });
            add(&mut p, pre("ff.phi.b1"), vec![4 * di], Init::Zero);
            // residual-final projections start at zero so a fresh stack is
            // the identity map
            add(&mut p, pre("ff.phi.w2"), vec![4 * di, di], Init::Zero);
            add(&mut p, pre("ff.phi.b2"), vec![di], Init::Zero);
            add(&mut p, pre("ff.psi.w1"), vec![di, de], Init::Kaiming { fan_in: di });
            add(&mut p, pre("ff.psi.b1"), vec![de], Init::Zero);
            // psi's final layer stays random: its output multiplies the
            // zero-initialized ff.w2, so zeroing both would freeze the branch
            // (each factor's gradient is proportional to the other factor)
            add(&mut p, pre("ff.psi.w2"), vec![de, de], Init::Kaiming { fan_in: de });
            add(&mut p, pre("ff.psi.b2"), vec![de], Init::Zero);
            add(&mut p, pre("ff.w2"), vec![de, de], Init::Zero);

            add(&mut p, pre("msg.w3"), vec![di, dl], Init::Kaiming { fan_in: di });
            let o_in = c.omega_in(l);
            let o_out = c.omega_out(l);
            add(&mut p, pre("msg.omega.w1"), vec![o_in, dl], Init::Kaiming { fan_in: o_in });
            add(&mut p, pre("msg.omega.b1"), vec![dl], Init::Zero);
            add(&mut p, pre("msg.omega.w2"), vec![dl, o_out], Init::Zero);
            add(&mut p, pre("msg.omega.b2"), vec![o_out], Init::Zero);

            add(&mut p, pre("attn.w4"), vec![di, di], Init::Kaiming { fan_in: di });
            add(&mut p, pre("attn.w5"), vec![di, di], Init::Zero);
            add(&mut p, pre("attn.w6"), vec![k, de], Init::Kaiming { fan_in: de });
            add(&mut p, pre("attn.w7"), vec![de, k], Init::Zero);
        }

        add(&mut p, "head.atom.w1".into(), vec![di, di], Init::Kaiming { fan_in: di });
        add(&mut p, "head.atom.b1".into(), vec![di], Init::Zero);
        add(&mut p, "head.atom.w2".into(), vec![di, na], Init::Zero);
        add(&mut p, "head.atom.b2".into(), vec![na], Init::Zero);
        add(&mut p, "head.charge.w1".into(), vec![di, di], Init::Kaiming { fan_in: di });
        add(&mut p, "head.charge.b1".into(), vec![di], Init::Zero);
        add(&mut p, "head.charge.w2".into(), vec![di, nc], Init::Zero);
        add(&mut p, "head.charge.b2".into(), vec![nc], Init::Zero);
        // coordinate head starts as the channel mean so initial coordinate
        // predictions are live rather than pinned at zero
        add(&mut p, "head.coord.w".into(), vec![1, de], Init::Const(1.0 / de as f64));
        add(&mut p, "head.bond.hproj".into(), vec![di, dg], Init::Kaiming { fan_in: di });
        add(&mut p, "head.bond.w1".into(), vec![3 * dg + 1, 2 * dg], Init::Kaiming { fan_in: 3 * dg + 1 });
        add(&mut p, "head.bond.b1".into(), vec![2 * dg], Init::Zero);
        add(&mut p, "head.bond.w2".into(), vec![2 * dg, nb], Init::Zero);
        add(&mut p, "head.bond.b2".into(), vec![nb], Init::Zero);

        Ok(p)
    }

    pub fn n_tensors(&self) -> usize {
        self.names.len()
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn offset(&self, name: &str) -> Result<usize, ArchError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ArchError::UnknownParam(name.to_string()))
    }

    pub fn shape(&self, idx: usize) -> &[usize] {
        &self.shapes[idx]
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn values(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn values_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.values[idx]
    }

    pub fn entry(&self, name: &str) -> Result<(&[usize], &[f64]), ArchError> {
        let i = self.offset(name)?;
        Ok((&self.shapes[i], &self.values[i]))
    }

    pub fn entry_mut(&mut self, name: &str) -> Result<&mut [f64], ArchError> {
        let i = self.offset(name)?;
        Ok(&mut self.values[i])
    }

    /// Pushes every tensor onto the tape as a leaf, in entry order.
    pub fn bind(&self, tape: &mut Tape) -> Result<Bindings, TensorError> {
        let mut refs = Vec::with_capacity(self.names.len());
        for (shape, values) in self.shapes.iter().zip(&self.values) {
            refs.push(tape.leaf(shape, values.clone())?);
        }
        Ok(Bindings { refs })
    }

    pub fn r(&self, b: &Bindings, name: &str) -> Result<TensorRef, ArchError> {
        Ok(b.refs[self.offset(name)?])
    }
}

/// One molecule's network inputs. Coordinates are expected zero-centered
/// over live atoms; padded positions carry the pad vocabulary index and zero
/// coordinates.
pub struct ModelInput<'a> {
    pub coords: &'a [f64],
    pub atom_types: &'a [usize],
    pub charges: &'a [usize],
    pub bonds: &'a [usize],
    pub t: f64,
    pub mask: &'a [bool],
    pub self_cond: Option<&'a SelfCondData>,
}

/// Previous-prediction payload for self-conditioning: predicted coordinates
/// plus softmax-normalized atom and bond distributions. The neutral value
/// (used when no prediction exists or conditioning is disabled) is zero
/// coordinates and uniform distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfCondData {
    pub coords: Vec<f64>,
    pub atom_probs: Vec<f64>,
    pub bond_probs: Vec<f64>,
}

impl SelfCondData {
    pub fn neutral(n: usize, config: &SemlaConfig) -> Self {
        Self {
            coords: vec![0.0; n * 3],
            atom_probs: vec![1.0 / config.n_atom_types as f64; n * config.n_atom_types],
            bond_probs: vec![1.0 / config.n_bond_kinds as f64; n * n * config.n_bond_kinds],
        }
    }
}

/// Network outputs, still on the tape so losses can differentiate through
/// them. Coordinates are zero-centered over live atoms and zeroed at padded
/// rows; bond logits are exactly symmetric.
pub struct Prediction {
    pub coords: TensorRef,
    pub atom_logits: TensorRef,
    pub charge_logits: TensorRef,
    pub bond_logits: TensorRef,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::Vocabulary;

    #[test]
    fn config_divisibility_is_enforced() {
        let vocab = Vocabulary::default();
        let mut cfg = SemlaConfig::toy(&vocab);
        cfg.n_heads = 5;
        assert!(cfg.validate().is_err());
        cfg.n_heads = 4;
        cfg.d_l = 64;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_seed_deterministic_and_residual_finals_are_zero() {
        let vocab = Vocabulary::default();
        let cfg = SemlaConfig::toy(&vocab);
        let a = ModelParams::init(cfg.clone(), 7).unwrap();
        let b = ModelParams::init(cfg.clone(), 7).unwrap();
        for i in 0..a.n_tensors() {
            assert_eq!(a.values(i), b.values(i), "{}", a.name(i));
        }
        let c = ModelParams::init(cfg, 8).unwrap();
        assert_ne!(a.values(0), c.values(0));
        for name in ["l0.ff.w2", "l1.attn.w5", "l1.attn.w7", "l0.ff.phi.w2", "l0.msg.omega.w2"] {
            let (_, vals) = a.entry(name).unwrap();
            assert!(vals.iter().all(|&v| v == 0.0), "{name} should start zero");
        }
        let (_, psi) = a.entry("l0.ff.psi.w2").unwrap();
        assert!(psi.iter().any(|&v| v != 0.0), "psi final must stay live");
    }

    #[test]
    fn binding_order_matches_entry_order() {
        let vocab = Vocabulary::default();
        let params = ModelParams::init(SemlaConfig::toy(&vocab), 1).unwrap();
        let mut tape = Tape::new();
        let b = params.bind(&mut tape).unwrap();
        assert_eq!(b.refs().len(), params.n_tensors());
        for i in 0..params.n_tensors() {
            assert_eq!(tape.values(b.refs()[i]), params.values(i));
            assert_eq!(tape.shape(b.refs()[i]), params.shape(i));
        }
    }
}
