//! Dense f64 tensors on an append-only autodiff tape.
//!
//! The engine is deliberately small: eager forward evaluation, reverse-mode
//! gradients computed by walking the tape backwards, explicit broadcasting
//! ops instead of general broadcasting rules, and `Result`-based shape
//! checking. Nodes are append-only, so the tape is topologically ordered by
//! construction.
//!
//! Reductions that fold many summands into one value do so in a
//! value-canonical order (see [`canonical_sum`]). The multiset of summands in
//! every such reduction is unchanged when atoms are permuted, so forward
//! results are bit-exactly permutation-(co)variant. The model code relies on
//! this for its exact atom-permutation contract.

mod backward;
mod ops;

use thiserror::Error;

/// Numerical guard added to variances and norms before division.
pub const NORM_EPS: f64 = 1e-8;

/// Pair directions shorter than this are treated as coincident points and
/// mapped to the zero vector instead of an arbitrary unit vector.
pub const DIRECTION_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: invalid axis {axis} for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: reduction over an empty or fully masked axis")]
    EmptyReduction { op: &'static str },
    #[error("{op}: index {index} out of bounds for size {size}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("backward target must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
}

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorRef(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(TensorRef, TensorRef),
    Sub(TensorRef, TensorRef),
    Mul(TensorRef, TensorRef),
    Scale(TensorRef, f64),
    /// Constant offset; the constant itself is not needed for backward.
    AddConst(TensorRef),
    Recip(TensorRef),
    Sqrt(TensorRef),
    Silu(TensorRef),
    /// Broadcast-add `v` over the leading axes of `x`; `v` matches a trailing
    /// suffix of `x`'s shape.
    AddTrail {
        x: TensorRef,
        v: TensorRef,
    },
    /// Broadcast-multiply by a trailing-suffix tensor.
    MulTrail {
        x: TensorRef,
        v: TensorRef,
    },
    /// Multiply each trailing block of `x` by a scalar from `s`; `s` matches a
    /// leading prefix of `x`'s shape.
    MulPrefix {
        x: TensorRef,
        s: TensorRef,
    },
    /// Tile `v` along a new leading axis of length `n`.
    BroadcastLead {
        v: TensorRef,
        n: usize,
    },
    /// Tile a tensor along a new trailing axis of length `len`.
    BroadcastLast {
        s: TensorRef,
        len: usize,
    },
    MatMul(TensorRef, TensorRef),
    /// Mix the channel axis of `x: [N, c_in, L]` with `w: [c_out, c_in]`.
    ChannelMix {
        w: TensorRef,
        x: TensorRef,
    },
    /// Per-row outer product: `s: [N, C]`, `v: [N, L]` -> `[N, C, L]`.
    RowOuter {
        s: TensorRef,
        v: TensorRef,
    },
    /// Channel-aligned pair dots: `x: [N, C, 3]` -> `[N, N, C]`.
    PairDot(TensorRef),
    /// Per-channel unit directions between atom pairs:
    /// `x: [N, C, 3]` -> `[N, N, C, 3]`, zero vector below [`DIRECTION_EPS`].
    PairDirections(TensorRef),
    /// Tile rows over a new second axis: `h: [N, F]` -> `[N, N, F]` with
    /// `out[i][j] = h[i]`.
    PairRows(TensorRef),
    /// Tile rows over a new first axis: `out[i][j] = h[j]`.
    PairCols(TensorRef),
    /// Swap the two leading (pair) axes.
    TransposePair(TensorRef),
    ConcatLast(Vec<TensorRef>),
    SliceLast {
        x: TensorRef,
        offset: usize,
        len: usize,
    },
    Softmax {
        x: TensorRef,
        axis: usize,
        mask: Option<Vec<bool>>,
    },
    /// Segment attention mix: `alpha: [N, N, K]`, `v: [N, D]` with `K | D`;
    /// `out[i][d] = sum_j alpha[i][j][head(d)] * v[j][d]`.
    AttnMixInv {
        alpha: TensorRef,
        v: TensorRef,
    },
    /// Per-head scaling: `x: [N, D]`, `w: [N, K]` with `K | D`.
    MulHeads {
        x: TensorRef,
        w: TensorRef,
    },
    /// Direction attention mix: `alpha: [N, N, K]`, `dirs: [N, N, K, 3]`;
    /// `out[i][k] = sum_j alpha[i][j][k] * dirs[i][j][k]`.
    AttnMixEqui {
        alpha: TensorRef,
        dirs: TensorRef,
    },
    SumAxis {
        x: TensorRef,
        axis: usize,
    },
    SumAll(TensorRef),
    /// Mean over the leading (atom) axis, optionally restricted by a mask.
    MeanAtoms {
        x: TensorRef,
        mask: Option<Vec<bool>>,
    },
    /// L2 norm along the last axis.
    NormLast(TensorRef),
    /// Normalize the last axis to mean 0, variance 1 (no learnable part).
    LayerNorm(TensorRef),
    /// Row lookup: `table: [V, E]` indexed per entry of `indices`.
    Embedding {
        table: TensorRef,
        indices: Vec<usize>,
    },
    GatherRows {
        x: TensorRef,
        rows: Vec<usize>,
    },
    /// Adjoint of gather: `out[rows[s]] += x[s]` into a zero tensor.
    ScatterRows {
        x: TensorRef,
        rows: Vec<usize>,
    },
    /// Mean over rows of `-log softmax(logits)[target]`.
    CrossEntropy {
        logits: TensorRef,
        targets: Vec<usize>,
    },
    Reshape(TensorRef),
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub op: Op,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

/// Append-only computation record. Building an op evaluates it immediately;
/// [`Tape::backward`] then fills in gradients for every node reachable from
/// the loss.
#[derive(Debug, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

/// Sums `values` after sorting them into a canonical order, so the result
/// depends only on the multiset of summands and not on their arrangement.
/// Scrambles the buffer.
pub fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let mut acc = 0.0;
    for v in values.iter() {
        acc += *v;
    }
    acc
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Splits `shape` at `axis` into (outer, len, inner) extents.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all nodes from `mark` onward, invalidating their handles.
    /// Used to reuse one allocation across training steps.
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    pub fn shape(&self, t: TensorRef) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn values(&self, t: TensorRef) -> &[f64] {
        &self.nodes[t.0].values
    }

    pub fn value_scalar(&self, t: TensorRef) -> f64 {
        debug_assert_eq!(self.nodes[t.0].values.len(), 1);
        self.nodes[t.0].values[0]
    }

    /// Gradient of the last `backward` target w.r.t. `t`, if `t` was reached.
    pub fn grad(&self, t: TensorRef) -> Option<&[f64]> {
        self.nodes[t.0].grad.as_deref()
    }

    pub fn check_finite(&self, t: TensorRef, op: &'static str) -> Result<(), TensorError> {
        if self.values(t).iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op })
        }
    }

    pub(crate) fn push(&mut self, op: Op, shape: Vec<usize>, values: Vec<f64>) -> TensorRef {
        debug_assert_eq!(numel(&shape), values.len());
        self.nodes.push(Node {
            op,
            shape,
            values,
            grad: None,
        });
        TensorRef(self.nodes.len() - 1)
    }

    /// Creates an input node holding `values`.
    pub fn leaf(&mut self, shape: &[usize], values: Vec<f64>) -> Result<TensorRef, TensorError> {
        if numel(shape) != values.len() {
            return Err(TensorError::ShapeMismatch {
                op: "leaf",
                left: shape.to_vec(),
                right: vec![values.len()],
            });
        }
        Ok(self.push(Op::Leaf, shape.to_vec(), values))
    }

    pub fn scalar(&mut self, v: f64) -> TensorRef {
        self.push(Op::Leaf, vec![], vec![v])
    }

    pub fn zeros(&mut self, shape: &[usize]) -> TensorRef {
        let values = vec![0.0; numel(shape)];
        self.push(Op::Leaf, shape.to_vec(), values)
    }
}
