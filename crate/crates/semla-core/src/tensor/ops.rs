//! Forward construction of tape ops. Every constructor validates shapes,
//! evaluates eagerly, and appends one node.

use super::{axis_split, canonical_sum, numel, Op, Tape, TensorError, TensorRef, DIRECTION_EPS};

/// Numerical guard inside the layer-norm denominator.
pub(crate) const LN_EPS: f64 = 1e-8;

fn same_shape(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<(), TensorError> {
    if a == b {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        })
    }
}

impl Tape {
    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, TensorError> {
        same_shape("add", self.shape(a), self.shape(b))?;
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Op::Add(a, b), self.nodes[a.0].shape.clone(), values))
    }

    pub fn sub(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, TensorError> {
        same_shape("sub", self.shape(a), self.shape(b))?;
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(Op::Sub(a, b), self.nodes[a.0].shape.clone(), values))
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, TensorError> {
        same_shape("mul", self.shape(a), self.shape(b))?;
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Op::Mul(a, b), self.nodes[a.0].shape.clone(), values))
    }

    pub fn scale(&mut self, x: TensorRef, c: f64) -> TensorRef {
        let values = self.values(x).iter().map(|v| v * c).collect();
        self.push(Op::Scale(x, c), self.nodes[x.0].shape.clone(), values)
    }

    pub fn add_const(&mut self, x: TensorRef, c: f64) -> TensorRef {
        let values = self.values(x).iter().map(|v| v + c).collect();
        self.push(Op::AddConst(x), self.nodes[x.0].shape.clone(), values)
    }

    pub fn recip(&mut self, x: TensorRef) -> TensorRef {
        let values = self.values(x).iter().map(|v| 1.0 / v).collect();
        self.push(Op::Recip(x), self.nodes[x.0].shape.clone(), values)
    }

    pub fn sqrt(&mut self, x: TensorRef) -> TensorRef {
        let values = self.values(x).iter().map(|v| v.sqrt()).collect();
        self.push(Op::Sqrt(x), self.nodes[x.0].shape.clone(), values)
    }

    pub fn silu(&mut self, x: TensorRef) -> TensorRef {
        let values = self
            .values(x)
            .iter()
            .map(|&v| v / (1.0 + (-v).exp()))
            .collect();
        self.push(Op::Silu(x), self.nodes[x.0].shape.clone(), values)
    }

    fn trail_check(
        &self,
        op: &'static str,
        x: TensorRef,
        v: TensorRef,
    ) -> Result<(), TensorError> {
        let xs = self.shape(x);
        let vs = self.shape(v);
        if vs.len() <= xs.len() && xs[xs.len() - vs.len()..] == *vs {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                left: xs.to_vec(),
                right: vs.to_vec(),
            })
        }
    }

    /// `x + v` with `v` broadcast over the leading axes of `x`.
    pub fn add_trail(&mut self, x: TensorRef, v: TensorRef) -> Result<TensorRef, TensorError> {
        self.trail_check("add_trail", x, v)?;
        let block = self.values(v).len().max(1);
        let values = self
            .values(x)
            .iter()
            .enumerate()
            .map(|(i, xv)| xv + self.values(v)[i % block])
            .collect();
        Ok(self.push(Op::AddTrail { x, v }, self.nodes[x.0].shape.clone(), values))
    }

    /// `x * v` with `v` broadcast over the leading axes of `x`.
    pub fn mul_trail(&mut self, x: TensorRef, v: TensorRef) -> Result<TensorRef, TensorError> {
        self.trail_check("mul_trail", x, v)?;
        let block = self.values(v).len().max(1);
        let values = self
            .values(x)
            .iter()
            .enumerate()
            .map(|(i, xv)| xv * self.values(v)[i % block])
            .collect();
        Ok(self.push(Op::MulTrail { x, v }, self.nodes[x.0].shape.clone(), values))
    }

    /// `x * s` with scalar `s[p]` applied to the whole trailing block at
    /// leading index `p`.
    pub fn mul_prefix(&mut self, x: TensorRef, s: TensorRef) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x);
        let ss = self.shape(s);
        if ss.len() > xs.len() || xs[..ss.len()] != *ss {
            return Err(TensorError::ShapeMismatch {
                op: "mul_prefix",
                left: xs.to_vec(),
                right: ss.to_vec(),
            });
        }
        let block = numel(&xs[ss.len()..]).max(1);
        let values = self
            .values(x)
            .iter()
            .enumerate()
            .map(|(i, xv)| xv * self.values(s)[i / block])
            .collect();
        Ok(self.push(Op::MulPrefix { x, s }, self.nodes[x.0].shape.clone(), values))
    }

    /// Tiles `v` along a new leading axis of length `n`.
    pub fn broadcast_lead(&mut self, v: TensorRef, n: usize) -> TensorRef {
        let mut shape = Vec::with_capacity(self.shape(v).len() + 1);
        shape.push(n);
        shape.extend_from_slice(self.shape(v));
        let mut values = Vec::with_capacity(n * self.values(v).len());
        for _ in 0..n {
            values.extend_from_slice(self.values(v));
        }
        self.push(Op::BroadcastLead { v, n }, shape, values)
    }

    /// Tiles each element of `s` along a new trailing axis of length `len`.
    pub fn broadcast_last(&mut self, s: TensorRef, len: usize) -> TensorRef {
        let mut shape = self.shape(s).to_vec();
        shape.push(len);
        let mut values = Vec::with_capacity(self.values(s).len() * len);
        for &v in self.values(s) {
            values.extend(std::iter::repeat(v).take(len));
        }
        self.push(Op::BroadcastLast { s, len }, shape, values)
    }

    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, TensorError> {
        let (asp, bsp) = (self.shape(a), self.shape(b));
        if asp.len() != 2 || bsp.len() != 2 || asp[1] != bsp[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: asp.to_vec(),
                right: bsp.to_vec(),
            });
        }
        let (m, k, n) = (asp[0], asp[1], bsp[1]);
        let mut values = vec![0.0; m * n];
        let av = self.values(a);
        let bv = self.values(b);
        for i in 0..m {
            let out = &mut values[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bpj) in out.iter_mut().zip(brow) {
                    *o += aip * bpj;
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), vec![m, n], values))
    }

    /// Mixes the channel axis: `w: [c_out, c_in]`, `x: [N, c_in, L]`.
    pub fn channel_mix(&mut self, w: TensorRef, x: TensorRef) -> Result<TensorRef, TensorError> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        if ws.len() != 2 || xs.len() != 3 || ws[1] != xs[1] {
            return Err(TensorError::ShapeMismatch {
                op: "channel_mix",
                left: ws.to_vec(),
                right: xs.to_vec(),
            });
        }
        let (c_out, c_in) = (ws[0], ws[1]);
        let (n, l) = (xs[0], xs[2]);
        let mut values = vec![0.0; n * c_out * l];
        let wv = self.values(w);
        let xv = self.values(x);
        for i in 0..n {
            for o in 0..c_out {
                let out = &mut values[(i * c_out + o) * l..(i * c_out + o + 1) * l];
                for c in 0..c_in {
                    let woc = wv[o * c_in + c];
                    let row = &xv[(i * c_in + c) * l..(i * c_in + c + 1) * l];
                    for (ov, &rv) in out.iter_mut().zip(row) {
                        *ov += woc * rv;
                    }
                }
            }
        }
        Ok(self.push(Op::ChannelMix { w, x }, vec![n, c_out, l], values))
    }

    /// Per-row outer product: `s: [N, C]`, `v: [N, L]` -> `[N, C, L]`.
    pub fn row_outer(&mut self, s: TensorRef, v: TensorRef) -> Result<TensorRef, TensorError> {
        let (ss, vs) = (self.shape(s), self.shape(v));
        if ss.len() != 2 || vs.len() != 2 || ss[0] != vs[0] {
            return Err(TensorError::ShapeMismatch {
                op: "row_outer",
                left: ss.to_vec(),
                right: vs.to_vec(),
            });
        }
        let (n, c, l) = (ss[0], ss[1], vs[1]);
        let mut values = Vec::with_capacity(n * c * l);
        for i in 0..n {
            for ci in 0..c {
                let sv = self.values(s)[i * c + ci];
                for li in 0..l {
                    values.push(sv * self.values(v)[i * l + li]);
                }
            }
        }
        Ok(self.push(Op::RowOuter { s, v }, vec![n, c, l], values))
    }

    /// Channel-aligned dot products between all atom pairs:
    /// `x: [N, C, 3]` -> `[N, N, C]`.
    pub fn pair_dot(&mut self, x: TensorRef) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x);
        if xs.len() != 3 || xs[2] != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "pair_dot",
                left: xs.to_vec(),
                right: vec![0, 0, 3],
            });
        }
        let (n, c) = (xs[0], xs[1]);
        let xv = self.values(x);
        let mut values = Vec::with_capacity(n * n * c);
        for i in 0..n {
            for j in 0..n {
                for ci in 0..c {
                    let a = &xv[(i * c + ci) * 3..(i * c + ci) * 3 + 3];
                    let b = &xv[(j * c + ci) * 3..(j * c + ci) * 3 + 3];
                    values.push(a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
                }
            }
        }
        Ok(self.push(Op::PairDot(x), vec![n, n, c], values))
    }

    /// Per-channel unit directions from atom i to atom j:
    /// `x: [N, C, 3]` -> `[N, N, C, 3]`. Coincident points give zero vectors.
    pub fn pair_directions(&mut self, x: TensorRef) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x);
        if xs.len() != 3 || xs[2] != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "pair_directions",
                left: xs.to_vec(),
                right: vec![0, 0, 3],
            });
        }
        let (n, c) = (xs[0], xs[1]);
        let xv = self.values(x);
        let mut values = Vec::with_capacity(n * n * c * 3);
        for i in 0..n {
            for j in 0..n {
                for ci in 0..c {
                    let a = &xv[(i * c + ci) * 3..(i * c + ci) * 3 + 3];
                    let b = &xv[(j * c + ci) * 3..(j * c + ci) * 3 + 3];
                    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    if norm < DIRECTION_EPS {
                        values.extend_from_slice(&[0.0, 0.0, 0.0]);
                    } else {
                        values.extend_from_slice(&[d[0] / norm, d[1] / norm, d[2] / norm]);
                    }
                }
            }
        }
        Ok(self.push(Op::PairDirections(x), vec![n, n, c, 3], values))
    }

    /// `out[i][j] = h[i]` over a new second axis.
    pub fn pair_rows(&mut self, h: TensorRef) -> Result<TensorRef, TensorError> {
        let hs = self.shape(h);
        if hs.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "pair_rows",
                left: hs.to_vec(),
                right: vec![0, 0],
            });
        }
        let (n, f) = (hs[0], hs[1]);
        let mut values = Vec::with_capacity(n * n * f);
        for i in 0..n {
            let row = &self.values(h)[i * f..(i + 1) * f];
            for _ in 0..n {
                values.extend_from_slice(row);
            }
        }
        Ok(self.push(Op::PairRows(h), vec![n, n, f], values))
    }

    /// `out[i][j] = h[j]` over a new first axis.
    pub fn pair_cols(&mut self, h: TensorRef) -> Result<TensorRef, TensorError> {
        let hs = self.shape(h);
        if hs.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "pair_cols",
                left: hs.to_vec(),
                right: vec![0, 0],
            });
        }
        let n = hs[0];
        let mut values = Vec::with_capacity(n * self.values(h).len());
        for _ in 0..n {
            values.extend_from_slice(self.values(h));
        }
        Ok(self.push(Op::PairCols(h), vec![n, n, hs[1]], values))
    }

    /// Swaps the two leading axes of a pair tensor.
    pub fn transpose_pair(&mut self, x: TensorRef) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x);
        if xs.len() < 2 || xs[0] != xs[1] {
            return Err(TensorError::ShapeMismatch {
                op: "transpose_pair",
                left: xs.to_vec(),
                right: xs.to_vec(),
            });
        }
        let n = xs[0];
        let block = numel(&xs[2..]).max(1);
        let xv = self.values(x);
        let mut values = vec![0.0; xv.len()];
        for i in 0..n {
            for j in 0..n {
                let src = (i * n + j) * block;
                let dst = (j * n + i) * block;
                values[dst..dst + block].copy_from_slice(&xv[src..src + block]);
            }
        }
        Ok(self.push(Op::TransposePair(x), xs.to_vec(), values))
    }

    pub fn concat_last(&mut self, parts: &[TensorRef]) -> Result<TensorRef, TensorError> {
        let first = parts
            .first()
            .ok_or(TensorError::EmptyReduction { op: "concat_last" })?;
        let prefix = {
            let s = self.shape(*first);
            s[..s.len() - 1].to_vec()
        };
        let mut last = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != prefix[..] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_last",
                    left: self.shape(*first).to_vec(),
                    right: s.to_vec(),
                });
            }
            last += s[s.len() - 1];
        }
        let rows = numel(&prefix);
        let mut values = Vec::with_capacity(rows * last);
        for r in 0..rows {
            for &p in parts {
                let w = *self.shape(p).last().unwrap();
                values.extend_from_slice(&self.values(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = prefix;
        shape.push(last);
        Ok(self.push(Op::ConcatLast(parts.to_vec()), shape, values))
    }

    pub fn slice_last(
        &mut self,
        x: TensorRef,
        offset: usize,
        len: usize,
    ) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x);
        let width = *xs.last().ok_or(TensorError::InvalidAxis {
            op: "slice_last",
            axis: 0,
            rank: 0,
        })?;
        if offset + len > width {
            return Err(TensorError::IndexOutOfBounds {
                op: "slice_last",
                index: offset + len,
                size: width,
            });
        }
        let rows = numel(&xs[..xs.len() - 1]);
        let mut values = Vec::with_capacity(rows * len);
        for r in 0..rows {
            values.extend_from_slice(&self.values(x)[r * width + offset..r * width + offset + len]);
        }
        let mut shape = xs[..xs.len() - 1].to_vec();
        shape.push(len);
        Ok(self.push(Op::SliceLast { x, offset, len }, shape, values))
    }

    pub fn softmax(&mut self, x: TensorRef, axis: usize) -> Result<TensorRef, TensorError> {
        self.softmax_impl(x, axis, None)
    }

    /// Softmax with positions where `mask` is false excluded; their outputs
    /// are exactly zero. `mask` indexes the softmax axis.
    pub fn masked_softmax(
        &mut self,
        x: TensorRef,
        axis: usize,
        mask: &[bool],
    ) -> Result<TensorRef, TensorError> {
        self.softmax_impl(x, axis, Some(mask.to_vec()))
    }

    fn softmax_impl(
        &mut self,
        x: TensorRef,
        axis: usize,
        mask: Option<Vec<bool>>,
    ) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(TensorError::InvalidAxis {
                op: "softmax",
                axis,
                rank: xs.len(),
            });
        }
        let (outer, len, inner) = axis_split(&xs, axis);
        if let Some(m) = &mask {
            if m.len() != len {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax",
                    left: vec![len],
                    right: vec![m.len()],
                });
            }
        }
        let live = |a: usize| mask.as_ref().map_or(true, |m| m[a]);
        if len == 0 || (0..len).all(|a| !live(a)) {
            return Err(TensorError::EmptyReduction { op: "softmax" });
        }
        let xv = self.values(x);
        let mut values = vec![0.0; xv.len()];
        let mut buf = Vec::with_capacity(len);
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let mut max = f64::NEG_INFINITY;
                for a in 0..len {
                    if live(a) {
                        max = max.max(xv[at(a)]);
                    }
                }
                buf.clear();
                for a in 0..len {
                    if live(a) {
                        let e = (xv[at(a)] - max).exp();
                        values[at(a)] = e;
                        buf.push(e);
                    }
                }
                let denom = canonical_sum(&mut buf);
                for a in 0..len {
                    if live(a) {
                        values[at(a)] /= denom;
                    }
                }
            }
        }
        Ok(self.push(Op::Softmax { x, axis, mask }, xs, values))
    }

    /// Attention over row segments: each head's weights mix the matching
    /// segment of `v`'s rows. `alpha: [N, N, K]`, `v: [N, D]`, `K | D`.
    pub fn attn_mix_inv(
        &mut self,
        alpha: TensorRef,
        v: TensorRef,
    ) -> Result<TensorRef, TensorError> {
        let (als, vs) = (self.shape(alpha), self.shape(v));
        if als.len() != 3 || als[0] != als[1] || vs.len() != 2 || als[0] != vs[0] {
            return Err(TensorError::ShapeMismatch {
                op: "attn_mix_inv",
                left: als.to_vec(),
                right: vs.to_vec(),
            });
        }
        let (n, k, d) = (als[0], als[2], vs[1]);
        if k == 0 || d % k != 0 {
            return Err(TensorError::ShapeMismatch {
                op: "attn_mix_inv",
                left: vec![k],
                right: vec![d],
            });
        }
        let seg = d / k;
        let av = self.values(alpha);
        let vv = self.values(v);
        let mut values = vec![0.0; n * d];
        let mut buf = Vec::with_capacity(n);
        for i in 0..n {
            for di in 0..d {
                let h = di / seg;
                buf.clear();
                for j in 0..n {
                    buf.push(av[(i * n + j) * k + h] * vv[j * d + di]);
                }
                values[i * d + di] = canonical_sum(&mut buf);
            }
        }
        Ok(self.push(Op::AttnMixInv { alpha, v }, vec![n, d], values))
    }

    /// Scales each segment of `x`'s rows by the matching head weight.
    pub fn mul_heads(&mut self, x: TensorRef, w: TensorRef) -> Result<TensorRef, TensorError> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[0] != ws[0] || ws[1] == 0 || xs[1] % ws[1] != 0 {
            return Err(TensorError::ShapeMismatch {
                op: "mul_heads",
                left: xs.to_vec(),
                right: ws.to_vec(),
            });
        }
        let (n, d, k) = (xs[0], xs[1], ws[1]);
        let seg = d / k;
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            for di in 0..d {
                values.push(self.values(x)[i * d + di] * self.values(w)[i * k + di / seg]);
            }
        }
        Ok(self.push(Op::MulHeads { x, w }, vec![n, d], values))
    }

    /// Attention-weighted sums of pair direction vectors per head.
    /// `alpha: [N, N, K]`, `dirs: [N, N, K, 3]` -> `[N, K, 3]`.
    pub fn attn_mix_equi(
        &mut self,
        alpha: TensorRef,
        dirs: TensorRef,
    ) -> Result<TensorRef, TensorError> {
        let (als, ds) = (self.shape(alpha), self.shape(dirs));
        if als.len() != 3 || ds.len() != 4 || ds[..3] != *als || ds[3] != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "attn_mix_equi",
                left: als.to_vec(),
                right: ds.to_vec(),
            });
        }
        let (n, k) = (als[0], als[2]);
        let av = self.values(alpha);
        let dv = self.values(dirs);
        let mut values = vec![0.0; n * k * 3];
        let mut buf = Vec::with_capacity(n);
        for i in 0..n {
            for ki in 0..k {
                for c in 0..3 {
                    buf.clear();
                    for j in 0..n {
                        let pair = (i * n + j) * k + ki;
                        buf.push(av[pair] * dv[pair * 3 + c]);
                    }
                    values[(i * k + ki) * 3 + c] = canonical_sum(&mut buf);
                }
            }
        }
        Ok(self.push(Op::AttnMixEqui { alpha, dirs }, vec![n, k, 3], values))
    }

    pub fn sum_axis(&mut self, x: TensorRef, axis: usize) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(TensorError::InvalidAxis {
                op: "sum_axis",
                axis,
                rank: xs.len(),
            });
        }
        let (outer, len, inner) = axis_split(&xs, axis);
        let xv = self.values(x);
        let mut values = Vec::with_capacity(outer * inner);
        let mut buf = Vec::with_capacity(len);
        for o in 0..outer {
            for i in 0..inner {
                buf.clear();
                for a in 0..len {
                    buf.push(xv[(o * len + a) * inner + i]);
                }
                values.push(canonical_sum(&mut buf));
            }
        }
        let mut shape = xs.clone();
        shape.remove(axis);
        Ok(self.push(Op::SumAxis { x, axis }, shape, values))
    }

    /// Mean along `axis` (plain composite of sum and scale).
    pub fn mean_axis(&mut self, x: TensorRef, axis: usize) -> Result<TensorRef, TensorError> {
        let len = *self
            .shape(x)
            .get(axis)
            .ok_or(TensorError::InvalidAxis {
                op: "mean_axis",
                axis,
                rank: self.shape(x).len(),
            })?;
        if len == 0 {
            return Err(TensorError::EmptyReduction { op: "mean_axis" });
        }
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, 1.0 / len as f64))
    }

    /// Variance along the last axis (biased), composed from primitives.
    pub fn var_last(&mut self, x: TensorRef) -> Result<TensorRef, TensorError> {
        let rank = self.shape(x).len();
        if rank == 0 {
            return Err(TensorError::InvalidAxis {
                op: "var_last",
                axis: 0,
                rank,
            });
        }
        let len = *self.shape(x).last().unwrap();
        let mean = self.mean_axis(x, rank - 1)?;
        let wide = self.broadcast_last(mean, len);
        let centered = self.sub(x, wide)?;
        let sq = self.mul(centered, centered)?;
        self.mean_axis(sq, rank - 1)
    }

    pub fn sum_all(&mut self, x: TensorRef) -> TensorRef {
        let mut buf = self.values(x).to_vec();
        let total = canonical_sum(&mut buf);
        self.push(Op::SumAll(x), vec![], vec![total])
    }

    /// Mean over the leading axis, optionally over unmasked rows only.
    pub fn mean_atoms(
        &mut self,
        x: TensorRef,
        mask: Option<&[bool]>,
    ) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x).to_vec();
        if xs.is_empty() {
            return Err(TensorError::InvalidAxis {
                op: "mean_atoms",
                axis: 0,
                rank: 0,
            });
        }
        let n = xs[0];
        if let Some(m) = mask {
            if m.len() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "mean_atoms",
                    left: vec![n],
                    right: vec![m.len()],
                });
            }
        }
        let live: Vec<usize> = (0..n)
            .filter(|&i| mask.map_or(true, |m| m[i]))
            .collect();
        if live.is_empty() {
            return Err(TensorError::EmptyReduction { op: "mean_atoms" });
        }
        let block = numel(&xs[1..]).max(1);
        let xv = self.values(x);
        let mut values = Vec::with_capacity(block);
        let mut buf = Vec::with_capacity(live.len());
        for q in 0..block {
            buf.clear();
            for &i in &live {
                buf.push(xv[i * block + q]);
            }
            values.push(canonical_sum(&mut buf) / live.len() as f64);
        }
        Ok(self.push(
            Op::MeanAtoms {
                x,
                mask: mask.map(|m| m.to_vec()),
            },
            xs[1..].to_vec(),
            values,
        ))
    }

    /// L2 norm along the last axis.
    pub fn norm_last(&mut self, x: TensorRef) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x).to_vec();
        let len = *xs.last().ok_or(TensorError::InvalidAxis {
            op: "norm_last",
            axis: 0,
            rank: 0,
        })?;
        let rows = numel(&xs[..xs.len() - 1]);
        let xv = self.values(x);
        let mut values = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &xv[r * len..(r + 1) * len];
            values.push(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        Ok(self.push(Op::NormLast(x), xs[..xs.len() - 1].to_vec(), values))
    }

    /// Normalizes the last axis to mean 0 and (near-)unit variance. Learnable
    /// gain and bias are separate ops so this core stays parameter-free.
    pub fn layer_norm(&mut self, x: TensorRef) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x).to_vec();
        let len = *xs.last().ok_or(TensorError::InvalidAxis {
            op: "layer_norm",
            axis: 0,
            rank: 0,
        })?;
        if len == 0 {
            return Err(TensorError::EmptyReduction { op: "layer_norm" });
        }
        let rows = numel(&xs[..xs.len() - 1]);
        let xv = self.values(x);
        let mut values = Vec::with_capacity(xv.len());
        for r in 0..rows {
            let row = &xv[r * len..(r + 1) * len];
            let mean = row.iter().sum::<f64>() / len as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            values.extend(row.iter().map(|v| (v - mean) * inv));
        }
        Ok(self.push(Op::LayerNorm(x), xs, values))
    }

    /// Looks up one row of `table` per index.
    pub fn embedding(
        &mut self,
        table: TensorRef,
        indices: &[usize],
    ) -> Result<TensorRef, TensorError> {
        let ts = self.shape(table);
        if ts.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "embedding",
                left: ts.to_vec(),
                right: vec![0, 0],
            });
        }
        let (v, e) = (ts[0], ts[1]);
        let mut values = Vec::with_capacity(indices.len() * e);
        for &idx in indices {
            if idx >= v {
                return Err(TensorError::IndexOutOfBounds {
                    op: "embedding",
                    index: idx,
                    size: v,
                });
            }
            values.extend_from_slice(&self.values(table)[idx * e..(idx + 1) * e]);
        }
        Ok(self.push(
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            vec![indices.len(), e],
            values,
        ))
    }

    /// Copies the selected leading-axis rows, in the given order.
    pub fn gather_rows(&mut self, x: TensorRef, rows: &[usize]) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x).to_vec();
        if xs.is_empty() {
            return Err(TensorError::InvalidAxis {
                op: "gather_rows",
                axis: 0,
                rank: 0,
            });
        }
        let block = numel(&xs[1..]).max(1);
        let mut values = Vec::with_capacity(rows.len() * block);
        for &r in rows {
            if r >= xs[0] {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather_rows",
                    index: r,
                    size: xs[0],
                });
            }
            values.extend_from_slice(&self.values(x)[r * block..(r + 1) * block]);
        }
        let mut shape = xs;
        shape[0] = rows.len();
        Ok(self.push(
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            shape,
            values,
        ))
    }

    /// Adds each row of `x` into position `rows[s]` of an `n_out`-row zero
    /// tensor; repeated targets accumulate.
    pub fn scatter_rows(
        &mut self,
        x: TensorRef,
        rows: &[usize],
        n_out: usize,
    ) -> Result<TensorRef, TensorError> {
        let xs = self.shape(x).to_vec();
        if xs.is_empty() || xs[0] != rows.len() {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_rows",
                left: xs.to_vec(),
                right: vec![rows.len()],
            });
        }
        let block = numel(&xs[1..]).max(1);
        let mut values = vec![0.0; n_out * block];
        for (s, &r) in rows.iter().enumerate() {
            if r >= n_out {
                return Err(TensorError::IndexOutOfBounds {
                    op: "scatter_rows",
                    index: r,
                    size: n_out,
                });
            }
            for q in 0..block {
                values[r * block + q] += self.values(x)[s * block + q];
            }
        }
        let mut shape = xs;
        shape[0] = n_out;
        Ok(self.push(
            Op::ScatterRows {
                x,
                rows: rows.to_vec(),
            },
            shape,
            values,
        ))
    }

    /// Mean over rows of the softmax cross-entropy against integer targets.
    pub fn cross_entropy_mean(
        &mut self,
        logits: TensorRef,
        targets: &[usize],
    ) -> Result<TensorRef, TensorError> {
        let ls = self.shape(logits);
        if ls.len() != 2 || ls[0] != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                left: ls.to_vec(),
                right: vec![targets.len()],
            });
        }
        let (rows, classes) = (ls[0], ls[1]);
        if rows == 0 {
            return Err(TensorError::EmptyReduction {
                op: "cross_entropy",
            });
        }
        let lv = self.values(logits);
        let mut terms = Vec::with_capacity(rows);
        for (r, &t) in targets.iter().enumerate() {
            if t >= classes {
                return Err(TensorError::IndexOutOfBounds {
                    op: "cross_entropy",
                    index: t,
                    size: classes,
                });
            }
            let row = &lv[r * classes..(r + 1) * classes];
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            terms.push(lse - row[t]);
        }
        let mean = canonical_sum(&mut terms) / rows as f64;
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            vec![],
            vec![mean],
        ))
    }

    pub fn reshape(&mut self, x: TensorRef, shape: &[usize]) -> Result<TensorRef, TensorError> {
        if numel(shape) != self.values(x).len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape(x).to_vec(),
                right: shape.to_vec(),
            });
        }
        let values = self.values(x).to_vec();
        Ok(self.push(Op::Reshape(x), shape.to_vec(), values))
    }
}
