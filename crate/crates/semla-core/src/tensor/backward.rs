//! Reverse-mode pass. Walks the tape from the loss node backwards and
//! accumulates adjoints into per-node buffers, then stores them on the nodes.

use super::ops::LN_EPS;
use super::{axis_split, numel, Op, Tape, TensorError, TensorRef};

type GradStore = Vec<Option<Vec<f64>>>;

fn buf<'a>(grads: &'a mut GradStore, t: TensorRef, len: usize) -> &'a mut [f64] {
    grads[t.0].get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    /// Computes gradients of the scalar `loss` w.r.t. every node that
    /// contributes to it. Previous gradients on the tape are replaced.
    pub fn backward(&mut self, loss: TensorRef) -> Result<(), TensorError> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        let mut grads: GradStore = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.accumulate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = g;
        }
        Ok(())
    }

    fn len_of(&self, t: TensorRef) -> usize {
        self.nodes[t.0].values.len()
    }

    fn accumulate(&self, i: usize, g: &[f64], grads: &mut GradStore) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (d, gv) in buf(grads, *a, self.len_of(*a)).iter_mut().zip(g) {
                    *d += gv;
                }
                for (d, gv) in buf(grads, *b, self.len_of(*b)).iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::Sub(a, b) => {
                for (d, gv) in buf(grads, *a, self.len_of(*a)).iter_mut().zip(g) {
                    *d += gv;
                }
                for (d, gv) in buf(grads, *b, self.len_of(*b)).iter_mut().zip(g) {
                    *d -= gv;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.values(*a), self.values(*b));
                let da = buf(grads, *a, av.len());
                for k in 0..av.len() {
                    da[k] += g[k] * bv[k];
                }
                let db = buf(grads, *b, bv.len());
                for k in 0..bv.len() {
                    db[k] += g[k] * av[k];
                }
            }
            Op::Scale(x, c) => {
                let d = buf(grads, *x, self.len_of(*x));
                for (dv, gv) in d.iter_mut().zip(g) {
                    *dv += c * gv;
                }
            }
            Op::AddConst(x) | Op::Reshape(x) => {
                let d = buf(grads, *x, self.len_of(*x));
                for (dv, gv) in d.iter_mut().zip(g) {
                    *dv += gv;
                }
            }
            Op::Recip(x) => {
                let out = &self.nodes[i].values;
                let d = buf(grads, *x, out.len());
                for k in 0..out.len() {
                    d[k] -= g[k] * out[k] * out[k];
                }
            }
            Op::Sqrt(x) => {
                let out = &self.nodes[i].values;
                let d = buf(grads, *x, out.len());
                for k in 0..out.len() {
                    if out[k] != 0.0 {
                        d[k] += g[k] * 0.5 / out[k];
                    }
                }
            }
            Op::Silu(x) => {
                let xv = self.values(*x);
                let d = buf(grads, *x, xv.len());
                for k in 0..xv.len() {
                    let s = 1.0 / (1.0 + (-xv[k]).exp());
                    d[k] += g[k] * s * (1.0 + xv[k] * (1.0 - s));
                }
            }
            Op::AddTrail { x, v } => {
                let block = self.len_of(*v).max(1);
                let d = buf(grads, *x, self.len_of(*x));
                for (dv, gv) in d.iter_mut().zip(g) {
                    *dv += gv;
                }
                let dv = buf(grads, *v, self.len_of(*v));
                for (k, gv) in g.iter().enumerate() {
                    dv[k % block] += gv;
                }
            }
            Op::MulTrail { x, v } => {
                let xv = self.values(*x);
                let vv = self.values(*v);
                let block = vv.len().max(1);
                let dx = buf(grads, *x, xv.len());
                for k in 0..xv.len() {
                    dx[k] += g[k] * vv[k % block];
                }
                let dv = buf(grads, *v, vv.len());
                for k in 0..xv.len() {
                    dv[k % block] += g[k] * xv[k];
                }
            }
            Op::MulPrefix { x, s } => {
                let xv = self.values(*x);
                let sv = self.values(*s);
                let block = (xv.len() / sv.len().max(1)).max(1);
                let dx = buf(grads, *x, xv.len());
                for k in 0..xv.len() {
                    dx[k] += g[k] * sv[k / block];
                }
                let ds = buf(grads, *s, sv.len());
                for k in 0..xv.len() {
                    ds[k / block] += g[k] * xv[k];
                }
            }
            Op::BroadcastLead { v, n } => {
                let block = self.len_of(*v);
                let dv = buf(grads, *v, block);
                for rep in 0..*n {
                    for q in 0..block {
                        dv[q] += g[rep * block + q];
                    }
                }
            }
            Op::BroadcastLast { s, len } => {
                let ds = buf(grads, *s, self.len_of(*s));
                for (p, dsp) in ds.iter_mut().enumerate() {
                    for l in 0..*len {
                        *dsp += g[p * len + l];
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let av = self.values(*a);
                let bv = self.values(*b);
                let da = buf(grads, *a, m * k);
                for i_ in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i_ * n + j] * bv[p * n + j];
                        }
                        da[i_ * k + p] += acc;
                    }
                }
                let db = buf(grads, *b, k * n);
                for p in 0..k {
                    for i_ in 0..m {
                        let aip = av[i_ * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += aip * g[i_ * n + j];
                        }
                    }
                }
            }
            Op::ChannelMix { w, x } => {
                let (c_out, c_in) = (self.shape(*w)[0], self.shape(*w)[1]);
                let (n, l) = (self.shape(*x)[0], self.shape(*x)[2]);
                let wv = self.values(*w);
                let xv = self.values(*x);
                let dw = buf(grads, *w, c_out * c_in);
                for o in 0..c_out {
                    for c in 0..c_in {
                        let mut acc = 0.0;
                        for ni in 0..n {
                            for li in 0..l {
                                acc += g[(ni * c_out + o) * l + li] * xv[(ni * c_in + c) * l + li];
                            }
                        }
                        dw[o * c_in + c] += acc;
                    }
                }
                let dx = buf(grads, *x, n * c_in * l);
                for ni in 0..n {
                    for c in 0..c_in {
                        for li in 0..l {
                            let mut acc = 0.0;
                            for o in 0..c_out {
                                acc += wv[o * c_in + c] * g[(ni * c_out + o) * l + li];
                            }
                            dx[(ni * c_in + c) * l + li] += acc;
                        }
                    }
                }
            }
            Op::RowOuter { s, v } => {
                let (n, c) = (self.shape(*s)[0], self.shape(*s)[1]);
                let l = self.shape(*v)[1];
                let sv = self.values(*s);
                let vv = self.values(*v);
                let ds = buf(grads, *s, n * c);
                for ni in 0..n {
                    for ci in 0..c {
                        let mut acc = 0.0;
                        for li in 0..l {
                            acc += g[(ni * c + ci) * l + li] * vv[ni * l + li];
                        }
                        ds[ni * c + ci] += acc;
                    }
                }
                let dv = buf(grads, *v, n * l);
                for ni in 0..n {
                    for li in 0..l {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            acc += g[(ni * c + ci) * l + li] * sv[ni * c + ci];
                        }
                        dv[ni * l + li] += acc;
                    }
                }
            }
            Op::PairDot(x) => {
                let (n, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                let xv = self.values(*x);
                let dx = buf(grads, *x, xv.len());
                for i_ in 0..n {
                    for j in 0..n {
                        for ci in 0..c {
                            let gij = g[(i_ * n + j) * c + ci];
                            if gij == 0.0 {
                                continue;
                            }
                            for d in 0..3 {
                                dx[(i_ * c + ci) * 3 + d] += gij * xv[(j * c + ci) * 3 + d];
                                dx[(j * c + ci) * 3 + d] += gij * xv[(i_ * c + ci) * 3 + d];
                            }
                        }
                    }
                }
            }
            Op::PairDirections(x) => {
                let (n, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                let xv = self.values(*x);
                let out = &self.nodes[i].values;
                let dx = buf(grads, *x, xv.len());
                for i_ in 0..n {
                    for j in 0..n {
                        for ci in 0..c {
                            let pair = ((i_ * n + j) * c + ci) * 3;
                            let u = &out[pair..pair + 3];
                            if u == [0.0, 0.0, 0.0] {
                                continue;
                            }
                            let xi = &xv[(i_ * c + ci) * 3..(i_ * c + ci) * 3 + 3];
                            let xj = &xv[(j * c + ci) * 3..(j * c + ci) * 3 + 3];
                            let norm = ((xj[0] - xi[0]).powi(2)
                                + (xj[1] - xi[1]).powi(2)
                                + (xj[2] - xi[2]).powi(2))
                            .sqrt();
                            let gv = &g[pair..pair + 3];
                            let udotg = u[0] * gv[0] + u[1] * gv[1] + u[2] * gv[2];
                            for d in 0..3 {
                                let gd = (gv[d] - u[d] * udotg) / norm;
                                dx[(j * c + ci) * 3 + d] += gd;
                                dx[(i_ * c + ci) * 3 + d] -= gd;
                            }
                        }
                    }
                }
            }
            Op::PairRows(h) => {
                let (n, f) = (self.shape(*h)[0], self.shape(*h)[1]);
                let dh = buf(grads, *h, n * f);
                for i_ in 0..n {
                    for j in 0..n {
                        for fi in 0..f {
                            dh[i_ * f + fi] += g[(i_ * n + j) * f + fi];
                        }
                    }
                }
            }
            Op::PairCols(h) => {
                let (n, f) = (self.shape(*h)[0], self.shape(*h)[1]);
                let dh = buf(grads, *h, n * f);
                for i_ in 0..n {
                    for j in 0..n {
                        for fi in 0..f {
                            dh[j * f + fi] += g[(i_ * n + j) * f + fi];
                        }
                    }
                }
            }
            Op::TransposePair(x) => {
                let n = self.shape(*x)[0];
                let block = numel(&self.shape(*x)[2..]).max(1);
                let dx = buf(grads, *x, self.len_of(*x));
                for i_ in 0..n {
                    for j in 0..n {
                        let src = (j * n + i_) * block;
                        let dst = (i_ * n + j) * block;
                        for q in 0..block {
                            dx[dst + q] += g[src + q];
                        }
                    }
                }
            }
            Op::ConcatLast(parts) => {
                let parts = parts.clone();
                let total: usize = parts
                    .iter()
                    .map(|p| *self.shape(*p).last().unwrap())
                    .sum();
                let rows = self.len_of(TensorRef(i)) / total;
                let mut offset = 0;
                for p in parts {
                    let w = *self.shape(p).last().unwrap();
                    let dp = buf(grads, p, self.len_of(p));
                    for r in 0..rows {
                        for q in 0..w {
                            dp[r * w + q] += g[r * total + offset + q];
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceLast { x, offset, len } => {
                let width = *self.shape(*x).last().unwrap();
                let rows = self.len_of(*x) / width;
                let dx = buf(grads, *x, self.len_of(*x));
                for r in 0..rows {
                    for q in 0..*len {
                        dx[r * width + offset + q] += g[r * len + q];
                    }
                }
            }
            Op::Softmax { x, axis, mask } => {
                let shape = self.shape(*x);
                let (outer, len, inner) = axis_split(shape, *axis);
                let out = &self.nodes[i].values;
                let dx = buf(grads, *x, out.len());
                for o in 0..outer {
                    for ii in 0..inner {
                        let at = |a: usize| (o * len + a) * inner + ii;
                        let mut dot = 0.0;
                        for a in 0..len {
                            if mask.as_ref().map_or(true, |m| m[a]) {
                                dot += out[at(a)] * g[at(a)];
                            }
                        }
                        for a in 0..len {
                            if mask.as_ref().map_or(true, |m| m[a]) {
                                dx[at(a)] += out[at(a)] * (g[at(a)] - dot);
                            }
                        }
                    }
                }
            }
            Op::AttnMixInv { alpha, v } => {
                let n = self.shape(*alpha)[0];
                let k = self.shape(*alpha)[2];
                let d = self.shape(*v)[1];
                let seg = d / k;
                let av = self.values(*alpha);
                let vv = self.values(*v);
                let da = buf(grads, *alpha, n * n * k);
                for i_ in 0..n {
                    for j in 0..n {
                        for h in 0..k {
                            let mut acc = 0.0;
                            for di in h * seg..(h + 1) * seg {
                                acc += g[i_ * d + di] * vv[j * d + di];
                            }
                            da[(i_ * n + j) * k + h] += acc;
                        }
                    }
                }
                let dv = buf(grads, *v, n * d);
                for j in 0..n {
                    for di in 0..d {
                        let h = di / seg;
                        let mut acc = 0.0;
                        for i_ in 0..n {
                            acc += av[(i_ * n + j) * k + h] * g[i_ * d + di];
                        }
                        dv[j * d + di] += acc;
                    }
                }
            }
            Op::MulHeads { x, w } => {
                let (n, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let k = self.shape(*w)[1];
                let seg = d / k;
                let xv = self.values(*x);
                let wv = self.values(*w);
                let dx = buf(grads, *x, n * d);
                for i_ in 0..n {
                    for di in 0..d {
                        dx[i_ * d + di] += g[i_ * d + di] * wv[i_ * k + di / seg];
                    }
                }
                let dw = buf(grads, *w, n * k);
                for i_ in 0..n {
                    for di in 0..d {
                        dw[i_ * k + di / seg] += g[i_ * d + di] * xv[i_ * d + di];
                    }
                }
            }
            Op::AttnMixEqui { alpha, dirs } => {
                let n = self.shape(*alpha)[0];
                let k = self.shape(*alpha)[2];
                let av = self.values(*alpha);
                let dv = self.values(*dirs);
                let da = buf(grads, *alpha, n * n * k);
                for i_ in 0..n {
                    for j in 0..n {
                        for ki in 0..k {
                            let pair = (i_ * n + j) * k + ki;
                            let mut acc = 0.0;
                            for c in 0..3 {
                                acc += g[(i_ * k + ki) * 3 + c] * dv[pair * 3 + c];
                            }
                            da[pair] += acc;
                        }
                    }
                }
                let dd = buf(grads, *dirs, n * n * k * 3);
                for i_ in 0..n {
                    for j in 0..n {
                        for ki in 0..k {
                            let pair = (i_ * n + j) * k + ki;
                            for c in 0..3 {
                                dd[pair * 3 + c] += av[pair] * g[(i_ * k + ki) * 3 + c];
                            }
                        }
                    }
                }
            }
            Op::SumAxis { x, axis } => {
                let shape = self.shape(*x);
                let (outer, len, inner) = axis_split(shape, *axis);
                let dx = buf(grads, *x, self.len_of(*x));
                for o in 0..outer {
                    for a in 0..len {
                        for ii in 0..inner {
                            dx[(o * len + a) * inner + ii] += g[o * inner + ii];
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                let dx = buf(grads, *x, self.len_of(*x));
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }
            Op::MeanAtoms { x, mask } => {
                let n = self.shape(*x)[0];
                let block = numel(&self.shape(*x)[1..]).max(1);
                let live: Vec<usize> = (0..n)
                    .filter(|&r| mask.as_ref().map_or(true, |m| m[r]))
                    .collect();
                let inv = 1.0 / live.len() as f64;
                let dx = buf(grads, *x, self.len_of(*x));
                for &r in &live {
                    for q in 0..block {
                        dx[r * block + q] += g[q] * inv;
                    }
                }
            }
            Op::NormLast(x) => {
                let len = *self.shape(*x).last().unwrap();
                let xv = self.values(*x);
                let out = &self.nodes[i].values;
                let dx = buf(grads, *x, xv.len());
                for (r, &norm) in out.iter().enumerate() {
                    if norm == 0.0 {
                        continue;
                    }
                    for l in 0..len {
                        dx[r * len + l] += g[r] * xv[r * len + l] / norm;
                    }
                }
            }
            Op::LayerNorm(x) => {
                let len = *self.shape(*x).last().unwrap();
                let xv = self.values(*x);
                let xhat = &self.nodes[i].values;
                let rows = xv.len() / len;
                let dx = buf(grads, *x, xv.len());
                for r in 0..rows {
                    let row = &xv[r * len..(r + 1) * len];
                    let mean = row.iter().sum::<f64>() / len as f64;
                    let var =
                        row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
                    let inv = 1.0 / (var + LN_EPS).sqrt();
                    let gr = &g[r * len..(r + 1) * len];
                    let hr = &xhat[r * len..(r + 1) * len];
                    let gmean = gr.iter().sum::<f64>() / len as f64;
                    let ghmean = gr.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / len as f64;
                    for l in 0..len {
                        dx[r * len + l] += inv * (gr[l] - gmean - hr[l] * ghmean);
                    }
                }
            }
            Op::Embedding { table, indices } => {
                let e = self.shape(*table)[1];
                let indices = indices.clone();
                let dt = buf(grads, *table, self.len_of(*table));
                for (r, &idx) in indices.iter().enumerate() {
                    for q in 0..e {
                        dt[idx * e + q] += g[r * e + q];
                    }
                }
            }
            Op::GatherRows { x, rows } => {
                let block = numel(&self.shape(*x)[1..]).max(1);
                let rows = rows.clone();
                let dx = buf(grads, *x, self.len_of(*x));
                for (s, &r) in rows.iter().enumerate() {
                    for q in 0..block {
                        dx[r * block + q] += g[s * block + q];
                    }
                }
            }
            Op::ScatterRows { x, rows } => {
                let block = numel(&self.shape(*x)[1..]).max(1);
                let rows = rows.clone();
                let dx = buf(grads, *x, self.len_of(*x));
                for (s, &r) in rows.iter().enumerate() {
                    for q in 0..block {
                        dx[s * block + q] += g[r * block + q];
                    }
                }
            }
            Op::CrossEntropy { logits, targets } => {
                let (rows, classes) = (self.shape(*logits)[0], self.shape(*logits)[1]);
                let lv = self.values(*logits);
                let targets = targets.clone();
                let dl = buf(grads, *logits, rows * classes);
                let scale = g[0] / rows as f64;
                for (r, &t) in targets.iter().enumerate() {
                    let row = &lv[r * classes..(r + 1) * classes];
                    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    for c in 0..classes {
                        let p = (row[c] - max).exp() / denom;
                        dl[r * classes + c] += scale * (p - if c == t { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }
}
