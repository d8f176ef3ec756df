//! One network layer: feature feed-forward, latent pairwise messages, and
//! the two attention updates. Functions take the parameter bindings plus a
//! layer index and push onto the tape; they are pure in (params, inputs).

use super::{ArchError, Bindings, ModelParams};
use crate::tensor::{Tape, TensorRef, NORM_EPS};

/// Node state refs: `h` is `[N, d_inv]`, `x` is `[N, d_equi, 3]`.
#[derive(Debug, Clone, Copy)]
pub struct LayerIo {
    pub h: TensorRef,
    pub x: TensorRef,
}

pub(crate) fn linear(
    tape: &mut Tape,
    x: TensorRef,
    w: TensorRef,
    b: TensorRef,
) -> Result<TensorRef, ArchError> {
    let prod = tape.matmul(x, w)?;
    Ok(tape.add_trail(prod, b)?)
}

/// Invariant normalization: per-atom standardization then learnable gain and
/// bias.
pub fn norm_inv(
    tape: &mut Tape,
    h: TensorRef,
    gain: TensorRef,
    bias: TensorRef,
) -> Result<TensorRef, ArchError> {
    let ln = tape.layer_norm(h)?;
    let scaled = tape.mul_trail(ln, gain)?;
    Ok(tape.add_trail(scaled, bias)?)
}

/// Equivariant normalization: per-channel zero-centering over live atoms,
/// then per-channel division by the mean vector norm, then learnable gain.
/// Centering makes the result translation-invariant; all other steps are
/// per-channel scalar scalings, so rotation equivariance is preserved.
pub fn norm_equi(
    tape: &mut Tape,
    x: TensorRef,
    gain: TensorRef,
    mask: &[bool],
) -> Result<TensorRef, ArchError> {
    let n = tape.shape(x)[0];
    let mean = tape.mean_atoms(x, Some(mask))?;
    let tiled = tape.broadcast_lead(mean, n);
    let centered = tape.sub(x, tiled)?;
    let norms = tape.norm_last(centered)?;
    let mean_norm = tape.mean_atoms(norms, Some(mask))?;
    let shifted = tape.add_const(mean_norm, NORM_EPS);
    let inv = tape.recip(shifted);
    let scaled_gain = tape.mul(gain, inv)?;
    let factor = tape.broadcast_last(scaled_gain, 3);
    Ok(tape.mul_trail(centered, factor)?)
}

fn norm_site_inv(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    l: usize,
    site: usize,
    h: TensorRef,
) -> Result<TensorRef, ArchError> {
    let gain = p.r(b, &format!("l{l}.norm{site}_inv.gain"))?;
    let bias = p.r(b, &format!("l{l}.norm{site}_inv.bias"))?;
    norm_inv(tape, h, gain, bias)
}

fn norm_site_equi(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    l: usize,
    site: usize,
    x: TensorRef,
    mask: &[bool],
) -> Result<TensorRef, ArchError> {
    let gain = p.r(b, &format!("l{l}.norm{site}_equi.gain"))?;
    norm_equi(tape, x, gain, mask)
}

/// Residual feed-forward exchanging information between the streams. The
/// invariant stream receives an MLP over its normalized features and the
/// equivariant channel norms; the equivariant stream receives per-channel
/// rescalings of the summed (mixed) channels, gated by an MLP of h.
pub fn feed_forward(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    l: usize,
    io: LayerIo,
    mask: &[bool],
) -> Result<LayerIo, ArchError> {
    let pre = |s: &str| format!("l{l}.{s}");
    let hn = norm_site_inv(tape, p, b, l, 1, io.h)?;
    let xn = norm_site_equi(tape, p, b, l, 1, io.x, mask)?;

    let w1 = p.r(b, &pre("ff.w1"))?;
    let xt = tape.channel_mix(w1, xn)?;

    let norms = tape.norm_last(xn)?;
    let phi_in = tape.concat_last(&[hn, norms])?;
    let phi_w1 = p.r(b, &pre("ff.phi.w1"))?;
    let phi_b1 = p.r(b, &pre("ff.phi.b1"))?;
    let phi_w2 = p.r(b, &pre("ff.phi.w2"))?;
    let phi_b2 = p.r(b, &pre("ff.phi.b2"))?;
    let hidden = linear(tape, phi_in, phi_w1, phi_b1)?;
    let hidden = tape.silu(hidden);
    let dh = linear(tape, hidden, phi_w2, phi_b2)?;
    let h_out = tape.add(io.h, dh)?;

    let u = tape.sum_axis(xt, 1)?;
    let psi_w1 = p.r(b, &pre("ff.psi.w1"))?;
    let psi_b1 = p.r(b, &pre("ff.psi.b1"))?;
    let psi_w2 = p.r(b, &pre("ff.psi.w2"))?;
    let psi_b2 = p.r(b, &pre("ff.psi.b2"))?;
    let psi = linear(tape, hn, psi_w1, psi_b1)?;
    let psi = tape.silu(psi);
    let psi = linear(tape, psi, psi_w2, psi_b2)?;
    let outer = tape.row_outer(psi, u)?;
    let w2 = p.r(b, &pre("ff.w2"))?;
    let dx = tape.channel_mix(w2, outer)?;
    let x_out = tape.add(io.x, dx)?;

    Ok(LayerIo { h: h_out, x: x_out })
}

/// Pairwise attention logits. Both endpoint features are first projected to
/// the `d_l` latent width, so the quadratic pair cost scales with d_l rather
/// than d_inv. Edge features join the inputs on the first layer; the last
/// layer emits `d_edge` extra outputs per pair for the bond head.
pub struct Messages {
    /// `[N, N, K]` logits feeding the invariant attention.
    pub m_inv: TensorRef,
    /// `[N, N, K]` logits feeding the equivariant attention.
    pub m_equi: TensorRef,
    /// `[N, N, d_edge]` generated edge features, last layer only.
    pub edge_out: Option<TensorRef>,
}

pub fn latent_messages(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    l: usize,
    io: LayerIo,
    edge: Option<TensorRef>,
    mask: &[bool],
) -> Result<Messages, ArchError> {
    let cfg = &p.config;
    if (l == 0) != edge.is_some() {
        return Err(ArchError::Input(
            "edge features are an input exactly at the first layer".into(),
        ));
    }
    let pre = |s: &str| format!("l{l}.{s}");
    let n = tape.shape(io.h)[0];
    let hn = norm_site_inv(tape, p, b, l, 2, io.h)?;
    let xn = norm_site_equi(tape, p, b, l, 2, io.x, mask)?;

    let w3 = p.r(b, &pre("msg.w3"))?;
    let hl = tape.matmul(hn, w3)?;
    let rows = tape.pair_rows(hl)?;
    let cols = tape.pair_cols(hl)?;
    let dots = tape.pair_dot(xn)?;
    let mut parts = vec![rows, cols, dots];
    if let Some(e) = edge {
        parts.push(e);
    }
    let cat = tape.concat_last(&parts)?;
    let width = tape.shape(cat)[2];
    let flat = tape.reshape(cat, &[n * n, width])?;

    let w_1 = p.r(b, &pre("msg.omega.w1"))?;
    let b_1 = p.r(b, &pre("msg.omega.b1"))?;
    let w_2 = p.r(b, &pre("msg.omega.w2"))?;
    let b_2 = p.r(b, &pre("msg.omega.b2"))?;
    let hidden = linear(tape, flat, w_1, b_1)?;
    let hidden = tape.silu(hidden);
    let out = linear(tape, hidden, w_2, b_2)?;
    let o_out = cfg.omega_out(l);
    let out = tape.reshape(out, &[n, n, o_out])?;

    let k = cfg.n_heads;
    let m_inv = tape.slice_last(out, 0, k)?;
    let m_equi = tape.slice_last(out, k, k)?;
    let edge_out = if l + 1 == cfg.n_layers {
        Some(tape.slice_last(out, 2 * k, cfg.d_edge)?)
    } else {
        None
    };
    Ok(Messages {
        m_inv,
        m_equi,
        edge_out,
    })
}

/// Per-head weights `w_i = sqrt(sum_j alpha_ij^2)`: 1 when the head attends
/// to a single atom, 1/sqrt(N) when attention is uniform, so aggregate
/// variance stays in [1/N, 1] of the input variance.
fn variance_preserving_weights(
    tape: &mut Tape,
    alpha: TensorRef,
) -> Result<TensorRef, ArchError> {
    let sq = tape.mul(alpha, alpha)?;
    let sums = tape.sum_axis(sq, 1)?;
    Ok(tape.sqrt(sums))
}

/// Invariant attention: masked per-head softmax over the message logits,
/// head-segment mixing of the projected features, variance-preserving
/// rescale, output projection, residual add.
pub fn attend_invariant(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    l: usize,
    h_ff: TensorRef,
    m_inv: TensorRef,
    mask: &[bool],
) -> Result<TensorRef, ArchError> {
    let pre = |s: &str| format!("l{l}.{s}");
    let hn = norm_site_inv(tape, p, b, l, 2, h_ff)?;
    let w4 = p.r(b, &pre("attn.w4"))?;
    let v = tape.matmul(hn, w4)?;
    let alpha = tape.masked_softmax(m_inv, 1, mask)?;
    let mixed = tape.attn_mix_inv(alpha, v)?;
    let w = variance_preserving_weights(tape, alpha)?;
    let weighted = tape.mul_heads(mixed, w)?;
    let w5 = p.r(b, &pre("attn.w5"))?;
    let dh = tape.matmul(weighted, w5)?;
    Ok(tape.add(h_ff, dh)?)
}

/// Equivariant attention: each head owns one projected channel, attends over
/// the unit directions between atoms, and the head outputs are mixed back
/// into channels. Directions are differences, so the update is
/// translation-invariant and rotates with the input.
pub fn attend_equivariant(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    l: usize,
    x_ff: TensorRef,
    m_equi: TensorRef,
    mask: &[bool],
) -> Result<TensorRef, ArchError> {
    let pre = |s: &str| format!("l{l}.{s}");
    let xn = norm_site_equi(tape, p, b, l, 2, x_ff, mask)?;
    let w6 = p.r(b, &pre("attn.w6"))?;
    let xh = tape.channel_mix(w6, xn)?;
    let dirs = tape.pair_directions(xh)?;
    let alpha = tape.masked_softmax(m_equi, 1, mask)?;
    let mixed = tape.attn_mix_equi(alpha, dirs)?;
    let w = variance_preserving_weights(tape, alpha)?;
    let weighted = tape.mul_prefix(mixed, w)?;
    let w7 = p.r(b, &pre("attn.w7"))?;
    let dx = tape.channel_mix(w7, weighted)?;
    Ok(tape.add(x_ff, dx)?)
}
