//! Whole-model forward pass: input embedding, the layer stack, prediction
//! heads, and bond refinement.

use super::layer::{
    attend_equivariant, attend_invariant, feed_forward, latent_messages, linear, LayerIo,
};
use super::{ArchError, Bindings, ModelInput, ModelParams, Prediction, SelfCondData};
use crate::tensor::{Tape, TensorRef};

pub struct EmbedOut {
    pub io: LayerIo,
    /// `[N, N, d_edge]` encoded bond features for the first layer.
    pub edge: TensorRef,
}

fn mask_leaf(tape: &mut Tape, mask: &[bool]) -> Result<TensorRef, ArchError> {
    let values: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Ok(tape.leaf(&[mask.len()], values)?)
}

fn mlp2(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    x: TensorRef,
    prefix: &str,
) -> Result<TensorRef, ArchError> {
    let w1 = p.r(b, &format!("{prefix}.w1"))?;
    let b1 = p.r(b, &format!("{prefix}.b1"))?;
    let w2 = p.r(b, &format!("{prefix}.w2"))?;
    let b2 = p.r(b, &format!("{prefix}.b2"))?;
    let hidden = linear(tape, x, w1, b1)?;
    let hidden = tape.silu(hidden);
    linear(tape, hidden, w2, b2)
}

fn validate_input(p: &ModelParams, input: &ModelInput) -> Result<usize, ArchError> {
    let n = input.atom_types.len();
    if n == 0 {
        return Err(ArchError::Input("no atoms".into()));
    }
    if input.coords.len() != n * 3
        || input.charges.len() != n
        || input.bonds.len() != n * n
        || input.mask.len() != n
    {
        return Err(ArchError::Input(format!(
            "inconsistent input lengths for {n} atoms"
        )));
    }
    if !input.mask.iter().any(|&m| m) {
        return Err(ArchError::Input("every atom is masked".into()));
    }
    if let Some(sc) = input.self_cond {
        let cfg = &p.config;
        if sc.coords.len() != n * 3
            || sc.atom_probs.len() != n * cfg.n_atom_types
            || sc.bond_probs.len() != n * n * cfg.n_bond_kinds
        {
            return Err(ArchError::Input(
                "self-conditioning payload has wrong lengths".into(),
            ));
        }
    }
    Ok(n)
}

/// Embeds one molecule into node and edge features. Atom and charge
/// embeddings, the time scalar, and the self-conditioning atom distribution
/// feed a linear mix into h; raw and self-conditioning coordinates form two
/// vector channels mixed into d_equi; bond embeddings and the
/// self-conditioning bond distribution mix into edge features. Masked
/// positions are zeroed so padding starts inert.
pub fn embed_inputs(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    input: &ModelInput,
) -> Result<EmbedOut, ArchError> {
    let cfg = &p.config;
    let n = validate_input(p, input)?;
    let neutral;
    let sc = match input.self_cond {
        Some(s) => s,
        None => {
            neutral = SelfCondData::neutral(n, cfg);
            &neutral
        }
    };

    let atom_table = p.r(b, "embed.atom_table")?;
    let charge_table = p.r(b, "embed.charge_table")?;
    let atom_emb = tape.embedding(atom_table, input.atom_types)?;
    let charge_emb = tape.embedding(charge_table, input.charges)?;
    let t_col = tape.leaf(&[n, 1], vec![input.t; n])?;
    let sc_atoms = tape.leaf(&[n, cfg.n_atom_types], sc.atom_probs.clone())?;
    let h_cat = tape.concat_last(&[atom_emb, charge_emb, t_col, sc_atoms])?;
    let h_w = p.r(b, "embed.h_in.w")?;
    let h_b = p.r(b, "embed.h_in.b")?;
    let h0 = linear(tape, h_cat, h_w, h_b)?;
    let maskf = mask_leaf(tape, input.mask)?;
    let h0 = tape.mul_prefix(h0, maskf)?;

    let mut chan = Vec::with_capacity(n * 6);
    for i in 0..n {
        chan.extend_from_slice(&input.coords[i * 3..i * 3 + 3]);
        chan.extend_from_slice(&sc.coords[i * 3..i * 3 + 3]);
    }
    let chan = tape.leaf(&[n, 2, 3], chan)?;
    let x_w = p.r(b, "embed.x_in.w")?;
    let x0 = tape.channel_mix(x_w, chan)?;
    let x0 = tape.mul_prefix(x0, maskf)?;

    let bond_table = p.r(b, "embed.bond_table")?;
    let bond_emb = tape.embedding(bond_table, input.bonds)?;
    let bond_emb = tape.reshape(bond_emb, &[n, n, cfg.d_edge])?;
    let sc_bonds = tape.leaf(&[n, n, cfg.n_bond_kinds], sc.bond_probs.clone())?;
    let e_cat = tape.concat_last(&[bond_emb, sc_bonds])?;
    let e_width = cfg.d_edge + cfg.n_bond_kinds;
    let e_flat = tape.reshape(e_cat, &[n * n, e_width])?;
    let e_w = p.r(b, "embed.e_in.w")?;
    let e_b = p.r(b, "embed.e_in.b")?;
    let edge = linear(tape, e_flat, e_w, e_b)?;
    let edge = tape.reshape(edge, &[n, n, cfg.d_edge])?;

    Ok(EmbedOut {
        io: LayerIo { h: h0, x: x0 },
        edge,
    })
}

/// Bond logits from the generated edge features, projections of both
/// endpoint node features, and the distance between predicted coordinates.
/// Averaging with the transpose makes the logits exactly symmetric; the
/// diagonal is never read by losses or sampling.
pub fn refine_bonds(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    h_final: TensorRef,
    coords_pred: TensorRef,
    edge_feats: TensorRef,
) -> Result<TensorRef, ArchError> {
    let cfg = &p.config;
    let n = tape.shape(h_final)[0];
    let hproj = p.r(b, "head.bond.hproj")?;
    let hp = tape.matmul(h_final, hproj)?;
    let rows = tape.pair_rows(hp)?;
    let cols = tape.pair_cols(hp)?;
    let crows = tape.pair_rows(coords_pred)?;
    let ccols = tape.pair_cols(coords_pred)?;
    let diff = tape.sub(ccols, crows)?;
    let dist = tape.norm_last(diff)?;
    let dist = tape.reshape(dist, &[n, n, 1])?;
    let cat = tape.concat_last(&[edge_feats, rows, cols, dist])?;
    let width = 3 * cfg.d_edge + 1;
    let flat = tape.reshape(cat, &[n * n, width])?;
    let logits = mlp2(tape, p, b, flat, "head.bond")?;
    let logits = tape.reshape(logits, &[n, n, cfg.n_bond_kinds])?;
    let flipped = tape.transpose_pair(logits)?;
    let summed = tape.add(logits, flipped)?;
    Ok(tape.scale(summed, 0.5))
}

/// Full forward pass for one molecule. Predicted coordinates are
/// zero-centered over live atoms and zeroed at padding; logits stay raw.
pub fn forward(
    tape: &mut Tape,
    p: &ModelParams,
    b: &Bindings,
    input: &ModelInput,
) -> Result<Prediction, ArchError> {
    let cfg = &p.config;
    let n = validate_input(p, input)?;
    let embedded = embed_inputs(tape, p, b, input)?;
    let mut io = embedded.io;
    let mut final_edges = None;
    for l in 0..cfg.n_layers {
        io = feed_forward(tape, p, b, l, io, input.mask)?;
        let edge_in = (l == 0).then_some(embedded.edge);
        let msgs = latent_messages(tape, p, b, l, io, edge_in, input.mask)?;
        let h_new = attend_invariant(tape, p, b, l, io.h, msgs.m_inv, input.mask)?;
        let x_new = attend_equivariant(tape, p, b, l, io.x, msgs.m_equi, input.mask)?;
        io = LayerIo { h: h_new, x: x_new };
        if msgs.edge_out.is_some() {
            final_edges = msgs.edge_out;
        }
    }
    let final_edges = final_edges.expect("last layer always emits edge features");

    let atom_logits = mlp2(tape, p, b, io.h, "head.atom")?;
    let charge_logits = mlp2(tape, p, b, io.h, "head.charge")?;

    let w_coord = p.r(b, "head.coord.w")?;
    let xc = tape.channel_mix(w_coord, io.x)?;
    let xc = tape.reshape(xc, &[n, 3])?;
    let mean = tape.mean_atoms(xc, Some(input.mask))?;
    let tiled = tape.broadcast_lead(mean, n);
    let centered = tape.sub(xc, tiled)?;
    let maskf = mask_leaf(tape, input.mask)?;
    let coords = tape.mul_prefix(centered, maskf)?;

    let bond_logits = refine_bonds(tape, p, b, io.h, coords, final_edges)?;

    Ok(Prediction {
        coords,
        atom_logits,
        charge_logits,
        bond_logits,
    })
}
