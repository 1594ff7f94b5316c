//! Reverse pass of [`full_forward`](super::full_forward).

use super::forward::ForwardCache;
use super::layers::{
    block_backward, elu_backward, layer_norm_backward, linear_backward, weight_backward, AttentionLayout,
};
use super::params::Parameters;
use crate::dialogue::RenderedSequence;
use crate::tensor::{Matrix, Real};

fn add_row<T: Real>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a = *a + b;
    }
}

/// Parameter gradients given the loss gradients w.r.t. both logit tensors.
pub(crate) fn backward<T: Real>(
    p: &Parameters<T>,
    r: &RenderedSequence,
    hidden: &Matrix<T>,
    cache: &ForwardCache<T>,
    d_text: &Matrix<T>,
    d_group: &Matrix<T>,
) -> Parameters<T> {
    let c = &p.config;
    let mut grad = p.zeros_like();
    let mut dz = weight_backward(hidden, d_text, &p.text_head, &mut grad.text_head);

    if let Some(gc) = &cache.group {
        let g = c.group_size;
        let s = gc.zrows.rows();
        let d_query = weight_backward(&gc.query_out, d_group, &p.unit_head, &mut grad.unit_head);
        let mut d_out = Matrix::zeros(s * (g + 1), c.d_group_model);
        for k in 0..s {
            for j in 0..g {
                d_out
                    .row_mut(k * (g + 1) + 1 + j)
                    .copy_from_slice(d_query.row(k * g + j));
            }
        }
        let mut dx = layer_norm_backward(&d_out, &gc.final_norm, &p.gm_final_norm, &mut grad.gm_final_norm);
        let layout = AttentionLayout {
            seq_len: g + 1,
            causal: false,
        };
        for ((b, bc), gb) in p.gm_blocks.iter().zip(&gc.blocks).zip(grad.gm_blocks.iter_mut()).rev() {
            dx = block_backward(&dx, bc, b, gb, c.n_group_heads, layout);
        }
        let mut d_proj = Matrix::zeros(s, c.d_group_model);
        for k in 0..s {
            let base = k * (g + 1);
            d_proj.row_mut(k).copy_from_slice(dx.row(base));
            add_row(grad.gm_position.row_mut(0), dx.row(base));
            for j in 0..g {
                add_row(grad.gm_position.row_mut(j + 1), dx.row(base + 1 + j));
                add_row(grad.gm_queries.row_mut(j), dx.row(base + 1 + j));
            }
        }
        let d_zrows = linear_backward(&gc.zrows, &d_proj, &p.gm_proj, &mut grad.gm_proj);
        for (k, slot) in r.speech_slots.iter().enumerate() {
            add_row(dz.row_mut(slot.position - 1), d_zrows.row(k));
        }
    }

    let mut dx = layer_norm_backward(&dz, &cache.final_norm, &p.final_norm, &mut grad.final_norm);
    let layout = AttentionLayout {
        seq_len: r.len(),
        causal: true,
    };
    for ((b, bc), gb) in p.blocks.iter().zip(&cache.blocks).zip(grad.blocks.iter_mut()).rev() {
        dx = block_backward(&dx, bc, b, gb, c.n_heads, layout);
    }

    let mut d_adapted = Matrix::zeros(r.num_slots(), c.d_model);
    let mut slots = r.speech_slots.iter().enumerate().peekable();
    for (t, &tok) in r.tokens.iter().enumerate() {
        add_row(grad.position_embedding.row_mut(t), dx.row(t));
        match slots.peek() {
            Some((_, s)) if s.position == t => {
                let (k, _) = slots.next().expect("peeked");
                d_adapted.row_mut(k).copy_from_slice(dx.row(t));
            }
            _ => add_row(grad.token_embedding.row_mut(tok as usize), dx.row(t)),
        }
    }

    if r.num_slots() > 0 {
        let ac = &cache.adaptor;
        let d_act = linear_backward(&ac.act, &d_adapted, &p.adaptor_out, &mut grad.adaptor_out);
        let d_pre = elu_backward(&ac.pre_act, &d_act);
        let d_concat = linear_backward(&ac.concat, &d_pre, &p.adaptor_in, &mut grad.adaptor_in);
        let (g, de) = (c.group_size, c.unit_embedding_dim);
        for (i, &u) in ac.units.iter().enumerate() {
            let (row, j) = (i / g, i % g);
            add_row(
                grad.unit_embedding.row_mut(u as usize),
                &d_concat.row(row)[j * de..(j + 1) * de],
            );
        }
    }
    grad
}
