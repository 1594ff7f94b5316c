//! Teacher-forced forward pass over a rendered sequence.

use super::layers::{block_forward, elu, layer_norm, linear, AttentionLayout, BlockCache, NormCache};
use super::params::Parameters;
use crate::dialogue::RenderedSequence;
use crate::error::{Error, Result};
use crate::tensor::{matmul, Matrix, Real};
use crate::unit_codec::GroupedUnitSequence;

/// Everything the losses need from one sequence.
#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    /// `L x d`, after the final norm.
    pub hidden: Matrix<T>,
    /// `L x N`
    pub text_logits: Matrix<T>,
    /// `(S*G) x V_u`; rows `k*G..(k+1)*G` belong to speech slot `k`.
    pub group_logits: Matrix<T>,
    pub group_size: usize,
}

impl<T: Real> ForwardOutput<T> {
    pub fn num_slots(&self) -> usize {
        self.group_logits.rows() / self.group_size
    }

    /// `G x V_u` logits for slot `k`.
    pub fn slot_logits(&self, k: usize) -> Matrix<T> {
        self.group_logits.slice_rows(k * self.group_size, self.group_size)
    }
}

pub(crate) struct AdaptorCache<T> {
    pub units: Vec<u32>,
    pub concat: Matrix<T>,
    pub pre_act: Matrix<T>,
    pub act: Matrix<T>,
}

pub(crate) struct GroupCache<T> {
    pub zrows: Matrix<T>,
    pub blocks: Vec<BlockCache<T>>,
    pub final_norm: NormCache<T>,
    /// Normalized outputs at query positions, `(S*G) x d_gm`.
    pub query_out: Matrix<T>,
}

pub(crate) struct ForwardCache<T> {
    pub adaptor: AdaptorCache<T>,
    pub blocks: Vec<BlockCache<T>>,
    pub final_norm: NormCache<T>,
    pub group: Option<GroupCache<T>>,
}

pub(crate) fn check_units<T: Real>(p: &Parameters<T>, units: &[u32]) -> Result<()> {
    let vocab = p.config.unit_vocab_size;
    match units.iter().find(|&&u| u as usize >= vocab) {
        Some(&unit) => Err(Error::UnitOutOfRange { unit, vocab }),
        None => Ok(()),
    }
}

/// Adaptor over `units.len() / G` groups given as a flat unit list.
pub(crate) fn adaptor_forward<T: Real>(p: &Parameters<T>, units: &[u32]) -> Result<(Matrix<T>, AdaptorCache<T>)> {
    let g = p.config.group_size;
    if !units.len().is_multiple_of(g) {
        return Err(Error::ShapeMismatch(format!(
            "{} units do not form whole groups of {g}",
            units.len()
        )));
    }
    check_units(p, units)?;
    let de = p.config.unit_embedding_dim;
    let n = units.len() / g;
    let mut concat = Matrix::zeros(n, g * de);
    for (i, &u) in units.iter().enumerate() {
        let (row, j) = (i / g, i % g);
        concat.row_mut(row)[j * de..(j + 1) * de].copy_from_slice(p.unit_embedding.row(u as usize));
    }
    let pre_act = linear(&concat, &p.adaptor_in);
    let act = elu(&pre_act);
    let out = linear(&act, &p.adaptor_out);
    let cache = AdaptorCache {
        units: units.to_vec(),
        concat,
        pre_act,
        act,
    };
    Ok((out, cache))
}

/// One adapted embedding per group, `num_groups x d`.
pub fn embed_groups<T: Real>(gs: &GroupedUnitSequence, p: &Parameters<T>) -> Result<Matrix<T>> {
    if gs.group_size() != p.config.group_size {
        return Err(Error::ShapeMismatch(format!(
            "groups of {} units for a model with group size {}",
            gs.group_size(),
            p.config.group_size
        )));
    }
    Ok(adaptor_forward(p, gs.flat_units())?.0)
}

/// Input rows: adapted groups at speech slots, token embeddings elsewhere, plus positions.
pub fn assemble_input<T: Real>(r: &RenderedSequence, adapted: &Matrix<T>, p: &Parameters<T>) -> Result<Matrix<T>> {
    if adapted.rows() != r.num_slots() {
        return Err(Error::SlotCountMismatch {
            slots: r.num_slots(),
            groups: adapted.rows(),
        });
    }
    if r.len() > p.config.max_len {
        return Err(Error::SequenceTooLong {
            len: r.len(),
            max: p.config.max_len,
        });
    }
    let vocab = p.config.text_vocab_size;
    if let Some(&t) = r.tokens.iter().find(|&&t| t as usize >= vocab) {
        return Err(Error::ShapeMismatch(format!(
            "token id {t} outside a vocabulary of {vocab}"
        )));
    }
    let d = p.config.d_model;
    let mut e = Matrix::zeros(r.len(), d);
    let mut slots = r.speech_slots.iter().enumerate().peekable();
    for (t, &tok) in r.tokens.iter().enumerate() {
        let src = match slots.peek() {
            Some((_, s)) if s.position == t => {
                let (k, _) = slots.next().expect("peeked");
                adapted.row(k)
            }
            _ => p.token_embedding.row(tok as usize),
        };
        let pos = p.position_embedding.row(t);
        for ((o, &a), &b) in e.row_mut(t).iter_mut().zip(src).zip(pos) {
            *o = a + b;
        }
    }
    Ok(e)
}

/// Causal backbone. Returns the normalized hidden states and the text logits.
pub fn backbone_forward<T: Real>(e: &Matrix<T>, p: &Parameters<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let (z, logits, _) = backbone_with_cache(e, p)?;
    Ok((z, logits))
}

pub(crate) fn backbone_with_cache<T: Real>(
    e: &Matrix<T>,
    p: &Parameters<T>,
) -> Result<(Matrix<T>, Matrix<T>, (Vec<BlockCache<T>>, NormCache<T>))> {
    let len = e.rows();
    if len > p.config.max_len {
        return Err(Error::SequenceTooLong {
            len,
            max: p.config.max_len,
        });
    }
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    let layout = AttentionLayout {
        seq_len: len,
        causal: true,
    };
    let mut x = e.clone();
    let mut caches = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let (y, c) = block_forward(&x, b, p.config.n_heads, layout);
        x = y;
        caches.push(c);
    }
    let (z, norm) = layer_norm(&x, &p.final_norm);
    let logits = matmul(z.view(), p.text_head.view());
    Ok((z, logits, (caches, norm)))
}

/// Group logits for a batch of hidden states, `(S*G) x V_u` for `S` rows of `zrows`.
pub fn group_model_batch<T: Real>(zrows: &Matrix<T>, p: &Parameters<T>) -> Matrix<T> {
    group_model_with_cache(zrows, p).0
}

/// `G x V_u` logits predicted from one hidden state.
pub fn group_model_forward<T: Real>(z: &[T], p: &Parameters<T>) -> Matrix<T> {
    group_model_batch(&Matrix::from_vec(1, z.len(), z.to_vec()), p)
}

pub(crate) fn group_model_with_cache<T: Real>(zrows: &Matrix<T>, p: &Parameters<T>) -> (Matrix<T>, GroupCache<T>) {
    let g = p.config.group_size;
    let dg = p.config.d_group_model;
    let s = zrows.rows();
    let projected = linear(zrows, &p.gm_proj);
    let mut x = Matrix::zeros(s * (g + 1), dg);
    for k in 0..s {
        let base = k * (g + 1);
        for (o, (&a, &b)) in x
            .row_mut(base)
            .iter_mut()
            .zip(projected.row(k).iter().zip(p.gm_position.row(0)))
        {
            *o = a + b;
        }
        for j in 0..g {
            let q = p.gm_queries.row(j);
            let pos = p.gm_position.row(j + 1);
            for (o, (&a, &b)) in x.row_mut(base + 1 + j).iter_mut().zip(q.iter().zip(pos)) {
                *o = a + b;
            }
        }
    }
    let layout = AttentionLayout {
        seq_len: g + 1,
        causal: false,
    };
    let mut blocks = Vec::with_capacity(p.gm_blocks.len());
    for b in &p.gm_blocks {
        let (y, c) = block_forward(&x, b, p.config.n_group_heads, layout);
        x = y;
        blocks.push(c);
    }
    let (normed, final_norm) = layer_norm(&x, &p.gm_final_norm);
    let mut query_out = Matrix::zeros(s * g, dg);
    for k in 0..s {
        for j in 0..g {
            query_out
                .row_mut(k * g + j)
                .copy_from_slice(normed.row(k * (g + 1) + 1 + j));
        }
    }
    let logits = matmul(query_out.view(), p.unit_head.view());
    let cache = GroupCache {
        zrows: zrows.clone(),
        blocks,
        final_norm,
        query_out,
    };
    (logits, cache)
}

pub fn full_forward<T: Real>(r: &RenderedSequence, p: &Parameters<T>) -> Result<ForwardOutput<T>> {
    Ok(forward_with_cache(r, p)?.0)
}

pub(crate) fn forward_with_cache<T: Real>(
    r: &RenderedSequence,
    p: &Parameters<T>,
) -> Result<(ForwardOutput<T>, ForwardCache<T>)> {
    let g = p.config.group_size;
    if r.group_size != g {
        return Err(Error::ShapeMismatch(format!(
            "sequence rendered with group size {} for a model with group size {g}",
            r.group_size
        )));
    }
    let (adapted, adaptor) = adaptor_forward(p, &r.flat_slot_units())?;
    let e = assemble_input(r, &adapted, p)?;
    let (hidden, text_logits, (blocks, final_norm)) = backbone_with_cache(&e, p)?;

    let (group_logits, group) = if r.num_slots() == 0 {
        (Matrix::zeros(0, p.config.unit_vocab_size), None)
    } else {
        let mut zrows = Matrix::zeros(r.num_slots(), p.config.d_model);
        for (k, slot) in r.speech_slots.iter().enumerate() {
            if slot.position == 0 {
                return Err(Error::ShapeMismatch(
                    "speech slot at position 0 has no predecessor".into(),
                ));
            }
            zrows.row_mut(k).copy_from_slice(hidden.row(slot.position - 1));
        }
        let (logits, cache) = group_model_with_cache(&zrows, p);
        (logits, Some(cache))
    };
    let out = ForwardOutput {
        hidden,
        text_logits,
        group_logits,
        group_size: g,
    };
    let cache = ForwardCache {
        adaptor,
        blocks,
        final_norm,
        group,
    };
    Ok((out, cache))
}
