//! Incremental backbone evaluation with per-layer key/value caches.

use super::forward::{adaptor_forward, group_model_forward};
use super::layers::{attend_head, gelu, layer_norm, linear};
use super::params::Parameters;
use crate::error::{Error, Result};
use crate::tensor::{matmul, Matrix, Real, View, ViewMut};

/// One backbone input row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputRow<'a> {
    Token(u32),
    /// The units of one group; fills a speech slot.
    Group(&'a [u32]),
}

/// A decoding context that grows one or more rows at a time.
pub struct Session<'p, T> {
    params: &'p Parameters<T>,
    keys: Vec<Matrix<T>>,
    values: Vec<Matrix<T>>,
    len: usize,
}

impl<'p, T: Real> Session<'p, T> {
    pub fn new(params: &'p Parameters<T>) -> Self {
        let d = params.config.d_model;
        let n = params.blocks.len();
        Self {
            params,
            keys: (0..n).map(|_| Matrix::zeros(0, d)).collect(),
            values: (0..n).map(|_| Matrix::zeros(0, d)).collect(),
            len: 0,
        }
    }

    pub fn params(&self) -> &'p Parameters<T> {
        self.params
    }

    /// Rows consumed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Embeds `rows` (without positions).
    pub fn embed(&self, rows: &[InputRow<'_>]) -> Result<Matrix<T>> {
        let p = self.params;
        let d = p.config.d_model;
        let mut e = Matrix::zeros(rows.len(), d);
        for (i, row) in rows.iter().enumerate() {
            match *row {
                InputRow::Token(t) => {
                    if t as usize >= p.config.text_vocab_size {
                        return Err(Error::ShapeMismatch(format!("token id {t} outside the vocabulary")));
                    }
                    e.row_mut(i).copy_from_slice(p.token_embedding.row(t as usize));
                }
                InputRow::Group(units) => {
                    if units.len() != p.config.group_size {
                        return Err(Error::ShapeMismatch(format!(
                            "group of {} units for a model with group size {}",
                            units.len(),
                            p.config.group_size
                        )));
                    }
                    let (a, _) = adaptor_forward(p, units)?;
                    e.row_mut(i).copy_from_slice(a.row(0));
                }
            }
        }
        Ok(e)
    }

    /// Feeds rows and returns their normalized hidden states.
    pub fn feed(&mut self, rows: &[InputRow<'_>]) -> Result<Matrix<T>> {
        let e = self.embed(rows)?;
        self.feed_embeddings(e)
    }

    /// Feeds pre-computed input embeddings (positions are added here).
    pub fn feed_embeddings(&mut self, mut x: Matrix<T>) -> Result<Matrix<T>> {
        let p = self.params;
        let n = x.rows();
        if self.len + n > p.config.max_len {
            return Err(Error::SequenceTooLong {
                len: self.len + n,
                max: p.config.max_len,
            });
        }
        for i in 0..n {
            let pos = p.position_embedding.row(self.len + i);
            for (o, &v) in x.row_mut(i).iter_mut().zip(pos) {
                *o = *o + v;
            }
        }
        let d = p.config.d_model;
        let heads = p.config.n_heads;
        let dh = d / heads;
        let past = self.len;
        let total = past + n;
        let mut probs = vec![T::zero(); n * total];
        for (l, b) in p.blocks.iter().enumerate() {
            let (h1, _) = layer_norm(&x, &b.norm1);
            let qkv = matmul(h1.view(), b.qkv.view());
            let mut k_new = Matrix::zeros(n, d);
            let mut v_new = Matrix::zeros(n, d);
            for i in 0..n {
                k_new.row_mut(i).copy_from_slice(&qkv.row(i)[d..2 * d]);
                v_new.row_mut(i).copy_from_slice(&qkv.row(i)[2 * d..]);
            }
            self.keys[l].push_rows(&k_new);
            self.values[l].push_rows(&v_new);
            let mut attn = Matrix::zeros(n, d);
            for h in 0..heads {
                let q = View::block(qkv.as_slice(), h * dh, n, dh, 3 * d);
                let k = View::block(self.keys[l].as_slice(), h * dh, total, dh, d);
                let v = View::block(self.values[l].as_slice(), h * dh, total, dh, d);
                let out = ViewMut::block(attn.as_mut_slice(), h * dh, n, dh, d);
                attend_head(q, k, v, Some(past), &mut probs, out);
            }
            let mut x2 = linear(&attn, &b.attn_out);
            x2.add_assign(&x);
            let (h2, _) = layer_norm(&x2, &b.norm2);
            let mut y = linear(&gelu(&linear(&h2, &b.fc1)), &b.fc2);
            y.add_assign(&x2);
            x = y;
        }
        self.len = total;
        Ok(layer_norm(&x, &p.final_norm).0)
    }

    /// Text logits for one hidden-state row.
    pub fn text_logits(&self, z: &[T]) -> Vec<T> {
        let z = Matrix::from_vec(1, z.len(), z.to_vec());
        matmul(z.view(), self.params.text_head.view()).into_vec()
    }

    /// `G x V_u` unit logits for the group following hidden state `z`.
    pub fn group_logits(&self, z: &[T]) -> Matrix<T> {
        group_model_forward(z, self.params)
    }
}
