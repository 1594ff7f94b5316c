//! Learnable tensors and their canonical names.
//!
//! Tensor names double as checkpoint keys, so the order and spelling produced
//! by [`Parameters::named`] is part of the checkpoint format.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::tensor::{Matrix, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `in x out`
    pub weight: Matrix<T>,
    /// `1 x out`
    pub bias: Matrix<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Norm<T> {
    pub gain: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Real> Norm<T> {
    pub fn zeros(width: usize) -> Self {
        Self {
            gain: Matrix::zeros(1, width),
            bias: Matrix::zeros(1, width),
        }
    }
}

/// Pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub norm1: Norm<T>,
    /// Fused query/key/value projection, `d x 3d`, no bias.
    pub qkv: Matrix<T>,
    pub attn_out: Linear<T>,
    pub norm2: Norm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl<T: Real> Block<T> {
    pub fn zeros(width: usize, hidden: usize) -> Self {
        Self {
            norm1: Norm::zeros(width),
            qkv: Matrix::zeros(width, 3 * width),
            attn_out: Linear::zeros(width, width),
            norm2: Norm::zeros(width),
            fc1: Linear::zeros(width, hidden),
            fc2: Linear::zeros(hidden, width),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    pub config: ModelConfig,
    /// `V_u x d_emb_unit`
    pub unit_embedding: Matrix<T>,
    /// `G*d_emb_unit -> d`
    pub adaptor_in: Linear<T>,
    /// `d -> d`
    pub adaptor_out: Linear<T>,
    /// `N x d`
    pub token_embedding: Matrix<T>,
    /// `max_len x d`
    pub position_embedding: Matrix<T>,
    pub blocks: Vec<Block<T>>,
    pub final_norm: Norm<T>,
    /// `d x N`
    pub text_head: Matrix<T>,
    /// `d -> d_gm`
    pub gm_proj: Linear<T>,
    /// `G x d_gm`
    pub gm_queries: Matrix<T>,
    /// `(G+1) x d_gm`; row 0 is the projected hidden state.
    pub gm_position: Matrix<T>,
    pub gm_blocks: Vec<Block<T>>,
    pub gm_final_norm: Norm<T>,
    /// `d_gm x V_u`
    pub unit_head: Matrix<T>,
}

macro_rules! named_tensors {
    ($self:ident, $iter:ident, $($mut_:tt)?) => {{
        let mut out = Vec::new();
        out.push(("speech.unit_embedding".to_string(), & $($mut_)? $self.unit_embedding));
        out.push(("speech.adaptor.fc1.weight".to_string(), & $($mut_)? $self.adaptor_in.weight));
        out.push(("speech.adaptor.fc1.bias".to_string(), & $($mut_)? $self.adaptor_in.bias));
        out.push(("speech.adaptor.fc2.weight".to_string(), & $($mut_)? $self.adaptor_out.weight));
        out.push(("speech.adaptor.fc2.bias".to_string(), & $($mut_)? $self.adaptor_out.bias));
        out.push(("backbone.token_embedding".to_string(), & $($mut_)? $self.token_embedding));
        out.push(("backbone.position_embedding".to_string(), & $($mut_)? $self.position_embedding));
        for (i, b) in $self.blocks.$iter().enumerate() {
            named_tensors!(@block out, format!("backbone.blocks.{i}"), b, $($mut_)?);
        }
        out.push(("backbone.final_norm.gain".to_string(), & $($mut_)? $self.final_norm.gain));
        out.push(("backbone.final_norm.bias".to_string(), & $($mut_)? $self.final_norm.bias));
        out.push(("backbone.text_head.weight".to_string(), & $($mut_)? $self.text_head));
        out.push(("group_model.proj.weight".to_string(), & $($mut_)? $self.gm_proj.weight));
        out.push(("group_model.proj.bias".to_string(), & $($mut_)? $self.gm_proj.bias));
        out.push(("group_model.queries".to_string(), & $($mut_)? $self.gm_queries));
        out.push(("group_model.position_embedding".to_string(), & $($mut_)? $self.gm_position));
        for (i, b) in $self.gm_blocks.$iter().enumerate() {
            named_tensors!(@block out, format!("group_model.blocks.{i}"), b, $($mut_)?);
        }
        out.push(("group_model.final_norm.gain".to_string(), & $($mut_)? $self.gm_final_norm.gain));
        out.push(("group_model.final_norm.bias".to_string(), & $($mut_)? $self.gm_final_norm.bias));
        out.push(("group_model.unit_head.weight".to_string(), & $($mut_)? $self.unit_head));
        out
    }};
    (@block $out:ident, $prefix:expr, $b:ident, $($mut_:tt)?) => {{
        let p = $prefix;
        $out.push((format!("{p}.norm1.gain"), & $($mut_)? $b.norm1.gain));
        $out.push((format!("{p}.norm1.bias"), & $($mut_)? $b.norm1.bias));
        $out.push((format!("{p}.attn.qkv.weight"), & $($mut_)? $b.qkv));
        $out.push((format!("{p}.attn.out.weight"), & $($mut_)? $b.attn_out.weight));
        $out.push((format!("{p}.attn.out.bias"), & $($mut_)? $b.attn_out.bias));
        $out.push((format!("{p}.norm2.gain"), & $($mut_)? $b.norm2.gain));
        $out.push((format!("{p}.norm2.bias"), & $($mut_)? $b.norm2.bias));
        $out.push((format!("{p}.mlp.fc1.weight"), & $($mut_)? $b.fc1.weight));
        $out.push((format!("{p}.mlp.fc1.bias"), & $($mut_)? $b.fc1.bias));
        $out.push((format!("{p}.mlp.fc2.weight"), & $($mut_)? $b.fc2.weight));
        $out.push((format!("{p}.mlp.fc2.bias"), & $($mut_)? $b.fc2.bias));
    }};
}

impl<T: Real> Parameters<T> {
    /// All tensors zero-filled, with shapes fixed by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config;
        let g = c.group_size;
        Self {
            config: c.clone(),
            unit_embedding: Matrix::zeros(c.unit_vocab_size, c.unit_embedding_dim),
            adaptor_in: Linear::zeros(c.adaptor_input_width(), c.d_model),
            adaptor_out: Linear::zeros(c.d_model, c.d_model),
            token_embedding: Matrix::zeros(c.text_vocab_size, c.d_model),
            position_embedding: Matrix::zeros(c.max_len, c.d_model),
            blocks: (0..c.n_layers)
                .map(|_| Block::zeros(c.d_model, c.mlp_width()))
                .collect(),
            final_norm: Norm::zeros(c.d_model),
            text_head: Matrix::zeros(c.d_model, c.text_vocab_size),
            gm_proj: Linear::zeros(c.d_model, c.d_group_model),
            gm_queries: Matrix::zeros(g, c.d_group_model),
            gm_position: Matrix::zeros(g + 1, c.d_group_model),
            gm_blocks: (0..c.n_group_layers)
                .map(|_| Block::zeros(c.d_group_model, c.group_mlp_width()))
                .collect(),
            gm_final_norm: Norm::zeros(c.d_group_model),
            unit_head: Matrix::zeros(c.d_group_model, c.unit_vocab_size),
        }
    }

    /// Normal(0, init_std) weights, zero biases, unit norm gains; seeded by `config.seed`.
    pub fn init(config: &ModelConfig) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).expect("valid std");
        for (name, t) in p.named_mut() {
            if name.ends_with(".gain") {
                t.fill(T::one());
            } else if !name.ends_with(".bias") {
                for x in t.as_mut_slice() {
                    *x = T::of(normal.sample(&mut rng));
                }
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn named(&self) -> Vec<(String, &Matrix<T>)> {
        named_tensors!(self, iter,)
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        named_tensors!(self, iter_mut, mut)
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Element-type conversion (e.g. `f32` weights into an `f64` copy for checks).
    pub fn cast<U: Real>(&self) -> Parameters<U> {
        let mut out = Parameters::<U>::zeros(&self.config);
        for ((_, src), (_, dst)) in self.named().into_iter().zip(out.named_mut()) {
            *dst = src.cast();
        }
        out
    }

    /// First tensor containing a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.named().into_iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n)
    }
}

/// Whether weight decay applies to the named tensor (biases and norm gains are exempt).
pub fn decays(name: &str) -> bool {
    !(name.ends_with(".bias") || name.ends_with(".gain"))
}
