//! Sentence encoding: a bidirectional LSTM over the token vectors, collapsed
//! into the text context vector through the binary mention mask.

use rand::Rng;

use thiserror::Error;

use crate::autodiff::{stack_rows, weighted_sum, ParamSet, Tape, Tensor, TensorError};
use crate::embedding::tokenize;
use crate::lstm::BiLstm;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("mention {0:?} not found in token sequence")]
    MentionNotFound(String),
    #[error("mention mask has no active positions")]
    EmptyMask,
    #[error("mask length {mask} does not match token count {tokens}")]
    MaskLength { mask: usize, tokens: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Binary per-token weights marking the entity span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionMask {
    pub weights: Vec<u8>,
}

impl MentionMask {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.weights.iter().map(|&w| w as usize).sum()
    }
}

/// Mask with 1s over the first case-insensitive contiguous token match of the
/// entity's tokens.
pub fn locate_mention(tokens: &[String], entity: &str) -> Result<MentionMask, TextError> {
    let needle = tokenize(entity, true);
    if tokens.is_empty() || needle.is_empty() {
        return Err(TextError::MentionNotFound(entity.to_string()));
    }
    let haystack: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    if needle.len() <= haystack.len() {
        for start in 0..=(haystack.len() - needle.len()) {
            if haystack[start..start + needle.len()] == needle[..] {
                let mut weights = vec![0u8; tokens.len()];
                for w in &mut weights[start..start + needle.len()] {
                    *w = 1;
                }
                return Ok(MentionMask { weights });
            }
        }
    }
    Err(TextError::MentionNotFound(entity.to_string()))
}

/// Dimensions of the text encoder stack.
#[derive(Debug, Clone, Copy)]
pub struct TextEncoderDims {
    pub embedding_dim: usize,
    /// dense layer before the LSTM
    pub dense_dim: usize,
    /// memory of each LSTM direction
    pub lstm_dim: usize,
    /// size of y_text
    pub output_dim: usize,
}

/// Pre-projection, bidirectional recurrence and the reducing projection that
/// produces y_text.
pub struct TextEncoder<S: Real> {
    pub dims: TextEncoderDims,
    bilstm: BiLstm<S>,
    pre_w: crate::autodiff::Param<S>,
    pre_b: crate::autodiff::Param<S>,
    post_w: crate::autodiff::Param<S>,
    post_b: crate::autodiff::Param<S>,
}

impl<S: Real> TextEncoder<S> {
    pub fn new<R: Rng>(dims: TextEncoderDims, params: &mut ParamSet<S>, rng: &mut R) -> Self {
        let pre_w = params.add_uniform("text.pre.w", &[dims.dense_dim, dims.embedding_dim], rng);
        let pre_b = params.add_uniform("text.pre.b", &[dims.dense_dim], rng);
        let bilstm = BiLstm::new("text.lstm", dims.dense_dim, dims.lstm_dim, params, rng);
        let post_w = params.add_uniform("text.post.w", &[dims.output_dim, 2 * dims.lstm_dim], rng);
        let post_b = params.add_uniform("text.post.b", &[dims.output_dim], rng);
        TextEncoder {
            dims,
            bilstm,
            pre_w,
            pre_b,
            post_w,
            post_b,
        }
    }

    /// Per-token bidirectional outputs y_i (2 x lstm_dim each).
    pub fn outputs(
        &self,
        tape: &Tape<S>,
        token_vectors: &[Vec<S>],
    ) -> Result<Vec<Tensor<S>>, TextError> {
        let pre_w = tape.leaf(&self.pre_w);
        let pre_b = tape.leaf(&self.pre_b);
        let projected: Result<Vec<Tensor<S>>, TensorError> = token_vectors
            .iter()
            .map(|v| {
                let x = tape.constant(&[v.len()], v.clone());
                Ok(pre_w.matmul(&x)?.add(&pre_b)?.relu())
            })
            .collect();
        Ok(self.bilstm.outputs(tape, &projected?)?)
    }

    /// y_text = projection( (1/N_text) * sum_i a_i y_i ), N_text the sentence
    /// length (not the number of masked tokens).
    pub fn encode(
        &self,
        tape: &Tape<S>,
        token_vectors: &[Vec<S>],
        mask: &MentionMask,
    ) -> Result<Tensor<S>, TextError> {
        if mask.len() != token_vectors.len() {
            return Err(TextError::MaskLength {
                mask: mask.len(),
                tokens: token_vectors.len(),
            });
        }
        if mask.ones() == 0 {
            return Err(TextError::EmptyMask);
        }
        let outputs = self.outputs(tape, token_vectors)?;
        let stacked = stack_rows(&outputs)?;
        let weights: Vec<S> = mask.weights.iter().map(|&w| S::of(w as f64)).collect();
        let mask_t = tape.constant(&[weights.len()], weights);
        let n = S::of(token_vectors.len() as f64);
        let averaged = weighted_sum(&mask_t, &stacked)?.scale(S::one() / n);
        let post_w = tape.leaf(&self.post_w);
        let post_b = tape.leaf(&self.post_b);
        Ok(post_w.matmul(&averaged)?.add(&post_b)?.relu())
    }
}
