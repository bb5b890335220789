//! Dense-tensor arithmetic with reverse-mode gradient accumulation.
//!
//! The engine is define-by-run: a [`Tape`] records every operation of one
//! forward pass, [`Tensor::backward`] walks the records in reverse and
//! accumulates gradients into every `requires_grad` ancestor. Persistent
//! trainable state lives in [`Param`] buffers outside the tape; a fresh tape
//! is built per forward pass and leaf gradients are flushed back into the
//! owning `Param` when backward runs.
//!
//! A tape and its tensors are confined to one thread; independent tapes on
//! independent threads do not share state.

mod adam;
mod gradcheck;
mod param;
mod tape;

#[cfg(test)]
mod tests;

pub use adam::{adam_update, Adam, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use param::{Param, ParamSet};
pub use tape::{concat, stack_rows, weighted_sum, Tape, Tensor, TensorError};
