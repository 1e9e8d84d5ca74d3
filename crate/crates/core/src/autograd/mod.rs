//! Dense tensors and a reverse-mode tape.
//!
//! Primitives live on [`Tape`]; each records its inputs and the values its
//! backward rule needs. [`finite_diff_check`] is the reference every
//! backward rule is tested against.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::finite_diff_check;
pub use tape::{BlockEntry, Tape, Var};
pub use tensor::Tensor;
