//! Minimal reverse-mode automatic differentiation on dense `f64` tensors.
//!
//! The crate provides exactly what a small sequence model needs and nothing
//! more: a value type ([`Tensor`]), a define-by-run graph ([`Tape`]) with a
//! fixed set of differentiable operations, and a finite-difference checker
//! ([`finite_difference_check`]) that serves as the independent oracle for
//! every gradient in the crate.
//!
//! Design points:
//! - `f64` everywhere; convolution is cross-correlation (no kernel flip).
//! - A tape is append-only; insertion order is the topological order, and the
//!   backward sweep visits each node once in reverse with `+=` accumulation.
//! - Guards keep forward values finite on finite inputs: `log` floors its
//!   argument at 1e-12 and `exp` clamps to the representable range.
//! - A tape and its node ids stay on one thread. Parallel workloads build one
//!   tape per sample and combine gradients outside the crate.
//!
//! ```
//! use tapegrad::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::from_vec(vec![2], vec![3.0, -1.0]).unwrap());
//! let y = tape.mul(x, x).unwrap();
//! let loss = tape.sum(y);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[6.0, -2.0]);
//! ```

mod check;
mod error;
pub mod ops;
mod tape;
mod tensor;

pub use check::{finite_difference_check, finite_difference_check_subset};
pub use error::Error;
pub use tape::{BinaryKind, Tape, UnaryKind, VarId};
pub use tensor::{broadcast_shape, strides_of, BroadcastMap, Tensor};
