//! Dense f64 tensors with a reverse-mode tape.
//!
//! Every op is a method on [`Var`] that returns a new `Var` on the same
//! [`Tape`]. Calling [`Tape::backward`] on a scalar consumes the tape and
//! returns gradients for tracked leaves.
//!
//! ```
//! use tanner_tensor::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.var(Tensor::new(&[2], vec![0.0, 1.0]).unwrap());
//! let y = x.tanh().unwrap().sum_all().unwrap();
//! let grads = tape.backward(&y).unwrap();
//! assert_eq!(grads.get(&x).unwrap().data()[0], 1.0);
//! ```

mod error;
mod ops;
mod tape;
mod tensor;

pub use error::TensorError;
pub use ops::gdn::{delta_rule_parallel, delta_rule_step};
pub use ops::nn::{Activation, Adjacency};
pub use tape::{BackwardFn, Gradients, Tape, Var};
pub use tensor::{gemm, Tensor};
