//! Dense matrices, reverse-mode gradients, parameters, optimizer and RNG.

mod cells;
mod gradcheck;
mod matrix;
mod optim;
mod params;
mod rng;
mod tape;

pub use cells::{GruCell, LstmCell};
pub use gradcheck::{grad_check, relative_error, GradReport, ParamGradError, FD_STEP};
pub use matrix::{cross_entropy, elementwise, matmul, softmax_rows, Activation, Matrix};
pub use optim::{adam_step, Adam, AdamConfig};
pub use params::{Param, ParamStore};
pub use rng::SeededRng;
pub use tape::{Tape, Var};
