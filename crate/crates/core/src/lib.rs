//! Memorization-distance benchmarks for recurrent networks.
//!
//! Trains vanilla RNN, LSTM and GRU networks from scratch with
//! backpropagation through time on tasks that ask for the `p`th-from-last
//! element of a random sequence, sweeps (layers × cells × position) grids
//! to find how far back each configuration can remember, and measures the
//! memory capacity of echo state networks for comparison.

// Index loops mirror the equations; `!(a < b)` comparisons deliberately reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cells;
pub mod error;
pub mod esn;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod sweep;
pub mod tasks;
pub mod training;

pub use cells::{init_net, CellKind, Checkpoint, ForwardTape, StackedNet};
pub use error::{Error, Result};
pub use rng::Prng;
pub use tasks::{Episode, TaskKind, TaskSpec};
pub use training::{train_run, TrainConfig, TrainResult};
