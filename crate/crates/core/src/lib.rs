//! Cycle-accurate simulation of a folded matrix-vector unit (MVU).
//!
//! The unit multiplies a burned-in weight matrix with a stream of input
//! vectors. `P` processing elements each own one bank of weights and `S`
//! SIMD lanes; a layer with `K_d^2 * I_c` synapses and `O_c` neurons is
//! time-multiplexed over `SF * NF` compute cycles per input vector.
//!
//! - [`config`]: layer shapes, folding factors and derived geometry.
//! - [`lowering`]: im2col, GEMM semantics and input-stream packing.
//! - [`datapath`]: the three SIMD lane kinds, adder tree and accumulator.
//! - [`memory`]: PE-banked weight memory and the compute schedule.
//! - [`stream`]: ready/valid channels, the control FSM and the MVU itself.
//! - [`pipeline`]: several MVUs chained through width adapters.
//! - [`oracle`]: naive reference implementations used as ground truth.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod config;
pub mod datapath;
mod error;
pub mod lowering;
pub mod memory;
pub mod oracle;
pub mod pipeline;
pub mod presets;
pub mod stream;

pub use config::{validate, DatapathKind, FoldConfig, LayerConfig, LayerShape};
pub use error::{ConfigError, Error};
pub use lowering::{ImageMatrix, OutputMatrix, Tensor3, WeightMatrix};
pub use memory::{FoldedWeightMemory, ScheduleSlot};
pub use pipeline::{Pipeline, PipelineRun};
pub use stream::{CycleRecord, CycleTrace, FsmState, MvuUnit, UnitOptions};

pub type Result<T, E = Error> = core::result::Result<T, E>;
