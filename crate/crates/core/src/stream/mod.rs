//! The cycle-accurate engine.
//!
//! Every simulated clock is evaluated in two phases: combinational signals
//! (`tvalid`, `tready`, the FSM transition) are resolved from start-of-cycle
//! register state, then all registers commit together.

mod channel;
mod fsm;
mod run;
mod trace;
mod unit;

pub use channel::{pack_tdata, unpack_tdata, Beat, ChannelSignals, OutputWord, StreamChannel};
pub use fsm::{fsm_step, FsmInputs, FsmState};
pub use run::{
    run_layer, run_vectors, Always, AvailabilityPattern, FlowPattern, LayerRun, Never, ReadinessPattern, RunLimits,
};
pub use trace::{CycleRecord, CycleTrace};
pub use unit::{MvuStream, MvuUnit, StepOutcome, UnitOptions};
