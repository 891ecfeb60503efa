use alloc::vec::Vec;

use super::channel::ChannelSignals;
use super::fsm::{FsmInputs, FsmState};

/// Signals and schedule position of one simulated clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleRecord {
    pub cycle: u64,
    /// State active during this cycle.
    pub state: FsmState,
    /// Guard values `state` was chosen from.
    pub guards: FsmInputs,
    pub input: ChannelSignals,
    pub output: ChannelSignals,
    /// `(tile, phase)` computed this cycle, if any.
    pub slot: Option<(usize, usize)>,
    pub weight_address: Option<usize>,
    pub fifo_len: usize,
    /// A tile result entered the output FIFO at the end of this cycle.
    pub fifo_push: bool,
}

/// Counters accumulated over a run.
///
/// `total_cycles` always equals the sum of `state_occupancy`. A cycle that
/// does no compute is either a backpressure stall (the output side could
/// not advance) or a starvation stall (it could, but no input was there).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CycleTrace {
    pub total_cycles: u64,
    pub beats_in: u64,
    pub beats_out: u64,
    pub compute_cycles: u64,
    pub tiles_completed: u64,
    pub stall_cycles_backpressure: u64,
    pub stall_cycles_starvation: u64,
    /// Indexed by [`FsmState::index`].
    pub state_occupancy: [u64; 3],
    pub first_input_cycle: Option<u64>,
    pub last_output_cycle: Option<u64>,
    /// Cycle in which the first beat of each input vector was accepted.
    pub vector_start_cycles: Vec<u64>,
}

impl CycleTrace {
    pub(crate) fn record(&mut self, rec: &CycleRecord, vector_start: bool, tile_done: bool, backpressured: bool) {
        self.total_cycles += 1;
        self.state_occupancy[rec.state.index()] += 1;
        if rec.input.transfer() {
            self.beats_in += 1;
            self.first_input_cycle.get_or_insert(rec.cycle);
        }
        if vector_start {
            self.vector_start_cycles.push(rec.cycle);
        }
        if rec.output.transfer() {
            self.beats_out += 1;
            self.last_output_cycle = Some(rec.cycle);
        }
        if rec.slot.is_some() {
            self.compute_cycles += 1;
        } else if backpressured {
            self.stall_cycles_backpressure += 1;
        } else {
            self.stall_cycles_starvation += 1;
        }
        if tile_done {
            self.tiles_completed += 1;
        }
    }

    pub fn occupancy(&self, state: FsmState) -> u64 {
        self.state_occupancy[state.index()]
    }

    /// Cycles from the first accepted input beat to the last output transfer,
    /// both inclusive.
    pub fn latency(&self) -> Option<u64> {
        match (self.first_input_cycle, self.last_output_cycle) {
            (Some(first), Some(last)) if last >= first => Some(last - first + 1),
            _ => None,
        }
    }

    /// Distances between the starts of consecutive input vectors.
    pub fn vector_intervals(&self) -> impl Iterator<Item = u64> + '_ {
        self.vector_start_cycles.windows(2).map(|w| w[1] - w[0])
    }

    /// Mean vector interval as `(cycles, vectors)`, if at least two vectors started.
    pub fn steady_state_interval(&self) -> Option<(u64, u64)> {
        let starts = &self.vector_start_cycles;
        match (starts.first(), starts.last()) {
            (Some(first), Some(last)) if starts.len() >= 2 => Some((last - first, starts.len() as u64 - 1)),
            _ => None,
        }
    }

    pub fn steady_state_cycles_per_vector(&self) -> Option<f64> {
        self.steady_state_interval().map(|(c, v)| c as f64 / v as f64)
    }
}
