use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::channel::{Beat, ChannelSignals, OutputWord};
use super::fsm::{fsm_step, FsmInputs, FsmState};
use super::trace::{CycleRecord, CycleTrace};
use crate::config::LayerConfig;
use crate::datapath::{pe_cycle, Accumulator};
use crate::error::Error;
use crate::lowering::WeightMatrix;
use crate::memory::{fold_weights, schedule, FoldedWeightMemory, InputBuffer, ScheduleSlot};

/// Tunables that the hardware leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitOptions {
    /// Output FIFO capacity in words.
    pub fifo_depth: usize,
    /// Cycles from a tile's last compute step to its appearance on the
    /// output port (`d`). `d - 1` register stages sit between the
    /// accumulators and the FIFO.
    pub pipeline_depth: usize,
}

impl Default for UnitOptions {
    fn default() -> Self {
        Self { fifo_depth: 4, pipeline_depth: 5 }
    }
}

impl UnitOptions {
    pub fn check(&self) -> Result<(), Error> {
        if self.fifo_depth == 0 {
            return Err(Error::InvalidOption("fifo_depth must be at least 1"));
        }
        if self.pipeline_depth == 0 {
            return Err(Error::InvalidOption("pipeline_depth must be at least 1"));
        }
        Ok(())
    }
}

/// What one clock did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub record: CycleRecord,
    pub input_taken: bool,
    /// Word transferred on the output channel this cycle.
    pub output: Option<OutputWord>,
    pub consumed_slot: bool,
}

/// The stream unit: control FSM, input buffer, PEs, output pipeline and FIFO.
///
/// Weights are supplied per cycle by the enclosing [`MvuUnit`].
#[derive(Debug, Clone)]
pub struct MvuStream {
    cfg: LayerConfig,
    opts: UnitOptions,
    state: FsmState,
    buffer: InputBuffer,
    comp_done: bool,
    accumulators: Vec<Accumulator>,
    stages: VecDeque<Option<OutputWord>>,
    fifo: VecDeque<OutputWord>,
    cycle: u64,
    trace: CycleTrace,
}

impl MvuStream {
    pub fn new(cfg: LayerConfig, opts: UnitOptions) -> Result<Self, Error> {
        opts.check()?;
        Ok(Self {
            cfg,
            opts,
            state: FsmState::Idle,
            buffer: InputBuffer::new(cfg.input_buffer_depth(), cfg.simd()),
            comp_done: false,
            accumulators: alloc::vec![Accumulator::for_layer(&cfg); cfg.pe()],
            stages: (1..opts.pipeline_depth).map(|_| None).collect(),
            fifo: VecDeque::with_capacity(opts.fifo_depth),
            cycle: 0,
            trace: CycleTrace::default(),
        })
    }

    pub fn reset(&mut self) {
        self.state = FsmState::Idle;
        self.buffer.clear();
        self.comp_done = false;
        let fresh = Accumulator::for_layer(&self.cfg);
        self.accumulators.iter_mut().for_each(|a| *a = fresh);
        self.stages.iter_mut().for_each(|s| *s = None);
        self.fifo.clear();
        self.cycle = 0;
        self.trace = CycleTrace::default();
    }

    pub fn state(&self) -> FsmState {
        self.state
    }

    pub fn trace(&self) -> &CycleTrace {
        &self.trace
    }

    pub fn cycle_count(&self) -> u64 {
        self.cycle
    }

    pub fn fifo_len(&self) -> usize {
        self.fifo.len()
    }

    pub fn input_buffer(&self) -> &InputBuffer {
        &self.buffer
    }

    /// Words computed but not yet transferred out.
    pub fn words_in_flight(&self) -> usize {
        self.fifo.len() + self.stages.iter().flatten().count()
    }

    /// The output pipeline can shift this cycle.
    fn can_advance(&self) -> bool {
        match self.stages.front() {
            Some(None) => true,
            _ => self.fifo.len() < self.opts.fifo_depth,
        }
    }

    fn guards(&self, tvalid: bool) -> FsmInputs {
        FsmInputs { tvalid, tready: self.can_advance(), inp_buf_full: self.buffer.is_full(), comp_done: self.comp_done }
    }

    fn next_state(&self, tvalid: bool) -> FsmState {
        fsm_step(self.state, self.guards(tvalid))
    }

    /// Input TREADY for this cycle, given upstream TVALID.
    pub fn in_ready(&self, tvalid: bool) -> bool {
        self.next_state(tvalid) == FsmState::Write && self.can_advance()
    }

    /// Output TVALID/TDATA for this cycle.
    pub fn out_peek(&self) -> Option<&OutputWord> {
        self.fifo.front()
    }

    /// Advances one clock. `weight(p)` returns PE `p`'s weight word for `slot`.
    pub fn step<'w>(
        &mut self,
        input: Option<&Beat>,
        out_ready: bool,
        slot: &ScheduleSlot,
        weight: impl Fn(usize) -> &'w [i64],
    ) -> Result<StepOutcome, Error> {
        let tvalid = input.is_some();
        let guards = self.guards(tvalid);
        let advance = guards.tready;
        let next = fsm_step(self.state, guards);
        let in_ready = next == FsmState::Write && advance;
        let out_valid = !self.fifo.is_empty();

        let mut vector_start = false;
        let activations: Option<&[i64]> = match (next, input) {
            (FsmState::Write, Some(beat)) if advance => {
                if slot.tile != 0 || slot.phase != self.buffer.write_ptr() {
                    return Err(Error::Internal("write-through beat does not match the schedule"));
                }
                vector_start = self.buffer.write_ptr() == 0;
                self.buffer.write(beat.lanes())?;
                self.comp_done = false;
                Some(beat.lanes())
            }
            (FsmState::Read, _) => {
                if !self.buffer.is_full() || !advance {
                    return Err(Error::Internal("read state without a full buffer and a free output path"));
                }
                Some(self.buffer.read(slot.buffer_index)?)
            }
            _ => None,
        };

        let computed = activations.is_some();
        let mut result = None;
        if let Some(acts) = activations {
            let kind = self.cfg.datapath();
            for (p, acc) in self.accumulators.iter_mut().enumerate() {
                *acc = pe_cycle(*acc, acts, weight(p), kind, slot.first_of_tile)?;
            }
            if slot.last_of_tile {
                result = Some(OutputWord::new(self.accumulators.iter().map(|a| a.value).collect()));
            }
            if slot.last_of_vector {
                self.buffer.clear();
                self.comp_done = true;
            }
        }
        let tile_done = result.is_some();

        let output = if out_valid && out_ready { self.fifo.pop_front() } else { None };

        let mut fifo_push = false;
        if advance {
            let arriving = if self.stages.is_empty() {
                result
            } else {
                let head = self.stages.pop_front().flatten();
                self.stages.push_back(result);
                head
            };
            if let Some(word) = arriving {
                if self.fifo.len() >= self.opts.fifo_depth {
                    return Err(Error::FifoOverflow);
                }
                self.fifo.push_back(word);
                fifo_push = true;
            }
        } else if result.is_some() {
            return Err(Error::Internal("tile completed while the output pipeline was stalled"));
        }

        let record = CycleRecord {
            cycle: self.cycle,
            state: next,
            guards,
            input: ChannelSignals { tvalid, tready: in_ready },
            output: ChannelSignals { tvalid: out_valid, tready: out_ready },
            slot: computed.then_some((slot.tile, slot.phase)),
            weight_address: computed.then_some(slot.mem_address),
            fifo_len: self.fifo.len(),
            fifo_push,
        };
        self.trace.record(&record, vector_start, tile_done, !advance);
        self.state = next;
        self.cycle += 1;
        Ok(StepOutcome { record, input_taken: record.input.transfer(), output, consumed_slot: computed })
    }
}

/// The batch unit: burned-in weight banks, the address counter and the
/// stream unit it feeds.
#[derive(Debug, Clone)]
pub struct MvuUnit {
    stream: MvuStream,
    weights: FoldedWeightMemory,
    schedule_cycle: usize,
}

impl MvuUnit {
    pub fn new(cfg: LayerConfig, weights: &WeightMatrix, opts: UnitOptions) -> Result<Self, Error> {
        let folded = fold_weights(weights, &cfg)?;
        Self::from_folded(cfg, folded, opts)
    }

    pub fn from_folded(cfg: LayerConfig, weights: FoldedWeightMemory, opts: UnitOptions) -> Result<Self, Error> {
        if weights.pe() != cfg.pe() || weights.simd() != cfg.simd() || weights.depth() != cfg.weight_mem_depth() {
            return Err(Error::LayoutCorrupt);
        }
        Ok(Self { stream: MvuStream::new(cfg, opts)?, weights, schedule_cycle: 0 })
    }

    pub fn config(&self) -> &LayerConfig {
        &self.stream.cfg
    }

    pub fn options(&self) -> UnitOptions {
        self.stream.opts
    }

    pub fn weights(&self) -> &FoldedWeightMemory {
        &self.weights
    }

    pub fn stream(&self) -> &MvuStream {
        &self.stream
    }

    pub fn state(&self) -> FsmState {
        self.stream.state
    }

    pub fn trace(&self) -> &CycleTrace {
        &self.stream.trace
    }

    /// Position of the weight-address counter within the current vector.
    pub fn schedule_cycle(&self) -> usize {
        self.schedule_cycle
    }

    pub fn in_ready(&self, tvalid: bool) -> bool {
        self.stream.in_ready(tvalid)
    }

    pub fn out_peek(&self) -> Option<&OutputWord> {
        self.stream.out_peek()
    }

    /// Returns to the post-reset state; weights are kept.
    pub fn reset(&mut self) {
        self.stream.reset();
        self.schedule_cycle = 0;
    }

    /// One clock: present the current weight address to the stream unit and
    /// advance the counter when it was consumed, wrapping per input vector.
    pub fn cycle(&mut self, input: Option<&Beat>, out_ready: bool) -> Result<StepOutcome, Error> {
        let cfg = self.stream.cfg;
        let slot = schedule(&cfg, self.schedule_cycle)?;
        let weights = &self.weights;
        let outcome = self.stream.step(input, out_ready, &slot, |p| weights.word(p, slot.mem_address))?;
        if outcome.consumed_slot {
            self.schedule_cycle = (self.schedule_cycle + 1) % cfg.cycles_per_vector();
        }
        Ok(outcome)
    }
}
