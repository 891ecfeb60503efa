use alloc::vec::Vec;

use super::channel::Beat;
use super::trace::{CycleRecord, CycleTrace};
use super::unit::{MvuUnit, UnitOptions};
use crate::config::LayerConfig;
use crate::error::Error;
use crate::lowering::{ImageMatrix, OutputMatrix, WeightMatrix};

/// Per-cycle enable of a testbench source or sink.
pub trait FlowPattern {
    fn active(&mut self, cycle: u64) -> bool;
}

impl<F: FnMut(u64) -> bool> FlowPattern for F {
    fn active(&mut self, cycle: u64) -> bool {
        self(cycle)
    }
}

/// Enabled on every cycle.
#[derive(Debug, Clone, Copy, Default)]
pub struct Always;

impl FlowPattern for Always {
    fn active(&mut self, _: u64) -> bool {
        true
    }
}

/// Never enabled.
#[derive(Debug, Clone, Copy, Default)]
pub struct Never;

impl FlowPattern for Never {
    fn active(&mut self, _: u64) -> bool {
        false
    }
}

/// When the source may raise TVALID. Once raised, it stays up until the beat is taken.
pub trait AvailabilityPattern: FlowPattern {}
impl<T: FlowPattern> AvailabilityPattern for T {}

/// When the sink raises TREADY.
pub trait ReadinessPattern: FlowPattern {}
impl<T: FlowPattern> ReadinessPattern for T {}

/// Stopping rules for a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLimits {
    /// Hard upper bound on simulated cycles.
    pub max_cycles: u64,
    /// Give up after this many consecutive cycles without any transfer or compute.
    pub idle_limit: u64,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self { max_cycles: u64::MAX, idle_limit: 10_000 }
    }
}

/// Result of driving one unit with a stimulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRun {
    /// Completed output rows (one per input vector, `O_c` values each).
    pub rows: Vec<Vec<i128>>,
    pub trace: CycleTrace,
    /// Every input vector produced its full output row.
    pub complete: bool,
}

impl LayerRun {
    pub fn output_matrix(&self, ofm_channels: usize) -> Result<OutputMatrix, Error> {
        OutputMatrix::from_rows(ofm_channels, &self.rows)
    }
}

/// Streams `vectors` through `unit` until every output row has left the unit
/// or a limit is hit. `observe` sees every cycle.
pub fn run_vectors<A, R>(
    unit: &mut MvuUnit,
    vectors: &[&[i64]],
    mut availability: A,
    mut readiness: R,
    limits: RunLimits,
    mut observe: impl FnMut(&CycleRecord),
) -> Result<LayerRun, Error>
where
    A: AvailabilityPattern,
    R: ReadinessPattern,
{
    let cfg = *unit.config();
    let kind = cfg.datapath();
    let synapses = cfg.shape().synapses();
    let mut beats = Vec::with_capacity(vectors.len() * cfg.synapse_fold());
    for v in vectors {
        if v.len() != synapses {
            return Err(Error::ShapeMismatch { what: "input vector length", expected: synapses, actual: v.len() });
        }
        if let Some(&bad) = v.iter().find(|&&a| !kind.activation_fits(a)) {
            return Err(Error::ValueOutOfRange { what: "activation", value: bad.into() });
        }
        beats.extend(v.chunks_exact(cfg.simd()).map(Beat::from));
    }

    let tiles_per_vector = cfg.neuron_fold();
    let expected_words = vectors.len() * tiles_per_vector;
    let mut rows = Vec::with_capacity(vectors.len());
    let mut current: Vec<i128> = Vec::with_capacity(cfg.shape().ofm_channels);
    let mut words = 0usize;
    let mut next_beat = 0usize;
    let mut presenting = false;
    let mut idle = 0u64;
    let mut t = 0u64;

    while words < expected_words && t < limits.max_cycles && idle < limits.idle_limit {
        if !presenting && next_beat < beats.len() && availability.active(t) {
            presenting = true;
        }
        let ready = readiness.active(t);
        let input = presenting.then(|| &beats[next_beat]);
        let out = unit.cycle(input, ready)?;
        observe(&out.record);

        if out.input_taken {
            presenting = false;
            next_beat += 1;
        }
        let progressed = out.input_taken || out.output.is_some() || out.consumed_slot || out.record.fifo_push;
        if let Some(word) = out.output {
            current.extend_from_slice(word.lanes());
            words += 1;
            if words.is_multiple_of(tiles_per_vector) {
                rows.push(core::mem::take(&mut current));
            }
        }
        idle = if progressed { 0 } else { idle + 1 };
        t += 1;
    }

    Ok(LayerRun { rows, trace: unit.trace().clone(), complete: words == expected_words })
}

/// Builds a fresh unit for `cfg` and streams every column of `image` through it.
pub fn run_layer<A, R>(
    cfg: LayerConfig,
    weights: &WeightMatrix,
    image: &ImageMatrix,
    availability: A,
    readiness: R,
    opts: UnitOptions,
) -> Result<LayerRun, Error>
where
    A: AvailabilityPattern,
    R: ReadinessPattern,
{
    let shape = cfg.shape();
    if image.rows() != shape.synapses() {
        return Err(Error::ShapeMismatch { what: "image rows", expected: shape.synapses(), actual: image.rows() });
    }
    if image.cols() != shape.output_pixels() {
        return Err(Error::ShapeMismatch {
            what: "image columns",
            expected: shape.output_pixels(),
            actual: image.cols(),
        });
    }
    let mut unit = MvuUnit::new(cfg, weights, opts)?;
    let columns: Vec<&[i64]> = image.columns().collect();
    run_vectors(&mut unit, &columns, availability, readiness, RunLimits::default(), |_| {})
}
