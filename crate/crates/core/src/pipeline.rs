//! Multi-layer dataflow: MVUs chained through width adapters.
//!
//! Layer `i + 1` must be a 1x1 layer over layer `i`'s output pixels, so each
//! producer output row (`O_c` values) is exactly one consumer input vector.
//! Between two layers a [`WidthAdapter`] collects one full producer vector,
//! saturates it into the consumer's activation encoding and replays it as
//! consumer beats while the next vector is being collected.

use alloc::vec::Vec;

use crate::config::{DatapathKind, LayerConfig};
use crate::error::Error;
use crate::lowering::{ImageMatrix, OutputMatrix, WeightMatrix};
use crate::stream::{
    AvailabilityPattern, Beat, CycleTrace, MvuUnit, OutputWord, ReadinessPattern, RunLimits, StreamChannel, UnitOptions,
};

/// Saturates a layer result into the activation encoding of `next`.
pub fn requantize(value: i128, next: DatapathKind) -> i64 {
    match next {
        DatapathKind::Xnor => (value >= 0) as i64,
        _ => {
            let (lo, hi) = next.activation_range();
            value.clamp(lo.into(), hi.into()) as i64
        }
    }
}

/// Regroups a lane sequence into words of `out_lanes` lanes.
pub fn repack<T: Copy>(words: &[Vec<T>], out_lanes: usize) -> Vec<Vec<T>> {
    let flat: Vec<T> = words.iter().flatten().copied().collect();
    flat.chunks(out_lanes.max(1)).map(<[T]>::to_vec).collect()
}

/// Double-buffered converter from `P`-lane producer words to `S`-lane consumer beats.
#[derive(Debug, Clone)]
pub struct WidthAdapter {
    input: StreamChannel,
    output: StreamChannel,
    vector_len: usize,
    target: DatapathKind,
    collect: Vec<i64>,
    emit: Vec<Beat>,
    emit_pos: usize,
}

impl WidthAdapter {
    pub fn new(producer: &LayerConfig, consumer: &LayerConfig) -> Self {
        let target = consumer.datapath();
        Self {
            input: StreamChannel { lanes: producer.pe(), element_bits: producer.accumulator_bits() },
            output: StreamChannel { lanes: consumer.simd(), element_bits: target.input_bits() },
            vector_len: producer.shape().ofm_channels,
            target,
            collect: Vec::with_capacity(producer.shape().ofm_channels),
            emit: Vec::new(),
            emit_pos: 0,
        }
    }

    pub fn in_lanes(&self) -> usize {
        self.input.lanes
    }

    pub fn out_lanes(&self) -> usize {
        self.output.lanes
    }

    pub fn input_channel(&self) -> StreamChannel {
        self.input
    }

    pub fn output_channel(&self) -> StreamChannel {
        self.output
    }

    /// TREADY toward the producer; depends on registered state only.
    pub fn in_ready(&self) -> bool {
        self.collect.len() < self.vector_len
    }

    pub fn out_peek(&self) -> Option<&Beat> {
        self.emit.get(self.emit_pos)
    }

    pub fn reset(&mut self) {
        self.collect.clear();
        self.emit.clear();
        self.emit_pos = 0;
    }

    pub fn commit(&mut self, input: Option<&OutputWord>, output_taken: bool) -> Result<(), Error> {
        if output_taken {
            if self.out_peek().is_none() {
                return Err(Error::Internal("adapter output taken while empty"));
            }
            self.emit_pos += 1;
            if self.emit_pos == self.emit.len() {
                self.emit.clear();
                self.emit_pos = 0;
            }
        }
        if let Some(word) = input {
            if self.collect.len() + word.lanes().len() > self.vector_len {
                return Err(Error::Internal("adapter overrun"));
            }
            self.collect.extend(word.lanes().iter().map(|&v| requantize(v, self.target)));
        }
        if self.collect.len() == self.vector_len && self.emit.is_empty() {
            self.emit = self.collect.chunks_exact(self.output.lanes).map(Beat::from).collect();
            self.collect.clear();
        }
        Ok(())
    }
}

/// A chain of MVUs.
#[derive(Debug, Clone)]
pub struct Pipeline {
    units: Vec<MvuUnit>,
    adapters: Vec<WidthAdapter>,
}

/// Chains `configs`, checking that each layer consumes its predecessor's output.
pub fn compose(configs: &[LayerConfig], weights: &[WeightMatrix], opts: UnitOptions) -> Result<Pipeline, Error> {
    if configs.is_empty() {
        return Err(Error::InvalidOption("a pipeline needs at least one layer"));
    }
    if configs.len() != weights.len() {
        return Err(Error::ShapeMismatch {
            what: "weight matrices per layer",
            expected: configs.len(),
            actual: weights.len(),
        });
    }
    for (index, pair) in configs.windows(2).enumerate() {
        let (prod, cons) = (pair[0].shape(), pair[1].shape());
        let reason = if cons.kernel_dim != 1 {
            Some("consumer kernel_dim must be 1")
        } else if cons.ifm_dim != prod.ofm_dim {
            Some("consumer ifm_dim differs from producer ofm_dim")
        } else if cons.ifm_channels != prod.ofm_channels {
            Some("consumer ifm_channels differs from producer ofm_channels")
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(Error::IncompatibleLayers { index, reason });
        }
    }
    let units =
        configs.iter().zip(weights).map(|(cfg, w)| MvuUnit::new(*cfg, w, opts)).collect::<Result<Vec<_>, _>>()?;
    let adapters = configs.windows(2).map(|p| WidthAdapter::new(&p[0], &p[1])).collect();
    Ok(Pipeline { units, adapters })
}

/// Outcome of a pipeline run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineRun {
    /// One `O_d^2 x O_c` matrix per completed inference.
    pub outputs: Vec<OutputMatrix>,
    pub layer_traces: Vec<CycleTrace>,
    /// First source beat accepted to last sink transfer, inclusive.
    pub end_to_end_cycles: Option<u64>,
    /// Cycle in which each inference's last output word left the pipeline.
    pub completion_cycles: Vec<u64>,
    pub total_cycles: u64,
    pub complete: bool,
}

impl PipelineRun {
    /// Mean distance between consecutive inference completions as `(cycles, inferences)`.
    pub fn steady_state_interval(&self) -> Option<(u64, u64)> {
        let c = &self.completion_cycles;
        match (c.first(), c.last()) {
            (Some(a), Some(b)) if c.len() >= 2 => Some((b - a, c.len() as u64 - 1)),
            _ => None,
        }
    }
}

impl Pipeline {
    pub fn units(&self) -> &[MvuUnit] {
        &self.units
    }

    pub fn adapters(&self) -> &[WidthAdapter] {
        &self.adapters
    }

    pub fn configs(&self) -> impl Iterator<Item = &LayerConfig> {
        self.units.iter().map(MvuUnit::config)
    }

    /// Largest per-vector compute time over all layers, in cycles per inference.
    pub fn bottleneck_cycles(&self) -> usize {
        self.configs().map(|c| c.cycles_per_vector() * c.shape().output_pixels()).max().unwrap_or(0)
    }

    pub fn reset(&mut self) {
        self.units.iter_mut().for_each(MvuUnit::reset);
        self.adapters.iter_mut().for_each(WidthAdapter::reset);
    }

    /// Streams every inference in `inputs` through all layers.
    pub fn run<A, R>(
        &mut self,
        inputs: &[ImageMatrix],
        mut source: A,
        mut sink: R,
        limits: RunLimits,
    ) -> Result<PipelineRun, Error>
    where
        A: AvailabilityPattern,
        R: ReadinessPattern,
    {
        let first = *self.units[0].config();
        let last = *self.units[self.units.len() - 1].config();
        let mut beats = Vec::new();
        for image in inputs {
            if image.rows() != first.shape().synapses() || image.cols() != first.shape().output_pixels() {
                return Err(Error::ShapeMismatch {
                    what: "pipeline input image",
                    expected: first.shape().synapses() * first.shape().output_pixels(),
                    actual: image.rows() * image.cols(),
                });
            }
            if let Some(&bad) = image.data().iter().find(|&&a| !first.datapath().activation_fits(a)) {
                return Err(Error::ValueOutOfRange { what: "activation", value: bad.into() });
            }
            beats.extend(image.data().chunks_exact(first.simd()).map(Beat::from));
        }

        let words_per_row = last.neuron_fold();
        let rows_per_inference = last.shape().output_pixels();
        let ofm = last.shape().ofm_channels;
        let expected_words = inputs.len() * rows_per_inference * words_per_row;

        let n = self.units.len();
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut completion_cycles = Vec::with_capacity(inputs.len());
        let mut rows: Vec<Vec<i128>> = Vec::new();
        let mut row: Vec<i128> = Vec::with_capacity(ofm);
        let (mut words, mut next_beat, mut presenting) = (0usize, 0usize, false);
        let (mut first_in, mut last_out) = (None, None);
        let (mut idle, mut t) = (0u64, 0u64);

        while words < expected_words && t < limits.max_cycles && idle < limits.idle_limit {
            if !presenting && next_beat < beats.len() && source.active(t) {
                presenting = true;
            }
            let sink_ready = sink.active(t);
            let links: Vec<Option<Beat>> = self.adapters.iter().map(|a| a.out_peek().cloned()).collect();
            let link_ready: Vec<bool> = self.adapters.iter().map(WidthAdapter::in_ready).collect();

            let mut outcomes = Vec::with_capacity(n);
            for (i, unit) in self.units.iter_mut().enumerate() {
                let input = if i == 0 { presenting.then(|| &beats[next_beat]) } else { links[i - 1].as_ref() };
                let out_ready = if i + 1 == n { sink_ready } else { link_ready[i] };
                outcomes.push(unit.cycle(input, out_ready)?);
            }
            for (i, adapter) in self.adapters.iter_mut().enumerate() {
                adapter.commit(outcomes[i].output.as_ref(), outcomes[i + 1].input_taken)?;
            }

            let mut progressed = outcomes.iter().any(|o| o.input_taken || o.consumed_slot || o.record.fifo_push);
            if outcomes[0].input_taken {
                first_in.get_or_insert(t);
                presenting = false;
                next_beat += 1;
            }
            if let Some(word) = outcomes[n - 1].output.take() {
                progressed = true;
                last_out = Some(t);
                row.extend_from_slice(word.lanes());
                words += 1;
                if words % words_per_row == 0 {
                    rows.push(core::mem::take(&mut row));
                    if rows.len() == rows_per_inference {
                        outputs.push(OutputMatrix::from_rows(ofm, &rows)?);
                        completion_cycles.push(t);
                        rows.clear();
                    }
                }
            }
            progressed |= outcomes[..n - 1].iter().any(|o| o.output.is_some());
            idle = if progressed { 0 } else { idle + 1 };
            t += 1;
        }

        Ok(PipelineRun {
            outputs,
            layer_traces: self.units.iter().map(|u| u.trace().clone()).collect(),
            end_to_end_cycles: match (first_in, last_out) {
                (Some(a), Some(b)) => Some(b - a + 1),
                _ => None,
            },
            completion_cycles,
            total_cycles: t,
            complete: words == expected_words,
        })
    }
}

/// Runs `inputs.len()` inferences through `p` from its current state.
pub fn run_pipeline<A, R>(
    p: &mut Pipeline,
    inputs: &[ImageMatrix],
    source: A,
    sink: R,
    limits: RunLimits,
) -> Result<PipelineRun, Error>
where
    A: AvailabilityPattern,
    R: ReadinessPattern,
{
    p.run(inputs, source, sink, limits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate, FoldConfig, LayerShape};

    const STD: DatapathKind = DatapathKind::Standard { input_bits: 4, weight_bits: 4 };

    fn fc(i: usize, o: usize, pe: usize, simd: usize) -> LayerConfig {
        validate(LayerShape::fully_connected(i, o), FoldConfig::new(pe, simd), STD).unwrap()
    }

    #[test]
    fn repack_roundtrip() {
        let words: Vec<Vec<i32>> = (0..6).map(|w| (0..4).map(|l| w * 4 + l).collect()).collect();
        let beats = repack(&words, 8);
        assert_eq!(beats.len(), 3);
        assert_eq!(repack(&beats, 4), words);
    }

    #[test]
    fn requantize_matches_oracle_copy() {
        for v in -300i128..300 {
            for kind in [DatapathKind::Xnor, DatapathKind::BinaryWeight { input_bits: 3 }, STD] {
                assert_eq!(requantize(v, kind), crate::oracle::reference_requantize(v, kind));
            }
        }
    }

    #[test]
    fn compose_rejects_mismatch() {
        let w = |c: &LayerConfig| WeightMatrix::from_fn(c.shape().ofm_channels, c.shape().synapses(), |_, _| 1);
        let a = fc(4, 6, 2, 2);
        let b = fc(5, 2, 1, 1);
        let err = compose(&[a, b], &[w(&a), w(&b)], UnitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::IncompatibleLayers { index: 0, .. }));
        let conv = validate(LayerShape::conv(2, 6, 3, 2), FoldConfig::new(1, 1), STD).unwrap();
        assert!(compose(&[a, conv], &[w(&a), w(&conv)], UnitOptions::default()).is_err());
        assert!(compose(&[], &[], UnitOptions::default()).is_err());
    }

    #[test]
    fn adapter_double_buffers() {
        let prod = fc(4, 4, 2, 2);
        let cons = fc(4, 2, 1, 4);
        let mut a = WidthAdapter::new(&prod, &cons);
        assert!(a.in_ready());
        a.commit(Some(&OutputWord::new(alloc::vec![1, 2])), false).unwrap();
        assert!(a.out_peek().is_none());
        a.commit(Some(&OutputWord::new(alloc::vec![3, 100])), false).unwrap();
        assert_eq!(a.out_peek().unwrap().lanes(), &[1, 2, 3, 7]);
        assert!(a.in_ready());
        a.commit(Some(&OutputWord::new(alloc::vec![0, 0])), false).unwrap();
        a.commit(Some(&OutputWord::new(alloc::vec![-1, -1])), false).unwrap();
        assert!(!a.in_ready());
        a.commit(None, true).unwrap();
        assert_eq!(a.out_peek().unwrap().lanes(), &[0, 0, -1, -1]);
        assert!(a.in_ready());
    }
}
