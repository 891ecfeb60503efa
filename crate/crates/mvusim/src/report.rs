//! Per-layer measurements and their CSV / JSON rendering.

use std::fs;
use std::path::Path;

use mvusim_core::oracle::reference_mvp;
use mvusim_core::stream::{run_vectors, FlowPattern, LayerRun, RunLimits};
use mvusim_core::{LayerConfig, MvuUnit, UnitOptions, WeightMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Source and sink behaviour for a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowOptions {
    /// Per-cycle probability that the source offers a beat.
    pub source_prob: f64,
    /// Per-cycle probability that the sink accepts a word.
    pub sink_prob: f64,
    pub pattern_seed: u64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { source_prob: 1.0, sink_prob: 1.0, pattern_seed: 0 }
    }
}

impl FlowOptions {
    /// Measurements need both sides to make progress: probabilities in `(0, 1]`.
    pub fn check(&self) -> Result<()> {
        self.check_range(false)
    }

    /// Traces may also stall a side completely: probabilities in `[0, 1]`.
    pub fn check_allow_stall(&self) -> Result<()> {
        self.check_range(true)
    }

    fn check_range(&self, allow_zero: bool) -> Result<()> {
        for (name, p) in [("source probability", self.source_prob), ("sink probability", self.sink_prob)] {
            let low_ok = if allow_zero { p >= 0.0 } else { p > 0.0 };
            if !(low_ok && p <= 1.0) {
                let lo = if allow_zero { "[0" } else { "(0" };
                return Err(CliError::Invalid(format!("{name} {p} outside {lo}, 1]")));
            }
        }
        Ok(())
    }

    pub fn unconstrained(&self) -> bool {
        self.source_prob >= 1.0 && self.sink_prob >= 1.0
    }

    /// `(source, sink)` patterns; independent streams of one seed.
    pub fn patterns(&self) -> (Bernoulli, Bernoulli) {
        (Bernoulli::new(self.source_prob, self.pattern_seed, 0), Bernoulli::new(self.sink_prob, self.pattern_seed, 1))
    }
}

/// Seeded per-cycle coin flip.
#[derive(Debug, Clone)]
pub struct Bernoulli {
    p: f64,
    rng: ChaCha8Rng,
}

impl Bernoulli {
    pub fn new(p: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { p, rng }
    }
}

impl FlowPattern for Bernoulli {
    fn active(&mut self, _: u64) -> bool {
        self.p >= 1.0 || self.rng.gen_bool(self.p)
    }
}

/// One simulated layer configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub ifm_channels: usize,
    pub ifm_dim: usize,
    pub ofm_channels: usize,
    pub ofm_dim: usize,
    pub kernel_dim: usize,
    pub pe: usize,
    pub simd: usize,
    pub datapath: &'static str,
    pub input_bits: u32,
    pub weight_bits: u32,
    pub synapse_fold: usize,
    pub neuron_fold: usize,
    pub weight_mem_depth: usize,
    pub input_buffer_depth: usize,
    pub weight_word_bits: usize,
    pub input_buffer_bits: usize,
    pub weight_mem_bits: usize,
    pub accumulator_bits: u32,
    /// Steady-state cycles between input vectors, measured.
    pub cycles_per_vector: f64,
    /// Exec cycles for one whole image: measured when `whole_image`,
    /// otherwise `cycles_per_vector * O_d^2 + d`.
    pub cycles_per_inference: f64,
    /// First accepted beat to last output word, inclusive, for the simulated vectors.
    pub latency_cycles: u64,
    pub vectors_simulated: usize,
    pub whole_image: bool,
    pub compute_cycles: u64,
    pub stall_cycles_backpressure: u64,
    pub stall_cycles_starvation: u64,
    pub seed: u64,
}

impl ReportRow {
    /// Re-derives the static columns from the raw parameters.
    pub fn check(&self) -> Result<()> {
        let synapses = self.kernel_dim * self.kernel_dim * self.ifm_channels;
        let sf = synapses / self.simd;
        let nf = self.ofm_channels / self.pe;
        let expect = [
            ("ofm_dim", self.ofm_dim, self.ifm_dim + 1 - self.kernel_dim),
            ("synapse_fold", self.synapse_fold, sf),
            ("neuron_fold", self.neuron_fold, nf),
            ("weight_mem_depth", self.weight_mem_depth, synapses * self.ofm_channels / (self.pe * self.simd)),
            ("input_buffer_depth", self.input_buffer_depth, synapses / self.simd),
            ("weight_word_bits", self.weight_word_bits, self.simd * self.weight_bits as usize),
            ("input_buffer_bits", self.input_buffer_bits, sf * self.simd * self.input_bits as usize),
            ("weight_mem_bits", self.weight_mem_bits, self.pe * sf * nf * self.simd * self.weight_bits as usize),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(CliError::Internal(format!("report column {name} is {got}, formula gives {want}")));
            }
        }
        if !synapses.is_multiple_of(self.simd) || !self.ofm_channels.is_multiple_of(self.pe) {
            return Err(CliError::Internal("report row violates the folding divisibility rules".into()));
        }
        Ok(())
    }
}

/// Knobs for [`measure_layer`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeasureOptions {
    pub unit: UnitOptions,
    pub flow: FlowOptions,
    /// Cap on simulated input vectors; `None` runs the whole image.
    pub max_vectors: Option<usize>,
}

pub fn random_weights(cfg: &LayerConfig, rng: &mut ChaCha8Rng) -> WeightMatrix {
    let (lo, hi) = cfg.datapath().weight_range();
    let s = cfg.shape();
    WeightMatrix::from_fn(s.ofm_channels, s.synapses(), |_, _| rng.gen_range(lo..=hi))
}

pub fn random_vectors(cfg: &LayerConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<i64>> {
    let (lo, hi) = cfg.datapath().activation_range();
    let len = cfg.shape().synapses();
    (0..n).map(|_| (0..len).map(|_| rng.gen_range(lo..=hi)).collect()).collect()
}

/// Simulates `cfg` on random weights and inputs drawn from `seed`, checks
/// every result against the reference product, and reports the counters.
pub fn measure_layer(cfg: &LayerConfig, seed: u64, opts: &MeasureOptions) -> Result<ReportRow> {
    opts.flow.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = random_weights(cfg, &mut rng);
    let od2 = cfg.shape().output_pixels();
    let n = opts.max_vectors.map_or(od2, |m| m.clamp(1, od2));
    let vectors = random_vectors(cfg, n, &mut rng);
    Ok(simulate_layer(cfg, &weights, &vectors, seed, opts)?.1)
}

/// Streams `vectors` through a fresh unit, checks every result against the
/// reference product and reports the counters. `seed` is only recorded.
pub fn simulate_layer(
    cfg: &LayerConfig,
    weights: &WeightMatrix,
    vectors: &[Vec<i64>],
    seed: u64,
    opts: &MeasureOptions,
) -> Result<(LayerRun, ReportRow)> {
    opts.flow.check()?;
    let n = vectors.len();
    if n == 0 {
        return Err(CliError::Invalid("no input vectors".into()));
    }
    let refs: Vec<&[i64]> = vectors.iter().map(Vec::as_slice).collect();
    let mut unit = MvuUnit::new(*cfg, weights, opts.unit)?;
    let (source, sink) = opts.flow.patterns();
    let run = run_vectors(&mut unit, &refs, source, sink, RunLimits::default(), |_| {})?;
    if !run.complete {
        return Err(CliError::Internal(format!("simulation stalled after {} cycles", run.trace.total_cycles)));
    }
    for (i, (row, v)) in run.rows.iter().zip(vectors).enumerate() {
        if *row != reference_mvp(weights, v, cfg.datapath())? {
            return Err(CliError::Internal(format!("vector {i}: simulated result differs from the reference")));
        }
    }

    let tr = &run.trace;
    let od2 = cfg.shape().output_pixels();
    let latency = tr.latency().unwrap_or(0);
    let cycles_per_vector =
        tr.steady_state_interval().map_or(tr.compute_cycles as f64 / n as f64, |(c, k)| c as f64 / k as f64);
    let whole = n == od2;
    let cycles_per_inference =
        if whole { latency as f64 } else { cycles_per_vector * od2 as f64 + opts.unit.pipeline_depth as f64 };
    let s = cfg.shape();
    let row = ReportRow {
        ifm_channels: s.ifm_channels,
        ifm_dim: s.ifm_dim,
        ofm_channels: s.ofm_channels,
        ofm_dim: s.ofm_dim,
        kernel_dim: s.kernel_dim,
        pe: cfg.pe(),
        simd: cfg.simd(),
        datapath: cfg.datapath().name(),
        input_bits: cfg.datapath().input_bits(),
        weight_bits: cfg.datapath().weight_bits(),
        synapse_fold: cfg.synapse_fold(),
        neuron_fold: cfg.neuron_fold(),
        weight_mem_depth: cfg.weight_mem_depth(),
        input_buffer_depth: cfg.input_buffer_depth(),
        weight_word_bits: cfg.weight_word_bits(),
        input_buffer_bits: cfg.input_buffer_bits(),
        weight_mem_bits: cfg.weight_mem_bits(),
        accumulator_bits: cfg.accumulator_bits(),
        cycles_per_vector,
        cycles_per_inference,
        latency_cycles: latency,
        vectors_simulated: n,
        whole_image: whole,
        compute_cycles: tr.compute_cycles,
        stall_cycles_backpressure: tr.stall_cycles_backpressure,
        stall_cycles_starvation: tr.stall_cycles_starvation,
        seed,
    };
    row.check()?;
    Ok((run, row))
}

/// CSV with a header line; every row is re-checked first.
pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        r.check()?;
        w.serialize(r).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
