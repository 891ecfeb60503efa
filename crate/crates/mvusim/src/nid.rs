//! Layer-stack reports: isolated per-layer latency plus pipelined throughput.

use std::fmt::Write as _;

use mvusim_core::pipeline::{compose, run_pipeline};
use mvusim_core::stream::{run_vectors, Always, RunLimits};
use mvusim_core::{ImageMatrix, LayerConfig, MvuUnit, UnitOptions, WeightMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::report::{random_vectors, random_weights, to_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackOptions {
    pub unit: UnitOptions,
    pub seed: u64,
    /// Inferences streamed back to back for the throughput figure.
    pub inferences: usize,
}

impl Default for StackOptions {
    fn default() -> Self {
        Self { unit: UnitOptions::default(), seed: 0, inferences: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StackLayerRow {
    pub layer: usize,
    pub ifm_channels: usize,
    pub ifm_dim: usize,
    pub ofm_channels: usize,
    pub kernel_dim: usize,
    pub weight_bits: u32,
    pub input_bits: u32,
    pub pe: usize,
    pub simd: usize,
    /// `SF * NF * O_d^2`: compute cycles per inference.
    pub fold_cycles: usize,
    /// Single-inference latency of the layer on its own.
    pub exec_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub inferences: usize,
    /// First beat in to last word out for the first inference.
    pub first_inference_cycles: Option<u64>,
    /// Mean distance between consecutive completions.
    pub interval_cycles: Option<f64>,
    pub min_interval: Option<u64>,
    pub max_interval: Option<u64>,
    /// Slowest layer's compute cycles per inference.
    pub bottleneck_cycles: usize,
    pub total_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackReport {
    pub seed: u64,
    pub fifo_depth: usize,
    pub pipeline_depth: usize,
    pub layers: Vec<StackLayerRow>,
    pub pipeline: ThroughputRow,
}

impl StackReport {
    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    /// Column-per-layer table.
    pub fn to_table(&self) -> String {
        type Cell = fn(&StackLayerRow) -> String;
        let lines: [(&str, Cell); 11] = [
            ("Layer", |r| r.layer.to_string()),
            ("IFM channels", |r| r.ifm_channels.to_string()),
            ("IFM dimensions", |r| r.ifm_dim.to_string()),
            ("OFM channels", |r| r.ofm_channels.to_string()),
            ("Kernel dimensions", |r| r.kernel_dim.to_string()),
            ("Weight precision", |r| r.weight_bits.to_string()),
            ("Input precision", |r| r.input_bits.to_string()),
            ("PE", |r| r.pe.to_string()),
            ("SIMD", |r| r.simd.to_string()),
            ("SF x NF x OFM pixels", |r| r.fold_cycles.to_string()),
            ("Exec. cycles", |r| r.exec_cycles.to_string()),
        ];
        let mut s = String::new();
        for (name, cell) in lines {
            let _ = write!(s, "{name:<22}");
            for r in &self.layers {
                let _ = write!(s, "{:>7}", cell(r));
            }
            s.push('\n');
        }
        let p = &self.pipeline;
        let fmt_opt = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(
            s,
            "\npipeline: {} inferences, interval {} cycles (min {}, max {}), bottleneck {} cycles, first inference {} cycles",
            p.inferences,
            p.interval_cycles.map_or("-".to_string(), |v| format!("{v:.2}")),
            fmt_opt(p.min_interval),
            fmt_opt(p.max_interval),
            p.bottleneck_cycles,
            fmt_opt(p.first_inference_cycles),
        );
        let _ =
            writeln!(s, "fifo depth {}, pipeline depth {}, seed {}", self.fifo_depth, self.pipeline_depth, self.seed);
        s
    }
}

/// Measures each layer alone on one inference, then the composed pipeline on
/// `opts.inferences` back-to-back inferences. Random weights are drawn from
/// `opts.seed` unless `weights` is given.
pub fn run_stack(
    configs: &[LayerConfig],
    weights: Option<Vec<WeightMatrix>>,
    opts: &StackOptions,
) -> Result<StackReport> {
    if configs.is_empty() {
        return Err(CliError::Invalid("no layers".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let weights = match weights {
        Some(w) if w.len() != configs.len() => {
            return Err(CliError::Invalid(format!("{} weight files for {} layers", w.len(), configs.len())))
        }
        Some(w) => w,
        None => configs.iter().map(|c| random_weights(c, &mut rng)).collect(),
    };

    let mut layers = Vec::with_capacity(configs.len());
    for (i, (cfg, w)) in configs.iter().zip(&weights).enumerate() {
        let vectors = random_vectors(cfg, cfg.shape().output_pixels(), &mut rng);
        let refs: Vec<&[i64]> = vectors.iter().map(Vec::as_slice).collect();
        let mut unit = MvuUnit::new(*cfg, w, opts.unit)?;
        let run = run_vectors(&mut unit, &refs, Always, Always, RunLimits::default(), |_| {})?;
        if !run.complete {
            return Err(CliError::Internal(format!("layer {i} did not complete")));
        }
        let s = cfg.shape();
        layers.push(StackLayerRow {
            layer: i,
            ifm_channels: s.ifm_channels,
            ifm_dim: s.ifm_dim,
            ofm_channels: s.ofm_channels,
            kernel_dim: s.kernel_dim,
            weight_bits: cfg.datapath().weight_bits(),
            input_bits: cfg.datapath().input_bits(),
            pe: cfg.pe(),
            simd: cfg.simd(),
            fold_cycles: cfg.cycles_per_vector() * s.output_pixels(),
            exec_cycles: run.trace.latency().unwrap_or(0),
        });
    }

    let first = configs[0];
    let inputs: Vec<ImageMatrix> = (0..opts.inferences)
        .map(|_| {
            let cols = random_vectors(&first, first.shape().output_pixels(), &mut rng);
            ImageMatrix::from_columns(first.shape().synapses(), &cols)
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut p = compose(configs, &weights, opts.unit)?;
    let run = run_pipeline(&mut p, &inputs, Always, Always, RunLimits::default())?;
    if !run.complete {
        return Err(CliError::Internal("pipeline did not complete".into()));
    }
    let gaps: Vec<u64> = run.completion_cycles.windows(2).map(|w| w[1] - w[0]).collect();
    let pipeline = ThroughputRow {
        inferences: opts.inferences,
        first_inference_cycles: run.layer_traces[0]
            .first_input_cycle
            .zip(run.completion_cycles.first().copied())
            .map(|(a, b)| b - a + 1),
        interval_cycles: run.steady_state_interval().map(|(c, k)| c as f64 / k as f64),
        min_interval: gaps.iter().min().copied(),
        max_interval: gaps.iter().max().copied(),
        bottleneck_cycles: p.bottleneck_cycles(),
        total_cycles: run.total_cycles,
    };
    Ok(StackReport {
        seed: opts.seed,
        fifo_depth: opts.unit.fifo_depth,
        pipeline_depth: opts.unit.pipeline_depth,
        layers,
        pipeline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvusim_core::presets::nid_layers;

    #[test]
    fn nid_table() {
        let opts = StackOptions { inferences: 20, ..StackOptions::default() };
        let r = run_stack(&nid_layers(), None, &opts).unwrap();
        let exec: Vec<u64> = r.layers.iter().map(|l| l.exec_cycles).collect();
        assert_eq!(exec, [17, 13, 13, 13]);
        assert_eq!(r.pipeline.interval_cycles, Some(12.0));
        assert_eq!(r.pipeline.bottleneck_cycles, 12);
        let table = r.to_table();
        assert!(table.lines().any(|l| l.starts_with("Exec. cycles") && l.ends_with("17     13     13     13")));
    }

    #[test]
    fn weight_count_must_match() {
        let w = vec![WeightMatrix::from_fn(64, 600, |_, _| 0)];
        assert!(run_stack(&nid_layers(), Some(w), &StackOptions::default()).is_err());
    }
}
