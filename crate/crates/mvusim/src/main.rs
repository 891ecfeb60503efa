use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvusim::matrix_io::{read_matrix, write_matrix, MatrixFile};
use mvusim::nid::{run_stack, StackOptions};
use mvusim::report::{
    random_vectors, random_weights, simulate_layer, to_json, write_file, FlowOptions, MeasureOptions,
};
use mvusim::sweep::{run_sweep, SweepOptions, DEFAULT_CYCLE_BUDGET};
use mvusim::trace_dump::dump_trace;
use mvusim::{parse_config, CliError, ConfigFile, Result};
use mvusim_core::oracle::{reference_mvp, reference_requantize};
use mvusim_core::pipeline::{compose, run_pipeline};
use mvusim_core::presets::nid_layers;
use mvusim_core::stream::RunLimits;
use mvusim_core::{ImageMatrix, LayerConfig, OutputMatrix, UnitOptions, WeightMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Cycle-accurate matrix-vector unit simulator.
#[derive(Parser)]
#[command(name = "mvusim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file and print the derived hardware parameters.
    Validate { config: PathBuf },
    /// Simulate a layer or pipeline config on given or random data.
    Run(RunArgs),
    /// Sweep one parameter and report every point.
    Sweep(SweepArgs),
    /// Per-layer latency and pipelined throughput of a layer stack.
    Nid(NidArgs),
    /// Write a per-cycle trace of one layer as JSON lines.
    Trace(TraceArgs),
}

#[derive(Args, Clone, Copy)]
struct UnitArgs {
    /// Output FIFO capacity in words.
    #[arg(long, default_value_t = 4)]
    fifo_depth: usize,
    /// Cycles from a tile's last compute step to the output port.
    #[arg(long, default_value_t = 5)]
    pipeline_depth: usize,
    /// Seed for random weights and inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl UnitArgs {
    fn unit(&self) -> UnitOptions {
        UnitOptions { fifo_depth: self.fifo_depth, pipeline_depth: self.pipeline_depth }
    }
}

#[derive(Args, Clone, Copy)]
struct FlowArgs {
    /// Probability that the source offers a beat in a given cycle.
    #[arg(long, default_value_t = 1.0)]
    source_prob: f64,
    /// Probability that the sink accepts in a given cycle.
    #[arg(long, default_value_t = 1.0)]
    sink_prob: f64,
    /// Seed for the source and sink patterns.
    #[arg(long, default_value_t = 0)]
    pattern_seed: u64,
}

impl FlowArgs {
    fn flow(&self) -> FlowOptions {
        FlowOptions { source_prob: self.source_prob, sink_prob: self.sink_prob, pattern_seed: self.pattern_seed }
    }
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Weight matrix file; repeat once per layer for pipelines.
    #[arg(long)]
    weights: Vec<PathBuf>,
    /// Input image matrix (one column per input vector).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Random input vectors to simulate when no input is given (default: whole image).
    #[arg(long)]
    max_vectors: Option<usize>,
    /// Output matrix file (`.txt` for text, binary otherwise).
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON report file.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    unit: UnitArgs,
    #[command(flatten)]
    flow: FlowArgs,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// CSV report file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON report file.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-point compute-cycle budget before extrapolating from a few vectors.
    #[arg(long, default_value_t = DEFAULT_CYCLE_BUDGET, conflicts_with = "whole_image")]
    cycle_budget: usize,
    /// Always simulate whole images.
    #[arg(long)]
    whole_image: bool,
    #[command(flatten)]
    unit: UnitArgs,
    #[command(flatten)]
    flow: FlowArgs,
}

#[derive(Args)]
struct NidArgs {
    /// Pipeline config; the built-in four-layer stack if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight matrix file per layer.
    #[arg(long)]
    weights: Vec<PathBuf>,
    /// Back-to-back inferences for the throughput figure.
    #[arg(long, default_value_t = 1000)]
    inferences: usize,
    /// JSON report file.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    unit: UnitArgs,
}

#[derive(Args)]
struct TraceArgs {
    config: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Input image matrix; may have zero columns.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Random input vectors when no input is given.
    #[arg(long, default_value_t = 1)]
    vectors: usize,
    /// Trace file; stdout if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    unit: UnitArgs,
    #[command(flatten)]
    flow: FlowArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Run(a) => run(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Nid(a) => nid(&a),
        Command::Trace(a) => trace(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe on stdout (e.g. `| head`) is not a failure
        Err(CliError::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// `println!` that reports a failed write instead of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(io::stdout(), $($arg)*).map_err(|e| CliError::io("<stdout>", e))?
    };
}

fn emit(text: &str) -> Result<()> {
    io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
}

fn describe(cfg: &LayerConfig) -> String {
    let s = cfg.shape();
    format!(
        "I_c={} I_d={} O_c={} O_d={} K={} P={} S={} {} (in {} bits, w {} bits): SF={} NF={} \
         weight memory {}x{} bits, input buffer {}x{} bits, accumulator {} bits, {} cycles/vector",
        s.ifm_channels,
        s.ifm_dim,
        s.ofm_channels,
        s.ofm_dim,
        s.kernel_dim,
        cfg.pe(),
        cfg.simd(),
        cfg.datapath().name(),
        cfg.datapath().input_bits(),
        cfg.datapath().weight_bits(),
        cfg.synapse_fold(),
        cfg.neuron_fold(),
        cfg.weight_mem_depth(),
        cfg.weight_word_bits(),
        cfg.input_buffer_depth(),
        cfg.input_beat_bits(),
        cfg.accumulator_bits(),
        cfg.cycles_per_vector(),
    )
}

fn validate(path: &Path) -> Result<()> {
    match parse_config(path)? {
        ConfigFile::Layer(cfg) => outln!("layer: {}", describe(&cfg)),
        ConfigFile::Sweep(spec) => {
            let points = spec.points()?;
            outln!("sweep over {} with {} points", spec.parameter, points.len());
            for (value, cfg) in points {
                outln!("  {}={value}: {}", spec.parameter, describe(&cfg));
            }
        }
        ConfigFile::Pipeline(layers) => {
            let weights: Vec<WeightMatrix> = layers
                .iter()
                .map(|c| WeightMatrix::from_fn(c.shape().ofm_channels, c.shape().synapses(), |_, _| 0))
                .collect();
            compose(&layers, &weights, UnitOptions::default())?;
            outln!("pipeline with {} layers", layers.len());
            for (i, cfg) in layers.iter().enumerate() {
                outln!("  layer {i}: {}", describe(cfg));
            }
        }
    }
    Ok(())
}

fn load_weights(paths: &[PathBuf]) -> Result<Vec<WeightMatrix>> {
    paths.iter().map(|p| read_matrix(p)?.to_weights()).collect()
}

fn load_image(path: &Path) -> Result<ImageMatrix> {
    read_matrix(path)?.to_image()
}

fn write_output(path: &Path, out: &OutputMatrix, cfg: &LayerConfig) -> Result<()> {
    write_matrix(path, &MatrixFile::from_output(out, cfg.accumulator_bits())?)
}

fn run(a: &RunArgs) -> Result<()> {
    match parse_config(&a.config)? {
        ConfigFile::Layer(cfg) => run_single(a, &cfg),
        ConfigFile::Pipeline(layers) => run_chain(a, &layers),
        ConfigFile::Sweep(_) => {
            Err(CliError::Invalid(format!("{}: sweep configs are run with `sweep`", a.config.display())))
        }
    }
}

fn run_single(a: &RunArgs, cfg: &LayerConfig) -> Result<()> {
    if a.weights.len() > 1 {
        return Err(CliError::Invalid(format!("{} weight files for one layer", a.weights.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.unit.seed);
    let weights = match a.weights.first() {
        Some(p) => read_matrix(p)?.to_weights()?,
        None => random_weights(cfg, &mut rng),
    };
    let vectors: Vec<Vec<i64>> = match &a.input {
        Some(p) => load_image(p)?.columns().map(<[i64]>::to_vec).collect(),
        None => {
            let od2 = cfg.shape().output_pixels();
            random_vectors(cfg, a.max_vectors.map_or(od2, |m| m.clamp(1, od2)), &mut rng)
        }
    };
    let opts = MeasureOptions { unit: a.unit.unit(), flow: a.flow.flow(), max_vectors: None };
    let (run, row) = simulate_layer(cfg, &weights, &vectors, a.unit.seed, &opts)?;
    outln!("layer: {}", describe(cfg));
    outln!(
        "vectors {}, cycles {}, latency {}, cycles/vector {}, cycles/inference {}, stalls {} backpressure / {} starvation",
        row.vectors_simulated,
        run.trace.total_cycles,
        row.latency_cycles,
        row.cycles_per_vector,
        row.cycles_per_inference,
        row.stall_cycles_backpressure,
        row.stall_cycles_starvation,
    );
    if let Some(p) = &a.output {
        write_output(p, &run.output_matrix(cfg.shape().ofm_channels)?, cfg)?;
    }
    if let Some(p) = &a.report {
        write_file(p, &to_json(&row)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ChainReport {
    layers: usize,
    inferences: usize,
    end_to_end_cycles: Option<u64>,
    completion_cycles: Vec<u64>,
    total_cycles: u64,
    bottleneck_cycles: usize,
    seed: u64,
}

fn reference_chain(layers: &[LayerConfig], weights: &[WeightMatrix], image: &ImageMatrix) -> Result<Vec<Vec<i128>>> {
    let mut rows = Vec::with_capacity(image.cols());
    for x in image.columns() {
        let mut x = x.to_vec();
        let mut y = Vec::new();
        for (i, (cfg, w)) in layers.iter().zip(weights).enumerate() {
            if i > 0 {
                x = y.iter().map(|&v| reference_requantize(v, cfg.datapath())).collect();
            }
            y = reference_mvp(w, &x, cfg.datapath())?;
        }
        rows.push(y);
    }
    Ok(rows)
}

fn run_chain(a: &RunArgs, layers: &[LayerConfig]) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.unit.seed);
    let weights = if a.weights.is_empty() {
        layers.iter().map(|c| random_weights(c, &mut rng)).collect()
    } else if a.weights.len() == layers.len() {
        load_weights(&a.weights)?
    } else {
        return Err(CliError::Invalid(format!("{} weight files for {} layers", a.weights.len(), layers.len())));
    };
    let first = layers[0];
    let image = match &a.input {
        Some(p) => load_image(p)?,
        None => {
            let cols = random_vectors(&first, first.shape().output_pixels(), &mut rng);
            ImageMatrix::from_columns(first.shape().synapses(), &cols)?
        }
    };
    a.flow.flow().check()?;
    let mut p = compose(layers, &weights, a.unit.unit())?;
    let (source, sink) = a.flow.flow().patterns();
    let run = run_pipeline(&mut p, std::slice::from_ref(&image), source, sink, RunLimits::default())?;
    if !run.complete {
        return Err(CliError::Internal(format!("pipeline stalled after {} cycles", run.total_cycles)));
    }
    let out = &run.outputs[0];
    let expected = reference_chain(layers, &weights, &image)?;
    if (0..out.rows()).any(|r| out.row(r) != expected[r].as_slice()) || out.rows() != expected.len() {
        return Err(CliError::Internal("pipeline result differs from the reference".into()));
    }
    let report = ChainReport {
        layers: layers.len(),
        inferences: 1,
        end_to_end_cycles: run.end_to_end_cycles,
        completion_cycles: run.completion_cycles.clone(),
        total_cycles: run.total_cycles,
        bottleneck_cycles: p.bottleneck_cycles(),
        seed: a.unit.seed,
    };
    outln!("pipeline with {} layers", layers.len());
    for (i, cfg) in layers.iter().enumerate() {
        outln!("  layer {i}: {}", describe(cfg));
    }
    outln!(
        "cycles {}, end-to-end latency {}, bottleneck {} cycles/inference",
        report.total_cycles,
        report.end_to_end_cycles.map_or("-".into(), |c| c.to_string()),
        report.bottleneck_cycles,
    );
    if let Some(path) = &a.output {
        write_output(path, out, &layers[layers.len() - 1])?;
    }
    if let Some(path) = &a.report {
        write_file(path, &to_json(&report)?)?;
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let spec = match parse_config(&a.config)? {
        ConfigFile::Sweep(spec) => spec,
        _ => return Err(CliError::Invalid(format!("{}: no [sweep] table", a.config.display()))),
    };
    let opts = SweepOptions {
        unit: a.unit.unit(),
        flow: a.flow.flow(),
        seed: a.unit.seed,
        cycle_budget: (!a.whole_image).then_some(a.cycle_budget),
    };
    let report = run_sweep(&spec, &opts)?;
    if let Some(p) = &a.csv {
        write_file(p, &report.to_csv()?)?;
    }
    if let Some(p) = &a.json {
        write_file(p, &report.to_json()?)?;
    }
    if a.csv.is_none() && a.json.is_none() {
        emit(&report.to_csv()?)?;
    }
    Ok(())
}

fn nid(a: &NidArgs) -> Result<()> {
    let layers = match &a.config {
        None => nid_layers(),
        Some(p) => match parse_config(p)? {
            ConfigFile::Pipeline(layers) => layers,
            ConfigFile::Layer(cfg) => vec![cfg],
            ConfigFile::Sweep(_) => {
                return Err(CliError::Invalid(format!("{}: expected a pipeline config", p.display())))
            }
        },
    };
    let weights = if a.weights.is_empty() { None } else { Some(load_weights(&a.weights)?) };
    let opts = StackOptions { unit: a.unit.unit(), seed: a.unit.seed, inferences: a.inferences };
    let report = run_stack(&layers, weights, &opts)?;
    emit(&report.to_table())?;
    if let Some(p) = &a.json {
        write_file(p, &report.to_json()?)?;
    }
    Ok(())
}

fn trace(a: &TraceArgs) -> Result<()> {
    let cfg = match parse_config(&a.config)? {
        ConfigFile::Layer(cfg) => cfg,
        _ => return Err(CliError::Invalid(format!("{}: expected a [layer] config", a.config.display()))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.unit.seed);
    let weights = match &a.weights {
        Some(p) => read_matrix(p)?.to_weights()?,
        None => random_weights(&cfg, &mut rng),
    };
    let vectors: Vec<Vec<i64>> = match &a.input {
        Some(p) => load_image(p)?.columns().map(<[i64]>::to_vec).collect(),
        None => random_vectors(&cfg, a.vectors, &mut rng),
    };
    let (unit, flow) = (a.unit.unit(), a.flow.flow());
    match &a.output {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(file);
            dump_trace(&cfg, &weights, &vectors, unit, flow, &mut w)?;
            w.flush().map_err(|e| CliError::io(p, e))?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            dump_trace(&cfg, &weights, &vectors, unit, flow, &mut w)?;
            w.flush().map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    Ok(())
}
