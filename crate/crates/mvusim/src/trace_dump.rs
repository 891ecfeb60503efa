//! Line-delimited per-cycle traces.
//!
//! The first line is a header object; each following line is one cycle.

use std::io::Write;

use mvusim_core::stream::{run_vectors, CycleRecord, RunLimits};
use mvusim_core::{LayerConfig, MvuUnit, UnitOptions, WeightMatrix};
use serde::Serialize;

use crate::config_file::LayerParams;
use crate::error::{CliError, Result};
use crate::report::FlowOptions;

pub const TRACE_FIELDS: [&str; 14] = [
    "cycle",
    "state",
    "in_tvalid",
    "in_tready",
    "out_tvalid",
    "out_tready",
    "buf_full",
    "comp_done",
    "output_ready",
    "tile",
    "phase",
    "weight_address",
    "fifo_len",
    "fifo_push",
];

#[derive(Serialize)]
struct Header<'a> {
    format: &'static str,
    layer: LayerParams,
    datapath: &'static str,
    input_bits: u32,
    weight_bits: u32,
    vectors: usize,
    fifo_depth: usize,
    pipeline_depth: usize,
    flow: FlowOptions,
    fields: &'a [&'a str],
}

#[derive(Serialize)]
struct Line {
    cycle: u64,
    state: &'static str,
    in_tvalid: bool,
    in_tready: bool,
    out_tvalid: bool,
    out_tready: bool,
    buf_full: bool,
    comp_done: bool,
    /// The output side could advance (the FSM's TREADY guard).
    output_ready: bool,
    tile: Option<usize>,
    phase: Option<usize>,
    weight_address: Option<usize>,
    fifo_len: usize,
    fifo_push: bool,
}

impl From<&CycleRecord> for Line {
    fn from(r: &CycleRecord) -> Self {
        Self {
            cycle: r.cycle,
            state: r.state.name(),
            in_tvalid: r.input.tvalid,
            in_tready: r.input.tready,
            out_tvalid: r.output.tvalid,
            out_tready: r.output.tready,
            buf_full: r.guards.inp_buf_full,
            comp_done: r.guards.comp_done,
            output_ready: r.guards.tready,
            tile: r.slot.map(|s| s.0),
            phase: r.slot.map(|s| s.1),
            weight_address: r.weight_address,
            fifo_len: r.fifo_len,
            fifo_push: r.fifo_push,
        }
    }
}

fn json_line<T: Serialize>(out: &mut impl Write, v: &T) -> Result<()> {
    let mut line = serde_json::to_vec(v).map_err(|e| CliError::Internal(e.to_string()))?;
    line.push(b'\n');
    out.write_all(&line).map_err(|e| CliError::io("<trace>", e))
}

/// Streams `vectors` through a fresh unit, writing every cycle to `out`.
/// With no vectors only the header is written. A run that stops making
/// progress ends after the idle limit. Returns the cycle count.
pub fn dump_trace(
    cfg: &LayerConfig,
    weights: &WeightMatrix,
    vectors: &[Vec<i64>],
    unit_opts: UnitOptions,
    flow: FlowOptions,
    out: &mut impl Write,
) -> Result<u64> {
    flow.check_allow_stall()?;
    let header = Header {
        format: "mvusim-trace/1",
        layer: LayerParams::of(cfg),
        datapath: cfg.datapath().name(),
        input_bits: cfg.datapath().input_bits(),
        weight_bits: cfg.datapath().weight_bits(),
        vectors: vectors.len(),
        fifo_depth: unit_opts.fifo_depth,
        pipeline_depth: unit_opts.pipeline_depth,
        flow,
        fields: &TRACE_FIELDS,
    };
    json_line(out, &header)?;
    let mut unit = MvuUnit::new(*cfg, weights, unit_opts)?;
    if vectors.is_empty() {
        return Ok(0);
    }
    let refs: Vec<&[i64]> = vectors.iter().map(Vec::as_slice).collect();
    let (source, sink) = flow.patterns();
    let mut failure = None;
    let run = run_vectors(&mut unit, &refs, source, sink, RunLimits::default(), |r| {
        if failure.is_none() {
            failure = json_line(out, &Line::from(r)).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(run.trace.total_cycles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvusim_core::{validate, DatapathKind, FoldConfig, LayerShape};
    use serde_json::Value;

    fn unfolded() -> (LayerConfig, WeightMatrix) {
        let kind = DatapathKind::Standard { input_bits: 4, weight_bits: 4 };
        let cfg = validate(LayerShape::fully_connected(4, 2), FoldConfig::new(2, 4), kind).unwrap();
        (cfg, WeightMatrix::from_fn(2, 4, |r, c| (r + c) as i64 % 3 - 1))
    }

    fn lines(buf: &[u8]) -> Vec<Value> {
        std::str::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    }

    #[test]
    fn empty_input_is_header_only() {
        let (cfg, w) = unfolded();
        let mut buf = vec![];
        assert_eq!(dump_trace(&cfg, &w, &[], UnitOptions::default(), FlowOptions::default(), &mut buf).unwrap(), 0);
        let l = lines(&buf);
        assert_eq!(l.len(), 1);
        assert_eq!(l[0]["format"], "mvusim-trace/1");
        assert_eq!(l[0]["fields"].as_array().unwrap().len(), TRACE_FIELDS.len());
    }

    #[test]
    fn unfolded_trace_shows_one_vector_per_cycle() {
        let (cfg, w) = unfolded();
        let vectors = vec![vec![1, 2, 3, 4], vec![-1, 0, 1, 2], vec![7, -8, 0, 1]];
        let mut buf = vec![];
        dump_trace(&cfg, &w, &vectors, UnitOptions::default(), FlowOptions::default(), &mut buf).unwrap();
        let l = lines(&buf);
        let taken: Vec<u64> = l[1..]
            .iter()
            .filter(|r| r["in_tvalid"] == true && r["in_tready"] == true)
            .map(|r| r["cycle"].as_u64().unwrap())
            .collect();
        assert_eq!(taken, [0, 1, 2]);
        let out: Vec<u64> = l[1..]
            .iter()
            .filter(|r| r["out_tvalid"] == true && r["out_tready"] == true)
            .map(|r| r["cycle"].as_u64().unwrap())
            .collect();
        assert_eq!(out, [5, 6, 7]);
        assert!(l[1..].iter().all(|r| r.as_object().unwrap().len() == TRACE_FIELDS.len()));
    }
}
