//! One-parameter design-space sweeps.

use mvusim_core::UnitOptions;
use rayon::prelude::*;
use serde::Serialize;

use crate::config_file::{SweepSpec, SweptParameter};
use crate::error::Result;
use crate::report::{measure_layer, rows_to_csv, to_json, FlowOptions, MeasureOptions, ReportRow};

/// Simulated cycles per point before the sweep switches to a few vectors
/// and extrapolates to the whole image.
pub const DEFAULT_CYCLE_BUDGET: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub unit: UnitOptions,
    pub flow: FlowOptions,
    pub seed: u64,
    /// Per-point simulation budget in compute cycles; `None` always runs whole images.
    pub cycle_budget: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            unit: UnitOptions::default(),
            flow: FlowOptions::default(),
            seed: 0,
            cycle_budget: Some(DEFAULT_CYCLE_BUDGET),
        }
    }
}

/// The report document, also serialised as JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub parameter: SweptParameter,
    pub values: Vec<usize>,
    pub seed: u64,
    pub fifo_depth: usize,
    pub pipeline_depth: usize,
    pub flow: FlowOptions,
    pub rows: Vec<ReportRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// Seed of point `index`, derived from the sweep seed.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64).rotate_left(17)
}

/// Simulates every sweep point in parallel. Rows come back ordered by sweep
/// value, then by datapath order in the spec.
pub fn run_sweep(spec: &SweepSpec, opts: &SweepOptions) -> Result<SweepReport> {
    let points = spec.points()?;
    let mut rows: Vec<(usize, ReportRow)> = points
        .par_iter()
        .enumerate()
        .map(|(i, (value, cfg))| {
            let max_vectors = opts.cycle_budget.map(|b| (b / cfg.cycles_per_vector()).max(3));
            let m = MeasureOptions { unit: opts.unit, flow: opts.flow, max_vectors };
            measure_layer(cfg, point_seed(opts.seed, i), &m).map(|r| (*value, r))
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|(v, _)| *v);
    Ok(SweepReport {
        parameter: spec.parameter,
        values: spec.values.clone(),
        seed: opts.seed,
        fifo_depth: opts.unit.fifo_depth,
        pipeline_depth: opts.unit.pipeline_depth,
        flow: opts.flow,
        rows: rows.into_iter().map(|(_, r)| r).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_file::{parse_config_str, ConfigFile};

    fn spec(star: &str, values: &str) -> SweepSpec {
        let mut fields = vec![
            ("ifm_channels", "8"),
            ("ifm_dim", "4"),
            ("ofm_channels", "8"),
            ("kernel_dim", "2"),
            ("pe", "2"),
            ("simd", "4"),
        ];
        for f in &mut fields {
            if f.0 == star {
                f.1 = "\"*\"";
            }
        }
        let body: String = fields.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let src = format!("[sweep]\n{body}values = {values}\ndatapaths = [\"xnor\", \"standard\"]\n");
        match parse_config_str(&src, "t").unwrap() {
            ConfigFile::Sweep(s) => s,
            _ => unreachable!(),
        }
    }

    #[test]
    fn rows_ordered_by_value() {
        let s = spec("ofm_channels", "[8, 2, 4]");
        let r = run_sweep(&s, &SweepOptions::default()).unwrap();
        let order: Vec<(usize, &str)> = r.rows.iter().map(|r| (r.ofm_channels, r.datapath)).collect();
        assert_eq!(order, [(2, "xnor"), (2, "standard"), (4, "xnor"), (4, "standard"), (8, "xnor"), (8, "standard")]);
        let cycles: Vec<f64> = r.rows.iter().step_by(2).map(|r| r.cycles_per_vector).collect();
        assert_eq!(cycles, [8.0, 16.0, 32.0]);
    }

    #[test]
    fn deterministic_reports() {
        let s = spec("simd", "[2, 4, 8]");
        let a = run_sweep(&s, &SweepOptions { seed: 42, ..SweepOptions::default() }).unwrap();
        let b = run_sweep(&s, &SweepOptions { seed: 42, ..SweepOptions::default() }).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(a.to_json().unwrap().contains("\"seed\": 42"));
        assert!(a.rows.iter().all(|r| r.whole_image));
    }
}
