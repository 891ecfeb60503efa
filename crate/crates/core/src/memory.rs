//! PE-banked weight memory, the compute schedule and the input buffer.
//!
//! Bank `p` holds weight rows `p, p + P, p + 2P, ...`. Within the bank,
//! address `t * SF + s` stores columns `s*S .. s*S + S` of row `t * P + p`,
//! so one vector is processed tile-major by an increment-only counter.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::LayerConfig;
use crate::error::Error;
use crate::lowering::WeightMatrix;

/// Burned-in weights, `P` banks of `D_mem` words of `S` elements each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldedWeightMemory {
    pe: usize,
    simd: usize,
    depth: usize,
    weight_bits: u32,
    banks: Vec<Vec<i64>>,
}

impl FoldedWeightMemory {
    pub fn pe(&self) -> usize {
        self.pe
    }

    pub fn simd(&self) -> usize {
        self.simd
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// The `S` weights stored in bank `pe` at `address`.
    pub fn word(&self, pe: usize, address: usize) -> &[i64] {
        &self.banks[pe][address * self.simd..(address + 1) * self.simd]
    }

    /// Raw bank contents, `depth * simd` elements each.
    pub fn banks(&self) -> &[Vec<i64>] {
        &self.banks
    }

    /// Total storage, `P * D_mem * S * B_w`.
    pub fn stored_bits(&self) -> usize {
        self.banks.iter().map(Vec::len).sum::<usize>() * self.weight_bits as usize
    }
}

/// Lays out `w` in the per-PE banks of `cfg`.
pub fn fold_weights(w: &WeightMatrix, cfg: &LayerConfig) -> Result<FoldedWeightMemory, Error> {
    let shape = cfg.shape();
    if w.rows() != shape.ofm_channels {
        return Err(Error::ShapeMismatch { what: "weight rows", expected: shape.ofm_channels, actual: w.rows() });
    }
    if w.cols() != shape.synapses() {
        return Err(Error::ShapeMismatch { what: "weight columns", expected: shape.synapses(), actual: w.cols() });
    }
    w.check_precision(cfg.datapath())?;
    let (pe, simd, sf, nf) = (cfg.pe(), cfg.simd(), cfg.synapse_fold(), cfg.neuron_fold());
    let banks = (0..pe)
        .map(|p| {
            let mut bank = Vec::with_capacity(sf * nf * simd);
            for t in 0..nf {
                bank.extend_from_slice(w.row(t * pe + p));
            }
            bank
        })
        .collect();
    Ok(FoldedWeightMemory { pe, simd, depth: cfg.weight_mem_depth(), weight_bits: cfg.datapath().weight_bits(), banks })
}

/// Reassembles the weight matrix; exact inverse of [`fold_weights`].
pub fn unfold_weights(m: &FoldedWeightMemory, cfg: &LayerConfig) -> Result<WeightMatrix, Error> {
    let (pe, simd, sf, nf) = (cfg.pe(), cfg.simd(), cfg.synapse_fold(), cfg.neuron_fold());
    let consistent = m.pe == pe
        && m.simd == simd
        && m.depth == cfg.weight_mem_depth()
        && m.banks.len() == pe
        && m.banks.iter().all(|b| b.len() == m.depth * simd);
    if !consistent {
        return Err(Error::LayoutCorrupt);
    }
    let cols = sf * simd;
    Ok(WeightMatrix::from_fn(nf * pe, cols, |row, col| {
        let (t, p) = (row / pe, row % pe);
        m.banks[p][t * cols + col]
    }))
}

/// One step of the per-vector compute schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleSlot {
    pub cycle: usize,
    /// Output tile `t` (neuron-fold index).
    pub tile: usize,
    /// Synapse-fold phase `s`.
    pub phase: usize,
    pub mem_address: usize,
    pub buffer_index: usize,
    pub first_of_tile: bool,
    pub last_of_tile: bool,
    pub last_of_vector: bool,
}

/// The `cycle`-th compute step of one input vector.
pub fn schedule(cfg: &LayerConfig, cycle: usize) -> Result<ScheduleSlot, Error> {
    let (sf, limit) = (cfg.synapse_fold(), cfg.cycles_per_vector());
    if cycle >= limit {
        return Err(Error::OutOfRange { cycle, limit });
    }
    let (tile, phase) = (cycle / sf, cycle % sf);
    Ok(ScheduleSlot {
        cycle,
        tile,
        phase,
        mem_address: cycle,
        buffer_index: phase,
        first_of_tile: phase == 0,
        last_of_tile: phase == sf - 1,
        last_of_vector: cycle == limit - 1,
    })
}

/// Holds the `SF` beats of the current input vector for re-use by later tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputBuffer {
    depth: usize,
    simd: usize,
    words: Vec<i64>,
    write_ptr: usize,
    read_ptr: usize,
}

impl InputBuffer {
    pub fn new(depth: usize, simd: usize) -> Self {
        Self { depth, simd, words: vec![0; depth * simd], write_ptr: 0, read_ptr: 0 }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// All `SF` beats of the current vector are present.
    pub fn is_full(&self) -> bool {
        self.write_ptr == self.depth
    }

    pub fn write_ptr(&self) -> usize {
        self.write_ptr
    }

    pub fn read_ptr(&self) -> usize {
        self.read_ptr
    }

    pub fn write(&mut self, lanes: &[i64]) -> Result<(), Error> {
        if self.is_full() {
            return Err(Error::Internal("write to a full input buffer"));
        }
        if lanes.len() != self.simd {
            return Err(Error::ShapeMismatch { what: "beat lanes", expected: self.simd, actual: lanes.len() });
        }
        let at = self.write_ptr * self.simd;
        self.words[at..at + self.simd].copy_from_slice(lanes);
        self.write_ptr += 1;
        Ok(())
    }

    pub fn read(&mut self, index: usize) -> Result<&[i64], Error> {
        if index >= self.write_ptr {
            return Err(Error::Internal("read of an unwritten input buffer word"));
        }
        self.read_ptr = index;
        Ok(&self.words[index * self.simd..(index + 1) * self.simd])
    }

    /// Releases the buffer for the next vector.
    pub fn clear(&mut self) {
        self.write_ptr = 0;
        self.read_ptr = 0;
    }
}
