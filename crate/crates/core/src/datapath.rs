//! SIMD lanes, the per-PE adder tree and the accumulator.

use alloc::vec::Vec;

use crate::config::{DatapathKind, LayerConfig};
use crate::error::Error;

/// `2 * popcount(XNOR(a, w)) - S`: the dot product of two `{-1, +1}` vectors
/// given as bits.
///
/// The popcount runs over the whole packed SIMD word rather than per lane;
/// the two are arithmetically identical.
pub fn xnor_lane_sum(activations: &[i64], weights: &[i64]) -> i64 {
    debug_assert_eq!(activations.len(), weights.len());
    let lanes = activations.len();
    let mut matches = 0u32;
    for (a, w) in activations.chunks(64).zip(weights.chunks(64)) {
        let pack = |bits: &[i64]| bits.iter().enumerate().fold(0u64, |word, (i, &b)| word | (((b & 1) as u64) << i));
        let width = a.len() as u32;
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        matches += (!(pack(a) ^ pack(w)) & mask).count_ones();
    }
    2 * i64::from(matches) - lanes as i64
}

/// Multiplexer lane: weight bit 1 passes the activation, 0 negates it.
pub fn binary_weight_lane(activation: i64, weight_bit: i64) -> i64 {
    if weight_bit & 1 == 1 {
        activation
    } else {
        -activation
    }
}

/// Multiplier lane for arbitrary-precision operands.
pub fn standard_lane(activation: i64, weight: i64) -> i64 {
    activation * weight
}

/// Balanced binary-tree reduction, zero-padded to the next power of two.
pub fn adder_tree(partials: &[i64]) -> i128 {
    let width = partials.len().next_power_of_two();
    let mut level: Vec<i128> = partials.iter().map(|&p| i128::from(p)).collect();
    level.resize(width, 0);
    while level.len() > 1 {
        level = level.chunks_exact(2).map(|pair| pair[0] + pair[1]).collect();
    }
    level.first().copied().unwrap_or(0)
}

/// Sum of one SIMD word: the kind-specific lane op followed by the reduction.
pub fn simd_partial(kind: DatapathKind, activations: &[i64], weights: &[i64]) -> i128 {
    match kind {
        DatapathKind::Xnor => i128::from(xnor_lane_sum(activations, weights)),
        DatapathKind::BinaryWeight { .. } => {
            let lanes: Vec<i64> = activations.iter().zip(weights).map(|(&a, &w)| binary_weight_lane(a, w)).collect();
            adder_tree(&lanes)
        }
        DatapathKind::Standard { .. } => {
            let lanes: Vec<i64> = activations.iter().zip(weights).map(|(&a, &w)| standard_lane(a, w)).collect();
            adder_tree(&lanes)
        }
    }
}

/// Per-PE running sum with a fixed hardware width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accumulator {
    pub value: i128,
    pub width_bits: u32,
}

impl Accumulator {
    pub fn new(width_bits: u32) -> Self {
        Self { value: 0, width_bits }
    }

    pub fn for_layer(cfg: &LayerConfig) -> Self {
        Self::new(cfg.accumulator_bits())
    }

    pub fn fits(&self, value: i128) -> bool {
        if self.width_bits >= 128 {
            return true;
        }
        let half = 1i128 << (self.width_bits - 1);
        -half <= value && value < half
    }
}

/// One clock of a processing element.
///
/// The first cycle of a tile loads the partial sum, later cycles add to it.
pub fn pe_cycle(
    acc: Accumulator,
    activations: &[i64],
    weights: &[i64],
    kind: DatapathKind,
    first_of_tile: bool,
) -> Result<Accumulator, Error> {
    let partial = simd_partial(kind, activations, weights);
    let value = if first_of_tile { Some(partial) } else { acc.value.checked_add(partial) };
    match value {
        Some(value) if acc.fits(value) => Ok(Accumulator { value, ..acc }),
        other => Err(Error::AccumulatorOverflow { value: other.unwrap_or(i128::MAX), width_bits: acc.width_bits }),
    }
}
