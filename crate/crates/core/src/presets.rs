//! Reference layer stacks.

use alloc::vec::Vec;

use crate::config::{validate, DatapathKind, FoldConfig, LayerConfig, LayerShape};

/// 2-bit weights and activations throughout.
pub const NID_DATAPATH: DatapathKind = DatapathKind::Standard { input_bits: 2, weight_bits: 2 };

/// `(inputs, outputs, pe, simd)` for the four fully-connected layers of the
/// network-intrusion-detection MLP.
pub const NID_LAYERS: [(usize, usize, usize, usize); 4] =
    [(600, 64, 64, 50), (64, 64, 16, 32), (64, 64, 16, 32), (64, 1, 1, 8)];

pub fn nid_layers() -> Vec<LayerConfig> {
    NID_LAYERS
        .iter()
        .map(|&(i, o, pe, simd)| {
            validate(LayerShape::fully_connected(i, o), FoldConfig::new(pe, simd), NID_DATAPATH)
                .expect("preset layers are valid")
        })
        .collect()
}
