//! Static parameters of one MVU layer.
//!
//! Convolutions use stride 1 and no padding, so `O_d = I_d - K_d + 1`.
//! Fully connected layers are encoded as `K_d = I_d = O_d = 1`.

use crate::error::ConfigError;

/// Largest supported activation or weight precision.
pub const MAX_PRECISION_BITS: u32 = 32;

/// Square-kernel, square-feature-map layer geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerShape {
    pub kernel_dim: usize,
    pub ifm_channels: usize,
    pub ifm_dim: usize,
    pub ofm_channels: usize,
    pub ofm_dim: usize,
}

impl LayerShape {
    /// A stride-1 convolution; `ofm_dim` is derived.
    pub fn conv(kernel_dim: usize, ifm_channels: usize, ifm_dim: usize, ofm_channels: usize) -> Self {
        Self { kernel_dim, ifm_channels, ifm_dim, ofm_channels, ofm_dim: (ifm_dim + 1).saturating_sub(kernel_dim) }
    }

    pub fn fully_connected(inputs: usize, outputs: usize) -> Self {
        Self::conv(1, inputs, 1, outputs)
    }

    /// Length of one input vector, `K_d^2 * I_c` (rows of the image matrix).
    pub fn synapses(&self) -> usize {
        self.kernel_dim * self.kernel_dim * self.ifm_channels
    }

    /// Number of input vectors per image, `O_d^2` (columns of the image matrix).
    pub fn output_pixels(&self) -> usize {
        self.ofm_dim * self.ofm_dim
    }
}

/// Degree of parallelism: processing elements and SIMD lanes per PE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FoldConfig {
    pub pe: usize,
    pub simd: usize,
}

impl FoldConfig {
    pub fn new(pe: usize, simd: usize) -> Self {
        Self { pe, simd }
    }
}

/// The SIMD lane implementation and its operand precisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatapathKind {
    /// 1-bit activations and weights, bit `b` encoding `2b - 1`.
    Xnor,
    /// 1-bit weights encoding `{-1, +1}`, signed activations.
    BinaryWeight { input_bits: u32 },
    /// Signed two's complement activations and weights.
    Standard { input_bits: u32, weight_bits: u32 },
}

impl DatapathKind {
    pub fn input_bits(&self) -> u32 {
        match *self {
            Self::Xnor => 1,
            Self::BinaryWeight { input_bits } | Self::Standard { input_bits, .. } => input_bits,
        }
    }

    /// `B_w`.
    pub fn weight_bits(&self) -> u32 {
        match *self {
            Self::Xnor | Self::BinaryWeight { .. } => 1,
            Self::Standard { weight_bits, .. } => weight_bits,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Xnor => "xnor",
            Self::BinaryWeight { .. } => "binary_weight",
            Self::Standard { .. } => "standard",
        }
    }

    /// Inclusive range of legal activation encodings.
    pub fn activation_range(&self) -> (i64, i64) {
        match *self {
            Self::Xnor => (0, 1),
            Self::BinaryWeight { input_bits } | Self::Standard { input_bits, .. } => signed_range(input_bits),
        }
    }

    /// Inclusive range of legal weight encodings.
    pub fn weight_range(&self) -> (i64, i64) {
        match *self {
            Self::Xnor | Self::BinaryWeight { .. } => (0, 1),
            Self::Standard { weight_bits, .. } => signed_range(weight_bits),
        }
    }

    pub fn activation_fits(&self, value: i64) -> bool {
        let (lo, hi) = self.activation_range();
        (lo..=hi).contains(&value)
    }

    pub fn weight_fits(&self, value: i64) -> bool {
        let (lo, hi) = self.weight_range();
        (lo..=hi).contains(&value)
    }

    /// Accumulator width that cannot overflow for a dot product of `synapses` terms.
    pub fn accumulator_bits(&self, synapses: usize) -> u32 {
        let log = ceil_log2(synapses);
        match *self {
            Self::Xnor => log + 2,
            Self::BinaryWeight { input_bits } => input_bits + log + 1,
            Self::Standard { input_bits, weight_bits } => input_bits + weight_bits + log + 1,
        }
    }

    /// Rejects unsupported bit widths.
    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |what, bits| Err(ConfigError::InvalidPrecision { what, bits });
        match *self {
            Self::Xnor => Ok(()),
            Self::BinaryWeight { input_bits } => {
                if !(1..=MAX_PRECISION_BITS).contains(&input_bits) {
                    return bad("input precision", input_bits);
                }
                Ok(())
            }
            Self::Standard { input_bits, weight_bits } => {
                if !(1..=MAX_PRECISION_BITS).contains(&input_bits) {
                    return bad("input precision", input_bits);
                }
                if !(2..=MAX_PRECISION_BITS).contains(&weight_bits) {
                    return bad("weight precision", weight_bits);
                }
                Ok(())
            }
        }
    }
}

/// Two's complement range of a `bits`-wide signed integer.
pub fn signed_range(bits: u32) -> (i64, i64) {
    let half = 1i64 << (bits - 1);
    (-half, half - 1)
}

pub(crate) fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// A validated layer: shape, folding and datapath kind.
///
/// Only [`validate`] constructs it, so every accessor may rely on the
/// divisibility invariants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerConfig {
    shape: LayerShape,
    fold: FoldConfig,
    datapath: DatapathKind,
}

/// Checks every layer invariant and returns the validated configuration.
pub fn validate(shape: LayerShape, fold: FoldConfig, datapath: DatapathKind) -> Result<LayerConfig, ConfigError> {
    let fields = [
        ("kernel_dim", shape.kernel_dim),
        ("ifm_channels", shape.ifm_channels),
        ("ifm_dim", shape.ifm_dim),
        ("ofm_channels", shape.ofm_channels),
        ("ofm_dim", shape.ofm_dim),
        ("pe", fold.pe),
        ("simd", fold.simd),
    ];
    if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
        return Err(ConfigError::ZeroDimension(name));
    }
    if shape.kernel_dim > shape.ifm_dim {
        return Err(ConfigError::KernelLargerThanInput { kernel_dim: shape.kernel_dim, ifm_dim: shape.ifm_dim });
    }
    let expected_ofm_dim = shape.ifm_dim - shape.kernel_dim + 1;
    if shape.ofm_dim != expected_ofm_dim {
        return Err(ConfigError::ShapeMismatch { expected_ofm_dim, ofm_dim: shape.ofm_dim });
    }
    if !shape.ofm_channels.is_multiple_of(fold.pe) {
        return Err(ConfigError::NonDivisiblePe { pe: fold.pe, ofm_channels: shape.ofm_channels });
    }
    let synapses = shape
        .kernel_dim
        .checked_mul(shape.kernel_dim)
        .and_then(|k| k.checked_mul(shape.ifm_channels))
        .ok_or(ConfigError::ZeroDimension("kernel_dim^2 * ifm_channels (overflow)"))?;
    if synapses % fold.simd != 0 {
        return Err(ConfigError::NonDivisibleSimd { simd: fold.simd, synapses });
    }
    datapath.check()?;
    Ok(LayerConfig { shape, fold, datapath })
}

impl LayerConfig {
    pub fn shape(&self) -> &LayerShape {
        &self.shape
    }

    pub fn fold(&self) -> FoldConfig {
        self.fold
    }

    pub fn datapath(&self) -> DatapathKind {
        self.datapath
    }

    pub fn pe(&self) -> usize {
        self.fold.pe
    }

    pub fn simd(&self) -> usize {
        self.fold.simd
    }

    /// `SF = K_d^2 * I_c / S`: compute cycles per output tile.
    pub fn synapse_fold(&self) -> usize {
        self.shape.synapses() / self.fold.simd
    }

    /// `NF = O_c / P`: output tiles per input vector.
    pub fn neuron_fold(&self) -> usize {
        self.shape.ofm_channels / self.fold.pe
    }

    /// Words per PE weight bank, `K_d^2 * I_c * O_c / (S * P)`.
    pub fn weight_mem_depth(&self) -> usize {
        self.shape.synapses() * self.shape.ofm_channels / (self.fold.simd * self.fold.pe)
    }

    /// Beats buffered per input vector, `K_d^2 * I_c / S`.
    pub fn input_buffer_depth(&self) -> usize {
        self.shape.synapses() / self.fold.simd
    }

    /// Width of one weight-memory word, `S * B_w`.
    pub fn weight_word_bits(&self) -> usize {
        self.fold.simd * self.datapath.weight_bits() as usize
    }

    /// Width of one input beat, `S * input_bits`.
    pub fn input_beat_bits(&self) -> usize {
        self.fold.simd * self.datapath.input_bits() as usize
    }

    /// Total input-buffer storage in bits.
    pub fn input_buffer_bits(&self) -> usize {
        self.input_buffer_depth() * self.input_beat_bits()
    }

    /// Total weight storage across all banks in bits.
    pub fn weight_mem_bits(&self) -> usize {
        self.fold.pe * self.weight_mem_depth() * self.weight_word_bits()
    }

    /// Compute cycles per input vector, `SF * NF`.
    pub fn cycles_per_vector(&self) -> usize {
        self.synapse_fold() * self.neuron_fold()
    }

    pub fn accumulator_bits(&self) -> u32 {
        self.datapath.accumulator_bits(self.shape.synapses())
    }

    pub fn is_fully_parallel(&self) -> bool {
        self.fold.pe == self.shape.ofm_channels && self.fold.simd == self.shape.synapses()
    }
}
