use core::fmt;

/// A violated layer-configuration invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigError {
    /// A shape, fold or precision field is zero.
    ZeroDimension(&'static str),
    /// The kernel is larger than the input feature map.
    KernelLargerThanInput { kernel_dim: usize, ifm_dim: usize },
    /// `ofm_dim` is not `ifm_dim - kernel_dim + 1`.
    ShapeMismatch { expected_ofm_dim: usize, ofm_dim: usize },
    /// `pe` does not divide the number of output channels.
    NonDivisiblePe { pe: usize, ofm_channels: usize },
    /// `simd` does not divide `K_d^2 * I_c`.
    NonDivisibleSimd { simd: usize, synapses: usize },
    /// A precision outside the range its datapath kind allows.
    InvalidPrecision { what: &'static str, bits: u32 },
}

impl ConfigError {
    /// Name of the violated rule.
    pub fn invariant(&self) -> &'static str {
        match self {
            Self::ZeroDimension(_) => "ZeroDimension",
            Self::KernelLargerThanInput { .. } => "KernelLargerThanInput",
            Self::ShapeMismatch { .. } => "ShapeMismatch",
            Self::NonDivisiblePe { .. } => "NonDivisiblePe",
            Self::NonDivisibleSimd { .. } => "NonDivisibleSimd",
            Self::InvalidPrecision { .. } => "InvalidPrecision",
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::ZeroDimension(field) => write!(f, "{field} must be at least 1"),
            Self::KernelLargerThanInput { kernel_dim, ifm_dim } => {
                write!(f, "kernel_dim {kernel_dim} exceeds ifm_dim {ifm_dim}")
            }
            Self::ShapeMismatch { expected_ofm_dim, ofm_dim } => {
                write!(f, "ofm_dim {ofm_dim} does not match ifm_dim - kernel_dim + 1 = {expected_ofm_dim}")
            }
            Self::NonDivisiblePe { pe, ofm_channels } => {
                write!(f, "pe {pe} does not divide ofm_channels {ofm_channels}")
            }
            Self::NonDivisibleSimd { simd, synapses } => {
                write!(f, "simd {simd} does not divide kernel_dim^2 * ifm_channels = {synapses}")
            }
            Self::InvalidPrecision { what, bits } => write!(f, "invalid {what} of {bits} bits"),
        }
    }
}

impl core::error::Error for ConfigError {}

/// Errors raised by the lowering, memory, simulation and pipeline layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    Config(ConfigError),
    /// Operand dimensions do not agree.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    /// A value does not fit the precision declared for it.
    ValueOutOfRange {
        what: &'static str,
        value: i128,
    },
    /// A folded weight memory does not have the geometry of its layer.
    LayoutCorrupt,
    /// A schedule cycle outside `0..SF*NF`.
    OutOfRange {
        cycle: usize,
        limit: usize,
    },
    /// An accumulator left its declared width.
    AccumulatorOverflow {
        value: i128,
        width_bits: u32,
    },
    /// The output FIFO was pushed while full.
    FifoOverflow,
    /// Adjacent pipeline layers cannot be chained.
    IncompatibleLayers {
        index: usize,
        reason: &'static str,
    },
    /// A simulator option is out of range.
    InvalidOption(&'static str),
    /// An internal consistency check failed.
    Internal(&'static str),
}

impl Error {
    /// Whether this error reports a broken simulator invariant rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Self::AccumulatorOverflow { .. } | Self::FifoOverflow | Self::Internal(_))
    }
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "invalid configuration: {e}"),
            Self::ShapeMismatch { what, expected, actual } => {
                write!(f, "shape mismatch in {what}: expected {expected}, got {actual}")
            }
            Self::ValueOutOfRange { what, value } => {
                write!(f, "{what} value {value} does not fit its precision")
            }
            Self::LayoutCorrupt => f.write_str("folded weight memory does not match the layer"),
            Self::OutOfRange { cycle, limit } => {
                write!(f, "schedule cycle {cycle} out of range 0..{limit}")
            }
            Self::AccumulatorOverflow { value, width_bits } => {
                write!(f, "accumulator value {value} overflows {width_bits} bits")
            }
            Self::FifoOverflow => f.write_str("output FIFO overflow"),
            Self::IncompatibleLayers { index, reason } => {
                write!(f, "layers {index} and {} are incompatible: {reason}", index + 1)
            }
            Self::InvalidOption(what) => write!(f, "invalid option: {what}"),
            Self::Internal(what) => write!(f, "internal invariant violated: {what}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Self::Config(e) => Some(e),
            _ => None,
        }
    }
}
