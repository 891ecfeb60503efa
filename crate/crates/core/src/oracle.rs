//! Brute-force references.
//!
//! Nothing here calls into `datapath`, `memory` or `stream`; values are
//! decoded to plain integers and summed with checked `i128` arithmetic.

use alloc::vec::Vec;

use crate::config::DatapathKind;
use crate::error::Error;
use crate::lowering::{ConvKernels, Tensor3, WeightMatrix};

fn decode_activation(kind: DatapathKind, a: i64) -> i128 {
    match kind {
        DatapathKind::Xnor => {
            if a == 1 {
                1
            } else {
                -1
            }
        }
        _ => i128::from(a),
    }
}

fn decode_weight(kind: DatapathKind, w: i64) -> i128 {
    match kind {
        DatapathKind::Xnor | DatapathKind::BinaryWeight { .. } => {
            if w == 1 {
                1
            } else {
                -1
            }
        }
        DatapathKind::Standard { .. } => i128::from(w),
    }
}

fn dot(kind: DatapathKind, weights: &[i64], x: &[i64]) -> i128 {
    let mut sum: i128 = 0;
    for i in 0..x.len() {
        let term = decode_weight(kind, weights[i])
            .checked_mul(decode_activation(kind, x[i]))
            .expect("oracle product overflow");
        sum = sum.checked_add(term).expect("oracle sum overflow");
    }
    sum
}

/// `w * x` with every element decoded to its integer value first.
pub fn reference_mvp(w: &WeightMatrix, x: &[i64], kind: DatapathKind) -> Result<Vec<i128>, Error> {
    if w.cols() != x.len() {
        return Err(Error::ShapeMismatch { what: "oracle vector length", expected: w.cols(), actual: x.len() });
    }
    Ok((0..w.rows()).map(|r| dot(kind, w.row(r), x)).collect())
}

/// Direct stride-1, unpadded convolution. Output is `O_c x O_d x O_d`,
/// row-major per channel.
pub fn reference_conv(input: &Tensor3, kernels: &ConvKernels, kind: DatapathKind) -> Result<Vec<i128>, Error> {
    if kernels.in_channels != input.channels() {
        return Err(Error::ShapeMismatch {
            what: "oracle input channels",
            expected: kernels.in_channels,
            actual: input.channels(),
        });
    }
    let k = kernels.kernel_dim;
    if k == 0 || k > input.height() || input.height() != input.width() {
        return Err(Error::ShapeMismatch { what: "oracle kernel size", expected: input.height(), actual: k });
    }
    let od = input.height() - k + 1;
    let mut out = Vec::with_capacity(kernels.out_channels * od * od);
    for o in 0..kernels.out_channels {
        for oy in 0..od {
            for ox in 0..od {
                let mut acc: i128 = 0;
                for c in 0..input.channels() {
                    for ky in 0..k {
                        for kx in 0..k {
                            let term = decode_weight(kind, kernels.get(o, c, ky, kx))
                                * decode_activation(kind, input.get(c, oy + ky, ox + kx));
                            acc = acc.checked_add(term).expect("oracle sum overflow");
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// Saturates a layer result into the next layer's activation encoding.
pub fn reference_requantize(value: i128, next: DatapathKind) -> i64 {
    match next {
        DatapathKind::Xnor => i64::from(value >= 0),
        DatapathKind::BinaryWeight { input_bits: bits } | DatapathKind::Standard { input_bits: bits, .. } => {
            let max = (1i128 << (bits - 1)) - 1;
            let min = -(1i128 << (bits - 1));
            value.max(min).min(max) as i64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const STD: DatapathKind = DatapathKind::Standard { input_bits: 4, weight_bits: 4 };

    #[test]
    fn mvp_examples() {
        let id = WeightMatrix::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(reference_mvp(&id, &[3, 7], STD).unwrap(), [3, 7]);

        let y = WeightMatrix::new(4, 4, vec![1, -2, 3, 0, 4, 4, -1, 2, 0, 0, 7, -8, -3, 1, 1, 1]).unwrap();
        let x = [2, -1, 3, 5];
        assert_eq!(reference_mvp(&y, &x, STD).unwrap(), [13, 11, -19, 1]);

        let zeros = WeightMatrix::new(1, 6, vec![0; 6]).unwrap();
        assert_eq!(reference_mvp(&zeros, &[1; 6], DatapathKind::Xnor).unwrap(), [-6]);

        let bw = WeightMatrix::new(1, 3, vec![1, 0, 1]).unwrap();
        assert_eq!(reference_mvp(&bw, &[5, 6, -2], DatapathKind::BinaryWeight { input_bits: 4 }).unwrap(), [-3]);

        assert!(reference_mvp(&id, &[1], STD).is_err());
    }

    #[test]
    fn conv_examples() {
        let t = Tensor3::new(1, 2, 2, vec![1, 2, 3, 4]).unwrap();
        let ones = ConvKernels { out_channels: 1, in_channels: 1, kernel_dim: 2, data: vec![1; 4] };
        assert_eq!(reference_conv(&t, &ones, STD).unwrap(), [10]);

        // impulse at (1, 0) picks the crop shifted down by one row
        let t = Tensor3::from_fn(1, 4, 4, |_, y, x| (y * 4 + x) as i64);
        let mut delta = vec![0; 9];
        delta[3] = 1;
        let k = ConvKernels { out_channels: 1, in_channels: 1, kernel_dim: 3, data: delta };
        assert_eq!(reference_conv(&t, &k, STD).unwrap(), [4, 5, 8, 9]);
    }

    #[test]
    fn requantize_saturates() {
        let two_bit = DatapathKind::Standard { input_bits: 2, weight_bits: 2 };
        assert_eq!(reference_requantize(100, two_bit), 1);
        assert_eq!(reference_requantize(-100, two_bit), -2);
        assert_eq!(reference_requantize(-1, two_bit), -1);
        assert_eq!(reference_requantize(0, DatapathKind::Xnor), 1);
        assert_eq!(reference_requantize(-2, DatapathKind::Xnor), 0);
    }
}
