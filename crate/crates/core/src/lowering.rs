//! Lowering of convolutions to GEMM.
//!
//! Image-matrix rows are ordered channel-major, then kernel row, then
//! kernel column; column `j = oy * O_d + ox` holds the window at output
//! pixel `(oy, ox)`. Weight matrices use the same column order.

use alloc::vec::Vec;

use crate::config::{DatapathKind, FoldConfig, LayerShape};
use crate::datapath::simd_partial;
use crate::error::Error;
use crate::stream::Beat;

fn expect(what: &'static str, expected: usize, actual: usize) -> Result<(), Error> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { what, expected, actual })
    }
}

/// A `channels x height x width` feature map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<i64>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<i64>) -> Result<Self, Error> {
        expect("tensor data length", channels * height * width, data.len())?;
        Ok(Self { channels, height, width, data })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> i64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> i64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }
}

/// The `K_d^2 * I_c x O_d^2` image matrix, stored column by column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl ImageMatrix {
    /// Builds the matrix from column-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self, Error> {
        expect("image matrix data length", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(rows: usize, columns: &[Vec<i64>]) -> Result<Self, Error> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for col in columns {
            expect("image column length", rows, col.len())?;
            data.extend_from_slice(col);
        }
        Ok(Self { rows, cols: columns.len(), data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.data[col * self.rows + row]
    }

    pub fn column(&self, col: usize) -> &[i64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[i64]> {
        self.data.chunks_exact(self.rows.max(1)).take(self.cols)
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }
}

/// The `O_c x K_d^2 * I_c` weight matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self, Error> {
        expect("weight matrix data length", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> i64) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[i64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    /// Checks every element against the weight precision of `kind`.
    pub fn check_precision(&self, kind: DatapathKind) -> Result<(), Error> {
        match self.data.iter().find(|&&w| !kind.weight_fits(w)) {
            Some(&w) => Err(Error::ValueOutOfRange { what: "weight", value: w.into() }),
            None => Ok(()),
        }
    }
}

/// Convolution filters, `O_c x I_c x K_d x K_d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvKernels {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_dim: usize,
    pub data: Vec<i64>,
}

impl ConvKernels {
    pub fn get(&self, o: usize, c: usize, ky: usize, kx: usize) -> i64 {
        self.data[((o * self.in_channels + c) * self.kernel_dim + ky) * self.kernel_dim + kx]
    }

    /// Flattens each filter into one weight-matrix row in im2col row order.
    pub fn to_weight_matrix(&self) -> WeightMatrix {
        let k = self.kernel_dim;
        WeightMatrix::from_fn(self.out_channels, self.in_channels * k * k, |o, col| {
            self.get(o, col / (k * k), col / k % k, col % k)
        })
    }
}

/// `O_d^2 x O_c` result matrix; row `j` belongs to output pixel `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i128>,
}

impl OutputMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i128>) -> Result<Self, Error> {
        expect("output matrix data length", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(cols: usize, rows: &[Vec<i128>]) -> Result<Self, Error> {
        let mut data = Vec::with_capacity(cols * rows.len());
        for row in rows {
            expect("output row length", cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> i128 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[i128] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[i128] {
        &self.data
    }
}

/// Expands `input` into the image matrix of a stride-1, unpadded convolution.
pub fn im2col(input: &Tensor3, shape: &LayerShape) -> Result<ImageMatrix, Error> {
    expect("input channels", shape.ifm_channels, input.channels)?;
    expect("input height", shape.ifm_dim, input.height)?;
    expect("input width", shape.ifm_dim, input.width)?;
    let k = shape.kernel_dim;
    let od = shape.ofm_dim;
    if k == 0 || k > input.height {
        return Err(Error::ShapeMismatch { what: "kernel_dim within input", expected: input.height, actual: k });
    }
    expect("output dimension", input.height - k + 1, od)?;
    let rows = shape.synapses();
    let mut data = Vec::with_capacity(rows * od * od);
    for oy in 0..od {
        for ox in 0..od {
            for c in 0..shape.ifm_channels {
                for ky in 0..k {
                    for kx in 0..k {
                        data.push(input.get(c, oy + ky, ox + kx));
                    }
                }
            }
        }
    }
    Ok(ImageMatrix { rows, cols: od * od, data })
}

/// `image^T x weights^T` under the datapath's lane semantics, without folding.
pub fn gemm_output(weights: &WeightMatrix, image: &ImageMatrix, datapath: DatapathKind) -> Result<OutputMatrix, Error> {
    expect("gemm inner dimension", weights.cols, image.rows)?;
    let mut data = Vec::with_capacity(image.cols * weights.rows);
    for col in image.columns() {
        for r in 0..weights.rows {
            data.push(simd_partial(datapath, col, weights.row(r)));
        }
    }
    Ok(OutputMatrix { rows: image.cols, cols: weights.rows, data })
}

/// Splits every image column into `SF` beats of `S` consecutive rows.
pub fn pack_input_stream(image: &ImageMatrix, fold: FoldConfig) -> Result<Vec<Beat>, Error> {
    if fold.simd == 0 || !image.rows.is_multiple_of(fold.simd) {
        return Err(Error::ShapeMismatch {
            what: "image rows divisible by simd",
            expected: 0,
            actual: image.rows % fold.simd.max(1),
        });
    }
    Ok(image.columns().flat_map(|col| col.chunks_exact(fold.simd).map(Beat::from)).collect())
}

/// Inverse of [`pack_input_stream`].
pub fn unpack_input_stream(beats: &[Beat], rows: usize) -> Result<ImageMatrix, Error> {
    let data: Vec<i64> = beats.iter().flat_map(|b| b.lanes().iter().copied()).collect();
    if rows == 0 || !data.len().is_multiple_of(rows) {
        return Err(Error::ShapeMismatch { what: "stream length", expected: rows, actual: data.len() });
    }
    let cols = data.len() / rows;
    Ok(ImageMatrix { rows, cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const STD: DatapathKind = DatapathKind::Standard { input_bits: 8, weight_bits: 8 };

    /// Naive window extraction, written independently of `im2col`.
    fn window(input: &Tensor3, k: usize, oy: usize, ox: usize) -> Vec<i64> {
        let mut out = vec![];
        for c in 0..input.channels() {
            for dy in 0..k {
                for dx in 0..k {
                    out.push(input.data()[c * input.height() * input.width() + (oy + dy) * input.width() + ox + dx]);
                }
            }
        }
        out
    }

    #[test]
    fn im2col_whole_input_window() {
        let t = Tensor3::new(1, 2, 2, vec![1, 2, 3, 4]).unwrap();
        let m = im2col(&t, &LayerShape::conv(2, 1, 2, 1)).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 1));
        assert_eq!(m.column(0), &[1, 2, 3, 4]);
    }

    #[test]
    fn im2col_matches_window_oracle() {
        for ic in 1..=2 {
            let t = Tensor3::from_fn(ic, 3, 3, |c, y, x| (c * 9 + y * 3 + x) as i64);
            let shape = LayerShape::conv(2, ic, 3, 1);
            let m = im2col(&t, &shape).unwrap();
            assert_eq!((m.rows(), m.cols()), (4 * ic, 4));
            for oy in 0..2 {
                for ox in 0..2 {
                    assert_eq!(m.column(oy * 2 + ox), window(&t, 2, oy, ox).as_slice());
                }
            }
        }
        // rows 0-3 channel 0, rows 4-7 channel 1
        let t = Tensor3::from_fn(2, 3, 3, |c, _, _| c as i64);
        let m = im2col(&t, &LayerShape::conv(2, 2, 3, 1)).unwrap();
        assert!((0..4).all(|r| m.get(r, 3) == 0));
        assert!((4..8).all(|r| m.get(r, 3) == 1));
    }

    #[test]
    fn im2col_rejects_wrong_shape() {
        let t = Tensor3::from_fn(2, 3, 3, |_, _, _| 0);
        assert!(matches!(im2col(&t, &LayerShape::conv(2, 1, 3, 1)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn gemm_examples() {
        let w = WeightMatrix::new(1, 1, vec![1]).unwrap();
        let x = ImageMatrix::new(1, 1, vec![5]).unwrap();
        assert_eq!(gemm_output(&w, &x, STD).unwrap().data(), &[5]);

        let y = WeightMatrix::from_fn(4, 4, |r, c| (r * 4 + c) as i64 - 7);
        let x = ImageMatrix::new(4, 1, vec![2, -3, 5, 1]).unwrap();
        let out = gemm_output(&y, &x, STD).unwrap();
        for r in 0..4 {
            let expected: i128 = (0..4).map(|c| i128::from(y.get(r, c) * x.get(c, 0))).sum();
            assert_eq!(out.get(0, r), expected);
        }

        let ones = WeightMatrix::new(2, 2, vec![1; 4]).unwrap();
        let img = ImageMatrix::new(2, 2, vec![1; 4]).unwrap();
        assert_eq!(gemm_output(&ones, &img, DatapathKind::Xnor).unwrap().data(), &[2, 2, 2, 2]);

        assert!(gemm_output(&ones, &ImageMatrix::new(3, 1, vec![0; 3]).unwrap(), STD).is_err());
    }

    #[test]
    fn pack_examples() {
        let img = ImageMatrix::new(4, 1, vec![10, 11, 12, 13]).unwrap();
        let beats = pack_input_stream(&img, FoldConfig::new(1, 2)).unwrap();
        assert_eq!(beats, vec![Beat::from(&[10, 11][..]), Beat::from(&[12, 13][..])]);
        assert_eq!(pack_input_stream(&img, FoldConfig::new(1, 4)).unwrap().len(), 1);
        assert!(pack_input_stream(&img, FoldConfig::new(1, 3)).is_err());

        let img = ImageMatrix::new(8, 1, (0..8).collect()).unwrap();
        let beats = pack_input_stream(&img, FoldConfig::new(1, 2)).unwrap();
        assert_eq!(beats.len(), 4);
        assert_eq!(beats[3].lanes(), &[6, 7]);
    }

    #[test]
    fn kernels_flatten_in_im2col_order() {
        let kern = ConvKernels { out_channels: 1, in_channels: 2, kernel_dim: 2, data: (0..8).collect() };
        assert_eq!(kern.to_weight_matrix().row(0), &[0, 1, 2, 3, 4, 5, 6, 7]);
    }

    proptest! {
        #[test]
        fn pack_roundtrip(rows_per in 1usize..8, simd in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let rows = rows_per * simd;
            let data: Vec<i64> = (0..rows * cols).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 40) as i64 - 8000).collect();
            let img = ImageMatrix::new(rows, cols, data).unwrap();
            let beats = pack_input_stream(&img, FoldConfig::new(1, simd)).unwrap();
            prop_assert_eq!(beats.len(), cols * rows_per);
            prop_assert_eq!(unpack_input_stream(&beats, rows).unwrap(), img);
        }

        #[test]
        fn im2col_shape(k in 1usize..4, extra in 0usize..4, ic in 1usize..4) {
            let id = k + extra;
            let t = Tensor3::from_fn(ic, id, id, |c, y, x| (c + y + x) as i64);
            let shape = LayerShape::conv(k, ic, id, 1);
            let m = im2col(&t, &shape).unwrap();
            prop_assert_eq!(m.rows(), k * k * ic);
            prop_assert_eq!(m.cols(), (extra + 1) * (extra + 1));
        }
    }
}
