use alloc::vec;
use alloc::vec::Vec;

/// One input transfer: `S` activation lanes, lane 0 first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Beat {
    lanes: Vec<i64>,
}

impl Beat {
    pub fn new(lanes: Vec<i64>) -> Self {
        Self { lanes }
    }

    pub fn lanes(&self) -> &[i64] {
        &self.lanes
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }
}

impl From<&[i64]> for Beat {
    fn from(lanes: &[i64]) -> Self {
        Self { lanes: lanes.to_vec() }
    }
}

/// One output transfer: the `P` accumulator results of a tile.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutputWord {
    lanes: Vec<i128>,
}

impl OutputWord {
    pub fn new(lanes: Vec<i128>) -> Self {
        Self { lanes }
    }

    pub fn lanes(&self) -> &[i128] {
        &self.lanes
    }

    pub fn into_lanes(self) -> Vec<i128> {
        self.lanes
    }
}

/// Handshake signals of one channel in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChannelSignals {
    pub tvalid: bool,
    pub tready: bool,
}

impl ChannelSignals {
    /// A beat moves exactly when both sides agree.
    pub fn transfer(&self) -> bool {
        self.tvalid && self.tready
    }
}

/// Static description of a ready/valid channel carrying `lanes` elements
/// of `element_bits` each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamChannel {
    pub lanes: usize,
    pub element_bits: u32,
}

impl StreamChannel {
    /// Width of TDATA.
    pub fn data_bits(&self) -> usize {
        self.lanes * self.element_bits as usize
    }
}

/// Packs lanes into a TDATA word, lane 0 in the least significant bits.
///
/// Each lane is truncated to `element_bits` two's complement bits; the
/// result is little-endian with `ceil(lanes * element_bits / 8)` bytes.
pub fn pack_tdata<I>(lanes: I, element_bits: u32) -> Vec<u8>
where
    I: IntoIterator<Item = i128>,
{
    let mut out = Vec::new();
    let mut bit = 0usize;
    for value in lanes {
        for b in 0..element_bits {
            let byte = bit / 8;
            if byte == out.len() {
                out.push(0);
            }
            if (value >> b.min(127)) & 1 == 1 {
                out[byte] |= 1 << (bit % 8);
            }
            bit += 1;
        }
    }
    out
}

/// Inverse of [`pack_tdata`]; `signed` selects sign extension.
pub fn unpack_tdata(bytes: &[u8], lanes: usize, element_bits: u32, signed: bool) -> Vec<i128> {
    let mut out = vec![0i128; lanes];
    for (lane, value) in out.iter_mut().enumerate() {
        let mut v: i128 = 0;
        for b in 0..element_bits as usize {
            let bit = lane * element_bits as usize + b;
            let set = bytes.get(bit / 8).is_some_and(|byte| (byte >> (bit % 8)) & 1 == 1);
            if set {
                v |= 1i128 << b;
            }
        }
        if signed && element_bits > 0 && element_bits < 128 && (v >> (element_bits - 1)) & 1 == 1 {
            v -= 1i128 << element_bits;
        }
        *value = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lane_zero_is_least_significant() {
        assert_eq!(pack_tdata([1, 0, 1, 1], 1), [0b1101]);
        assert_eq!(pack_tdata([-1, 2], 4), [0x2f]);
        assert_eq!(pack_tdata([0x1ff], 9), [0xff, 0x01]);
        assert_eq!(unpack_tdata(&[0x2f], 2, 4, true), [-1, 2]);
        assert_eq!(unpack_tdata(&[0x2f], 2, 4, false), [15, 2]);
    }

    #[test]
    fn transfer_needs_both() {
        assert!(ChannelSignals { tvalid: true, tready: true }.transfer());
        assert!(!ChannelSignals { tvalid: true, tready: false }.transfer());
        assert_eq!(StreamChannel { lanes: 50, element_bits: 2 }.data_bits(), 100);
    }

    proptest! {
        #[test]
        fn tdata_roundtrip(bits in 1u32..40, seed in proptest::collection::vec(any::<i64>(), 1..20)) {
            let half = 1i128 << (bits - 1);
            let lanes: Vec<i128> = seed.iter().map(|&s| (i128::from(s)).rem_euclid(2 * half) - half).collect();
            let packed = pack_tdata(lanes.iter().copied(), bits);
            prop_assert_eq!(packed.len(), (lanes.len() * bits as usize).div_ceil(8));
            prop_assert_eq!(unpack_tdata(&packed, lanes.len(), bits, true), lanes);
        }
    }
}
