//! Two-bin orientation encoding: eight scalars
//! `[out₁, in₁, sin₁, cos₁, out₂, in₂, sin₂, cos₂]`, where bin `k` covers an
//! arc of `pi + pi/3` centred at `∓pi/2` and stores the residual to its centre.

use super::wrap_angle;
use std::f64::consts::{FRAC_PI_2, PI};

pub const MULTIBIN_LEN: usize = 8;

pub type OrientationBins = [f64; MULTIBIN_LEN];

const BIN_CENTERS: [f64; 2] = [-FRAC_PI_2, FRAC_PI_2];
const BIN_HALF_WIDTH: f64 = FRAC_PI_2 + PI / 6.0;

pub fn encode_orientation(alpha: f64) -> OrientationBins {
    let mut out = [0.0; MULTIBIN_LEN];
    for (k, &center) in BIN_CENTERS.iter().enumerate() {
        let residual = wrap_angle(alpha - center);
        let slot = &mut out[4 * k..4 * k + 4];
        if residual.abs() <= BIN_HALF_WIDTH {
            slot[1] = 1.0;
            slot[2] = residual.sin();
            slot[3] = residual.cos();
        } else {
            slot[0] = 1.0;
        }
    }
    out
}

/// Picks the bin with the larger in-minus-out score and adds its residual
/// angle back onto the bin centre.
pub fn decode_orientation(bins: &OrientationBins) -> f64 {
    let score = |k: usize| bins[4 * k + 1] - bins[4 * k];
    let k = if score(1) > score(0) { 1 } else { 0 };
    let residual = bins[4 * k + 2].atan2(bins[4 * k + 3]);
    wrap_angle(residual + BIN_CENTERS[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn every_angle_falls_in_some_bin() {
        for a in [-PI, -2.0, -FRAC_PI_2, 0.0, 0.3, FRAC_PI_2, PI] {
            let e = encode_orientation(a);
            assert!(e[1] == 1.0 || e[5] == 1.0, "angle {a} unbinned");
        }
        // the overlap near 0 is covered by both bins
        let e = encode_orientation(0.1);
        assert_eq!((e[1], e[5]), (1.0, 1.0));
    }

    proptest! {
        #[test]
        fn round_trip(a in -PI..PI) {
            let back = decode_orientation(&encode_orientation(a));
            prop_assert!(wrap_angle(back - a).abs() < 1e-12);
        }
    }
}
