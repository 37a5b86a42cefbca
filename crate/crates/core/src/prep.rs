//! Host-side input preparation: binarize, shrink to the network input size,
//! and place the result where the replication program expects it.

use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;
use crate::plane::{BitImage, GrayImage};

/// Default binarization threshold on 8-bit pixels (strictly greater is 1).
pub const DEFAULT_THRESHOLD: u8 = 127;

pub fn binarize(image: &GrayImage, threshold: u8) -> BitImage {
    BitImage::from_fn(image.height, image.width, |r, c| image.get(r, c) > threshold)
}

/// Shrinks by an integer factor per axis; an output bit is 1 when strictly
/// more than half of its source cell is 1.
pub fn majority_downsample(bits: &BitImage, target: usize) -> Result<BitImage> {
    let (h, w) = (bits.height(), bits.width());
    if target == 0 || h % target != 0 || w % target != 0 {
        return Err(Error::Input(format!(
            "{h}x{w} image does not shrink to {target}x{target} by an integer factor"
        )));
    }
    let (fy, fx) = (h / target, w / target);
    if fy == 1 && fx == 1 {
        return Ok(bits.clone());
    }
    let cell = fy * fx;
    Ok(BitImage::from_fn(target, target, |r, c| {
        let mut ones = 0;
        for y in r * fy..(r + 1) * fy {
            for x in c * fx..(c + 1) * fx {
                ones += bits.get(y, x) as usize;
            }
        }
        2 * ones > cell
    }))
}

/// Threshold then majority-downsample to `target × target`.
pub fn prepare(image: &GrayImage, threshold: u8, target: usize) -> Result<BitImage> {
    majority_downsample(&binarize(image, threshold), target)
}

/// The sensor frame fed to a lowered program: the network input in block 0
/// as values 0/1, every other pixel 0.
pub fn input_frame(input: &BitImage, geometry: &PlaneGeometry) -> Result<GrayImage> {
    let bs = geometry.block_size();
    if input.height() != bs || input.width() != bs {
        return Err(Error::Geometry(format!(
            "input is {}x{}, block is {bs}x{bs}",
            input.height(),
            input.width()
        )));
    }
    let mut frame = GrayImage::filled(geometry.height(), geometry.width(), 0);
    for r in 0..bs {
        for c in 0..bs {
            frame.pixels[geometry.index(r, c)] = input.get(r, c);
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn white_frame_becomes_all_ones() {
        let b = prepare(&GrayImage::filled(256, 256, 255), DEFAULT_THRESHOLD, 64).unwrap();
        assert_eq!(b.count_ones(), 64 * 64);
        let b = prepare(&GrayImage::filled(256, 256, 127), DEFAULT_THRESHOLD, 64).unwrap();
        assert_eq!(b.count_ones(), 0);
    }

    #[test]
    fn ties_resolve_to_zero() {
        // 2x2 cells with exactly two ones.
        let bits = BitImage::from_fn(4, 4, |_, c| c % 2 == 0);
        assert_eq!(majority_downsample(&bits, 2).unwrap().count_ones(), 0);
        let bits = BitImage::from_fn(4, 4, |r, c| c % 2 == 0 || r % 2 == 0);
        assert_eq!(majority_downsample(&bits, 2).unwrap().count_ones(), 4);
    }

    #[test]
    fn non_integer_factor_is_rejected() {
        assert!(majority_downsample(&BitImage::zeros(100, 100), 64).is_err());
    }

    proptest! {
        #[test]
        fn downsample_is_identity_at_target_size(seed in any::<u64>()) {
            let bits = BitImage::from_fn(64, 64, |r, c| (seed.rotate_left((r * 64 + c) as u32 % 64)) & 1 == 1);
            prop_assert_eq!(majority_downsample(&bits, 64).unwrap(), bits.clone());
            prop_assert_eq!(prepare(&bits.to_gray(), DEFAULT_THRESHOLD, 64).unwrap(), bits);
        }
    }
}
