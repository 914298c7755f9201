//! Image preprocessing: bilinear resize, per-channel dataset normalization,
//! grayscale conversion and local binary pattern extraction.

pub mod pnm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued pixel grid, row-major with interleaved channels.
/// Raw loads hold values in [0, 255]; normalized images are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels} (expected 1, 3 or 4)"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    /// An image with every sample set to `value`.
    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }
}

/// Per-channel dataset mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Bilinear resize with corner-aligned sample mapping: output corners map
/// exactly onto input corners and interior samples interpolate linearly.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidImage(format!(
            "cannot resize to {out_h}x{out_w}"
        )));
    }
    let (in_h, in_w, c) = (img.height, img.width, img.channels);
    let scale = |out_i: usize, out_len: usize, in_len: usize| -> f64 {
        if out_len <= 1 || in_len <= 1 {
            0.0
        } else {
            out_i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
        }
    };
    let mut out = Image::new(out_h, out_w, c, vec![0.0; out_h * out_w * c])?;
    for oy in 0..out_h {
        let sy = scale(oy, out_h, in_h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = scale(ox, out_w, in_w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = sx - x0 as f64;
            for ch in 0..c {
                let v00 = img.get(y0, x0, ch);
                let v01 = img.get(y0, x1, ch);
                let v10 = img.get(y1, x0, ch);
                let v11 = img.get(y1, x1, ch);
                let top = v00 + (v01 - v00) * fx;
                let bottom = v10 + (v11 - v10) * fx;
                out.set(oy, ox, ch, top + (bottom - top) * fy);
            }
        }
    }
    Ok(out)
}

/// Per-channel population mean and standard deviation over every pixel of
/// every image. Uses a deterministic two-pass accumulation (sums, then
/// squared deviations) so the result does not depend on image order.
pub fn channel_stats(images: &[Image]) -> Result<ChannelStats> {
    let first = images
        .first()
        .ok_or_else(|| Error::EmptyInput("channel_stats needs at least one image".into()))?;
    let channels = first.channels;
    for img in images {
        if img.channels != channels {
            return Err(Error::ChannelMismatch {
                expected: channels,
                got: img.channels,
            });
        }
    }

    let mut sums = vec![0.0f64; channels];
    let mut count = 0u64;
    for img in images {
        for px in img.data.chunks_exact(channels) {
            for (c, &v) in px.iter().enumerate() {
                sums[c] += v;
            }
        }
        count += (img.height * img.width) as u64;
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();

    let mut ssd = vec![0.0f64; channels];
    for img in images {
        for px in img.data.chunks_exact(channels) {
            for (c, &v) in px.iter().enumerate() {
                let d = v - mean[c];
                ssd[c] += d * d;
            }
        }
    }
    let std: Vec<f64> = ssd.iter().map(|s| (s / count as f64).sqrt()).collect();
    if let Some(channel) = std.iter().position(|&s| s == 0.0) {
        return Err(Error::ConstantChannel { channel });
    }
    Ok(ChannelStats { mean, std })
}

/// Standardizes each channel: `(pixel - mean) / std`.
pub fn normalize(img: &Image, stats: &ChannelStats) -> Result<Image> {
    if stats.mean.len() != img.channels || stats.std.len() != img.channels {
        return Err(Error::ChannelMismatch {
            expected: img.channels,
            got: stats.mean.len(),
        });
    }
    let c = img.channels;
    let data = img
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - stats.mean[i % c]) / stats.std[i % c])
        .collect();
    Image::new(img.height, img.width, c, data)
}

/// Rec. 601 luma conversion: 0.299 R + 0.587 G + 0.114 B.
pub fn to_grayscale(img: &Image) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            got: img.channels,
        });
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2])
        .collect();
    Image::new(img.height, img.width, 1, data)
}

// Neighbor offsets (dy, dx) clockwise from the top-left corner; bit k of the
// code has weight 2^k and is set when neighbor k >= center.
const LBP_NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

/// Classic 3x3 local binary pattern with edge replication at the borders,
/// so the output has the same dimensions as the input. Codes are integers
/// in [0, 255] stored as reals; a constant image maps to uniform 255.
pub fn lbp(img: &Image) -> Result<Image> {
    if img.channels != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            got: img.channels,
        });
    }
    if img.height < 3 || img.width < 3 {
        return Err(Error::InvalidImage(format!(
            "lbp needs at least 3x3 input, got {}x{}",
            img.height, img.width
        )));
    }
    let (h, w) = (img.height as isize, img.width as isize);
    let mut out = Image::new(img.height, img.width, 1, vec![0.0; img.height * img.width])?;
    for y in 0..img.height {
        for x in 0..img.width {
            let center = img.get(y, x, 0);
            let mut code = 0u32;
            for (k, (dy, dx)) in LBP_NEIGHBORS.iter().enumerate() {
                let ny = (y as isize + dy).clamp(0, h - 1) as usize;
                let nx = (x as isize + dx).clamp(0, w - 1) as usize;
                if img.get(ny, nx, 0) >= center {
                    code |= 1 << k;
                }
            }
            out.set(y, x, 0, code as f64);
        }
    }
    Ok(out)
}

/// Appends the LBP of the grayscale conversion as a fourth channel; the RGB
/// planes pass through untouched.
pub fn append_lbp_channel(img: &Image) -> Result<Image> {
    let codes = lbp(&to_grayscale(img)?)?;
    let mut data = Vec::with_capacity(img.height * img.width * 4);
    for (px, code) in img.data.chunks_exact(3).zip(codes.data.iter()) {
        data.extend_from_slice(px);
        data.push(*code);
    }
    Image::new(img.height, img.width, 4, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_constant_image_stays_constant() {
        let img = Image::constant(10, 10, 3, 42.0).unwrap();
        let out = resize_bilinear(&img, 224, 224).unwrap();
        assert_eq!(out.height(), 224);
        assert_eq!(out.width(), 224);
        assert!(out.data().iter().all(|&v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn resize_to_same_dimensions_is_identity() {
        let img = Image::new(2, 3, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = resize_bilinear(&img, 2, 3).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn resize_two_pixel_gradient() {
        // Corner-aligned mapping sends output x to x * (in-1)/(out-1), so a
        // [0, 255] pair stretched to four samples reads 0, 85, 170, 255.
        let img = Image::new(1, 2, 1, vec![0.0, 255.0]).unwrap();
        let out = resize_bilinear(&img, 1, 4).unwrap();
        let expected = [0.0, 85.0, 170.0, 255.0];
        for (got, want) in out.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn resize_rejects_zero_dimension() {
        let img = Image::constant(2, 2, 1, 0.0).unwrap();
        assert!(resize_bilinear(&img, 0, 4).is_err());
    }

    #[test]
    fn stats_of_two_single_pixel_images() {
        let a = Image::new(1, 1, 1, vec![0.0]).unwrap();
        let b = Image::new(1, 1, 1, vec![2.0]).unwrap();
        let stats = channel_stats(&[a, b]).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn stats_reject_constant_channel() {
        let img = Image::constant(2, 2, 1, 7.0).unwrap();
        match channel_stats(&[img]) {
            Err(Error::ConstantChannel { channel }) => assert_eq!(channel, 0),
            other => panic!("expected constant-channel error, got {other:?}"),
        }
    }

    #[test]
    fn stats_name_the_constant_channel() {
        let a = Image::new(1, 1, 3, vec![0.0, 10.0, 20.0]).unwrap();
        let b = Image::new(1, 1, 3, vec![2.0, 10.0, 24.0]).unwrap();
        match channel_stats(&[a, b]) {
            Err(Error::ConstantChannel { channel }) => assert_eq!(channel, 1),
            other => panic!("expected constant-channel error, got {other:?}"),
        }
    }

    #[test]
    fn normalize_arithmetic() {
        let img = Image::new(1, 1, 1, vec![128.0]).unwrap();
        let stats = ChannelStats { mean: vec![100.0], std: vec![14.0] };
        let out = normalize(&img, &stats).unwrap();
        assert!((out.get(0, 0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_with_identity_stats_is_identity() {
        let img = Image::new(1, 2, 1, vec![3.0, 4.0]).unwrap();
        let stats = ChannelStats { mean: vec![0.0], std: vec![1.0] };
        assert_eq!(normalize(&img, &stats).unwrap(), img);
    }

    #[test]
    fn normalizing_by_own_stats_standardizes() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, crate::rng::stream::SYNTH, 0);
        let images: Vec<Image> = (0..8)
            .map(|_| {
                let data: Vec<f64> = (0..4 * 5 * 3).map(|_| rng.gen_range(0.0..255.0)).collect();
                Image::new(4, 5, 3, data).unwrap()
            })
            .collect();
        let stats = channel_stats(&images).unwrap();
        let normalized: Vec<Image> = images
            .iter()
            .map(|img| normalize(img, &stats).unwrap())
            .collect();
        let after = channel_stats(&normalized).unwrap();
        for c in 0..3 {
            assert!(after.mean[c].abs() < 1e-9, "mean[{c}] = {}", after.mean[c]);
            assert!((after.std[c] - 1.0).abs() < 1e-9, "std[{c}] = {}", after.std[c]);
        }
    }

    #[test]
    fn grayscale_extremes_and_weights() {
        let white = Image::new(1, 1, 3, vec![255.0, 255.0, 255.0]).unwrap();
        assert!((to_grayscale(&white).unwrap().get(0, 0, 0) - 255.0).abs() < 1e-9);
        let black = Image::new(1, 1, 3, vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(to_grayscale(&black).unwrap().get(0, 0, 0), 0.0);
        let red = Image::new(1, 1, 3, vec![255.0, 0.0, 0.0]).unwrap();
        assert!((to_grayscale(&red).unwrap().get(0, 0, 0) - 76.245).abs() < 1e-9);
    }

    #[test]
    fn lbp_constant_image_is_all_255() {
        let img = Image::constant(4, 5, 1, 9.0).unwrap();
        let out = lbp(&img).unwrap();
        assert!(out.data().iter().all(|&v| v == 255.0));
    }

    #[test]
    fn lbp_isolated_peak_scores_zero() {
        let mut data = vec![0.0; 9];
        data[4] = 5.0;
        let img = Image::new(3, 3, 1, data).unwrap();
        let out = lbp(&img).unwrap();
        assert_eq!(out.get(1, 1, 0), 0.0);
    }

    #[test]
    fn lbp_center_code_hand_enumeration() {
        // Rows [[1,2,3],[4,5,6],[7,8,9]], center 5. Clockwise from top-left
        // the neighbors read 1,2,3,6,9,8,7,4; comparisons >= 5 hold for
        // 6,9,8,7 at bit positions 3,4,5,6, so the code is
        // 2^3 + 2^4 + 2^5 + 2^6 = 120.
        let img = Image::new(3, 3, 1, (1..=9).map(f64::from).collect()).unwrap();
        let out = lbp(&img).unwrap();
        assert_eq!(out.get(1, 1, 0), 120.0);
    }

    #[test]
    fn lbp_rejects_small_images() {
        let img = Image::constant(2, 3, 1, 0.0).unwrap();
        assert!(lbp(&img).is_err());
    }

    #[test]
    fn append_lbp_makes_constant_fourth_channel() {
        let img = Image::constant(3, 3, 3, 50.0).unwrap();
        let out = append_lbp_channel(&img).unwrap();
        assert_eq!(out.channels(), 4);
        assert_eq!(out.height(), 3);
        assert_eq!(out.width(), 3);
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(out.get(y, x, 3), 255.0);
            }
        }
    }

    #[test]
    fn append_lbp_leaves_rgb_planes_untouched() {
        let data: Vec<f64> = (0..3 * 4 * 3).map(|i| (i % 251) as f64).collect();
        let img = Image::new(3, 4, 3, data).unwrap();
        let out = append_lbp_channel(&img).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                for c in 0..3 {
                    assert_eq!(out.get(y, x, c), img.get(y, x, c));
                }
            }
        }
    }
}
