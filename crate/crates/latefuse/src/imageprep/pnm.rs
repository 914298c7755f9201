//! Binary PPM (P6) and PGM (P5) reading and writing, maxval 255.

use std::io::{Read, Write};
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

fn bad(detail: impl Into<String>) -> Error {
    Error::InvalidImage(detail.into())
}

/// Pulls the next header token, skipping whitespace and `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(bad("truncated header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_dim(token: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| bad(format!("invalid header field {token:?}")))
}

/// Decodes a P5 (grayscale) or P6 (RGB) image from raw bytes.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(format!("unsupported magic {other:?}"))),
    };
    let width = parse_dim(&next_token(bytes, &mut pos)?)?;
    let height = parse_dim(&next_token(bytes, &mut pos)?)?;
    let maxval = parse_dim(&next_token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(bad(format!("unsupported maxval {maxval} (expected 255)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing raster separator"));
    }
    pos += 1;
    let expected = height * width * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(bad(format!(
            "raster has {} bytes, expected {expected}",
            raster.len()
        )));
    }
    let data = raster[..expected].iter().map(|&b| b as f64).collect();
    Image::new(height, width, channels, data)
}

/// Reads a P5/P6 file.
pub fn read(path: impl AsRef<Path>) -> Result<Image> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Encodes to P5 (1 channel) or P6 (3 channels); samples are rounded to the
/// nearest integer and clamped to [0, 255], so the image must be raw-valued.
pub fn encode(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(bad(format!(
                "cannot encode a {c}-channel image as PNM (1 or 3 channels only)"
            )))
        }
    };
    let mut out = Vec::with_capacity(img.data().len() + 32);
    write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height())?;
    out.extend(
        img.data()
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

/// Writes a P5/P6 file.
pub fn write(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    std::fs::write(path, encode(img)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_minimal_pgm() {
        let img = decode(b"P5\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(img.channels(), 1);
        assert_eq!(img.data(), &[0.0, 255.0]);
    }

    #[test]
    fn decode_handles_comments() {
        let img = decode(b"P6\n# a comment\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(img.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn decode_rejects_wrong_maxval_and_truncation() {
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode(b"P6\n2 2\n255\n\x00").is_err());
        assert!(decode(b"P3\n1 1\n255\n0 0 0").is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let img = Image::new(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        let back = decode(&encode(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn encode_rejects_four_channels() {
        let img = Image::constant(2, 2, 4, 0.0).unwrap();
        assert!(encode(&img).is_err());
    }
}
