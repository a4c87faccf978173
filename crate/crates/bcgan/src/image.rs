//! Binary microstructure images and their on-disk formats.
//!
//! Spin lattices are stored as 8-bit binary PGM (P5): pixel 0 for a -1 spin,
//! 255 for a +1 spin. Diff visualizations are written as binary PPM (P6).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ising::SpinLattice;

/// Square 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    n: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(n: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} pixels for a {n}x{n} image, got {}",
                n * n,
                pixels.len()
            )));
        }
        Ok(GrayImage { n, pixels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// Spin -1 -> pixel 0, spin +1 -> pixel 255.
pub fn lattice_to_image(lattice: &SpinLattice) -> GrayImage {
    let pixels = lattice
        .spins()
        .iter()
        .map(|&s| if s > 0 { 255 } else { 0 })
        .collect();
    GrayImage {
        n: lattice.n(),
        pixels,
    }
}

/// Exact inverse of [`lattice_to_image`]. Pixels must be exactly 0 or 255.
pub fn image_to_lattice(image: &GrayImage) -> Result<SpinLattice> {
    let spins = image
        .pixels
        .iter()
        .map(|&p| match p {
            0 => Ok(-1),
            255 => Ok(1),
            other => Err(Error::PgmFormat(format!(
                "pixel value {other} is not a spin image value (0 or 255)"
            ))),
        })
        .collect::<Result<Vec<i8>>>()?;
    SpinLattice::new(image.n, spins)
}

/// Serialize as binary PGM (P5), maxval 255.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.n, image.n).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_pgm(image))?;
    Ok(())
}

/// Parse a binary PGM (P5). Accepts comments and arbitrary whitespace in the
/// header; requires maxval 255 and a square image.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let magic = take_token(data, &mut pos)
        .ok_or_else(|| Error::PgmFormat("missing magic".into()))?;
    if magic != b"P5" {
        return Err(Error::PgmFormat("not a P5 pgm".into()));
    }
    let width = parse_header_number(data, &mut pos, "width")?;
    let height = parse_header_number(data, &mut pos, "height")?;
    let maxval = parse_header_number(data, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::PgmFormat(format!("unsupported maxval {maxval}")));
    }
    if width != height {
        return Err(Error::NonSquareImage { width, height });
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::PgmFormat("missing raster separator".into()));
    }
    pos += 1;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::PgmFormat("image dimensions overflow".into()))?;
    let raster = &data[pos..];
    if raster.len() != expected {
        return Err(Error::PgmFormat(format!(
            "raster has {} bytes, expected {expected}",
            raster.len()
        )));
    }
    GrayImage::new(width, raster.to_vec())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&std::fs::read(path)?)
}

fn take_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    skip_whitespace_and_comments(data, pos);
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos > start {
        Some(&data[start..*pos])
    } else {
        None
    }
}

fn skip_whitespace_and_comments(data: &[u8], pos: &mut usize) {
    while *pos < data.len() {
        if data[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else if data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn parse_header_number(data: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = take_token(data, pos)
        .ok_or_else(|| Error::PgmFormat(format!("missing {what}")))?;
    let s = std::str::from_utf8(tok)
        .map_err(|_| Error::PgmFormat(format!("non-ascii {what}")))?;
    let v: usize = s
        .parse()
        .map_err(|_| Error::PgmFormat(format!("bad {what}: {s:?}")))?;
    if v == 0 || v > 1 << 15 {
        return Err(Error::PgmFormat(format!("{what} {v} out of range")));
    }
    Ok(v)
}

/// RGB image for diff visualizations.
#[derive(Debug, Clone)]
pub struct RgbImage {
    pub n: usize,
    /// Row-major RGB triplets.
    pub pixels: Vec<[u8; 3]>,
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", image.n, image.n).into_bytes();
    for px in &image.pixels {
        out.extend_from_slice(px);
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn lattice_image_values() {
        let up = SpinLattice::uniform(4, 1).unwrap();
        assert!(lattice_to_image(&up).pixels().iter().all(|&p| p == 255));
        let down = SpinLattice::uniform(4, -1).unwrap();
        assert!(lattice_to_image(&down).pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn lattice_roundtrip() {
        let mut rng = Rng::seed_from_u64(3);
        let l = SpinLattice::random(16, &mut rng).unwrap();
        let img = lattice_to_image(&l);
        assert_eq!(image_to_lattice(&img).unwrap(), l);
    }

    #[test]
    fn pgm_roundtrip() {
        let mut rng = Rng::seed_from_u64(4);
        let l = SpinLattice::random(8, &mut rng).unwrap();
        let img = lattice_to_image(&l);
        let bytes = encode_pgm(&img);
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn pgm_with_comment() {
        let mut data = b"P5\n# a comment\n2 2\n255\n".to_vec();
        data.extend_from_slice(&[0, 255, 255, 0]);
        let img = decode_pgm(&data).unwrap();
        assert_eq!(img.pixels(), &[0, 255, 255, 0]);
    }

    #[test]
    fn pgm_rejects_bad_input() {
        assert!(decode_pgm(b"P6\n2 2\n255\n").is_err());
        assert!(decode_pgm(b"P5\n2 3\n255\n\0\0\0\0\0\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0\0").is_err());
        assert!(decode_pgm(b"").is_err());
    }
}
