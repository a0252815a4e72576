//! 8-bit images and binary PGM (`P5`) / PPM (`P6`) I/O.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale image with pixels in `0..=255`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }
}

/// RGB image with channels in `0..=255`, stored row-major as triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(ColorImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    body_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::invalid("file too short for a PNM header"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comment lines.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::invalid("malformed PNM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid("malformed PNM header number"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::invalid("missing whitespace after PNM header"));
    }
    if fields[2] != 255 {
        return Err(Error::invalid(format!("only maxval 255 is supported, got {}", fields[2])));
    }
    Ok(Header { magic, width: fields[0], height: fields[1], body_start: pos + 1 })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P5" {
        return Err(Error::invalid("not a binary PGM (P5) file"));
    }
    let n = h.width * h.height;
    let body = bytes.get(h.body_start..h.body_start + n).ok_or_else(|| Error::invalid("truncated PGM raster"))?;
    GrayImage::new(h.width, h.height, body.to_vec())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ColorImage> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err(Error::invalid("not a binary PPM (P6) file"));
    }
    let n = h.width * h.height;
    let body = bytes.get(h.body_start..h.body_start + 3 * n).ok_or_else(|| Error::invalid("truncated PPM raster"))?;
    let pixels = body.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    ColorImage::new(h.width, h.height, pixels)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5 {} {} 255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6 {} {} 255\n", img.width, img.height).into_bytes();
    for p in &img.pixels {
        out.extend_from_slice(p);
    }
    out
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(bytes)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&read_all(path.as_ref())?)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<ColorImage> {
    decode_ppm(&read_all(path.as_ref())?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    write_all(path.as_ref(), &encode_pgm(img))
}

pub fn write_ppm(path: impl AsRef<Path>, img: &ColorImage) -> Result<()> {
    write_all(path.as_ref(), &encode_ppm(img))
}
