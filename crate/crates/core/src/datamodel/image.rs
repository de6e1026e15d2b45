//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255.

use std::path::Path;

use crate::error::{PalsyError, Result};
use crate::io;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        let img = ImageBuffer { width, height, channels, pixels };
        img.validate()?;
        Ok(img)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        ImageBuffer { width, height, channels, pixels: vec![value; width * height * channels] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(PalsyError::Image(format!("dimensions must be positive, got {}x{}", self.width, self.height)));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(PalsyError::Image(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        let want = self.width * self.height * self.channels;
        if self.pixels.len() != want {
            return Err(PalsyError::Image(format!("expected {want} samples, got {}", self.pixels.len())));
        }
        Ok(())
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Planar `(C, H, W)` floats scaled to `[0, 1]`.
    pub fn to_planar(&self) -> Vec<f64> {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut out = vec![0.0; w * h * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[(ch * h + y) * w + x] = f64::from(self.get(x, y, ch)) / 255.0;
                }
            }
        }
        out
    }
}

pub fn encode_image(img: &ImageBuffer) -> Result<Vec<u8>> {
    img.validate()?;
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() && self.pos - start < 9 {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PalsyError::Image(format!("missing {what} in header")));
        }
        Ok(std::str::from_utf8(&self.bytes[start..self.pos]).unwrap().parse().unwrap())
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.len() < 2 {
        return Err(PalsyError::Image("file too short".into()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        m => {
            return Err(PalsyError::Image(format!(
                "unsupported format `{}`: only binary P5/P6 are read",
                String::from_utf8_lossy(m)
            )))
        }
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(PalsyError::Image(format!("maxval must be 255, got {maxval}")));
    }
    match bytes.get(h.pos) {
        Some(b' ' | b'\t' | b'\n' | b'\r') => h.pos += 1,
        _ => return Err(PalsyError::Image("header must end with a single whitespace byte".into())),
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| PalsyError::Image("image dimensions overflow".into()))?;
    let payload = &bytes[h.pos..];
    if payload.len() < len {
        return Err(PalsyError::Image(format!("truncated pixel payload: expected {len} bytes, got {}", payload.len())));
    }
    if payload.len() > len {
        return Err(PalsyError::Image(format!("{} trailing bytes after pixel payload", payload.len() - len)));
    }
    ImageBuffer::new(width, height, channels, payload.to_vec())
}

pub fn write_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    io::write_atomic(path, &encode_image(img)?)
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    decode_image(&io::read(path)?)
}
