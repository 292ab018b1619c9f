//! Grayscale line-drawing images: decoding, encoding and sampling.
//!
//! Pixels are stored as ink intensity: `1.0` is a full stroke and `0.0` is
//! blank background. Files store the usual dark-on-light convention, so decoding
//! maps byte `v` to `1 − v/255` before polarity normalization.

use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    /// Wraps row-major pixels, clamping each into `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, mut pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} pixels do not form a {width}×{height} image",
                pixels.len()
            )));
        }
        for p in &mut pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Bilinear sample at continuous pixel coordinates where `(x, y)` is the
    /// center of pixel `(x, y)`. Outside the image reads as blank.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let px = |dx: i64, dy: i64| -> f32 {
            let (u, v) = (xi + dx, yi + dy);
            if u < 0 || v < 0 || u >= self.width as i64 || v >= self.height as i64 {
                0.0
            } else {
                self.pixels[v as usize * self.width + u as usize]
            }
        };
        let mut acc = 0.0;
        if fx < 1.0 && fy < 1.0 {
            acc += (1.0 - fx) * (1.0 - fy) * px(0, 0);
        }
        if fx > 0.0 {
            acc += fx * (1.0 - fy) * px(1, 0);
        }
        if fy > 0.0 {
            acc += (1.0 - fx) * fy * px(0, 1);
        }
        if fx > 0.0 && fy > 0.0 {
            acc += fx * fy * px(1, 1);
        }
        acc
    }

    /// Inclusive pixel bounds `(x0, y0, x1, y1)` of all ink, or `None` if blank.
    pub fn ink_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) > 0.0 {
                    bounds = Some(match bounds {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bounds
    }

    pub fn ink_total(&self) -> f64 {
        self.pixels.iter().map(|&p| f64::from(p)).sum()
    }

    /// Ink-weighted centroid in pixel-center coordinates.
    pub fn ink_centroid(&self) -> Option<(f64, f64)> {
        let total = self.ink_total();
        if total <= 0.0 {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let w = f64::from(self.get(x, y));
                sx += w * x as f64;
                sy += w * y as f64;
            }
        }
        Some((sx / total, sy / total))
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| ((1.0 - p) * 255.0).round() as u8)
            .collect()
    }

    /// Binary PGM (P5, maxval 255), ink drawn dark on white.
    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    /// 8-bit grayscale PNG, ink drawn dark on white.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| Error::format("png", e.to_string()))?;
            writer
                .write_image_data(&self.to_bytes())
                .map_err(|e| Error::format("png", e.to_string()))?;
        }
        Ok(out)
    }

    /// Writes PGM or PNG depending on the path's extension (PGM otherwise).
    pub fn save(&self, path: &Path) -> Result<()> {
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        let bytes = if is_png {
            self.encode_png()?
        } else {
            self.encode_pgm()
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

pub fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::UnsupportedImage(m) => Error::UnsupportedImage(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Decodes PGM (P5) or PNG bytes, normalizing polarity so strokes are ink.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    let (width, height, gray) = if bytes.starts_with(b"P5") {
        decode_pgm(bytes)?
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)?
    } else {
        return Err(Error::UnsupportedImage(
            "expected binary PGM (P5) or PNG data".into(),
        ));
    };
    let mut pixels: Vec<f32> = gray.iter().map(|&v| 1.0 - v).collect();
    let mean = pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / pixels.len() as f64;
    if mean > 0.5 {
        if pixels.iter().all(|&p| p == pixels[0]) {
            warn!("uniform full-ink image inverted to a blank page");
        }
        pixels.iter_mut().for_each(|p| *p = 1.0 - *p);
    }
    GrayImage::from_pixels(width, height, pixels)
}

/// Returns `(width, height, luminance in [0,1])`.
fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::UnsupportedImage("malformed PGM header".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::UnsupportedImage("malformed PGM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedImage(format!(
            "PGM maxval {maxval} is not 8-bit"
        )));
    }
    let n = width * height;
    if n == 0 {
        return Err(Error::UnsupportedImage("PGM has zero area".into()));
    }
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::UnsupportedImage("PGM raster is truncated".into()))?;
    let m = maxval as f32;
    Ok((
        width,
        height,
        raster.iter().map(|&v| f32::from(v).min(m) / m).collect(),
    ))
}

fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::UnsupportedImage(format!("PNG: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::UnsupportedImage(format!("PNG: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedImage(format!(
            "PNG bit depth {:?} is not 8-bit",
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let lum = |r: u8, g: u8, b: u8| {
        (0.299 * f32::from(r) + 0.587 * f32::from(g) + 0.114 * f32::from(b)) / 255.0
    };
    // Transparent pixels are composited over a white background.
    let over_white = |v: f32, a: u8| {
        let a = f32::from(a) / 255.0;
        v * a + (1.0 - a)
    };
    let gray: Vec<f32> = match info.color_type {
        png::ColorType::Grayscale => data.iter().map(|&v| f32::from(v) / 255.0).collect(),
        png::ColorType::GrayscaleAlpha => data
            .chunks_exact(2)
            .map(|c| over_white(f32::from(c[0]) / 255.0, c[1]))
            .collect(),
        png::ColorType::Rgb => data
            .chunks_exact(3)
            .map(|c| lum(c[0], c[1], c[2]))
            .collect(),
        png::ColorType::Rgba => data
            .chunks_exact(4)
            .map(|c| over_white(lum(c[0], c[1], c[2]), c[3]))
            .collect(),
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedImage(
                "palette PNGs are not supported".into(),
            ));
        }
    };
    Ok((w, h, gray))
}
