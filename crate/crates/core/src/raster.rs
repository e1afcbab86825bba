//! RGBA pixel buffers and their PNG-encoded carrier.

use std::io::Cursor;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("image payload could not be decoded: {0}")]
    Decode(String),
    #[error("unsupported pixel layout: {0}")]
    Unsupported(String),
    #[error("decoded size {actual} does not match declared {declared}")]
    SizeMismatch { declared: String, actual: String },
}

/// 8-bit RGBA colour, non-premultiplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgba(pub [u8; 4]);

impl Rgba {
    pub const WHITE: Rgba = Rgba([255, 255, 255, 255]);
    pub const BLACK: Rgba = Rgba([0, 0, 0, 255]);
}

/// Decoded RGBA8 pixels, row-major, no padding.
#[derive(Clone, PartialEq, Eq)]
pub struct Pixmap {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for Pixmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pixmap")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Pixmap {
    pub fn filled(width: u32, height: u32, color: Rgba) -> Self {
        let data = color.0.repeat(width as usize * height as usize);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_rgba(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        if data.len() != width as usize * height as usize * 4 {
            return Err(RasterError::SizeMismatch {
                declared: format!("{width}x{height}"),
                actual: format!("{} bytes", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 4
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgba {
        let o = self.offset(x, y);
        Rgba([
            self.data[o],
            self.data[o + 1],
            self.data[o + 2],
            self.data[o + 3],
        ])
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, color: Rgba) {
        let o = self.offset(x, y);
        self.data[o..o + 4].copy_from_slice(&color.0);
    }

    /// Source-over compositing of a non-premultiplied colour onto one pixel.
    #[inline]
    pub fn blend_pixel(&mut self, x: u32, y: u32, src: Rgba) {
        let o = self.offset(x, y);
        let a = src.0[3] as u32;
        if a == 255 {
            self.data[o..o + 4].copy_from_slice(&src.0);
            return;
        }
        if a == 0 {
            return;
        }
        let inv = 255 - a;
        for c in 0..3 {
            let d = self.data[o + c] as u32;
            self.data[o + c] = ((src.0[c] as u32 * a + d * inv + 127) / 255) as u8;
        }
        let da = self.data[o + 3] as u32;
        self.data[o + 3] = (a + (da * inv + 127) / 255).min(255) as u8;
    }

    /// Copies the rectangle `[x, x+w) x [y, y+h)`, which must lie inside the pixmap.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Pixmap {
        assert!(x + w <= self.width && y + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w as usize * h as usize * 4);
        for row in y..y + h {
            let start = self.offset(x, row);
            data.extend_from_slice(&self.data[start..start + w as usize * 4]);
        }
        Pixmap {
            width: w,
            height: h,
            data,
        }
    }

    pub fn count_pixels(&self, pred: impl Fn(Rgba) -> bool) -> usize {
        self.data
            .chunks_exact(4)
            .filter(|p| pred(Rgba([p[0], p[1], p[2], p[3]])))
            .count()
    }

    /// PNG encoding with pinned settings so equal pixels give equal bytes.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_compression(png::Compression::Fast);
            enc.set_filter(png::Filter::Sub);
            let mut writer = enc.write_header().expect("png header to Vec");
            writer
                .write_image_data(&self.data)
                .expect("png body to Vec");
        }
        out
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Pixmap, RasterError> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder
            .read_info()
            .map_err(|e| RasterError::Decode(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| RasterError::Unsupported("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| RasterError::Decode(e.to_string()))?;
        buf.truncate(info.buffer_size());
        let (w, h) = (info.width, info.height);
        let px = (w as usize) * (h as usize);
        let data = match info.color_type {
            png::ColorType::Rgba => buf,
            png::ColorType::Rgb => buf
                .chunks_exact(3)
                .flat_map(|c| [c[0], c[1], c[2], 255])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g, 255]).collect(),
            png::ColorType::GrayscaleAlpha => buf
                .chunks_exact(2)
                .flat_map(|c| [c[0], c[0], c[0], c[1]])
                .collect(),
            other => return Err(RasterError::Unsupported(format!("{other:?}"))),
        };
        if data.len() != px * 4 {
            return Err(RasterError::SizeMismatch {
                declared: format!("{w}x{h}"),
                actual: format!("{} bytes", data.len()),
            });
        }
        Pixmap::from_rgba(w, h, data)
    }
}

/// Encoded image payload as exchanged with providers and stored as artifacts.
/// Immutable; clones share the bytes and the memoized content hash.
#[derive(Clone, Serialize, Deserialize)]
pub struct RasterImage {
    pub width_px: u32,
    pub height_px: u32,
    #[serde(with = "b64_shared")]
    png: Arc<[u8]>,
    #[serde(skip)]
    hash: Arc<OnceLock<String>>,
}

impl PartialEq for RasterImage {
    fn eq(&self, other: &Self) -> bool {
        self.width_px == other.width_px && self.height_px == other.height_px && self.png == other.png
    }
}

impl Eq for RasterImage {}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "RasterImage({}x{}, {} bytes)",
            self.width_px,
            self.height_px,
            self.png.len()
        )
    }
}

impl RasterImage {
    fn new(width_px: u32, height_px: u32, png: Vec<u8>) -> Self {
        Self {
            width_px,
            height_px,
            png: png.into(),
            hash: Arc::default(),
        }
    }

    pub fn from_pixmap(pixmap: &Pixmap) -> Self {
        Self::new(pixmap.width(), pixmap.height(), pixmap.encode_png())
    }

    /// Decodes and checks the payload against the declared dimensions.
    pub fn from_png(png: Vec<u8>) -> Result<Self, RasterError> {
        let pixmap = Pixmap::decode_png(&png)?;
        Ok(Self::new(pixmap.width(), pixmap.height(), png))
    }

    pub fn png(&self) -> &[u8] {
        &self.png
    }

    pub fn decode(&self) -> Result<Pixmap, RasterError> {
        let pixmap = Pixmap::decode_png(&self.png)?;
        if pixmap.width() != self.width_px || pixmap.height() != self.height_px {
            return Err(RasterError::SizeMismatch {
                declared: format!("{}x{}", self.width_px, self.height_px),
                actual: format!("{}x{}", pixmap.width(), pixmap.height()),
            });
        }
        Ok(pixmap)
    }

    /// Hex SHA-256 of the encoded bytes; used as the content address.
    pub fn content_hash(&self) -> String {
        self.hash.get_or_init(|| content_hash(&self.png)).clone()
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

mod b64_shared {
    use std::sync::Arc;

    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Arc<[u8]>, s: S) -> Result<S::Ok, S::Error> {
        super::b64::serialize(bytes, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arc<[u8]>, D::Error> {
        super::b64::deserialize(d).map(Into::into)
    }
}

pub(crate) mod b64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_preserves_pixels() {
        let mut p = Pixmap::filled(7, 5, Rgba::WHITE);
        p.set_pixel(3, 2, Rgba([10, 20, 30, 40]));
        let img = RasterImage::from_pixmap(&p);
        assert_eq!(img.decode().unwrap(), p);
        assert_eq!(RasterImage::from_pixmap(&p).png(), img.png());
    }

    #[test]
    fn corrupt_bytes_fail_to_decode() {
        assert!(RasterImage::from_png(vec![1, 2, 3, 4]).is_err());
    }

    #[test]
    fn blend_half_alpha_black_on_white() {
        let mut p = Pixmap::filled(1, 1, Rgba::WHITE);
        p.blend_pixel(0, 0, Rgba([0, 0, 0, 128]));
        // 255 * 127 / 255 rounded
        assert_eq!(p.pixel(0, 0), Rgba([127, 127, 127, 255]));
    }

    #[test]
    fn crop_slices_rows() {
        let mut p = Pixmap::filled(4, 4, Rgba::WHITE);
        p.set_pixel(2, 3, Rgba::BLACK);
        let c = p.crop(1, 2, 2, 2);
        assert_eq!(c.pixel(1, 1), Rgba::BLACK);
        assert_eq!(c.count_pixels(|px| px == Rgba::BLACK), 1);
    }
}

