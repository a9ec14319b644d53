//! 8-bit PNG decode/encode to and from RGB buffers.

use std::io::Cursor;
use std::path::Path;

use artpress_core::imaging::{ImageBuffer, DEFAULT_MAX_SIDE};
use png::{BitDepth, ColorType, Transformations};

#[derive(Debug, thiserror::Error)]
pub enum PngError {
    #[error("PNG decode failed: {0}")]
    Decode(String),
    #[error("PNG encode failed: {0}")]
    Encode(String),
    #[error("unsupported color type {0:?}")]
    UnsupportedColorType(ColorType),
    #[error("image side {0} exceeds the maximum of {1}")]
    TooLarge(u32, u32),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Blends `c` with coverage `a` over a white background.
fn over_white(c: u8, a: u8) -> u8 {
    let (c, a) = (u32::from(c), u32::from(a));
    ((c * a + 255 * (255 - a) + 127) / 255) as u8
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer, PngError> {
    decode_png_with_limit(bytes, DEFAULT_MAX_SIDE)
}

/// Decodes any 8/16-bit PNG to RGB8; alpha is composited over white and
/// grayscale is expanded.
pub fn decode_png_with_limit(bytes: &[u8], max_side: u32) -> Result<ImageBuffer, PngError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| PngError::Decode(e.to_string()))?;
    let (w, h) = (reader.info().width, reader.info().height);
    if w > max_side || h > max_side {
        return Err(PngError::TooLarge(w.max(h), max_side));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| PngError::Decode("image too large for memory".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| PngError::Decode(e.to_string()))?;
    if info.bit_depth != BitDepth::Eight {
        return Err(PngError::UnsupportedColorType(info.color_type));
    }
    buf.truncate(info.buffer_size());
    let stride = info.line_size;
    let mut rgb = Vec::with_capacity(w as usize * h as usize * 3);
    for row in buf.chunks_exact(stride) {
        let row = &row[..w as usize * info.color_type.samples()];
        match info.color_type {
            ColorType::Rgb => rgb.extend_from_slice(row),
            ColorType::Rgba => {
                for p in row.chunks_exact(4) {
                    rgb.extend(p[..3].iter().map(|&c| over_white(c, p[3])));
                }
            }
            ColorType::Grayscale => {
                for &g in row {
                    rgb.extend([g, g, g]);
                }
            }
            ColorType::GrayscaleAlpha => {
                for p in row.chunks_exact(2) {
                    let g = over_white(p[0], p[1]);
                    rgb.extend([g, g, g]);
                }
            }
            other => return Err(PngError::UnsupportedColorType(other)),
        }
    }
    ImageBuffer::new(w, h, rgb).map_err(|e| PngError::Decode(e.to_string()))
}

/// Encodes as 8-bit RGB. Output bytes are a pure function of the buffer.
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, PngError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width(), img.height());
        encoder.set_color(ColorType::Rgb);
        encoder.set_depth(BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| PngError::Encode(e.to_string()))?;
        writer
            .write_image_data(img.pixels())
            .map_err(|e| PngError::Encode(e.to_string()))?;
        writer.finish().map_err(|e| PngError::Encode(e.to_string()))?;
    }
    Ok(out)
}

pub fn read_png(path: &Path) -> Result<ImageBuffer, PngError> {
    let bytes = std::fs::read(path).map_err(|source| PngError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_png(&bytes)
}

pub fn write_png(img: &ImageBuffer, path: &Path) -> Result<Vec<u8>, PngError> {
    let bytes = encode_png(img)?;
    std::fs::write(path, &bytes).map_err(|source| PngError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(bytes)
}
