//! PNG and binary PPM (P6) decoding/encoding.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use super::image::ImageBuffer;
use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Loads an 8-bit PNG or P6 PPM. Grayscale PNGs are replicated to RGB and
/// alpha is discarded.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

pub fn decode_image(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes, path)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes, path)
    } else {
        let magic: String = bytes
            .iter()
            .take(4)
            .map(|b| format!("{b:02x}"))
            .collect();
        Err(Error::UnsupportedFormat {
            path: path.to_owned(),
            detail: format!("magic bytes {magic}"),
        })
    }
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let header_err = |e: png::DecodingError| Error::CorruptHeader {
        path: path.to_owned(),
        detail: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(header_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::CorruptHeader {
        path: path.to_owned(),
        detail: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::CorruptPayload {
            path: path.to_owned(),
            detail: e.to_string(),
        })?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let samples = &buf[..frame.buffer_size()];
    let channels = match frame.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat {
                path: path.to_owned(),
                detail: "unexpanded palette".into(),
            })
        }
    };
    let line = frame.line_size;
    let mut rgb = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let row = &samples[y * line..y * line + w * channels];
        for px in row.chunks_exact(channels) {
            match channels {
                1 | 2 => rgb.extend_from_slice(&[px[0], px[0], px[0]]),
                _ => rgb.extend_from_slice(&px[..3]),
            }
        }
    }
    ImageBuffer::from_rgb8(w, h, &rgb)
}

fn decode_ppm(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let header_err = |detail: &str| Error::CorruptHeader {
        path: path.to_owned(),
        detail: detail.to_owned(),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
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
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(header_err("expected integer"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| header_err("integer overflow"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(header_err("missing separator after maxval"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(header_err("zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_owned(),
            detail: format!("maxval {maxval} (only 8-bit supported)"),
        });
    }
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| header_err("dimensions overflow"))?;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(Error::CorruptPayload {
            path: path.to_owned(),
            detail: format!("expected {need} raster bytes, found {}", body.len()),
        });
    }
    let body = &body[..need];
    if maxval == 255 {
        ImageBuffer::from_rgb8(w, h, body)
    } else {
        if body.iter().any(|&b| b as usize > maxval) {
            return Err(Error::CorruptPayload {
                path: path.to_owned(),
                detail: format!("sample exceeds maxval {maxval}"),
            });
        }
        let data = body.iter().map(|&b| b as f32 / maxval as f32).collect();
        ImageBuffer::new(w, h, data)
    }
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    encode_png_rgb8(img.width(), img.height(), &img.to_rgb8())
}

pub fn encode_png_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(e.to_string()))?;
        writer
            .write_image_data(rgb)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_rgb8());
    out
}
