//! 8-bit gray/RGB images and lossless PNG I/O.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, ParseError, Result};

const FORMAT: &str = "png";

/// Row-major 8-bit image with 1 (gray) or 3 (sRGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image8 {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Image8 {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("channels must be 1 or 3, got {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{}x{}x{} image needs {expected} bytes, got {}",
                width,
                height,
                channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
    }

    pub fn from_fn(width: u32, height: u32, channels: u8, mut f: impl FnMut(u32, u32, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize * channels as usize);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels as usize {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let start = (y as usize * self.width as usize + x as usize) * c;
        &self.data[start..start + c]
    }

    pub fn same_shape(&self, other: &Image8) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Image8> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| {
        Error::Parse(ParseError {
            message: format!("{}: {}", path.display(), e.message),
            ..e
        })
    })
}

/// Decodes 8-bit gray or RGB PNG data. Other bit depths, palettes and alpha
/// channels are rejected.
pub fn decode_png(bytes: &[u8]) -> Result<Image8, ParseError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ParseError::new(FORMAT, format!("invalid PNG: {e}")))?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    let channels = match (color, depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => 1,
        (png::ColorType::Rgb, png::BitDepth::Eight) => 3,
        _ => {
            return Err(ParseError::new(
                FORMAT,
                format!("unsupported bit depth/format: {color:?} at {depth:?} bits"),
            ));
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ParseError::new(FORMAT, "image too large"))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ParseError::new(FORMAT, format!("invalid PNG data: {e}")))?;
    let row = frame.width as usize * channels as usize;
    let mut data = Vec::with_capacity(row * frame.height as usize);
    for y in 0..frame.height as usize {
        let start = y * frame.line_size;
        data.extend_from_slice(&buf[start..start + row]);
    }
    Image8::new(frame.width, frame.height, channels, data).map_err(|e| ParseError::new(FORMAT, e.to_string()))
}

pub fn encode_png(image: &Image8) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width, image.height);
        encoder.set_color(if image.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::invalid(format!("PNG encoding failed: {e}")))?;
        writer
            .write_image_data(&image.data)
            .map_err(|e| Error::invalid(format!("PNG encoding failed: {e}")))?;
    }
    Ok(out)
}

pub fn write_png(image: &Image8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_round_trip() {
        let img = Image8::new(2, 2, 3, vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]).unwrap();
        assert_eq!(decode_png(&encode_png(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn gray_zero() {
        let img = Image8::filled(1, 1, 1, 0).unwrap();
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!(back.data(), &[0]);
    }

    #[test]
    fn sixteen_bit_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            enc.write_header().unwrap().write_image_data(&[0, 0]).unwrap();
        }
        let err = decode_png(&out).unwrap_err();
        assert!(err.message.contains("unsupported bit depth/format"));
    }

    #[test]
    fn palette_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_palette(vec![0u8, 0, 0]);
            enc.write_header().unwrap().write_image_data(&[0]).unwrap();
        }
        assert!(decode_png(&out).unwrap_err().message.contains("unsupported bit depth/format"));
    }

    #[test]
    fn bad_shape() {
        assert!(Image8::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(Image8::new(2, 2, 2, vec![0; 8]).is_err());
    }
}
