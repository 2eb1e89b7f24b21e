//! Byte stream to RGB image encoding.
//!
//! Consecutive byte triples become pixels in reading order, so the dex magic
//! `64 65 78 0A 30 33` always renders as (100,101,120), (10,48,51). Tails and
//! the final row are padded with zero bytes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::num::NonZeroUsize;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PixelError {
    #[error("cannot encode an empty byte stream")]
    EmptyInput,
    #[error("invalid image dimensions {width}x{height} for {len} channel bytes")]
    InvalidDimensions { width: usize, height: usize, len: usize },
    #[error("original length {requested} exceeds image capacity {capacity}")]
    LengthOutOfRange { requested: usize, capacity: usize },
    #[error("unsupported png format: {0}")]
    UnsupportedPngFormat(String),
    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A width x height grid of 8-bit RGB pixels, row-major, channels
/// interleaved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PixelError> {
        if width == 0 || height == 0 || width.checked_mul(height).and_then(|n| n.checked_mul(3)) != Some(data.len()) {
            return Err(PixelError::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(RgbImage { width, height, data })
    }

    /// Image filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, PixelError> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Interleaved RGB bytes, `3 * width * height` long.
    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Pixel `k` in reading order.
    pub fn pixel_at(&self, k: usize) -> [u8; 3] {
        [self.data[3 * k], self.data[3 * k + 1], self.data[3 * k + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// How the image width is chosen for a byte stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WidthPolicy {
    /// Smallest power of two not below the side of the square that holds
    /// every pixel.
    #[default]
    Auto,
    Fixed(NonZeroUsize),
}

impl WidthPolicy {
    pub fn fixed(width: usize) -> Option<Self> {
        NonZeroUsize::new(width).map(WidthPolicy::Fixed)
    }

    pub fn width_for(&self, pixel_count: usize) -> usize {
        match self {
            WidthPolicy::Auto => ceil_sqrt(pixel_count).next_power_of_two(),
            WidthPolicy::Fixed(w) => w.get(),
        }
    }
}

fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while r * r < n {
        r += 1;
    }
    r
}

pub fn encode_bytes(bytes: &[u8], policy: WidthPolicy) -> Result<RgbImage, PixelError> {
    if bytes.is_empty() {
        return Err(PixelError::EmptyInput);
    }
    let pixel_count = bytes.len().div_ceil(3);
    let width = policy.width_for(pixel_count);
    let height = pixel_count.div_ceil(width);
    let mut data = Vec::with_capacity(width * height * 3);
    data.extend_from_slice(bytes);
    data.resize(width * height * 3, 0);
    RgbImage::new(width, height, data)
}

/// Inverse of [`encode_bytes`] given the original stream length.
pub fn decode_to_bytes(image: &RgbImage, original_len: usize) -> Result<Vec<u8>, PixelError> {
    let capacity = image.data.len();
    if original_len > capacity {
        return Err(PixelError::LengthOutOfRange {
            requested: original_len,
            capacity,
        });
    }
    Ok(image.data[..original_len].to_vec())
}

/// Nearest-neighbour resampling: source index = floor(dst * src / dst_dim)
/// on each axis.
pub fn resize_nearest(image: &RgbImage, target_w: usize, target_h: usize) -> Result<RgbImage, PixelError> {
    if target_w == 0 || target_h == 0 {
        return Err(PixelError::InvalidDimensions {
            width: target_w,
            height: target_h,
            len: 0,
        });
    }
    if target_w == image.width && target_h == image.height {
        return Ok(image.clone());
    }
    let src_x: Vec<usize> = (0..target_w).map(|x| x * image.width / target_w).collect();
    let mut data = Vec::with_capacity(target_w * target_h * 3);
    for y in 0..target_h {
        let sy = y * image.height / target_h;
        let row = &image.data[sy * image.width * 3..(sy + 1) * image.width * 3];
        for &sx in &src_x {
            data.extend_from_slice(&row[sx * 3..sx * 3 + 3]);
        }
    }
    RgbImage::new(target_w, target_h, data)
}

/// `<sha256-hex>.png`, the corpus naming convention for encoded images.
pub fn png_file_name(dex_bytes: &[u8]) -> String {
    format!("{}.png", sha256_hex(dex_bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes an 8-bit RGB, non-interlaced PNG.
pub fn write_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<(), PixelError> {
    let file = File::create(path)?;
    write_png_to(image, BufWriter::new(file))
}

pub fn write_png_to<W: io::Write>(image: &RgbImage, writer: W) -> Result<(), PixelError> {
    let mut encoder = png::Encoder::new(writer, image.width as u32, image.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(png::Compression::Fast);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&image.data)?;
    writer.finish()?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage, PixelError> {
    read_png_from(BufReader::new(File::open(path)?))
}

pub fn read_png_from<R: io::BufRead + io::Seek>(reader: R) -> Result<RgbImage, PixelError> {
    let decoder = png::Decoder::new(reader);
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(PixelError::UnsupportedPngFormat(format!(
            "{:?} at {:?} bits, expected 8-bit RGB",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut data = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut data)?;
    data.truncate(frame.buffer_size());
    RgbImage::new(width, height, data)
}
