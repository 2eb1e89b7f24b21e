//! Input loading shared by the CLI and the FFI layer: detect whether a file
//! is an APK, a bare DEX or an already-encoded PNG, and turn it into the
//! network's input image.

use std::fs;
use std::path::Path;

use crate::archive::ArchiveIndex;
use crate::dex::{self, parse_dex};
use crate::pixel::{self, encode_bytes, resize_nearest, RgbImage, WidthPolicy};
use crate::Error;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Apk,
    Dex,
    Png,
}

/// Sniffs the leading bytes. Anything that is neither a PNG nor a DEX is
/// treated as an archive and left for the ZIP reader to reject.
pub fn detect_kind(head: &[u8]) -> InputKind {
    if head.starts_with(&PNG_SIGNATURE) {
        InputKind::Png
    } else if dex::has_dex_magic(head) {
        InputKind::Dex
    } else {
        InputKind::Apk
    }
}

/// The payload of one input file.
#[derive(Debug, Clone)]
pub enum Loaded {
    /// Validated `classes.dex` bytes from an APK or a bare DEX.
    Dex {
        kind: InputKind,
        bytes: Vec<u8>,
    },
    Image(RgbImage),
}

impl Loaded {
    /// The raw byte stream compared by edit distance: dex bytes, or an
    /// image's channel bytes.
    pub fn stream(&self) -> &[u8] {
        match self {
            Loaded::Dex { bytes, .. } => bytes,
            Loaded::Image(img) => img.as_bytes(),
        }
    }

    /// SHA-256 of the dex (or of the pixel payload for PNG inputs).
    pub fn sha256(&self) -> String {
        pixel::sha256_hex(self.stream())
    }

    pub fn to_image(&self, policy: WidthPolicy) -> Result<RgbImage, Error> {
        match self {
            Loaded::Dex { bytes, .. } => Ok(encode_bytes(bytes, policy)?),
            Loaded::Image(img) => Ok(img.clone()),
        }
    }
}

pub fn load_bytes(bytes: Vec<u8>) -> Result<Loaded, Error> {
    match detect_kind(&bytes) {
        InputKind::Png => Ok(Loaded::Image(pixel::read_png_from(std::io::Cursor::new(bytes))?)),
        InputKind::Dex => Ok(Loaded::Dex {
            kind: InputKind::Dex,
            bytes: parse_dex(bytes)?.into_bytes(),
        }),
        InputKind::Apk => {
            let index = ArchiveIndex::from_bytes(bytes)?;
            let dex_bytes = index.extract_classes_dex()?;
            Ok(Loaded::Dex {
                kind: InputKind::Apk,
                bytes: parse_dex(dex_bytes)?.into_bytes(),
            })
        }
    }
}

/// Loads a file. APKs are indexed lazily from disk, so only the central
/// directory and `classes.dex` are read.
pub fn load_path(path: impl AsRef<Path>) -> Result<Loaded, Error> {
    let path = path.as_ref();
    let mut head = [0u8; 8];
    let n = {
        use std::io::Read;
        let mut f = fs::File::open(path)?;
        let mut filled = 0;
        while filled < head.len() {
            match f.read(&mut head[filled..])? {
                0 => break,
                k => filled += k,
            }
        }
        filled
    };
    match detect_kind(&head[..n]) {
        InputKind::Apk => {
            let dex_bytes = crate::archive::extract_classes_dex(path)?;
            Ok(Loaded::Dex {
                kind: InputKind::Apk,
                bytes: parse_dex(dex_bytes)?.into_bytes(),
            })
        }
        _ => load_bytes(fs::read(path)?),
    }
}

/// Encodes (Auto width) and nearest-neighbour resizes to the network input.
pub fn network_image(loaded: &Loaded, width: usize, height: usize) -> Result<RgbImage, Error> {
    let img = loaded.to_image(WidthPolicy::Auto)?;
    Ok(resize_nearest(&img, width, height)?)
}

/// Same as [`network_image`] for a raw byte stream.
pub fn bytes_to_network_image(bytes: &[u8], width: usize, height: usize) -> Result<RgbImage, Error> {
    Ok(resize_nearest(&encode_bytes(bytes, WidthPolicy::Auto)?, width, height)?)
}
