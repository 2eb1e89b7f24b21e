//! DEX header validation.
//!
//! Only the fixed 0x70-byte header is decoded. The encoder consumes the raw
//! byte stream, so string/type/method tables are never parsed.

use thiserror::Error;

pub const HEADER_SIZE: usize = 0x70;
pub const ENDIAN_CONSTANT: u32 = 0x1234_5678;
/// `dex\n03`, the fixed part of the magic. Byte 6 is the last version digit.
pub const MAGIC_PREFIX: [u8; 6] = [0x64, 0x65, 0x78, 0x0A, 0x30, 0x33];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DexError {
    #[error("input is {len} bytes, shorter than the {HEADER_SIZE}-byte dex header")]
    TooShort { len: usize },
    #[error("bad dex magic {0:02x?}")]
    BadMagic([u8; 8]),
    #[error("header file_size {header} does not match actual length {actual}")]
    SizeMismatch { header: u32, actual: usize },
    #[error("adler32 checksum mismatch: header {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DexOptions {
    /// Recompute the adler32 checksum and reject mismatches.
    pub strict: bool,
}

impl DexOptions {
    pub fn strict() -> Self {
        DexOptions { strict: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DexHeader {
    pub magic: [u8; 8],
    /// Adler32 of `bytes[12..file_size]`.
    pub checksum: u32,
    /// SHA-1 of `bytes[32..file_size]`, as stored. Never recomputed.
    pub signature: [u8; 20],
    pub file_size: u32,
    pub header_size: u32,
    pub endian_tag: u32,
}

impl DexHeader {
    /// Format version from the magic, e.g. 35 for `dex\n035\0`.
    pub fn version(&self) -> u32 {
        (self.magic[4] - b'0') as u32 * 100 + (self.magic[5] - b'0') as u32 * 10 + (self.magic[6] - b'0') as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DexFile {
    header: DexHeader,
    bytes: Vec<u8>,
}

impl DexFile {
    pub fn header(&self) -> &DexHeader {
        &self.header
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Lenient parse: magic and length only.
pub fn parse_dex(bytes: Vec<u8>) -> Result<DexFile, DexError> {
    parse_dex_with(bytes, DexOptions::default())
}

pub fn parse_dex_with(bytes: Vec<u8>, options: DexOptions) -> Result<DexFile, DexError> {
    let header = parse_header(&bytes)?;
    if header.file_size as usize != bytes.len() {
        return Err(DexError::SizeMismatch {
            header: header.file_size,
            actual: bytes.len(),
        });
    }
    if options.strict {
        let computed = adler32(&bytes[12..]);
        if computed != header.checksum {
            return Err(DexError::ChecksumMismatch {
                stored: header.checksum,
                computed,
            });
        }
    }
    Ok(DexFile { header, bytes })
}

/// True when `bytes` starts with a dex magic of an accepted version.
pub fn has_dex_magic(bytes: &[u8]) -> bool {
    bytes.len() >= 8 && is_valid_magic(bytes[..8].try_into().unwrap())
}

fn is_valid_magic(magic: &[u8; 8]) -> bool {
    magic[..6] == MAGIC_PREFIX && (b'5'..=b'9').contains(&magic[6]) && magic[7] == 0
}

fn parse_header(bytes: &[u8]) -> Result<DexHeader, DexError> {
    if bytes.len() < HEADER_SIZE {
        return Err(DexError::TooShort { len: bytes.len() });
    }
    let magic: [u8; 8] = bytes[..8].try_into().unwrap();
    if !is_valid_magic(&magic) {
        return Err(DexError::BadMagic(magic));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    Ok(DexHeader {
        magic,
        checksum: u32_at(8),
        signature: bytes[12..32].try_into().unwrap(),
        file_size: u32_at(32),
        header_size: u32_at(36),
        endian_tag: u32_at(40),
    })
}

const ADLER_MOD: u32 = 65_521;
// Largest n such that 255 * n * (n + 1) / 2 + (n + 1) * (ADLER_MOD - 1) fits in u32.
const ADLER_NMAX: usize = 5552;

pub fn adler32(bytes: &[u8]) -> u32 {
    let (mut a, mut b) = (1u32, 0u32);
    for chunk in bytes.chunks(ADLER_NMAX) {
        for &byte in chunk {
            a += byte as u32;
            b += a;
        }
        a %= ADLER_MOD;
        b %= ADLER_MOD;
    }
    (b << 16) | a
}
