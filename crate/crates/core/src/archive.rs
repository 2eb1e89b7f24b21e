//! Read-only ZIP reader, just enough to pull `classes.dex` out of an APK.
//!
//! Only the End-Of-Central-Directory record and the central directory are
//! read when an archive is opened. Entry payloads are read on demand by
//! [`ArchiveIndex::extract`], so indexing a large APK costs a few kilobytes
//! of I/O. Stored (0) and deflate (8) entries are supported; zip64 and
//! encrypted entries are refused.

use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::DeflateDecoder;
use thiserror::Error;

const EOCD_SIGNATURE: u32 = 0x0605_4b50;
const CENTRAL_HEADER_SIGNATURE: u32 = 0x0201_4b50;
const LOCAL_HEADER_SIGNATURE: u32 = 0x0403_4b50;
const ZIP64_LOCATOR_SIGNATURE: u32 = 0x0706_4b50;

const EOCD_LEN: usize = 22;
const CENTRAL_HEADER_LEN: usize = 46;
const LOCAL_HEADER_LEN: usize = 30;
/// EOCD record plus the longest possible archive comment.
pub const EOCD_SEARCH_WINDOW: u64 = EOCD_LEN as u64 + u16::MAX as u64;

pub const METHOD_STORED: u16 = 0;
pub const METHOD_DEFLATE: u16 = 8;

const FLAG_ENCRYPTED: u16 = 0x0001;

/// Name of the Dalvik executable inside an APK.
pub const CLASSES_DEX: &str = "classes.dex";

/// Why an archive or entry was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unsupported {
    Compression(u16),
    Encrypted,
    Zip64,
}

impl std::fmt::Display for Unsupported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unsupported::Compression(m) => write!(f, "compression method {m}"),
            Unsupported::Encrypted => f.write_str("encrypted entry"),
            Unsupported::Zip64 => f.write_str("zip64 archive"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a zip archive (no end-of-central-directory record)")]
    NotZip,
    #[error("archive is truncated: {0}")]
    TruncatedArchive(&'static str),
    #[error("malformed central directory at offset {offset}")]
    BadCentralDirectory { offset: u64 },
    #[error("malformed local header for entry {name:?}")]
    BadLocalHeader { name: String },
    #[error("entry {0:?} not found")]
    EntryNotFound(String),
    #[error("archive has no classes.dex entry")]
    NoClassesDex,
    #[error("unsupported: {0}")]
    UnsupportedMethod(Unsupported),
    #[error("stored entry {name:?} has compressed size {compressed} != uncompressed size {uncompressed}")]
    StoredSizeMismatch {
        name: String,
        compressed: u64,
        uncompressed: u64,
    },
    #[error("corrupt deflate stream in entry {name:?}")]
    CorruptDeflateStream { name: String },
    #[error("crc mismatch in entry {name:?}: expected {expected:#010x}, got {actual:#010x}")]
    CrcMismatch { name: String, expected: u32, actual: u32 },
}

/// One central-directory record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveEntry {
    pub name: String,
    pub method: u16,
    pub flags: u16,
    pub compressed_size: u64,
    pub uncompressed_size: u64,
    pub crc32: u32,
    pub local_header_offset: u64,
}

impl ArchiveEntry {
    pub fn is_encrypted(&self) -> bool {
        self.flags & FLAG_ENCRYPTED != 0
    }
}

#[derive(Debug, Clone)]
enum Source {
    File(PathBuf),
    Memory(Arc<[u8]>),
}

impl Source {
    fn read_at(&self, offset: u64, len: usize) -> Result<Vec<u8>, ArchiveError> {
        match self {
            Source::File(path) => {
                let mut file = File::open(path)?;
                let file_len = file.metadata()?.len();
                if offset.checked_add(len as u64).is_none_or(|end| end > file_len) {
                    return Err(ArchiveError::TruncatedArchive("entry data extends past end of file"));
                }
                file.seek(SeekFrom::Start(offset))?;
                let mut buf = vec![0u8; len];
                file.read_exact(&mut buf).map_err(|e| match e.kind() {
                    io::ErrorKind::UnexpectedEof => {
                        ArchiveError::TruncatedArchive("entry data extends past end of file")
                    }
                    _ => ArchiveError::Io(e),
                })?;
                Ok(buf)
            }
            Source::Memory(bytes) => {
                let start = usize::try_from(offset)
                    .ok()
                    .filter(|&s| s <= bytes.len())
                    .ok_or(ArchiveError::TruncatedArchive("offset past end of archive"))?;
                let end = start
                    .checked_add(len)
                    .filter(|&e| e <= bytes.len())
                    .ok_or(ArchiveError::TruncatedArchive("entry data extends past end of archive"))?;
                Ok(bytes[start..end].to_vec())
            }
        }
    }
}

/// Parsed central directory. Immutable; extraction re-reads the source, so
/// one index can serve concurrent `extract` calls.
#[derive(Debug, Clone)]
pub struct ArchiveIndex {
    source: Source,
    entries: Vec<ArchiveEntry>,
}

/// Opens `path` and parses its central directory.
pub fn open_archive(path: impl AsRef<Path>) -> Result<ArchiveIndex, ArchiveError> {
    ArchiveIndex::open(path)
}

/// Convenience wrapper: open `path` and extract `classes.dex`.
pub fn extract_classes_dex(path: impl AsRef<Path>) -> Result<Vec<u8>, ArchiveError> {
    open_archive(path)?.extract_classes_dex()
}

impl ArchiveIndex {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ArchiveError> {
        let path = path.as_ref();
        let mut file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let window = file_len.min(EOCD_SEARCH_WINDOW);
        file.seek(SeekFrom::Start(file_len - window))?;
        let mut tail = vec![0u8; window as usize];
        file.read_exact(&mut tail)?;

        let source = Source::File(path.to_path_buf());
        let entries = parse_directory(&tail, file_len, |offset, len| source.read_at(offset, len))?;
        Ok(ArchiveIndex { source, entries })
    }

    /// Indexes an archive held in memory.
    pub fn from_bytes(bytes: impl Into<Arc<[u8]>>) -> Result<Self, ArchiveError> {
        let bytes: Arc<[u8]> = bytes.into();
        let file_len = bytes.len() as u64;
        let window = file_len.min(EOCD_SEARCH_WINDOW) as usize;
        let tail = &bytes[bytes.len() - window..];
        let source = Source::Memory(Arc::clone(&bytes));
        let entries = parse_directory(tail, file_len, |offset, len| source.read_at(offset, len))?;
        Ok(ArchiveIndex { source, entries })
    }

    /// Entries in central-directory order.
    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up an entry by exact name. Duplicate names resolve to the last
    /// central-directory occurrence.
    pub fn find(&self, name: &str) -> Option<&ArchiveEntry> {
        self.entries.iter().rev().find(|e| e.name == name)
    }

    pub fn extract(&self, name: &str) -> Result<Vec<u8>, ArchiveError> {
        let entry = self
            .find(name)
            .ok_or_else(|| ArchiveError::EntryNotFound(name.to_owned()))?;
        self.extract_entry(entry)
    }

    pub fn extract_classes_dex(&self) -> Result<Vec<u8>, ArchiveError> {
        match self.extract(CLASSES_DEX) {
            Err(ArchiveError::EntryNotFound(_)) => Err(ArchiveError::NoClassesDex),
            other => other,
        }
    }

    fn extract_entry(&self, entry: &ArchiveEntry) -> Result<Vec<u8>, ArchiveError> {
        if entry.is_encrypted() {
            return Err(ArchiveError::UnsupportedMethod(Unsupported::Encrypted));
        }
        if entry.compressed_size == u32::MAX as u64
            || entry.uncompressed_size == u32::MAX as u64
            || entry.local_header_offset == u32::MAX as u64
        {
            return Err(ArchiveError::UnsupportedMethod(Unsupported::Zip64));
        }
        if entry.method != METHOD_STORED && entry.method != METHOD_DEFLATE {
            return Err(ArchiveError::UnsupportedMethod(Unsupported::Compression(entry.method)));
        }

        let local = self.source.read_at(entry.local_header_offset, LOCAL_HEADER_LEN)?;
        if le_u32(&local, 0) != LOCAL_HEADER_SIGNATURE {
            return Err(ArchiveError::BadLocalHeader {
                name: entry.name.clone(),
            });
        }
        let name_len = le_u16(&local, 26) as u64;
        let extra_len = le_u16(&local, 28) as u64;
        let data_offset = entry.local_header_offset + LOCAL_HEADER_LEN as u64 + name_len + extra_len;
        let compressed = self.source.read_at(data_offset, entry.compressed_size as usize)?;

        let data = match entry.method {
            METHOD_STORED => {
                if entry.compressed_size != entry.uncompressed_size {
                    return Err(ArchiveError::StoredSizeMismatch {
                        name: entry.name.clone(),
                        compressed: entry.compressed_size,
                        uncompressed: entry.uncompressed_size,
                    });
                }
                compressed
            }
            _ => inflate(&compressed, entry)?,
        };

        let actual = crc32fast::hash(&data);
        if actual != entry.crc32 {
            return Err(ArchiveError::CrcMismatch {
                name: entry.name.clone(),
                expected: entry.crc32,
                actual,
            });
        }
        Ok(data)
    }
}

fn inflate(compressed: &[u8], entry: &ArchiveEntry) -> Result<Vec<u8>, ArchiveError> {
    let corrupt = || ArchiveError::CorruptDeflateStream {
        name: entry.name.clone(),
    };
    let expected = entry.uncompressed_size as usize;
    let mut decoder = DeflateDecoder::new(compressed);
    // One byte of headroom so an oversized stream is detected without
    // inflating it completely.
    let mut out = Vec::with_capacity(expected.min(64 << 20));
    (&mut decoder)
        .take(expected as u64 + 1)
        .read_to_end(&mut out)
        .map_err(|_| corrupt())?;
    if out.len() != expected || decoder.total_in() != compressed.len() as u64 {
        return Err(corrupt());
    }
    Ok(out)
}

fn parse_directory<F>(tail: &[u8], file_len: u64, read_at: F) -> Result<Vec<ArchiveEntry>, ArchiveError>
where
    F: Fn(u64, usize) -> Result<Vec<u8>, ArchiveError>,
{
    let eocd_at = find_eocd(tail).ok_or(ArchiveError::NotZip)?;
    let eocd = &tail[eocd_at..];
    let tail_start = file_len - tail.len() as u64;

    if eocd_at >= 20 && le_u32(tail, eocd_at - 20) == ZIP64_LOCATOR_SIGNATURE {
        return Err(ArchiveError::UnsupportedMethod(Unsupported::Zip64));
    }

    let disk = le_u16(eocd, 4);
    let cd_disk = le_u16(eocd, 6);
    let entries_on_disk = le_u16(eocd, 8);
    let total_entries = le_u16(eocd, 10);
    let cd_size = le_u32(eocd, 12);
    let cd_offset = le_u32(eocd, 16);

    if total_entries == u16::MAX || cd_size == u32::MAX || cd_offset == u32::MAX {
        return Err(ArchiveError::UnsupportedMethod(Unsupported::Zip64));
    }
    if disk != 0 || cd_disk != 0 || entries_on_disk != total_entries {
        // Spanned archives are not APKs.
        return Err(ArchiveError::BadCentralDirectory {
            offset: tail_start + eocd_at as u64,
        });
    }

    let cd_end = cd_offset as u64 + cd_size as u64;
    if cd_end > tail_start + eocd_at as u64 {
        return Err(ArchiveError::TruncatedArchive(
            "central directory extends past end of file",
        ));
    }

    let cd = read_at(cd_offset as u64, cd_size as usize)?;
    let mut entries = Vec::with_capacity(total_entries as usize);
    let mut pos = 0usize;
    for _ in 0..total_entries {
        let here = cd_offset as u64 + pos as u64;
        if pos + CENTRAL_HEADER_LEN > cd.len() {
            return Err(ArchiveError::TruncatedArchive("central directory record cut short"));
        }
        let rec = &cd[pos..];
        if le_u32(rec, 0) != CENTRAL_HEADER_SIGNATURE {
            return Err(ArchiveError::BadCentralDirectory { offset: here });
        }
        let flags = le_u16(rec, 8);
        let method = le_u16(rec, 10);
        let crc32 = le_u32(rec, 16);
        let compressed_size = le_u32(rec, 20) as u64;
        let uncompressed_size = le_u32(rec, 24) as u64;
        let name_len = le_u16(rec, 28) as usize;
        let extra_len = le_u16(rec, 30) as usize;
        let comment_len = le_u16(rec, 32) as usize;
        let local_header_offset = le_u32(rec, 42) as u64;

        let record_len = CENTRAL_HEADER_LEN + name_len + extra_len + comment_len;
        if pos + record_len > cd.len() {
            return Err(ArchiveError::TruncatedArchive("central directory record cut short"));
        }
        let name_bytes = &rec[CENTRAL_HEADER_LEN..CENTRAL_HEADER_LEN + name_len];
        entries.push(ArchiveEntry {
            name: String::from_utf8_lossy(name_bytes).into_owned(),
            method,
            flags,
            compressed_size,
            uncompressed_size,
            crc32,
            local_header_offset,
        });
        pos += record_len;
    }
    Ok(entries)
}

/// Scans backwards for an EOCD signature whose comment length reaches
/// exactly to the end of the buffer; falls back to the last signature whose
/// comment at least fits.
fn find_eocd(tail: &[u8]) -> Option<usize> {
    if tail.len() < EOCD_LEN {
        return None;
    }
    let mut fallback = None;
    for at in (0..=tail.len() - EOCD_LEN).rev() {
        if le_u32(tail, at) != EOCD_SIGNATURE {
            continue;
        }
        let comment_len = le_u16(tail, at + 20) as usize;
        let end = at + EOCD_LEN + comment_len;
        if end == tail.len() {
            return Some(at);
        }
        if end < tail.len() && fallback.is_none() {
            fallback = Some(at);
        }
    }
    fallback
}

fn le_u16(buf: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([buf[at], buf[at + 1]])
}

fn le_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([buf[at], buf[at + 1], buf[at + 2], buf[at + 3]])
}
