//! Minimal ZIP writer for fixtures the `zip` crate refuses to produce:
//! duplicate names, unknown methods, flag bits, raw payloads.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;

#[derive(Debug, Clone)]
pub struct Entry {
    pub name: String,
    pub method: u16,
    pub flags: u16,
    pub crc32: u32,
    pub uncompressed_size: u32,
    /// Bytes as they appear in the archive.
    pub payload: Vec<u8>,
}

pub fn stored(name: &str, data: &[u8]) -> Entry {
    Entry {
        name: name.to_owned(),
        method: 0,
        flags: 0,
        crc32: crc32fast::hash(data),
        uncompressed_size: data.len() as u32,
        payload: data.to_vec(),
    }
}

pub fn deflated(name: &str, data: &[u8]) -> Entry {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    enc.write_all(data).unwrap();
    Entry {
        method: 8,
        payload: enc.finish().unwrap(),
        ..stored(name, data)
    }
}

/// Offsets of each entry's payload within the built archive.
pub struct Built {
    pub bytes: Vec<u8>,
    pub payload_offsets: Vec<usize>,
    pub central_directory_offset: usize,
}

pub fn build(entries: &[Entry]) -> Built {
    let mut out = Vec::new();
    let mut locals = Vec::new();
    let mut payload_offsets = Vec::new();
    for e in entries {
        locals.push(out.len() as u32);
        out.extend_from_slice(&0x0403_4b50u32.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes());
        out.extend_from_slice(&e.flags.to_le_bytes());
        out.extend_from_slice(&e.method.to_le_bytes());
        out.extend_from_slice(&[0; 4]); // time, date
        out.extend_from_slice(&e.crc32.to_le_bytes());
        out.extend_from_slice(&(e.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&e.uncompressed_size.to_le_bytes());
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        payload_offsets.push(out.len());
        out.extend_from_slice(&e.payload);
    }
    let cd_start = out.len();
    for (e, &local) in entries.iter().zip(&locals) {
        out.extend_from_slice(&central_record(e, local));
    }
    let cd_len = out.len() - cd_start;
    out.extend_from_slice(&eocd(entries.len() as u16, cd_len as u32, cd_start as u32, b""));
    Built {
        bytes: out,
        payload_offsets,
        central_directory_offset: cd_start,
    }
}

pub fn central_record(e: &Entry, local_offset: u32) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0x0201_4b50u32.to_le_bytes());
    out.extend_from_slice(&20u16.to_le_bytes());
    out.extend_from_slice(&20u16.to_le_bytes());
    out.extend_from_slice(&e.flags.to_le_bytes());
    out.extend_from_slice(&e.method.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&e.crc32.to_le_bytes());
    out.extend_from_slice(&(e.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&e.uncompressed_size.to_le_bytes());
    out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
    out.extend_from_slice(&[0; 8]); // extra len, comment len, disk, internal attrs
    out.extend_from_slice(&[0; 4]); // external attrs
    out.extend_from_slice(&local_offset.to_le_bytes());
    out.extend_from_slice(e.name.as_bytes());
    out
}

pub fn eocd(count: u16, cd_len: u32, cd_offset: u32, comment: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0x0605_4b50u32.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&cd_len.to_le_bytes());
    out.extend_from_slice(&cd_offset.to_le_bytes());
    out.extend_from_slice(&(comment.len() as u16).to_le_bytes());
    out.extend_from_slice(comment);
    out
}

/// An APK-shaped archive written by the `zip` crate.
pub fn apk_with_zip_crate(dex: &[u8], deflate_dex: bool) -> Vec<u8> {
    use zip::write::SimpleFileOptions;
    use zip::CompressionMethod;

    let mut w = zip::ZipWriter::new(std::io::Cursor::new(Vec::new()));
    let deflate = SimpleFileOptions::default().compression_method(CompressionMethod::Deflated);
    let store = SimpleFileOptions::default().compression_method(CompressionMethod::Stored);
    w.start_file("AndroidManifest.xml", deflate).unwrap();
    w.write_all(b"<manifest package=\"org.example\"/>").unwrap();
    w.start_file("classes.dex", if deflate_dex { deflate } else { store })
        .unwrap();
    w.write_all(dex).unwrap();
    w.start_file("res/layout/main.xml", deflate).unwrap();
    w.write_all(&[b'x'; 300]).unwrap();
    w.start_file("resources.arsc", store).unwrap();
    w.write_all(&[1, 2, 3, 4]).unwrap();
    w.finish().unwrap().into_inner()
}
