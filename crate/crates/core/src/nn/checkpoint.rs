//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "R2D2"                       4 bytes
//! version                      u32 (= 1)
//! input_width, input_height    u32, u32
//! stem_channels                u32
//! inception widths             6 x u32 (1x1, reduce3, 3x3, reduce5, 5x5, pool proj)
//! classes                      u32 (= 2)
//! tensor_count                 u32
//! per tensor: rank u32, dims rank x u32, values f32 x product(dims)
//! crc32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::network::CLASSES;
use super::{InceptionConfig, Network, NetworkConfig, NnError, Tensor};

pub const MAGIC: &[u8; 4] = b"R2D2";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(network: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let c = &network.config;
    let i = &c.inception;
    let header = [
        FORMAT_VERSION,
        c.input_width as u32,
        c.input_height as u32,
        c.stem_channels as u32,
        i.branch1x1 as u32,
        i.reduce3x3 as u32,
        i.out3x3 as u32,
        i.reduce5x5 as u32,
        i.out5x5 as u32,
        i.pool_proj as u32,
        CLASSES as u32,
    ];
    for v in header {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let params = network.parameters();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for t in params {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32, NnError> {
        let bytes = self
            .buf
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| NnError::BadCheckpoint("unexpected end of data".into()))?;
        self.pos += 4;
        Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, NnError> {
        self.u32().map(|v| v as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network, NnError> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..4] != MAGIC {
        return Err(NnError::BadCheckpoint("missing R2D2 magic".into()));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(NnError::CheckpointCrcMismatch { stored, actual });
    }

    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(NnError::BadCheckpoint(format!("unsupported format version {version}")));
    }
    let config = NetworkConfig {
        input_width: r.usize()?,
        input_height: r.usize()?,
        stem_channels: r.usize()?,
        inception: InceptionConfig {
            branch1x1: r.usize()?,
            reduce3x3: r.usize()?,
            out3x3: r.usize()?,
            reduce5x5: r.usize()?,
            out5x5: r.usize()?,
            pool_proj: r.usize()?,
        },
    };
    let classes = r.usize()?;
    if classes != CLASSES {
        return Err(NnError::BadCheckpoint(format!("{classes} classes, expected {CLASSES}")));
    }
    config.validate().map_err(|e| NnError::BadCheckpoint(e.to_string()))?;

    let mut network = Network::new(config, 0)?;
    let count = r.usize()?;
    let mut params = network.parameters_mut();
    if count != params.len() {
        return Err(NnError::BadCheckpoint(format!(
            "{count} tensors, expected {}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let rank = r.usize()?;
        if rank > 4 {
            return Err(NnError::BadCheckpoint(format!("tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        if shape != p.shape() {
            return Err(NnError::BadCheckpoint(format!(
                "tensor shape {shape:?}, expected {:?}",
                p.shape()
            )));
        }
        let len = p.len();
        let raw = body
            .get(r.pos..r.pos + 4 * len)
            .ok_or_else(|| NnError::BadCheckpoint("unexpected end of data".into()))?;
        r.pos += 4 * len;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        **p = Tensor::new(shape, values)?;
    }
    if r.pos != body.len() {
        return Err(NnError::BadCheckpoint("trailing bytes after parameters".into()));
    }
    Ok(network)
}

pub fn save(network: &Network, path: impl AsRef<Path>) -> Result<(), NnError> {
    fs::write(path, to_bytes(network))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network, NnError> {
    from_bytes(&fs::read(path)?)
}
