//! Android malware detection from `classes.dex` rendered as an RGB image.
//!
//! The pipeline: [`archive`] pulls `classes.dex` out of an APK, [`dex`]
//! validates it, [`pixel`] maps consecutive byte triples to pixels, [`nn`]
//! classifies the image with a small inception-style CNN, [`eval`] scores
//! the classifier and [`distance`] measures sample similarity. [`corpus`]
//! generates synthetic labeled DEX files to exercise all of it.

pub mod archive;
pub mod cli;
pub mod corpus;
pub mod dex;
pub mod distance;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod pixel;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    /// Class index in the network output.
    pub fn index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malicious => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benign" => Ok(Label::Benign),
            "malicious" => Ok(Label::Malicious),
            _ => Err(format!("unknown label {s:?} (expected benign or malicious)")),
        }
    }
}

/// Any error the pipeline can produce.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Archive(#[from] archive::ArchiveError),
    #[error(transparent)]
    Dex(#[from] dex::DexError),
    #[error(transparent)]
    Pixel(#[from] pixel::PixelError),
    #[error(transparent)]
    Distance(#[from] distance::DistanceError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
