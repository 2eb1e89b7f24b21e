//! Command-line front end. `run` is the whole program; the binary only
//! forwards `std::env::args` and exits with the returned code.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 numeric
//! failure (diverged training).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::corpus::{self, CorpusConfig, Manifest, Split};
use crate::distance::{self, LevenshteinOptions, Metric, Sample};
use crate::eval;
use crate::nn::{
    self, checkpoint, LabeledImage, Network, NetworkConfig, NnError, OptimizerConfig, OptimizerKind, TrainConfig,
};
use crate::pipeline::{self, Loaded};
use crate::pixel::{self, WidthPolicy};
use crate::{Error, Label};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "r2d2",
    version,
    about = "Encode classes.dex as RGB images, train and run the CNN detector"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode an APK or DEX as a PNG image.
    Encode(EncodeArgs),
    /// Train a model on a corpus manifest.
    Train(TrainArgs),
    /// Classify APK, DEX or PNG inputs with a trained model.
    Scan(ScanArgs),
    /// Threshold sweep of a model over a manifest split.
    Eval(EvalArgs),
    /// Pairwise distance matrix between samples.
    Distance(DistanceArgs),
    /// Generate a synthetic labeled DEX corpus.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dims {
    width: usize,
    height: usize,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let width: usize = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let height: usize = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if width == 0 || height == 0 {
        return Err("dimensions must be at least 1".into());
    }
    Ok(Dims { width, height })
}

fn parse_unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("{v} is outside [0, 1]"));
    }
    Ok(v)
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// APK or DEX file.
    input: PathBuf,
    /// Output PNG path, or an existing directory to write `<sha256>.png`.
    output: PathBuf,
    /// Fixed image width in pixels (default: power of two from the size).
    #[arg(long, env = "R2D2_WIDTH", value_parser = clap::value_parser!(u32).range(1..))]
    width: Option<u32>,
    /// Resize the encoded image (nearest neighbour) to WxH.
    #[arg(long, value_parser = parse_dims)]
    resize: Option<Dims>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Nag,
    Adagrad,
    Adadelta,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Nag => OptimizerKind::Nag,
            OptimizerArg::Adagrad => OptimizerKind::AdaGrad,
            OptimizerArg::Adadelta => OptimizerKind::AdaDelta,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus manifest (path,family,label,split).
    manifest: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV (default: <out>.log.csv).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, env = "R2D2_OPTIMIZER", default_value = "sgd")]
    optimizer: OptimizerArg,
    #[arg(long, env = "R2D2_LR", default_value_t = nn::optim::DEFAULT_LEARNING_RATE)]
    lr: f32,
    #[arg(long, env = "R2D2_EPOCHS", default_value_t = 30)]
    epochs: usize,
    #[arg(long, env = "R2D2_BATCH", default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..).map(|v| v as usize))]
    batch: usize,
    /// Seeds weight init and shuffling.
    #[arg(long, env = "R2D2_SEED", default_value_t = 42)]
    seed: u64,
    /// Network input size.
    #[arg(long, env = "R2D2_INPUT", default_value = "64x64", value_parser = parse_dims)]
    input: Dims,
    /// Do not print per-epoch progress.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[arg(long, env = "R2D2_MODEL")]
    model: PathBuf,
    #[arg(long, env = "R2D2_THRESHOLD", default_value = "0.5", value_parser = parse_unit_interval)]
    threshold: f64,
    /// Emit CSV instead of text lines.
    #[arg(long)]
    csv: bool,
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, env = "R2D2_MODEL")]
    model: PathBuf,
    manifest: PathBuf,
    /// Threshold grid start:step:end, inclusive.
    #[arg(long, default_value = "0:0.1:1")]
    sweep: String,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a gnuplot data file.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Mse,
    Rms,
    Lev,
    Sim,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mse => Metric::Mse,
            MetricArg::Rms => Metric::Rms,
            MetricArg::Lev => Metric::Levenshtein,
            MetricArg::Sim => Metric::Similarity,
        }
    }
}

#[derive(Debug, Args)]
struct DistanceArgs {
    #[arg(long, value_enum, default_value = "sim")]
    metric: MetricArg,
    /// Fixed encoding width for APK/DEX inputs.
    #[arg(long, env = "R2D2_WIDTH", default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..).map(|v| v as usize))]
    width: usize,
    /// Edit-distance byte cap.
    #[arg(long, default_value_t = distance::DEFAULT_LEVENSHTEIN_CAP)]
    lev_cap: usize,
    /// Report `skipped` instead of truncating over-cap inputs.
    #[arg(long)]
    strict: bool,
    /// Compare over-cap inputs in full with a diagonal band of this width.
    #[arg(long)]
    band: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(required = true, num_args = 2..)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    /// Family spec file; the bundled two-family reference spec when omitted.
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Samples per family.
    #[arg(long, default_value_t = 250, value_parser = clap::value_parser!(u32).range(1..).map(|v| v as usize))]
    count: usize,
    /// Training fraction.
    #[arg(long, default_value = "0.8", value_parser = parse_unit_interval)]
    split: f64,
    /// Seeds the train/test assignment.
    #[arg(long, env = "R2D2_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Nn(NnError::DivergedLoss { .. }) => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

macro_rules! impl_failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::from(Error::from(e))
            }
        }
    )*};
}
impl_failure_from!(
    std::io::Error,
    crate::pixel::PixelError,
    crate::nn::NnError,
    crate::eval::EvalError,
    crate::corpus::CorpusError,
    crate::distance::DistanceError
);

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

/// Runs the CLI with `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Encode(a) => cmd_encode(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Scan(a) => cmd_scan(a, out, err),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Distance(a) => cmd_distance(a, out),
        Command::GenCorpus(a) => cmd_gen_corpus(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn cmd_encode(a: EncodeArgs, out: &mut dyn Write) -> CmdResult {
    let start = Instant::now();
    let loaded = pipeline::load_path(&a.input)?;
    let Loaded::Dex { bytes, .. } = &loaded else {
        return Err(usage("encode expects an APK or DEX input, not an image"));
    };
    let policy = a.width.and_then(|w| WidthPolicy::fixed(w as usize)).unwrap_or_default();
    let mut image = pixel::encode_bytes(bytes, policy)?;
    if let Some(d) = a.resize {
        image = pixel::resize_nearest(&image, d.width, d.height)?;
    }
    let path = if a.output.is_dir() {
        a.output.join(pixel::png_file_name(bytes))
    } else {
        a.output.clone()
    };
    pixel::write_png(&image, &path)?;
    let elapsed = start.elapsed();
    let _ = writeln!(
        out,
        "{}: {}x{} in {:.1} ms",
        path.display(),
        image.width(),
        image.height(),
        elapsed.as_secs_f64() * 1e3
    );
    Ok(())
}

/// Loads and resizes every manifest row in parallel, preserving order.
fn load_rows(manifest: &Manifest, split: Option<Split>, dims: Dims) -> Result<Vec<LabeledImage>, Failure> {
    let rows: Vec<_> = manifest
        .rows
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    rows.par_iter()
        .map(|row| {
            let path = manifest.resolve(row);
            let loaded = pipeline::load_path(&path).map_err(|e| Failure {
                code: EXIT_INPUT,
                message: format!("{}: {e}", path.display()),
            })?;
            let image = pipeline::network_image(&loaded, dims.width, dims.height)?;
            Ok(LabeledImage {
                label: row.label,
                image,
            })
        })
        .collect()
}

fn read_manifest(path: &Path) -> Result<Manifest, Failure> {
    Manifest::read(path).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> CmdResult {
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(usage(format!("learning rate must be positive, got {}", a.lr)));
    }
    let manifest = read_manifest(&a.manifest)?;
    let train_set = load_rows(&manifest, Some(Split::Train), a.input)?;
    let eval_set = load_rows(&manifest, Some(Split::Test), a.input)?;

    let net_config = NetworkConfig::default().with_input(a.input.width, a.input.height);
    let mut network = Network::new(net_config, a.seed)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        optimizer: OptimizerConfig::new(a.optimizer.into()).with_learning_rate(a.lr),
        seed: a.seed,
    };
    let log = nn::train(&mut network, &train_set, &eval_set, &config)?;
    if !a.quiet {
        for e in &log.epochs {
            let eval = e.eval_accuracy.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "epoch {:>3}  loss {:.6}  train_acc {:.4}  eval_acc {eval}",
                e.epoch, e.loss, e.train_accuracy
            );
        }
    }
    checkpoint::save(&network, &a.out)?;
    let log_path = a.log.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    fs::write(&log_path, log.to_csv())?;
    let _ = writeln!(out, "wrote {} and {}", a.out.display(), log_path.display());
    Ok(())
}

/// Result of scanning one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanVerdict {
    pub input: PathBuf,
    pub sha256: String,
    pub probability: f64,
    pub threshold: f64,
    pub verdict: Label,
    pub encode_ms: f64,
    pub infer_ms: f64,
}

/// Loads, encodes and classifies one input, timing the two phases.
pub fn scan_one(network: &Network, path: &Path, threshold: f64) -> Result<ScanVerdict, Error> {
    let start = Instant::now();
    let loaded = pipeline::load_path(path)?;
    let image = pipeline::network_image(&loaded, network.config.input_width, network.config.input_height)?;
    let encoded = Instant::now();
    let probability = network.predict(&image)? as f64;
    let done = Instant::now();
    Ok(ScanVerdict {
        input: path.to_path_buf(),
        sha256: loaded.sha256(),
        probability,
        threshold,
        verdict: if probability >= threshold {
            Label::Malicious
        } else {
            Label::Benign
        },
        encode_ms: (encoded - start).as_secs_f64() * 1e3,
        infer_ms: (done - encoded).as_secs_f64() * 1e3,
    })
}

fn cmd_scan(a: ScanArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let network = checkpoint::load(&a.model).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", a.model.display()),
    })?;
    let results: Vec<Result<ScanVerdict, Error>> = a
        .inputs
        .par_iter()
        .map(|p| scan_one(&network, p, a.threshold))
        .collect();

    if a.csv {
        let _ = writeln!(
            out,
            "path,sha256,probability,threshold,verdict,encode_ms,infer_ms,error"
        );
    }
    let mut failures = 0;
    for (path, r) in a.inputs.iter().zip(&results) {
        match (r, a.csv) {
            (Ok(v), true) => {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{},{},{:.3},{:.3},",
                    csv_field(&v.input.display().to_string()),
                    v.sha256,
                    v.probability,
                    v.threshold,
                    v.verdict,
                    v.encode_ms,
                    v.infer_ms
                );
            }
            (Ok(v), false) => {
                let _ = writeln!(
                    out,
                    "{}\t{}\tp={:.6}\tthreshold={}\tsha256={}\tencode_ms={:.3}\tinfer_ms={:.3}",
                    v.input.display(),
                    v.verdict,
                    v.probability,
                    v.threshold,
                    v.sha256,
                    v.encode_ms,
                    v.infer_ms
                );
            }
            (Err(e), true) => {
                failures += 1;
                let _ = writeln!(
                    out,
                    "{},,,{},error,,,{}",
                    csv_field(&path.display().to_string()),
                    a.threshold,
                    csv_field(&e.to_string())
                );
            }
            (Err(e), false) => {
                failures += 1;
                let _ = writeln!(out, "{}\terror\t{e}", path.display());
            }
        }
    }
    if failures > 0 {
        let _ = writeln!(err, "{failures} of {} inputs failed", a.inputs.len());
        return Err(Failure {
            code: EXIT_INPUT,
            message: "some inputs could not be scanned".into(),
        });
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> CmdResult {
    let network = checkpoint::load(&a.model)?;
    let grid = eval::parse_sweep(&a.sweep).map_err(|e| usage(e.to_string()))?;
    let manifest = read_manifest(&a.manifest)?;
    let split = match a.split {
        SplitArg::Train => Some(Split::Train),
        SplitArg::Test => Some(Split::Test),
        SplitArg::All => None,
    };
    let dims = Dims {
        width: network.config.input_width,
        height: network.config.input_height,
    };
    let data = load_rows(&manifest, split, dims)?;
    let scores = eval::score_dataset(&network, &data)?;
    let rows = eval::threshold_sweep(&scores, &grid)?;
    let csv = eval::sweep_to_csv(&rows);
    match &a.out {
        Some(p) => fs::write(p, &csv)?,
        None => {
            let _ = out.write_all(csv.as_bytes());
        }
    }
    if let Some(p) = &a.gnuplot {
        fs::write(p, eval::sweep_to_gnuplot(&rows))?;
    }
    Ok(())
}

fn sample_id(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_distance(a: DistanceArgs, out: &mut dyn Write) -> CmdResult {
    let policy = WidthPolicy::fixed(a.width).unwrap_or_default();
    let samples: Vec<Sample> = a
        .inputs
        .par_iter()
        .map(|p| -> Result<Sample, Failure> {
            let loaded = pipeline::load_path(p).map_err(|e| Failure {
                code: EXIT_INPUT,
                message: format!("{}: {e}", p.display()),
            })?;
            let image = loaded.to_image(policy)?;
            let bytes = match loaded {
                Loaded::Dex { bytes, .. } => bytes,
                Loaded::Image(img) => img.into_bytes(),
            };
            Ok(Sample {
                id: sample_id(p),
                bytes,
                image,
            })
        })
        .collect::<Result<_, _>>()?;
    let options = LevenshteinOptions {
        cap: a.lev_cap,
        strict: a.strict,
        band: a.band,
    };
    let metric = Metric::from(a.metric);
    let matrix = distance::distance_matrix(&samples, metric, options)?;
    let ids: Vec<String> = samples.iter().map(|s| csv_field(&s.id)).collect();
    let csv = distance::matrix_to_csv(&ids, &matrix, metric);
    match &a.out {
        Some(p) => fs::write(p, &csv)?,
        None => {
            let _ = out.write_all(csv.as_bytes());
        }
    }
    Ok(())
}

fn cmd_gen_corpus(a: GenCorpusArgs, out: &mut dyn Write) -> CmdResult {
    let specs = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure {
                code: EXIT_INPUT,
                message: format!("{}: {e}", p.display()),
            })?;
            corpus::parse_family_specs(&text)?
        }
        None => corpus::reference_families(),
    };
    if specs.is_empty() {
        return Err(Failure {
            code: EXIT_INPUT,
            message: "spec file defines no families".into(),
        });
    }
    let config = CorpusConfig {
        per_family: a.count,
        train_fraction: a.split,
        split_seed: a.seed,
    };
    let manifest = corpus::generate_corpus(&specs, &config, &a.out)?;
    let train = manifest.split(Split::Train).count();
    let _ = writeln!(
        out,
        "wrote {} samples ({} train, {} test) to {}",
        manifest.rows.len(),
        train,
        manifest.rows.len() - train,
        a.out.join(corpus::MANIFEST_FILE).display()
    );
    Ok(())
}
