use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use mvrd_core::codec::{decode, encode_frame, EncoderConfig, RateMode, DEFAULT_KAPPA};
use mvrd_core::features::{FeatureProvider, Vgg11Features, ZeroFeatures};
use mvrd_core::frame::{encode_pgm, load_image, store_image, CtuGrid, Frame};
use mvrd_core::metrics::{bd_rate, format_psnr, psnr};
use mvrd_core::msfd::{mse, MultiScaleConfig};
use mvrd_core::rate_control::DEFAULT_ALPHA;
use mvrd_core::report::{calibrate_beta, parse_rd_csv, sweep, sweep_csv};
use mvrd_core::roim::{BoxDocument, BoxSet, RoimMap};
use mvrd_core::{Error, ErrorClass};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

/// Machine-vision-aware rate-distortion toolkit.
#[derive(Parser)]
#[command(name = "mvrd", version, about)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a ROIM document from an image and a box document.
    RoimBuild {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long, default_value_t = 64)]
        ctu: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encode a PGM image.
    Encode {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        roim: Option<PathBuf>,
        /// Picture budget in bits per pixel.
        #[arg(long, conflicts_with = "qp", required_unless_present = "qp")]
        target_bpp: Option<f64>,
        /// Code every CTU at this QP instead of following a budget.
        #[arg(long)]
        qp: Option<i32>,
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(short, long)]
        output: PathBuf,
        /// Per-CTU statistics CSV.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Final QP map as a PGM (QP·5 per pixel).
        #[arg(long)]
        qp_map: Option<PathBuf>,
        /// Encoder reconstruction as a PGM.
        #[arg(long)]
        recon: Option<PathBuf>,
    },
    /// Decode a bitstream to a PGM image.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// PSNR and MSE between two images, and bpp of an optional bitstream.
    Metrics {
        #[arg(long)]
        orig: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        bitstream: Option<PathBuf>,
    },
    /// Encode at several target rates and emit one rate-quality row per rate.
    Sweep {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        roim: Option<PathBuf>,
        /// Comma-separated bpp targets.
        #[arg(long, value_delimiter = ',', required = true)]
        target_bpp: Vec<f64>,
        #[command(flatten)]
        codec: CodecArgs,
        /// CSV destination; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Bjontegaard delta rate of a test curve against an anchor curve.
    BdRate {
        /// CSV with rate and quality columns.
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Beta that balances median beta·MSE against median MSFD at a fixed QP.
    CalibrateBeta {
        #[arg(long = "image", required = true)]
        images: Vec<PathBuf>,
        #[arg(long, default_value_t = 40)]
        qp: i32,
        #[command(flatten)]
        codec: CodecArgs,
    },
}

#[derive(Args, Clone)]
struct CodecArgs {
    /// Weight of ROI importance in the CTU cost.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Weight of MSE in the RDO distortion.
    #[arg(long, default_value_t = 0.02)]
    beta: f64,
    /// Distortion-units factor of the RDO Lagrangian.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value_t = 64)]
    ctu: u32,
    #[arg(long, default_value_t = 4)]
    min_cu: u32,
    /// FTEN weight file for the feature extractor.
    #[arg(long, conflicts_with_all = ["feature_seed", "mse_only"])]
    weights: Option<PathBuf>,
    /// Seed of the builtin extractor weights.
    #[arg(long, default_value_t = 0)]
    feature_seed: u64,
    /// Drop feature distance; the RDO then minimizes beta·MSE + lambda·R.
    #[arg(long)]
    mse_only: bool,
    /// Skip the trial encodes that fit the rate model to the picture.
    #[arg(long)]
    no_calibrate: bool,
}

impl CodecArgs {
    fn config(&self, rate: RateMode) -> EncoderConfig {
        EncoderConfig {
            ctu_size: self.ctu,
            min_cu: self.min_cu,
            rate,
            alpha: self.alpha,
            msfd: MultiScaleConfig { beta: self.beta, ..MultiScaleConfig::default() },
            kappa: self.kappa,
            calibrate: !self.no_calibrate,
            ..EncoderConfig::default()
        }
    }

    fn provider(&self) -> mvrd_core::Result<Box<dyn FeatureProvider>> {
        Ok(match (&self.weights, self.mse_only) {
            (_, true) => Box::new(ZeroFeatures),
            (Some(path), _) => Box::new(Vgg11Features::from_file(path)?),
            (None, false) => Box::new(Vgg11Features::builtin(self.feature_seed)),
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Validation => EXIT_VALIDATION,
            })
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> mvrd_core::Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.into(), source })
}

fn read(path: &Path) -> mvrd_core::Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io { path: path.into(), source })
}

fn roim_for(frame: &Frame, ctu: u32, path: Option<&Path>) -> mvrd_core::Result<RoimMap> {
    let grid = CtuGrid::new(frame.width(), frame.height(), ctu)?;
    match path {
        Some(p) => {
            let map = RoimMap::load(p)?;
            map.check_grid(&grid)?;
            Ok(map)
        }
        None => Ok(RoimMap::empty(&grid)),
    }
}

fn run(command: Command) -> mvrd_core::Result<()> {
    match command {
        Command::RoimBuild { image, boxes, ctu, output } => {
            let frame = load_image(&image)?;
            let doc = BoxDocument::load(&boxes)?;
            let set = BoxSet::from_document(&doc, frame.width(), frame.height())?;
            let grid = CtuGrid::new(frame.width(), frame.height(), ctu)?;
            let map = RoimMap::build(&grid, &set);
            map.store(&output)?;
            info!("{} boxes over {}x{} CTUs", set.len(), grid.cols(), grid.rows());
        }
        Command::Encode { image, roim, target_bpp, qp, codec, output, stats, qp_map, recon } => {
            let frame = load_image(&image)?;
            let roim = roim_for(&frame, codec.ctu, roim.as_deref())?;
            let rate = match (target_bpp, qp) {
                (_, Some(q)) => RateMode::ConstantQp(q),
                (Some(b), None) => RateMode::TargetBpp(b),
                (None, None) => unreachable!("clap requires a rate"),
            };
            let provider = codec.provider()?;
            let out = encode_frame(&frame, &roim, &codec.config(rate), provider.as_ref())?;
            write(&output, &out.bitstream)?;
            if let Some(p) = stats {
                write(&p, out.stats.to_csv())?;
            }
            if let Some(p) = qp_map {
                write(&p, encode_pgm(&out.stats.qp_map()))?;
            }
            if let Some(p) = recon {
                store_image(&out.recon, &p)?;
            }
            println!(
                "bits={} bpp={:.6} psnr={} qp_pic={}",
                out.stats.total_bits,
                out.stats.bpp(),
                format_psnr(psnr(&frame, &out.recon)?),
                out.stats.qp_pic
            );
        }
        Command::Decode { input, output } => {
            let decoded = decode(&read(&input)?)?;
            store_image(&decoded.frame, &output)?;
        }
        Command::Metrics { orig, recon, bitstream } => {
            let a = load_image(&orig)?;
            let b = load_image(&recon)?;
            println!("psnr={}", format_psnr(psnr(&a, &b)?));
            println!("mse={}", mse(&a, &b)?);
            if let Some(p) = bitstream {
                let bits = read(&p)?.len() as f64 * 8.0;
                println!("bpp={:.6}", bits / a.area() as f64);
            }
        }
        Command::Sweep { image, roim, target_bpp, codec, output } => {
            let frame = load_image(&image)?;
            let roim = roim_for(&frame, codec.ctu, roim.as_deref())?;
            let provider = codec.provider()?;
            let cfg = codec.config(RateMode::TargetBpp(target_bpp[0]));
            let rows = sweep(&frame, &roim, &cfg, &target_bpp, provider.as_ref())?;
            let csv = sweep_csv(&rows);
            match output {
                Some(p) => write(&p, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::BdRate { anchor, test } => {
            let text = |p: &Path| -> mvrd_core::Result<String> {
                Ok(String::from_utf8_lossy(&read(p)?).into_owned())
            };
            let a = parse_rd_csv(&text(&anchor)?)?;
            let b = parse_rd_csv(&text(&test)?)?;
            println!("bd_rate_percent={:.4}", bd_rate(&a, &b)?);
        }
        Command::CalibrateBeta { images, qp, codec } => {
            let frames = images.iter().map(load_image).collect::<mvrd_core::Result<Vec<_>>>()?;
            let provider = codec.provider()?;
            let cfg = codec.config(RateMode::ConstantQp(qp));
            let cal = calibrate_beta(&frames, &cfg, qp, provider.as_ref())?;
            println!("beta={}", cal.beta);
            println!("median_msfd={}", cal.median_msfd);
            println!("median_mse={}", cal.median_mse);
            println!("leaves={}", cal.leaves);
        }
    }
    Ok(())
}
