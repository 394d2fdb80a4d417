use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;

use surveycli::commands;
use surveycli::config::{
    load_config, DetectCliConfig, EvalCliConfig, GenConfig, MapCliConfig, SrCliConfig,
    SrMethod, SweepConfig, TrainCliConfig,
};
use surveycli::sweep::run_sweep;

#[derive(Parser)]
#[command(name = "surveycli", version, about = "Synthetic riverbed litter survey pipeline")]
struct Cli {
    /// Base random seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for command artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for scene-parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene corpus with ground truth and a manifest.
    Gen {
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        objects: Option<usize>,
        #[arg(long)]
        size_min: Option<f64>,
        #[arg(long)]
        size_max: Option<f64>,
    },
    /// Train the reconstruction network on degraded tiles of a corpus.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        tile: Option<usize>,
        #[arg(long)]
        scale: Option<u32>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        max_pairs: Option<usize>,
    },
    /// Super-resolve one image.
    Sr {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output PNG; defaults to sr.png in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        scale: Option<u32>,
        /// bicubic or network.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Detect litter objects in one image.
    Detect {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output JSON; defaults to detections.json in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        color_tol: Option<f64>,
        #[arg(long)]
        merge_radius: Option<usize>,
        #[arg(long)]
        min_area: Option<usize>,
    },
    /// Score a detections file against an annotations file.
    Eval {
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        iou: Option<f64>,
    },
    /// Degrade, reconstruct, detect, and score across magnification factors.
    Sweep {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        tile_size: Option<usize>,
        /// Comma-separated factors, e.g. 1,2,4.
        #[arg(long)]
        factors: Option<String>,
        /// bicubic or network.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        blur_length: Option<u32>,
        #[arg(long)]
        iou: Option<f64>,
        #[arg(long)]
        merge_seams: bool,
    },
    /// Render a distribution map from a panorama and global detections.
    Map {
        #[arg(long)]
        panorama: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        tile_size: Option<usize>,
        #[arg(long)]
        merge_seams: bool,
    },
}

enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<surveycli::config::ConfigError> for CliError {
    fn from(e: surveycli::config::ConfigError) -> Self {
        CliError::Data(e.into())
    }
}

impl From<surveycli::sweep::SweepError> for CliError {
    fn from(e: surveycli::sweep::SweepError) -> Self {
        CliError::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprint!("{}", e);
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {}", msg);
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}

fn log_config<T: Serialize>(cfg: &T) {
    match serde_json::to_string(cfg) {
        Ok(s) => log::info!("resolved config: {}", s),
        Err(e) => log::warn!("config not serializable: {}", e),
    }
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

/// Build an [`SrMethod`] from the --method/--checkpoint flag pair, keeping
/// whatever the config file said when neither flag is present.
fn resolve_method(
    current: &SrMethod,
    method: Option<String>,
    checkpoint: Option<PathBuf>,
) -> Result<SrMethod, CliError> {
    match method.as_deref() {
        None => match checkpoint {
            // a bare --checkpoint implies the network method
            Some(c) => Ok(SrMethod::Network { checkpoint: c }),
            None => Ok(current.clone()),
        },
        Some("bicubic") => Ok(SrMethod::Bicubic),
        Some("network") => {
            let checkpoint = checkpoint.or_else(|| match current {
                SrMethod::Network { checkpoint } => Some(checkpoint.clone()),
                SrMethod::Bicubic => None,
            });
            match checkpoint {
                Some(checkpoint) => Ok(SrMethod::Network { checkpoint }),
                None => Err(CliError::Usage(
                    "--method network requires --checkpoint <path>".to_string(),
                )),
            }
        }
        Some(other) => Err(CliError::Usage(format!(
            "unknown method {:?}; expected bicubic or network",
            other
        ))),
    }
}

fn parse_factors(text: &str) -> Result<Vec<u32>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let v: u32 = part
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad factor {:?} in --factors", part)))?;
        out.push(v);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out_dir = cli.out;
    match cli.command {
        Command::Gen { scenes, height, width, objects, size_min, size_max } => {
            let mut cfg: GenConfig = load_config(cli.config.as_deref())?;
            set(&mut cfg.scenes, scenes);
            set(&mut cfg.height, height);
            set(&mut cfg.width, width);
            set(&mut cfg.objects, objects);
            set(&mut cfg.size_min, size_min);
            set(&mut cfg.size_max, size_max);
            set(&mut cfg.seed, cli.seed);
            log_config(&cfg);
            let manifest = commands::run_gen(&cfg, &out_dir)?;
            println!(
                "wrote {} scenes and manifest.json to {}",
                manifest.scene_count,
                out_dir.display()
            );
        }
        Command::Train { corpus, tile, scale, epochs, learning_rate, noise_sigma, max_pairs } => {
            let mut cfg: TrainCliConfig = load_config(cli.config.as_deref())?;
            set(&mut cfg.corpus, corpus);
            set(&mut cfg.tile, tile);
            set(&mut cfg.scale, scale);
            set(&mut cfg.epochs, epochs);
            set(&mut cfg.learning_rate, learning_rate);
            set(&mut cfg.noise_sigma, noise_sigma);
            set(&mut cfg.max_pairs, max_pairs);
            set(&mut cfg.seed, cli.seed);
            log_config(&cfg);
            let outcome = commands::run_train(&cfg, &out_dir)?;
            let last = outcome.log.epoch_losses.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained on {} pairs, final epoch loss {:.6}; checkpoint {}",
                outcome.log.pair_count,
                last,
                outcome.checkpoint.display()
            );
        }
        Command::Sr { input, output, scale, method, checkpoint } => {
            let mut cfg: SrCliConfig = load_config(cli.config.as_deref())?;
            set(&mut cfg.input, input);
            set(&mut cfg.output, output);
            set(&mut cfg.scale, scale);
            cfg.sr_method = resolve_method(&cfg.sr_method, method, checkpoint)?;
            if cfg.output.as_os_str().is_empty() {
                std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Data(e.into()))?;
                cfg.output = out_dir.join("sr.png");
            }
            log_config(&cfg);
            let (h, w) = commands::run_sr(&cfg)?;
            println!("wrote {}x{} image to {}", w, h, cfg.output.display());
        }
        Command::Detect { input, output, color_tol, merge_radius, min_area } => {
            let mut cfg: DetectCliConfig = load_config(cli.config.as_deref())?;
            set(&mut cfg.input, input);
            set(&mut cfg.output, output);
            set(&mut cfg.detector.color_tol, color_tol);
            set(&mut cfg.detector.merge_radius, merge_radius);
            set(&mut cfg.detector.min_area, min_area);
            if cfg.output.as_os_str().is_empty() {
                std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Data(e.into()))?;
                cfg.output = out_dir.join("detections.json");
            }
            log_config(&cfg);
            let found = commands::run_detect(&cfg)?;
            println!("{} detections written to {}", found.detections.len(), cfg.output.display());
        }
        Command::Eval { detections, annotations, iou } => {
            let mut cfg: EvalCliConfig = load_config(cli.config.as_deref())?;
            set(&mut cfg.detections, detections);
            set(&mut cfg.annotations, annotations);
            set(&mut cfg.iou_thresh, iou);
            log_config(&cfg);
            let report = commands::run_eval(&cfg, &out_dir)?;
            println!("map {} over {} classes; report in {}", report.map_score,
                report.per_class.len(), out_dir.display());
        }
        Command::Sweep {
            corpus,
            tile_size,
            factors,
            method,
            checkpoint,
            noise_sigma,
            blur_length,
            iou,
            merge_seams,
        } => {
            let mut cfg: SweepConfig = load_config(cli.config.as_deref())?;
            set(&mut cfg.corpus, corpus);
            set(&mut cfg.tile_size, tile_size);
            if let Some(text) = factors {
                cfg.factors = parse_factors(&text)?;
            }
            cfg.sr_method = resolve_method(&cfg.sr_method, method, checkpoint)?;
            set(&mut cfg.noise_sigma, noise_sigma);
            set(&mut cfg.blur_length, blur_length);
            set(&mut cfg.iou_thresh, iou);
            if merge_seams {
                cfg.merge_seams = true;
            }
            set(&mut cfg.seed, cli.seed);
            set(&mut cfg.threads, cli.threads);
            log_config(&cfg);
            let report = run_sweep(&cfg)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Data(e.into()))?;
            report
                .save(&out_dir.join("report.json"), &out_dir.join("report.csv"))
                .map_err(CliError::from)?;
            print!("{}", report.to_csv());
            println!("report written to {}", out_dir.display());
        }
        Command::Map { panorama, detections, tile_size, merge_seams } => {
            let mut cfg: MapCliConfig = load_config(cli.config.as_deref())?;
            set(&mut cfg.panorama, panorama);
            set(&mut cfg.detections, detections);
            set(&mut cfg.tile_size, tile_size);
            if merge_seams {
                cfg.merge_seams = true;
            }
            log_config(&cfg);
            let outcome = commands::run_map(&cfg, &out_dir)?;
            println!(
                "map with {} boxes written to {}",
                outcome.boxes.len(),
                outcome.image_path.display()
            );
        }
    }
    Ok(())
}
