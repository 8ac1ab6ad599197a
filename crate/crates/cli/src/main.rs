//! `chanboost`: cluster, train, detect, evaluate and benchmark multi-class
//! channel-feature detectors from a TOML configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chanboost::dataset::load_rgb;
use chanboost::pipeline::{self, PipelineConfig, RasterFormat, Split};
use chanboost::{Error, FeatureCombination, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "chanboost",
    version,
    about = "Multi-class boosted channel-feature object detection"
)]
struct Cli {
    /// Worker threads; outputs are identical for every value.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpFormat {
    Pfm,
    Pgm,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a class's training samples into subcategories.
    Cluster {
        #[arg(short, long)]
        config: PathBuf,
        /// Class to cluster; every configured class when omitted.
        #[arg(long)]
        class: Option<String>,
    },
    /// Train one calibrated soft-cascade detector per subcategory.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        /// Class to train; every configured class when omitted.
        #[arg(long)]
        class: Option<String>,
        #[arg(long, value_enum, default_value = "f32")]
        precision: Precision,
    },
    /// Run the detector bank over a list of images.
    Detect {
        #[arg(short, long)]
        config: PathBuf,
        /// Model directory; defaults to the work directory's model folder.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Text file with one image id per line.
        #[arg(long)]
        images: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "f32")]
        precision: Precision,
    },
    /// Score a detection file against annotations.
    Eval {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Annotation file; defaults to the configured test annotations.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Report directory; defaults to `<work_dir>/eval`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time feature extraction and detection for every feature combination.
    Bench {
        #[arg(short, long)]
        config: PathBuf,
        /// Text file with one image id per line; the test annotations' images when omitted.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Use at most this many images.
        #[arg(long, default_value_t = 10)]
        limit: usize,
        #[arg(long, default_value_t = 256)]
        trees: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Also write the table as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write every feature channel of one image as a raster file.
    ChannelsDump {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "acf")]
        features: FeatureCombination,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "pfm")]
        format: DumpFormat,
    },
    /// Render a synthetic three-class shape dataset with a matching config.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        train: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn class_names(cfg: &PipelineConfig, class: Option<String>) -> Result<Vec<String>> {
    match class {
        Some(c) => {
            cfg.class(&c)?;
            Ok(vec![c])
        }
        None => Ok(cfg.classes.iter().map(|c| c.name.clone()).collect()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn train<T: chanboost::Real>(cfg: &PipelineConfig, classes: &[String]) -> Result<()> {
    for class in classes {
        let report = pipeline::cmd_train::<T>(cfg, class)?;
        for s in &report.subcategories {
            let last = s.rounds.last();
            println!(
                "{class} subcategory {}: {} positives, {} hard negatives, {} of {} learners -> {}",
                s.subcategory,
                s.positives,
                s.hard_negatives,
                last.map_or(0, |r| r.report.rounds.len()),
                last.map_or(0, |r| r.learners),
                s.model.display()
            );
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Cluster { config, class } => {
            let cfg = PipelineConfig::load(&config)?;
            for class in class_names(&cfg, class)? {
                print!("{}", pipeline::cmd_cluster(&cfg, &class)?.report);
            }
        }
        Command::Train {
            config,
            class,
            precision,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let classes = class_names(&cfg, class)?;
            match precision {
                Precision::F32 => train::<f32>(&cfg, &classes)?,
                Precision::F64 => train::<f64>(&cfg, &classes)?,
            }
        }
        Command::Detect {
            config,
            models,
            images,
            output,
            precision,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let models = models.unwrap_or_else(|| cfg.model_dir());
            let ids = pipeline::read_image_list(&images)?;
            let summary = match precision {
                Precision::F32 => pipeline::cmd_detect::<f32>(&cfg, &models, &ids, &output)?,
                Precision::F64 => pipeline::cmd_detect::<f64>(&cfg, &models, &ids, &output)?,
            };
            println!(
                "{} detections in {} images -> {}",
                summary.detections,
                summary.images,
                output.display()
            );
        }
        Command::Eval {
            config,
            detections,
            annotations,
            out,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let annotations = match annotations {
                Some(a) => a,
                None => cfg.paths.test_annotations.clone().ok_or_else(|| {
                    Error::Config("no annotations given and none configured for testing".into())
                })?,
            };
            let out = out.unwrap_or_else(|| cfg.paths.work_dir.join("eval"));
            print!(
                "{}",
                pipeline::cmd_eval(&cfg, &detections, &annotations, &out)?.table()
            );
        }
        Command::Bench {
            config,
            images,
            limit,
            trees,
            repeats,
            json,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let mut ids = match images {
                Some(list) => pipeline::read_image_list(&list)?,
                None => {
                    let (samples, _) = pipeline::load_split(&cfg, Split::Test)?;
                    let mut ids: Vec<String> = samples.into_iter().map(|s| s.image).collect();
                    ids.dedup();
                    ids
                }
            };
            ids.truncate(limit.max(1));
            let imgs = ids
                .iter()
                .map(|id| load_rgb(&pipeline::resolve_image(&cfg, id)))
                .collect::<Result<Vec<_>>>()?;
            let table = pipeline::cmd_bench::<f32>(&cfg, &imgs, trees, repeats)?;
            print!("{}", table.text());
            if let Some(path) = json {
                write_file(&path, &table.json()?)?;
            }
        }
        Command::ChannelsDump {
            image,
            features,
            out,
            format,
        } => {
            let format = match format {
                DumpFormat::Pfm => RasterFormat::Pfm,
                DumpFormat::Pgm => RasterFormat::Pgm,
            };
            let files = pipeline::cmd_channels_dump(&image, features, &out, format)?;
            println!("{} channels -> {}", files.len(), out.display());
        }
        Command::Synth {
            out,
            train,
            test,
            seed,
        } => {
            let config = pipeline::write_synthetic_dataset(&out, train, test, seed)?;
            println!(
                "{} train and {} test images; config {}",
                train,
                test,
                config.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
