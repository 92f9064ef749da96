use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fvagg::formats;
use fvagg::pipeline::{self, DatasetManifest, PipelineConfig, SynthDecompositionConfig};
use fvagg::synth::{write_synthetic_dataset, SyntheticDatasetConfig};
use fvagg::{Error, Result, ScaleSchedule};

#[derive(Parser)]
#[command(
    name = "fvagg",
    version,
    about = "Fisher vector aggregation and linear SVM classification"
)]
struct Cli {
    /// Pipeline configuration (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated scale exponents, e.g. "-1,-0.5,0".
    #[arg(long, global = true, allow_hyphen_values = true)]
    scales: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    gmm: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a GMM codebook on descriptors sampled from the manifest.
    TrainCodebook {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one normalized Fisher vector file per image.
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        gmm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit codebook (or reuse --gmm) and train the SVM.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gmm: Option<PathBuf>,
    },
    /// Print the balanced-accuracy report as JSON.
    Evaluate(ModelArgs),
    /// Print one JSON prediction per line.
    Predict(ModelArgs),
    /// Run the foreground/background decomposition experiment on synthetic mixtures.
    SynthDecomposition {
        #[arg(long, default_value_t = 0.7)]
        w: f64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        components: usize,
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
    },
    /// Write a labeled synthetic descriptor dataset with train/test manifests.
    SynthDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 100)]
        train_per_class: usize,
        #[arg(long, default_value_t = 30)]
        test_per_class: usize,
        #[arg(long, default_value_t = 200)]
        descriptors_per_image: usize,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(t) = cli.threads {
        config.threads = Some(t);
    }
    if let Some(s) = &cli.scales {
        config.scales = s.parse::<ScaleSchedule>()?.exponents().to_vec();
    }
    config.validate()?;
    Ok(config)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    if let Some(threads) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::TrainCodebook { manifest, out } => {
            let m = DatasetManifest::load(manifest)?;
            let gmm = pipeline::run_train_codebook(&m, &config, &out)?;
            log::info!("wrote {} (K={}, D={})", out.display(), gmm.components(), gmm.dim());
        }
        Command::Encode { manifest, gmm, out } => {
            let m = DatasetManifest::load(manifest)?;
            let gmm = formats::load_gmm(gmm)?;
            let paths = pipeline::run_encode(&m, &gmm, &config, &out)?;
            log::info!("wrote {} fisher vectors to {}", paths.len(), out.display());
        }
        Command::Train { manifest, out, gmm } => {
            let m = DatasetManifest::load(manifest)?;
            let codebook = gmm.map(formats::load_gmm).transpose()?;
            let artifacts = pipeline::run_train(&m, &config, codebook, &out)?;
            print_json(&artifacts)?;
        }
        Command::Evaluate(args) => {
            let m = DatasetManifest::load(args.manifest)?;
            let report = pipeline::run_evaluate_files(&m, args.gmm, args.model, &config)?;
            print_json(&report)?;
        }
        Command::Predict(args) => {
            let m = DatasetManifest::load(args.manifest)?;
            let gmm = formats::load_gmm(args.gmm)?;
            let model = formats::load_model(args.model)?;
            let preds = pipeline::run_predict(&m, &gmm, &model, &config)?;
            let mut out = std::io::stdout().lock();
            for p in preds {
                let line = serde_json::to_string(&p).map_err(|e| Error::InvalidInput(e.to_string()))?;
                writeln!(out, "{line}").map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })?;
            }
        }
        Command::SynthDecomposition {
            w,
            n,
            dim,
            components,
            separation,
        } => {
            let cfg = SynthDecompositionConfig {
                w,
                n,
                dim,
                codebook_components: components,
                separation,
                seed: config.seed,
                em: config.em.clone(),
                ..Default::default()
            };
            print_json(&pipeline::run_synth_decomposition(&cfg)?)?;
        }
        Command::SynthDataset {
            out,
            dim,
            train_per_class,
            test_per_class,
            descriptors_per_image,
        } => {
            let cfg = SyntheticDatasetConfig {
                classes: config.classes.clone(),
                dim,
                train_per_class,
                test_per_class,
                descriptors_per_image,
                seed: config.seed,
                ..Default::default()
            };
            let files = write_synthetic_dataset(&cfg, &out)?;
            println!("{}", files.train_manifest.display());
            println!("{}", files.test_manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
