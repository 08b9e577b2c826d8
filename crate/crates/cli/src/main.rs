//! `perfseg`: phantom generation and the staged analysis chain.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use perfseg::config::{PipelineConfig, Stage};
use perfseg::io::{encode_label_mask, write_hsr};
use perfseg::phantom::{phantom, PhantomParams};
use perfseg::pipeline::run_pipeline;
use perfseg::Error;

#[derive(Parser)]
#[command(name = "perfseg", version, about = "Segmentation and tumour detection in DCE-MRI series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic series with its ground truth and a training mask.
    Phantom(PhantomArgs),
    /// Denoise the series.
    Denoise(RunArgs),
    /// Denoise and fit the kinetic parameter maps.
    Fit(RunArgs),
    /// Run up to the classification.
    Classify(RunArgs),
    /// Run up to the stochastic watershed segmentation.
    Segment(RunArgs),
    /// Run up to the tumour-candidate detection.
    Detect(RunArgs),
    /// Run the whole chain.
    Run(RunArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Leave the tumour out of the scene.
    #[arg(long)]
    no_tumour: bool,
}

/// Every flag overrides the key of the same name in the configuration file.
#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    input: Option<String>,
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    training: Option<String>,
    #[arg(long, short)]
    output: Option<String>,
    #[arg(long)]
    snr_threshold: Option<String>,
    #[arg(long)]
    j1: Option<String>,
    #[arg(long)]
    k_max: Option<String>,
    /// lda, kmeans or model.
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    kmeans_classes: Option<String>,
    /// true or false.
    #[arg(long)]
    cdf: Option<String>,
    /// marginal, vectorial or probabilistic.
    #[arg(long)]
    density: Option<String>,
    /// euclidean, chi_squared or inverse_variance.
    #[arg(long)]
    metric: Option<String>,
    /// Germ settings, e.g. `N=100,M=100,S=2,Rmax=30`.
    #[arg(long)]
    germs: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    background_label: Option<String>,
    #[arg(long)]
    regions: Option<String>,
    #[arg(long)]
    b_threshold: Option<String>,
    #[arg(long)]
    suppress_background: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<String>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let flags = [
            ("input", &self.input),
            ("reference", &self.reference),
            ("training", &self.training),
            ("output", &self.output),
            ("snr_threshold", &self.snr_threshold),
            ("j1", &self.j1),
            ("k_max", &self.k_max),
            ("classifier", &self.classifier),
            ("kmeans_classes", &self.kmeans_classes),
            ("cdf", &self.cdf),
            ("density", &self.density),
            ("metric", &self.metric),
            ("germs", &self.germs),
            ("strategy", &self.strategy),
            ("sigma", &self.sigma),
            ("background_label", &self.background_label),
            ("regions", &self.regions),
            ("b_threshold", &self.b_threshold),
            ("suppress_background", &self.suppress_background),
            ("seed", &self.seed),
            ("threads", &self.threads),
        ];
        flags.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }

    fn config(&self, stage: Stage) -> Result<PipelineConfig, Error> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        cfg.stage = stage;
        for (k, v) in self.overrides() {
            cfg.set(k, v)?;
        }
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set {item:?} is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn code(config: bool) -> ExitCode {
    ExitCode::from(if config { 2 } else { 3 })
}

fn write_phantom(a: &PhantomArgs) -> Result<(), Error> {
    let d = PhantomParams::with_seed(a.seed);
    let params = PhantomParams {
        width: a.width.unwrap_or(d.width),
        height: a.height.unwrap_or(d.height),
        channels: a.channels.unwrap_or(d.channels),
        noise_sigma: a.noise_sigma.unwrap_or(d.noise_sigma),
        with_tumour: !a.no_tumour,
        ..d
    };
    let p = phantom(&params)?;
    fs::create_dir_all(&a.out)?;
    let (w, h) = (p.truth.width(), p.truth.height());
    write_hsr(&a.out.join("series.hsr"), &p.image)?;
    fs::write(a.out.join("truth.png"), encode_label_mask(w, h, p.truth.labels())?)?;
    fs::write(a.out.join("training.png"), encode_label_mask(w, h, &p.training_mask())?)?;
    info!("wrote {}x{}x{} phantom to {}", w, h, p.image.channels(), a.out.display());
    Ok(())
}

fn run(args: &RunArgs, stage: Stage) -> ExitCode {
    let cfg = match args.config(stage) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("perfseg: {e}");
            return code(e.is_config());
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("perfseg: cannot start {n} threads: {e}");
            return code(true);
        }
    }
    match run_pipeline(&cfg) {
        Ok(a) => {
            report(&cfg.output, &a);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("perfseg: {e}");
            code(e.is_config())
        }
    }
}

fn report(out: &Path, a: &perfseg::pipeline::Analysis) {
    if let Some(s) = &a.stats {
        let ids: Vec<String> = s.detected().map(|r| r.id.to_string()).collect();
        println!(
            "{} regions, detected: {}",
            s.regions.len(),
            if ids.is_empty() { "none".to_string() } else { ids.join(", ") }
        );
    }
    println!("artifacts in {}", out.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (args, stage) = match &cli.command {
        Command::Phantom(a) => {
            return match write_phantom(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("perfseg: {e}");
                    code(e.is_config())
                }
            }
        }
        Command::Denoise(a) => (a, Stage::Denoise),
        Command::Fit(a) => (a, Stage::Fit),
        Command::Classify(a) => (a, Stage::Classify),
        Command::Segment(a) => (a, Stage::Segment),
        Command::Detect(a) => (a, Stage::Detect),
        Command::Run(a) => (a, Stage::Detect),
    };
    run(args, stage)
}
