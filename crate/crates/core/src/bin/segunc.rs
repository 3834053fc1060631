use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seg_uncertainty::cli::{self, Background, OverlaySpec, RunOptions};
use seg_uncertainty::evaluation::DEFAULT_ECE_BINS;
use seg_uncertainty::synth::SynthConfig;
use seg_uncertainty::tensor_io::Scenario;
use seg_uncertainty::thresholding::ThresholdPolicy;
use seg_uncertainty::uncertainty::{Metric, Normalization};
use seg_uncertainty::Error;

/// Uncertainty maps, dynamic thresholds and misclassification-detection
/// metrics for segmentation outputs.
#[derive(Parser)]
#[command(name = "segunc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one uncertainty map (.npy) per image.
    Uncertainty {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate misclassification detection and write report.json / report.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "largest-diff")]
        threshold: ThresholdPolicy,
        #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
        ece_bins: usize,
        /// Embed a generation timestamp in report.json.
        #[arg(long)]
        stamp: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Render failure overlays, uncertainty images and error masks.
    Viz {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "largest-diff")]
        threshold: ThresholdPolicy,
        /// Draw the overlay on the source image instead of black.
        #[arg(long)]
        on_image: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Cumulative histograms of correct and misclassified pixels as CSV.
    Hist {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with a manifest.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        images: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 1)]
        predictions: usize,
        /// base, noise, scale or drop; defaults to base for one prediction, drop otherwise.
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long, default_value_t = 0.2)]
        mis_rate: f64,
        /// Informativeness in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 12)]
        regions: usize,
        #[arg(long, default_value_t = 0.0)]
        ignore_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Dataset manifest (JSON).
    #[arg(long, short)]
    manifest: PathBuf,
    /// vr, pm, entropy, avg-vr, avg-pm, avg-entropy, var-mean, var-max, bald or scharr.
    #[arg(long, default_value = "entropy")]
    metric: Metric,
    #[arg(long, default_value = "unit")]
    normalize: Normalization,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            metric: self.metric,
            normalize: self.normalize,
            jobs: self.jobs,
            ..RunOptions::default()
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Uncertainty { common, out } => {
            let written = cli::run_uncertainty(&common.manifest, &common.options(), &out)?;
            println!("wrote {} maps to {}", written.len(), out.display());
        }
        Command::Eval {
            common,
            threshold,
            ece_bins,
            stamp,
            out,
        } => {
            let opts = RunOptions {
                threshold,
                ece_bins,
                stamp,
                ..common.options()
            };
            let report = cli::run_eval(&common.manifest, &opts, &out)?;
            for (name, section) in [("micro", &report.micro), ("macro", &report.r#macro)] {
                let cells: Vec<String> =
                    section.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                println!("{name}: {}", cells.join(" "));
            }
            println!("wrote {}", out.join("report.json").display());
        }
        Command::Viz {
            common,
            threshold,
            on_image,
            out,
        } => {
            let opts = RunOptions {
                threshold,
                ..common.options()
            };
            let spec = OverlaySpec {
                background: if on_image {
                    Background::SourceImage
                } else {
                    Background::Black
                },
                ..OverlaySpec::default()
            };
            let written = cli::run_viz(&common.manifest, &opts, &spec, &out)?;
            println!("wrote {} images to {}", written.len(), out.display());
        }
        Command::Hist { common, bins, out } => {
            cli::run_hist(&common.manifest, &common.options(), bins, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Synth {
            out,
            images,
            height,
            width,
            classes,
            predictions,
            scenario,
            mis_rate,
            gamma,
            regions,
            ignore_rate,
            seed,
        } => {
            let scenario = scenario.unwrap_or(if predictions == 1 {
                Scenario::Base
            } else {
                Scenario::Drop
            });
            let config = SynthConfig {
                height,
                width,
                num_classes: classes,
                num_predictions: predictions,
                mis_rate,
                informativeness: gamma,
                region_count: regions,
                ignore_rate,
                seed,
                scenario,
            };
            cli::run_synth(&config, images, &out)?;
            println!("wrote {}", out.join("manifest.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
