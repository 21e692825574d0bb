//! `spectrasep` command-line driver.
//!
//! Exit codes: 0 on success, 2 when the input or the command line is invalid,
//! 3 when a well-formed run fails.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spectrasep::clinical::{Task, Tier};
use spectrasep::cube::Site;

#[derive(Debug, Parser)]
#[command(name = "spectrasep", version, about = "Hyperspectral sepsis biomarker pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON run configuration.
    #[arg(long, global = true, env = "SPECTRASEP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Sepsis,
    Mortality,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Sepsis => Task::Sepsis,
            TaskArg::Mortality => Task::Mortality,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TierArg {
    OneHour,
    TenHour,
}

impl From<TierArg> for Tier {
    fn from(t: TierArg) -> Tier {
        match t {
            TierArg::OneHour => Tier::OneHour,
            TierArg::TenHour => Tier::TenHour,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SiteArg {
    Palm,
    Finger,
}

impl From<SiteArg> for Site {
    fn from(s: SiteArg) -> Site {
        match s {
            SiteArg::Palm => Site::Palm,
            SiteArg::Finger => Site::Finger,
        }
    }
}

/// A directory written by `synth`, or the same files given one by one.
#[derive(Debug, Clone, Args)]
pub struct CohortArgs {
    /// Cohort directory holding clinical.csv, labels.csv, annotations.json,
    /// cubes/ and refs/.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    #[arg(long)]
    pub clinical: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ImageArgs {
    /// Directory of `{image_id}.speccube` files.
    #[arg(long)]
    pub cubes: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// White reference for raw cubes.
    #[arg(long)]
    pub white: Option<PathBuf>,
    /// Dark reference for raw cubes.
    #[arg(long)]
    pub dark: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "palm")]
    pub site: SiteArg,
}

#[derive(Debug, Clone, Args)]
pub struct SingleCubeArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Annotation to use; defaults to the cube file stem.
    #[arg(long)]
    pub image_id: Option<String>,
    #[arg(long)]
    pub white: Option<PathBuf>,
    #[arg(long)]
    pub dark: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw counts to reflectance with white and dark references.
    Calibrate {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        white: PathBuf,
        #[arg(long)]
        dark: PathBuf,
    },
    /// Normalize, crop to the annotated disk and rescale to network input size.
    Preprocess {
        #[command(flatten)]
        input: SingleCubeArgs,
        #[arg(long, default_value_t = spectrasep::cube::TARGET_SIZE)]
        size: usize,
    },
    /// Tissue indices of one annotated cube.
    Indices {
        #[command(flatten)]
        input: SingleCubeArgs,
    },
    /// Per-patient feature table from annotated cubes.
    Features {
        #[command(flatten)]
        cohort: CohortArgs,
        #[command(flatten)]
        images: ImageArgs,
    },
    /// Clinical scores, biomarkers and VIS per patient.
    Scores {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Score name (qsofa, sirs, news, sofa, apache2, vis, a biomarker) or
        /// a score table JSON file; repeatable.
        #[arg(long = "table", required = true)]
        tables: Vec<String>,
        /// Also evaluate each score as a classifier for this task.
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
    },
    /// Train one forest on all labelled patients.
    TrainRf {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
    },
    /// Cross-validated recursive feature elimination of clinical features.
    Rfe {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Rank the columns of this table instead of the clinical parameters.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ten-hour")]
        tier: TierArg,
        #[arg(long, value_enum)]
        task: TaskArg,
    },
    /// Nested cross-validated evaluation with bootstrap intervals.
    Evaluate {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[command(flatten)]
        cohort: CohortArgs,
        #[command(flatten)]
        images: ImageArgs,
        /// Evaluate a feature table instead of cohort images.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Score member predictions from another model instead of training.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Split plan matching `--predictions`, for per-fold AUROCs.
        #[arg(long)]
        splits: Option<PathBuf>,
        /// Add clinical features available at this horizon.
        #[arg(long, value_enum)]
        clinical_tier: Option<TierArg>,
        /// With `--clinical-tier`: add the top 1, 2, 3 and all ranked clinical
        /// features to the image features, plus image-only and clinical-only
        /// baselines.
        #[arg(long)]
        sequential: bool,
        /// Model name in the report.
        #[arg(long)]
        model: Option<String>,
    },
    /// Welch tests of the tissue indices between groups.
    Stats {
        #[arg(long, value_enum)]
        grouping: TaskArg,
        #[command(flatten)]
        cohort: CohortArgs,
        #[command(flatten)]
        images: ImageArgs,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Generate a synthetic cohort with planted effects.
    Synth {
        #[arg(long)]
        n: usize,
        /// Image size as WIDTHxHEIGHT.
        #[arg(long, default_value = "64x64")]
        size: String,
        /// Absorbance shift planted in the positive class.
        #[arg(long)]
        delta: Option<f64>,
        /// No image or clinical effects.
        #[arg(long, conflicts_with = "delta")]
        null: bool,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "palm,finger")]
        sites: Vec<SiteArg>,
        #[arg(long)]
        sepsis_prevalence: Option<f64>,
        #[arg(long)]
        mortality_prevalence: Option<f64>,
        #[arg(long)]
        missingness: Option<f64>,
    },
    /// Merge report files into one set of plot-data files.
    Report {
        /// report.json files or directories holding one.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut message = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !message.contains(&cause) {
                    message = format!("{message}: {cause}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
