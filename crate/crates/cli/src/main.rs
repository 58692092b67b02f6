mod analysis;
mod data;
mod model;
mod music;
mod run;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use run::RunContext;

/// Performance-style analysis of symbolic piano transcriptions.
///
/// Stages share one output root: each writes its artifacts and a `run.json`
/// into `<out>/<stage>/` and reads earlier stages from there.
#[derive(Parser, Debug)]
#[command(name = "stylus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Corpus manifest CSV (`recording_id,performer,dataset_tag,path`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Output root.
    #[arg(long, global = true, default_value = "stylus-out")]
    pub out: PathBuf,

    /// Root seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON overrides, inline or as a file path. Keys may be grouped under
    /// subcommand names.
    #[arg(long, global = true)]
    pub config: Option<String>,

    /// Encoding of tabular reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Fabricate a corpus with planted performer signatures.
    GenSynthetic,
    /// Validate the manifest and every note file.
    Ingest,
    /// Stratified train/validation/test split.
    Split,
    /// Extract n-grams and voicings; build the vocabulary and idf weights.
    Extract,
    /// Fit the logistic regression on the training split.
    Train,
    /// Random hyperparameter search scored on the validation split.
    Search,
    /// Top-k accuracy of a fitted model.
    Evaluate,
    /// Group and subset permutation importance.
    Importance,
    /// Solo/trio weight correlations with permutation p-values.
    Correlate,
    /// PCA of length-4 n-grams and performer projection.
    Pca,
    /// Factorised melody, harmony, rhythm and dynamics rolls.
    Rolls,
    /// Preview data augmentation on a few clips.
    Augment,
    /// Concept sign counts, clustering and sensitivity maps.
    Concepts,
    /// Top and bottom weighted features per performer with bootstrap SDs.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenSynthetic => "gen-synthetic",
            Command::Ingest => "ingest",
            Command::Split => "split",
            Command::Extract => "extract",
            Command::Train => "train",
            Command::Search => "search",
            Command::Evaluate => "evaluate",
            Command::Importance => "importance",
            Command::Correlate => "correlate",
            Command::Pca => "pca",
            Command::Rolls => "rolls",
            Command::Augment => "augment",
            Command::Concepts => "concepts",
            Command::Report => "report",
        }
    }

    pub const ALL: [Command; 14] = [
        Command::GenSynthetic,
        Command::Ingest,
        Command::Split,
        Command::Extract,
        Command::Train,
        Command::Search,
        Command::Evaluate,
        Command::Importance,
        Command::Correlate,
        Command::Pca,
        Command::Rolls,
        Command::Augment,
        Command::Concepts,
        Command::Report,
    ];
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_USAGE: u8 = 64;

fn init_logging() {
    let env = env_logger::Env::new().filter_or("STYLUS_LOG", "warn");
    env_logger::Builder::from_env(env).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = RunContext::new(cli.command, cli.global).and_then(|mut ctx| {
        match cli.command {
            Command::GenSynthetic => data::gen_synthetic(&mut ctx),
            Command::Ingest => data::ingest(&mut ctx),
            Command::Split => data::split(&mut ctx),
            Command::Extract => data::extract(&mut ctx),
            Command::Train => model::train(&mut ctx),
            Command::Search => model::search(&mut ctx),
            Command::Evaluate => model::evaluate(&mut ctx),
            Command::Importance => analysis::importance(&mut ctx),
            Command::Correlate => analysis::correlate(&mut ctx),
            Command::Pca => analysis::pca(&mut ctx),
            Command::Report => analysis::report(&mut ctx),
            Command::Rolls => music::rolls(&mut ctx),
            Command::Augment => music::augment(&mut ctx),
            Command::Concepts => music::concepts(&mut ctx),
        }?;
        ctx.finish()
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_VALIDATION })
        }
    }
}
