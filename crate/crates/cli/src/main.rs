//! `pronspace`: text-to-pronunciation conversion, quadruple datasets,
//! subword/syllable learning and BLEU scoring from the command line.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 internal error.

mod commands;
mod manifest;
mod resources;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use pronspace::convert::G2pSpec;
use pronspace::Lang;

use crate::manifest::{data_versions, Recorder, TOOL_VERSION};
use crate::resources::{parse_g2p, LexiconFormat};

#[derive(Parser)]
#[command(
    name = "pronspace",
    about = "Pronunciation-space corpus toolkit",
    disable_version_flag = true
)]
struct Cli {
    /// Print tool and data-file versions.
    #[arg(long, short = 'V')]
    version: bool,

    /// Worker threads for parallel conversion (output order is unaffected).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert one sentence per line into a pronunciation sentence.
    Convert(ConvertArgs),
    /// Convert parallel Chinese/English files into a quadruple TSV.
    BuildDataset(BuildArgs),
    /// Split a dataset TSV into train/dev/test files.
    Split(SplitArgs),
    /// Print corpus statistics of a dataset TSV as JSON.
    Stats(StatsArgs),
    /// Learn plain BPE merges over pronunciation sentences.
    LearnBpe(LearnBpeArgs),
    /// Learn vowel-constrained syllable merges over phoneme sentences.
    LearnSyllables(LearnSyllablesArgs),
    /// Segment pronunciation sentences with a learned model.
    ApplyBpe(ApplyArgs),
    /// Undo `apply-bpe`.
    DecodeBpe(ApplyArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu(BleuArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Convert(_) => "convert",
            Command::BuildDataset(_) => "build-dataset",
            Command::Split(_) => "split",
            Command::Stats(_) => "stats",
            Command::LearnBpe(_) => "learn-bpe",
            Command::LearnSyllables(_) => "learn-syllables",
            Command::ApplyBpe(_) => "apply-bpe",
            Command::DecodeBpe(_) => "decode-bpe",
            Command::Bleu(_) => "bleu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LangArg {
    Zh,
    En,
}

impl From<LangArg> for Lang {
    fn from(l: LangArg) -> Lang {
        match l {
            LangArg::Zh => Lang::Zh,
            LangArg::En => Lang::En,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NumberModeArg {
    Auto,
    Magnitude,
    Digitwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnMissingArg {
    Reject,
    SkipWord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    First,
    Random,
}

/// Options shared by every command that converts text.
#[derive(Args, Debug)]
pub struct ConvertFlags {
    #[arg(long, value_enum, default_value = "auto")]
    pub number_mode: NumberModeArg,
    #[arg(long, value_enum, default_value = "reject")]
    pub on_missing: OnMissingArg,
    /// Which pronunciation to use for words with several.
    #[arg(long, value_enum, default_value = "first")]
    pub pron_policy: PolicyArg,
    /// Seed for `--pron-policy random`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replacement Chinese numeral table (`char<TAB>pinyin`).
    #[arg(long)]
    pub numerals: Option<PathBuf>,
    /// Fail on malformed lexicon lines instead of skipping them.
    #[arg(long)]
    pub strict_lexicon: bool,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub lang: LangArg,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, value_enum)]
    pub lexicon_format: Option<LexiconFormat>,
    /// Syllable-id table for `--lexicon-format dacidian`.
    #[arg(long)]
    pub syllables: Option<PathBuf>,
    /// Fallback for words missing from the lexicon: rules, none, external:<cmd>.
    #[arg(long, value_parser = parse_g2p, default_value = "rules")]
    pub g2p: G2pSpec,
    /// Per-character Pinyin table for the Chinese rule fallback.
    #[arg(long)]
    pub char_table: Option<PathBuf>,
    #[command(flatten)]
    pub convert: ConvertFlags,
    /// Input file (default: standard input).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Where rejected lines are written, with reasons.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub zh: PathBuf,
    #[arg(long)]
    pub en: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub zh_lexicon: PathBuf,
    #[arg(long, value_enum)]
    pub zh_lexicon_format: Option<LexiconFormat>,
    #[arg(long)]
    pub zh_syllables: Option<PathBuf>,
    #[arg(long)]
    pub zh_char_table: Option<PathBuf>,
    #[arg(long, value_parser = parse_g2p, default_value = "rules")]
    pub zh_g2p: G2pSpec,
    #[arg(long)]
    pub en_lexicon: PathBuf,
    #[arg(long, value_enum)]
    pub en_lexicon_format: Option<LexiconFormat>,
    #[arg(long, value_parser = parse_g2p, default_value = "rules")]
    pub en_g2p: G2pSpec,
    #[command(flatten)]
    pub convert: ConvertFlags,
    /// Also write dataset.jsonl.
    #[arg(long)]
    pub jsonl: bool,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Dataset TSV to split.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4096)]
    pub dev: usize,
    #[arg(long, default_value_t = 4096)]
    pub test: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LearnBpeArgs {
    #[arg(long, value_enum)]
    pub lang: LangArg,
    /// Pronunciation sentences, one per line (default: standard input).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Merge budget (default 16000 for zh, 10000 for en).
    #[arg(long)]
    pub merges: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LearnSyllablesArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 10000)]
    pub merges: usize,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Fail on units or symbols the model does not know.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Text,
    Pron,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PronTokenArg {
    Unit,
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmoothArg {
    None,
    Add1,
}

#[derive(Args, Debug)]
pub struct BleuArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref", value_name = "REF")]
    pub reference: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub space: SpaceArg,
    #[arg(long, value_enum, default_value = "en")]
    pub lang: LangArg,
    #[arg(long, value_enum, default_value = "unit")]
    pub pron_token: PronTokenArg,
    #[arg(long, value_enum, default_value = "none")]
    pub smooth: SmoothArg,
    /// Keep English case as written.
    #[arg(long)]
    pub no_lowercase: bool,
    /// Inputs are text; convert them with this lexicon before scoring in
    /// pronunciation space.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub lexicon_format: Option<LexiconFormat>,
    #[arg(long)]
    pub syllables: Option<PathBuf>,
    #[arg(long, value_parser = parse_g2p, default_value = "rules")]
    pub g2p: G2pSpec,
    #[command(flatten)]
    pub convert: ConvertFlags,
}

/// Failures that are the tool's fault rather than the input's.
#[derive(Debug, thiserror::Error)]
#[error("internal error: {0}")]
pub struct Internal(pub String);

fn print_versions() {
    println!("pronspace {TOOL_VERSION}");
    for (name, version) in data_versions() {
        println!("{name} {version}");
    }
}

fn dispatch(command: Command, rec: &mut Recorder) -> Result<()> {
    match command {
        Command::Convert(a) => commands::convert(a, rec),
        Command::BuildDataset(a) => commands::build_dataset(a, rec),
        Command::Split(a) => commands::split(a, rec),
        Command::Stats(a) => commands::stats(a, rec),
        Command::LearnBpe(a) => commands::learn_bpe(a, rec),
        Command::LearnSyllables(a) => commands::learn_syllables(a, rec),
        Command::ApplyBpe(a) => commands::apply_bpe(a, rec),
        Command::DecodeBpe(a) => commands::decode_bpe(a, rec),
        Command::Bleu(a) => commands::bleu(a, rec),
    }
}

fn run(cli: Cli, args: Vec<String>) -> Result<ExitCode> {
    if cli.version {
        print_versions();
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        eprintln!("error: no subcommand given; see `pronspace --help`");
        return Ok(ExitCode::from(1));
    };
    let mut rec = Recorder::new(command.name(), args);
    let result = match cli.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(usize::from(n))
                .build()
                .map_err(|e| Internal(e.to_string()))?;
            pool.install(|| dispatch(command, &mut rec))
        }
        None => dispatch(command, &mut rec),
    };
    rec.finish(result.as_ref().err().map(|e| format!("{e:#}")))
        .map_err(|e| anyhow::anyhow!("cannot write manifest: {e}"))?;
    result.map(|()| ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let recorded = args.into_iter().skip(1).collect();
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli, recorded))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.is::<Internal>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
        Err(_) => ExitCode::from(2),
    }
}
