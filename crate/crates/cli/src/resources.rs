//! Loading lexicons, character tables and G2P providers from flags.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;

use pronspace::convert::{CharTable, G2pProvider, G2pSpec};
use pronspace::lexicon::{Lexicon, LexiconSource, LoadMode};
use pronspace::Lang;

use crate::manifest::Recorder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LexiconFormat {
    /// `word<TAB>pron[<TAB>pron...]`, units joined with `-`.
    Tsv,
    /// CMU/Voxforge dictionary: `WORD ph ph ph`.
    Voxforge,
    /// DaCiDian word list plus a syllable-id table (`--syllables`).
    Dacidian,
}

impl LexiconFormat {
    pub fn default_for(lang: Lang) -> Self {
        match lang {
            Lang::Zh => LexiconFormat::Tsv,
            Lang::En => LexiconFormat::Voxforge,
        }
    }
}

pub fn parse_g2p(s: &str) -> Result<G2pSpec, String> {
    G2pSpec::parse(s).map_err(|e| e.to_string())
}

/// Everything describing one language's pronunciation resources.
pub struct LangResources {
    pub lexicon: Lexicon,
    pub g2p: Box<dyn G2pProvider>,
}

pub struct LangFlags<'a> {
    pub lang: Lang,
    pub lexicon: &'a Path,
    pub format: Option<LexiconFormat>,
    pub syllables: Option<&'a PathBuf>,
    pub strict: bool,
    pub g2p: &'a G2pSpec,
    pub char_table: Option<&'a PathBuf>,
}

pub fn load_lang(flags: LangFlags<'_>, rec: &mut Recorder) -> Result<LangResources> {
    let format = flags
        .format
        .unwrap_or(LexiconFormat::default_for(flags.lang));
    let source = match format {
        LexiconFormat::Tsv => LexiconSource::SimpleTsv(flags.lexicon.to_owned()),
        LexiconFormat::Voxforge => LexiconSource::Voxforge(flags.lexicon.to_owned()),
        LexiconFormat::Dacidian => {
            let Some(syllables) = flags.syllables else {
                bail!("--lexicon-format dacidian needs a syllable table (--syllables)");
            };
            LexiconSource::DaCiDian {
                words: flags.lexicon.to_owned(),
                syllables: syllables.clone(),
            }
        }
    };
    for path in source.paths() {
        rec.input(path)
            .with_context(|| format!("cannot read lexicon {}", path.display()))?;
    }
    let mode = if flags.strict {
        LoadMode::Strict
    } else {
        LoadMode::Lenient
    };
    let lexicon = Lexicon::load(&source, flags.lang, mode)?;
    if lexicon.skipped_lines() > 0 {
        eprintln!(
            "warning: skipped {} malformed line(s) in {}",
            lexicon.skipped_lines(),
            flags.lexicon.display()
        );
    }
    let prefix = flags.lang.as_str();
    rec.count(&format!("{prefix}_lexicon_entries"), lexicon.len() as u64);
    rec.count(
        &format!("{prefix}_lexicon_skipped_lines"),
        lexicon.skipped_lines() as u64,
    );

    let chars = match flags.char_table {
        Some(path) => {
            rec.input(path)
                .with_context(|| format!("cannot read character table {}", path.display()))?;
            let file = File::open(path)
                .with_context(|| format!("cannot open character table {}", path.display()))?;
            CharTable::read(BufReader::new(file), path)?
        }
        None if flags.lang == Lang::Zh => CharTable::from_lexicon(&lexicon),
        None => CharTable::default(),
    };
    let g2p = flags.g2p.build(flags.lang, chars);
    Ok(LangResources { lexicon, g2p })
}
