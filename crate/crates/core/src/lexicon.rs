//! Pronunciation lexicons for both languages.
//!
//! Three on-disk layouts are understood:
//!
//! * SimpleTSV: `word<TAB>pron1<TAB>pron2...`, each pronunciation `-`-joined.
//! * Voxforge / CMU: `WORD [WORD] ph1 ph2 ...` (the bracketed output form is
//!   optional). `WORD(2)` alternates fold into `word`, stress digits are
//!   stripped and phonemes lowercased.
//! * DaCiDian: a word file `word<WS>SYL1 SYL2 ...` plus a syllable file
//!   `SYL<WS>pinyin` merged at load. Syllables missing from the map are
//!   normalized directly (`ZHONG1` -> `zhong_1`).
//!
//! Blank lines and `#` comments are skipped everywhere. Duplicate headwords
//! append pronunciations in file order, and [`Lexicon::lookup_first`] always
//! returns the first one.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::pron::{Lang, PronError, PronUnit, PronWord, UnitKind};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line_no}: malformed lexicon line: {message}")]
    Parse {
        path: PathBuf,
        line_no: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Skip malformed lines and count them.
    #[default]
    Lenient,
    /// Fail on the first malformed line.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexiconSource {
    SimpleTsv(PathBuf),
    Voxforge(PathBuf),
    DaCiDian { words: PathBuf, syllables: PathBuf },
}

impl LexiconSource {
    pub fn paths(&self) -> Vec<&Path> {
        match self {
            LexiconSource::SimpleTsv(p) | LexiconSource::Voxforge(p) => vec![p.as_path()],
            LexiconSource::DaCiDian { words, syllables } => {
                vec![words.as_path(), syllables.as_path()]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub pronunciations: Vec<PronWord>,
}

/// Immutable word -> pronunciations table for one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    lang: Lang,
    entries: HashMap<String, LexiconEntry>,
    skipped_lines: usize,
}

/// Pronunciation choice for multi-pronunciation words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PronPolicy {
    #[default]
    First,
    /// Seeded random choice among all pronunciations.
    Random { seed: u64 },
}

fn open(path: &Path) -> Result<BufReader<File>, LexiconError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| LexiconError::Io {
            path: path.to_owned(),
            source,
        })
}

/// Lines with their 1-based numbers, minus blanks and comments.
fn content_lines<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a Path,
) -> impl Iterator<Item = Result<(usize, String), LexiconError>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(l) => {
                let trimmed = l.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, trimmed.to_owned())))
                }
            }
            Err(source) => Some(Err(LexiconError::Io {
                path: path.to_owned(),
                source,
            })),
        })
}

fn strip_alternate_suffix(word: &str) -> &str {
    if let Some(open) = word.rfind('(') {
        let tail = &word[open + 1..];
        if let Some(num) = tail.strip_suffix(')') {
            if !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) && open > 0 {
                return &word[..open];
            }
        }
    }
    word
}

fn parse_tsv_line(line: &str, kind: UnitKind) -> Result<(String, Vec<PronWord>), String> {
    let mut fields = line.split('\t');
    let word = fields.next().unwrap_or_default().trim();
    if word.is_empty() {
        return Err("empty headword".into());
    }
    let prons = fields
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .map(|f| PronWord::parse(f, kind).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    if prons.is_empty() {
        return Err(format!("no pronunciation for {word:?}"));
    }
    Ok((word.to_owned(), prons))
}

fn parse_voxforge_line(line: &str) -> Result<(String, PronWord), String> {
    let mut fields = line.split_whitespace();
    let head = fields.next().ok_or("empty line")?;
    let word = strip_alternate_suffix(head).to_lowercase();
    let units = fields
        .filter(|f| !(f.starts_with('[') && f.ends_with(']')))
        .map(|ph| {
            let ph = ph
                .trim_end_matches(|c: char| c.is_ascii_digit())
                .to_lowercase();
            PronUnit::phoneme(&ph).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pron = PronWord::new(units).map_err(|e| format!("{head}: {e}"))?;
    Ok((word, pron))
}

/// `ZHONG1` / `zhong1` / `zhong_1` -> `zhong_1`.
fn normalize_syllable_id(id: &str) -> Result<PronUnit, PronError> {
    let lower = id.to_lowercase();
    if lower.contains('_') {
        return PronUnit::pinyin(&lower);
    }
    let split = lower.len().saturating_sub(1);
    match lower.split_at_checked(split) {
        Some((base, tone)) => PronUnit::pinyin(&format!("{base}_{tone}")),
        None => Err(PronError::InvalidUnit(id.to_owned())),
    }
}

impl Lexicon {
    pub fn empty(lang: Lang) -> Self {
        Self {
            lang,
            entries: HashMap::new(),
            skipped_lines: 0,
        }
    }

    /// Builds a lexicon from in-memory `(word, pronunciations)` pairs.
    pub fn from_entries<I>(lang: Lang, entries: I) -> Self
    where
        I: IntoIterator<Item = (String, Vec<PronWord>)>,
    {
        let mut lex = Self::empty(lang);
        for (word, prons) in entries {
            lex.insert(word, prons);
        }
        lex
    }

    pub fn load(source: &LexiconSource, lang: Lang, mode: LoadMode) -> Result<Self, LexiconError> {
        match source {
            LexiconSource::SimpleTsv(path) => Self::read_tsv(open(path)?, path, lang, mode),
            LexiconSource::Voxforge(path) => Self::read_voxforge(open(path)?, path, lang, mode),
            LexiconSource::DaCiDian { words, syllables } => {
                Self::read_dacidian(open(words)?, words, open(syllables)?, syllables, lang, mode)
            }
        }
    }

    pub fn read_tsv<R: BufRead>(
        reader: R,
        path: &Path,
        lang: Lang,
        mode: LoadMode,
    ) -> Result<Self, LexiconError> {
        let mut lex = Self::empty(lang);
        for line in content_lines(reader, path) {
            let (line_no, line) = line?;
            match parse_tsv_line(&line, lang.unit_kind()) {
                Ok((word, prons)) => lex.insert(word, prons),
                Err(message) => lex.reject(mode, path, line_no, message)?,
            }
        }
        Ok(lex)
    }

    pub fn read_voxforge<R: BufRead>(
        reader: R,
        path: &Path,
        lang: Lang,
        mode: LoadMode,
    ) -> Result<Self, LexiconError> {
        let mut lex = Self::empty(lang);
        for line in content_lines(reader, path) {
            let (line_no, line) = line?;
            match parse_voxforge_line(&line) {
                Ok((word, pron)) => lex.insert(word, vec![pron]),
                Err(message) => lex.reject(mode, path, line_no, message)?,
            }
        }
        Ok(lex)
    }

    pub fn read_dacidian<R1: BufRead, R2: BufRead>(
        words: R1,
        words_path: &Path,
        syllables: R2,
        syllables_path: &Path,
        lang: Lang,
        mode: LoadMode,
    ) -> Result<Self, LexiconError> {
        let mut lex = Self::empty(lang);
        let mut syllable_map: HashMap<String, PronUnit> = HashMap::new();
        for line in content_lines(syllables, syllables_path) {
            let (line_no, line) = line?;
            let mut fields = line.split_whitespace();
            let parsed = match (fields.next(), fields.next()) {
                (Some(id), Some(pinyin)) => PronUnit::pinyin(pinyin)
                    .or_else(|_| normalize_syllable_id(pinyin))
                    .map(|u| (id.to_owned(), u))
                    .map_err(|e| e.to_string()),
                _ => Err("expected `SYLLABLE pinyin`".to_owned()),
            };
            match parsed {
                Ok((id, unit)) => {
                    syllable_map.entry(id).or_insert(unit);
                }
                Err(message) => lex.reject(mode, syllables_path, line_no, message)?,
            }
        }
        for line in content_lines(words, words_path) {
            let (line_no, line) = line?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let units = fields
                .map(|id| match syllable_map.get(id) {
                    Some(u) => Ok(u.clone()),
                    None => normalize_syllable_id(id).map_err(|e| e.to_string()),
                })
                .collect::<Result<Vec<_>, _>>()
                .and_then(|units| PronWord::new(units).map_err(|e| e.to_string()));
            match units {
                Ok(pron) => lex.insert(word.to_owned(), vec![pron]),
                Err(message) => lex.reject(mode, words_path, line_no, message)?,
            }
        }
        Ok(lex)
    }

    fn insert(&mut self, word: String, prons: Vec<PronWord>) {
        let word = match self.lang {
            Lang::En => word.to_lowercase(),
            Lang::Zh => word,
        };
        self.entries
            .entry(word.clone())
            .or_insert_with(|| LexiconEntry {
                word,
                pronunciations: Vec::new(),
            })
            .pronunciations
            .extend(prons);
    }

    fn reject(
        &mut self,
        mode: LoadMode,
        path: &Path,
        line_no: usize,
        message: String,
    ) -> Result<(), LexiconError> {
        match mode {
            LoadMode::Lenient => {
                self.skipped_lines += 1;
                Ok(())
            }
            LoadMode::Strict => Err(LexiconError::Parse {
                path: path.to_owned(),
                line_no,
                message,
            }),
        }
    }

    fn key<'a>(&self, word: &'a str) -> std::borrow::Cow<'a, str> {
        match self.lang {
            Lang::En if word.chars().any(char::is_uppercase) => word.to_lowercase().into(),
            _ => word.into(),
        }
    }

    pub fn entry(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(self.key(word).as_ref())
    }

    /// First pronunciation in file order.
    pub fn lookup_first(&self, word: &str) -> Option<&PronWord> {
        self.entry(word).and_then(|e| e.pronunciations.first())
    }

    /// Uniformly random pronunciation; deterministic for a seeded `rng`.
    pub fn lookup_random<R: Rng + ?Sized>(&self, word: &str, rng: &mut R) -> Option<&PronWord> {
        let prons = &self.entry(word)?.pronunciations;
        prons.get(rng.random_range(0..prons.len()))
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn unit_kind(&self) -> UnitKind {
        self.lang.unit_kind()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lines skipped as malformed in lenient mode.
    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.values()
    }

    /// Canonical SimpleTSV dump, sorted by headword.
    pub fn dump(&self) -> String {
        let mut words: Vec<&LexiconEntry> = self.entries.values().collect();
        words.sort_by(|a, b| a.word.cmp(&b.word));
        let mut out = String::new();
        for e in words {
            out.push_str(&e.word);
            for p in &e.pronunciations {
                out.push('\t');
                out.push_str(&p.to_string());
            }
            out.push('\n');
        }
        out
    }
}
