//! Quadruple datasets: building from parallel text, TSV/JSONL persistence,
//! seeded train/dev/test splitting and corpus statistics.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convert::{
    convert_pair_detailed, ConvertError, ConvertOptions, PairOutcome, PairResources,
};
use crate::normalize::is_punctuation_token;
use crate::pron::{Lang, PronError, PronSentence, TextSentence, UnitKind};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(
        "parallel files differ in length: {zh_lines} Chinese lines vs {en_lines} English lines"
    )]
    LineCountMismatch { zh_lines: usize, en_lines: usize },
    #[error("{file} line {line_no}: {source}")]
    Io {
        file: String,
        line_no: usize,
        #[source]
        source: io::Error,
    },
    #[error("line {line_no}: {message}")]
    Malformed { line_no: usize, message: String },
    #[error("split needs {requested} entries for dev+test but only {available} exist")]
    SpecTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Convert(#[from] ConvertError),
}

/// `(s, t, s_p, t_p)`: Chinese text, English text and their pronunciations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DatasetEntry {
    pub s: TextSentence,
    pub t: TextSentence,
    pub s_p: PronSentence,
    pub t_p: PronSentence,
}

#[derive(Serialize, Deserialize)]
struct JsonEntry<'a> {
    s: &'a str,
    t: &'a str,
    s_p: &'a str,
    t_p: &'a str,
}

impl DatasetEntry {
    /// Four tab-separated columns, no trailing newline.
    pub fn to_tsv_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.s, self.t, self.s_p, self.t_p)
    }

    pub fn from_tsv_line(line: &str, line_no: usize) -> Result<Self, DatasetError> {
        let malformed = |message: String| DatasetError::Malformed { line_no, message };
        let fields: Vec<&str> = line.trim_end_matches(['\n', '\r']).split('\t').collect();
        let [s, t, s_p, t_p] = fields[..] else {
            return Err(malformed(format!(
                "expected 4 columns, found {}",
                fields.len()
            )));
        };
        let pron = |text: &str, lang| {
            PronSentence::parse(text, lang).map_err(|e: PronError| malformed(e.to_string()))
        };
        let entry = Self {
            s: TextSentence::parse(s, Lang::Zh),
            t: TextSentence::parse(t, Lang::En),
            s_p: pron(s_p, Lang::Zh)?,
            t_p: pron(t_p, Lang::En)?,
        };
        if entry.s.is_empty() || entry.t.is_empty() || entry.s_p.is_empty() || entry.t_p.is_empty()
        {
            return Err(malformed("empty column".into()));
        }
        Ok(entry)
    }

    pub fn to_json_line(&self) -> String {
        let (s, t, s_p, t_p) = (
            self.s.to_string(),
            self.t.to_string(),
            self.s_p.to_string(),
            self.t_p.to_string(),
        );
        serde_json::to_string(&JsonEntry {
            s: &s,
            t: &t,
            s_p: &s_p,
            t_p: &t_p,
        })
        .expect("string fields serialize")
    }
}

/// Reads a TSV dataset, skipping blank lines.
pub fn read_tsv<R: BufRead>(reader: R) -> impl Iterator<Item = Result<DatasetEntry, DatasetError>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(DatasetEntry::from_tsv_line(&l, i + 1)),
            Err(source) => Some(Err(DatasetError::Io {
                file: "dataset".into(),
                line_no: i + 1,
                source,
            })),
        })
}

pub fn write_tsv<'a, W: Write>(
    mut out: W,
    entries: impl IntoIterator<Item = &'a DatasetEntry>,
) -> io::Result<()> {
    for e in entries {
        writeln!(out, "{}", e.to_tsv_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub total_pairs: usize,
    pub kept: usize,
    pub rejected_pairs: usize,
    /// Pairs whose Chinese side failed (a pair may count on both sides).
    pub rejected_zh: usize,
    pub rejected_en: usize,
}

/// Lines read per parallel batch.
pub const BUILD_BATCH: usize = 4096;

fn read_batch<R: BufRead>(
    reader: &mut R,
    name: &str,
    first_line: usize,
    max: usize,
    out: &mut Vec<String>,
) -> Result<(), DatasetError> {
    out.clear();
    let mut buf = String::new();
    while out.len() < max {
        buf.clear();
        let n = reader
            .read_line(&mut buf)
            .map_err(|source| DatasetError::Io {
                file: name.to_owned(),
                line_no: first_line + out.len(),
                source,
            })?;
        if n == 0 {
            break;
        }
        out.push(buf.trim_end_matches(['\n', '\r']).to_owned());
    }
    Ok(())
}

fn count_remaining<R: BufRead>(
    reader: &mut R,
    name: &str,
    seen: usize,
) -> Result<usize, DatasetError> {
    let mut extra = 0;
    let mut buf = String::new();
    loop {
        buf.clear();
        match reader.read_line(&mut buf) {
            Ok(0) => return Ok(extra),
            Ok(_) => extra += 1,
            Err(source) => {
                return Err(DatasetError::Io {
                    file: name.to_owned(),
                    line_no: seen + extra + 1,
                    source,
                })
            }
        }
    }
}

/// Converts line-aligned parallel files into dataset entries.
///
/// Lines are converted in parallel batches; `sink` sees every pair in input
/// order with its 1-based line number and outcome. The returned report counts
/// kept and rejected pairs.
pub fn build_dataset<Z, E, F>(
    mut zh: Z,
    mut en: E,
    res: &PairResources<'_>,
    opts: &ConvertOptions,
    mut sink: F,
) -> Result<BuildReport, DatasetError>
where
    Z: BufRead,
    E: BufRead,
    F: FnMut(usize, &PairOutcome) -> io::Result<()>,
{
    let mut report = BuildReport::default();
    let mut zh_batch = Vec::with_capacity(BUILD_BATCH);
    let mut en_batch = Vec::with_capacity(BUILD_BATCH);
    loop {
        let first = report.total_pairs + 1;
        read_batch(&mut zh, "zh", first, BUILD_BATCH, &mut zh_batch)?;
        read_batch(&mut en, "en", first, BUILD_BATCH, &mut en_batch)?;
        if zh_batch.len() != en_batch.len() {
            let seen = report.total_pairs;
            let zh_lines = seen + zh_batch.len() + count_remaining(&mut zh, "zh", seen)?;
            let en_lines = seen + en_batch.len() + count_remaining(&mut en, "en", seen)?;
            return Err(DatasetError::LineCountMismatch { zh_lines, en_lines });
        }
        if zh_batch.is_empty() {
            return Ok(report);
        }
        let outcomes = zh_batch
            .par_iter()
            .zip(en_batch.par_iter())
            .map(|(z, e)| {
                let s = TextSentence::parse(z, Lang::Zh);
                let t = TextSentence::parse(e, Lang::En);
                convert_pair_detailed(&s, &t, res, opts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (i, outcome) in outcomes.iter().enumerate() {
            let line_no = first + i;
            report.total_pairs += 1;
            match outcome {
                PairOutcome::Entry(_) => report.kept += 1,
                PairOutcome::Rejected { zh, en } => {
                    report.rejected_pairs += 1;
                    report.rejected_zh += usize::from(zh.is_some());
                    report.rejected_en += usize::from(en.is_some());
                }
            }
            sink(line_no, outcome).map_err(|source| DatasetError::Io {
                file: "output".into(),
                line_no,
                source,
            })?;
        }
    }
}

/// Sizes and seed of a train/dev/test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub dev_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSet {
    Train,
    Dev,
    Test,
}

impl SplitSet {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitSet::Train => "train",
            SplitSet::Dev => "dev",
            SplitSet::Test => "test",
        }
    }
}

/// Set membership of each of `n` entries.
///
/// A seeded Fisher-Yates shuffle permutes `0..n`; the last `dev + test`
/// positions of the permutation are the held-out tail, dev first, then test.
pub fn split_assignment(n: usize, spec: &SplitSpec) -> Result<Vec<SplitSet>, DatasetError> {
    let held_out = spec.dev_size + spec.test_size;
    if held_out > n {
        return Err(DatasetError::SpecTooLarge {
            requested: held_out,
            available: n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    perm.shuffle(&mut rng);
    let mut sets = vec![SplitSet::Train; n];
    let dev_start = n - held_out;
    let test_start = n - spec.test_size;
    for &idx in &perm[dev_start..test_start] {
        sets[idx] = SplitSet::Dev;
    }
    for &idx in &perm[test_start..] {
        sets[idx] = SplitSet::Test;
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Partitions `entries`; each set keeps input order.
pub fn split_dataset<T>(entries: Vec<T>, spec: &SplitSpec) -> Result<Split<T>, DatasetError> {
    let sets = split_assignment(entries.len(), spec)?;
    let mut split = Split {
        train: Vec::with_capacity(entries.len() - spec.dev_size - spec.test_size),
        dev: Vec::with_capacity(spec.dev_size),
        test: Vec::with_capacity(spec.test_size),
    };
    for (entry, set) in entries.into_iter().zip(sets) {
        match set {
            SplitSet::Train => split.train.push(entry),
            SplitSet::Dev => split.dev.push(entry),
            SplitSet::Test => split.test.push(entry),
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub entries: usize,
    /// All text tokens, punctuation included.
    pub zh_tokens: usize,
    pub en_tokens: usize,
    /// Distinct non-punctuation text tokens (English lowercased).
    pub zh_distinct_words: usize,
    pub en_distinct_words: usize,
    pub distinct_pinyins: usize,
    pub distinct_phonemes: usize,
    pub distinct_chinese_chars: usize,
}

fn is_han(c: char) -> bool {
    matches!(c,
        '\u{3400}'..='\u{4DBF}'
        | '\u{4E00}'..='\u{9FFF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{20000}'..='\u{2EBEF}'
        | '\u{30000}'..='\u{3134F}')
}

/// Streaming accumulator behind [`corpus_stats`].
#[derive(Debug, Default)]
pub struct StatsAccumulator {
    entries: usize,
    zh_tokens: usize,
    en_tokens: usize,
    zh_words: HashSet<String>,
    en_words: HashSet<String>,
    pinyins: HashSet<String>,
    phonemes: HashSet<String>,
    chars: HashSet<char>,
}

impl StatsAccumulator {
    pub fn add(&mut self, e: &DatasetEntry) {
        self.entries += 1;
        self.zh_tokens += e.s.len();
        self.en_tokens += e.t.len();
        for tok in e.s.tokens() {
            if !is_punctuation_token(tok) {
                self.zh_words.insert(tok.clone());
            }
            self.chars.extend(tok.chars().filter(|&c| is_han(c)));
        }
        for tok in e.t.tokens() {
            if !is_punctuation_token(tok) {
                self.en_words.insert(tok.to_lowercase());
            }
        }
        for u in e.s_p.units().chain(e.t_p.units()) {
            let set = match u.kind() {
                UnitKind::Pinyin => &mut self.pinyins,
                UnitKind::Phoneme => &mut self.phonemes,
            };
            if !set.contains(u.value()) {
                set.insert(u.value().to_owned());
            }
        }
    }

    pub fn finish(self) -> StatsReport {
        StatsReport {
            entries: self.entries,
            zh_tokens: self.zh_tokens,
            en_tokens: self.en_tokens,
            zh_distinct_words: self.zh_words.len(),
            en_distinct_words: self.en_words.len(),
            distinct_pinyins: self.pinyins.len(),
            distinct_phonemes: self.phonemes.len(),
            distinct_chinese_chars: self.chars.len(),
        }
    }
}

pub fn corpus_stats<'a>(entries: impl IntoIterator<Item = &'a DatasetEntry>) -> StatsReport {
    let mut acc = StatsAccumulator::default();
    for e in entries {
        acc.add(e);
    }
    acc.finish()
}
