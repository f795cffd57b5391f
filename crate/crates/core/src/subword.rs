//! Subword and syllable units over pronunciation sentences.
//!
//! Every pronunciation unit is first given its own code point in the Private
//! Use Area ([`PseudoCharMap`]), so a pronunciation word becomes an ordinary
//! string and a merged symbol is just a longer string. On top of that sit two
//! learners sharing one pair-merge engine:
//!
//! * [`learn_bpe`] - classic BPE: repeatedly merge the most frequent adjacent
//!   symbol pair inside words.
//! * [`learn_syllables`] - the same loop, but a pair is only eligible when
//!   one side has exactly one vowel and the other has none, so every learned
//!   symbol carries exactly one vowel.
//!
//! Ties between equally frequent pairs go to the lexicographically smallest
//! `(left, right)` in rendered form. Pair counts are weighted by how often
//! each word occurs in the corpus, and merges never cross word boundaries.
//!
//! Encoded text marks the first symbol of every word with `▁`:
//! `▁l-ay-k ▁w-uh d`.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::pron::{Lang, PhonemeInventory, PronSentence, PronUnit, PronWord, UnitKind};

/// First code point of the pseudo-character block.
pub const PSEUDO_BASE: u32 = 0xE000;
/// Number of code points available (U+E000..=U+F8FF).
pub const PSEUDO_CAPACITY: usize = 0x1900;
/// Marks the first symbol of a word in encoded text.
pub const WORD_BOUNDARY: char = '▁';

const MODEL_MAGIC: &str = "pronspace-subword";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SubwordError {
    #[error(
        "{units} distinct units exceed the {PSEUDO_CAPACITY}-code-point pseudo-character block"
    )]
    AlphabetOverflow { units: usize },
    #[error("unit {0:?} is not in the model alphabet")]
    UnknownUnit(String),
    #[error("malformed subword token {0:?}")]
    MalformedToken(String),
    #[error("syllable learning needs phoneme input, found {0:?}")]
    WrongKind(String),
    #[error("corpus sentence is {found}, expected {expected}")]
    LangMismatch { expected: Lang, found: Lang },
    #[error("unsupported model version {found} (this build reads v{MODEL_VERSION})")]
    VersionMismatch { found: String },
    #[error("corrupt model (line {line_no}): {message}")]
    CorruptModel { line_no: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn corrupt(line_no: usize, message: impl Into<String>) -> SubwordError {
    SubwordError::CorruptModel {
        line_no,
        message: message.into(),
    }
}

/// Bijection between pronunciation units and single Private Use Area chars.
///
/// Units are sorted by their string value and assigned consecutive code
/// points from [`PSEUDO_BASE`], so the mapping depends only on the unit set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PseudoCharMap {
    units: Vec<PronUnit>,
    index: HashMap<String, u32>,
}

impl PseudoCharMap {
    pub fn from_units(units: impl IntoIterator<Item = PronUnit>) -> Result<Self, SubwordError> {
        let set: BTreeSet<(String, UnitKind)> = units
            .into_iter()
            .map(|u| (u.value().to_owned(), u.kind()))
            .collect();
        let units: Vec<PronUnit> = set
            .into_iter()
            .map(|(v, k)| PronUnit::new(&v, k).expect("came from a valid unit"))
            .collect();
        if units.len() > PSEUDO_CAPACITY {
            return Err(SubwordError::AlphabetOverflow { units: units.len() });
        }
        let index = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.value().to_owned(), i as u32))
            .collect();
        Ok(Self { units, index })
    }

    /// Collects every unit appearing in `corpus`.
    pub fn build<'a>(
        corpus: impl IntoIterator<Item = &'a PronSentence>,
    ) -> Result<Self, SubwordError> {
        Self::from_units(corpus.into_iter().flat_map(|s| s.units().cloned()))
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[PronUnit] {
        &self.units
    }

    fn id_of(&self, unit: &str) -> Option<u32> {
        self.index.get(unit).copied()
    }

    pub fn char_of(&self, unit: &str) -> Option<char> {
        self.id_of(unit)
            .map(|i| char::from_u32(PSEUDO_BASE + i).expect("block is valid"))
    }

    pub fn unit_of(&self, c: char) -> Option<&PronUnit> {
        (c as u32)
            .checked_sub(PSEUDO_BASE)
            .and_then(|i| self.units.get(i as usize))
    }

    pub fn word_to_pseudo(&self, word: &PronWord) -> Result<String, SubwordError> {
        word.units()
            .iter()
            .map(|u| {
                self.char_of(u.value())
                    .ok_or_else(|| SubwordError::UnknownUnit(u.value().to_owned()))
            })
            .collect()
    }

    /// Pseudo text: one pseudo string per word, words separated by spaces.
    pub fn to_pseudo(&self, sentence: &PronSentence) -> Result<String, SubwordError> {
        let words = sentence
            .words()
            .iter()
            .map(|w| self.word_to_pseudo(w))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(words.join(" "))
    }

    pub fn from_pseudo(&self, text: &str, lang: Lang) -> Result<PronSentence, SubwordError> {
        let words = text
            .split(' ')
            .filter(|w| !w.is_empty())
            .map(|w| {
                let units = w
                    .chars()
                    .map(|c| {
                        self.unit_of(c)
                            .cloned()
                            .ok_or_else(|| SubwordError::MalformedToken(w.to_owned()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                PronWord::new(units).map_err(|_| SubwordError::MalformedToken(w.to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PronSentence::new(words, lang))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Plain,
    /// Vowel-constrained: every merged symbol has exactly one vowel.
    Syllable,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Plain => "plain",
            ModelKind::Syllable => "syllable",
        }
    }
}

/// One learned merge, in rendered (`-`-joined) form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MergeRule {
    pub left: String,
    pub right: String,
    pub result: String,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Unknown units pass through as singleton symbols; any well-formed
    /// symbol decodes.
    #[default]
    Lenient,
    Strict,
}

/// Learned merges plus the alphabet they operate on.
#[derive(Debug, Clone)]
pub struct SubwordModel {
    kind: ModelKind,
    lang: Lang,
    budget: usize,
    stopped_early: bool,
    alphabet: PseudoCharMap,
    merges: Vec<MergeRule>,
    // Symbol ids: alphabet units first, then each distinct merge result.
    symbols: Vec<String>,
    symbol_ids: HashMap<String, u32>,
    pair_ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl PartialEq for SubwordModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.lang == other.lang
            && self.budget == other.budget
            && self.stopped_early == other.stopped_early
            && self.alphabet == other.alphabet
            && self.merges == other.merges
    }
}

impl SubwordModel {
    /// Assembles a model from a rendered merge list, checking that every
    /// merge combines symbols that already exist.
    pub fn from_parts(
        kind: ModelKind,
        lang: Lang,
        budget: usize,
        stopped_early: bool,
        alphabet: PseudoCharMap,
        merges: Vec<(String, String)>,
    ) -> Result<Self, SubwordError> {
        let mut symbols: Vec<String> = alphabet
            .units()
            .iter()
            .map(|u| u.value().to_owned())
            .collect();
        let mut symbol_ids: HashMap<String, u32> = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let mut pair_ranks = HashMap::new();
        let mut rules = Vec::with_capacity(merges.len());
        for (rank, (left, right)) in merges.into_iter().enumerate() {
            let (Some(&l), Some(&r)) = (symbol_ids.get(&left), symbol_ids.get(&right)) else {
                return Err(corrupt(
                    rank + 1,
                    format!("merge {left} + {right} uses an unknown symbol"),
                ));
            };
            let result = format!("{left}-{right}");
            let id = *symbol_ids.entry(result.clone()).or_insert_with(|| {
                symbols.push(result.clone());
                (symbols.len() - 1) as u32
            });
            if pair_ranks.insert((l, r), (rank, id)).is_some() {
                return Err(corrupt(
                    rank + 1,
                    format!("duplicate merge {left} + {right}"),
                ));
            }
            rules.push(MergeRule {
                left,
                right,
                result,
                rank,
            });
        }
        Ok(Self {
            kind,
            lang,
            budget,
            stopped_early,
            alphabet,
            merges: rules,
            symbols,
            symbol_ids,
            pair_ranks,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn unit_kind(&self) -> UnitKind {
        self.lang.unit_kind()
    }

    /// Merge budget `m` the model was trained with.
    pub fn budget(&self) -> usize {
        self.budget
    }

    /// True when learning ran out of (eligible) pairs before the budget.
    pub fn stopped_early(&self) -> bool {
        self.stopped_early
    }

    pub fn alphabet(&self) -> &PseudoCharMap {
        &self.alphabet
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    /// Final symbol set: alphabet units and every merge result, rendered.
    pub fn vocab(&self) -> BTreeSet<&str> {
        self.symbols.iter().map(String::as_str).collect()
    }

    fn segment_word(
        &self,
        word: &PronWord,
        strict: Strictness,
    ) -> Result<Vec<String>, SubwordError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Piece {
            Sym(u32),
            Unknown(usize),
        }
        let mut pieces = word
            .units()
            .iter()
            .enumerate()
            .map(|(i, u)| match self.alphabet.id_of(u.value()) {
                Some(id) => Ok(Piece::Sym(id)),
                None if strict == Strictness::Lenient => Ok(Piece::Unknown(i)),
                None => Err(SubwordError::UnknownUnit(u.value().to_owned())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rank_of = |a: Piece, b: Piece| match (a, b) {
            (Piece::Sym(l), Piece::Sym(r)) => self.pair_ranks.get(&(l, r)).copied(),
            _ => None,
        };
        loop {
            let best = pieces
                .windows(2)
                .filter_map(|w| rank_of(w[0], w[1]).map(|(rank, id)| (rank, id, w[0], w[1])))
                .min_by_key(|&(rank, ..)| rank);
            let Some((_, merged, left, right)) = best else {
                break;
            };
            let mut out = Vec::with_capacity(pieces.len());
            let mut i = 0;
            while i < pieces.len() {
                if i + 1 < pieces.len() && pieces[i] == left && pieces[i + 1] == right {
                    out.push(Piece::Sym(merged));
                    i += 2;
                } else {
                    out.push(pieces[i]);
                    i += 1;
                }
            }
            pieces = out;
        }
        Ok(pieces
            .into_iter()
            .map(|p| match p {
                Piece::Sym(id) => self.symbols[id as usize].clone(),
                Piece::Unknown(i) => word.units()[i].value().to_owned(),
            })
            .collect())
    }

    /// Segments every word by applying merges in rank order.
    pub fn encode(
        &self,
        sentence: &PronSentence,
        strict: Strictness,
    ) -> Result<Vec<SubwordToken>, SubwordError> {
        let mut tokens = Vec::new();
        for word in sentence.words() {
            for (i, symbol) in self.segment_word(word, strict)?.into_iter().enumerate() {
                tokens.push(SubwordToken {
                    symbol,
                    word_start: i == 0,
                });
            }
        }
        Ok(tokens)
    }

    /// Inverse of [`encode`](Self::encode).
    pub fn decode(
        &self,
        tokens: &[SubwordToken],
        strict: Strictness,
    ) -> Result<PronSentence, SubwordError> {
        let mut words: Vec<Vec<PronUnit>> = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            let malformed = || SubwordError::MalformedToken(tok.to_string());
            if strict == Strictness::Strict
                && (!self.symbol_ids.contains_key(&tok.symbol) || (i == 0 && !tok.word_start))
            {
                return Err(malformed());
            }
            let word = PronWord::parse(&tok.symbol, self.unit_kind())
                .or_else(|_| PronWord::detect(&tok.symbol))
                .map_err(|_| malformed())?;
            if tok.word_start || words.is_empty() {
                words.push(Vec::new());
            }
            words
                .last_mut()
                .expect("pushed above")
                .extend(word.units().iter().cloned());
        }
        let words = words
            .into_iter()
            .map(PronWord::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SubwordError::MalformedToken(e.to_string()))?;
        Ok(PronSentence::new(words, self.lang))
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{MODEL_MAGIC} v{MODEL_VERSION}")?;
        writeln!(
            out,
            "kind={} m={} units={} stopped_early={} alphabet={} merges={}",
            self.kind.as_str(),
            self.budget,
            self.unit_kind().as_str(),
            self.stopped_early,
            self.alphabet.len(),
            self.merges.len(),
        )?;
        writeln!(out, "[alphabet]")?;
        for (i, u) in self.alphabet.units().iter().enumerate() {
            writeln!(out, "{}\t{:04X}", u.value(), PSEUDO_BASE + i as u32)?;
        }
        writeln!(out, "[merges]")?;
        for r in &self.merges {
            writeln!(out, "{}\t{}", r.left, r.right)?;
        }
        writeln!(out, "[end]")?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, SubwordError> {
        let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
        let mut it = lines.iter().enumerate().map(|(i, l)| (i + 1, l.as_str()));
        let mut next = |what: &str| {
            it.next()
                .ok_or_else(|| corrupt(0, format!("file ends before {what}")))
        };

        let (_, magic) = next("header")?;
        let version = match magic.split_once(' ') {
            Some((MODEL_MAGIC, v)) => v,
            _ => return Err(corrupt(1, "not a subword model file")),
        };
        if version != format!("v{MODEL_VERSION}") {
            return Err(SubwordError::VersionMismatch {
                found: version.to_owned(),
            });
        }

        let (line_no, header) = next("settings")?;
        let fields: HashMap<&str, &str> = header
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let field = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| corrupt(line_no, format!("missing {k}")))
        };
        let number = |k: &str| {
            field(k)?
                .parse::<usize>()
                .map_err(|_| corrupt(line_no, format!("bad {k}")))
        };
        let kind = match field("kind")? {
            "plain" => ModelKind::Plain,
            "syllable" => ModelKind::Syllable,
            other => return Err(corrupt(line_no, format!("unknown kind {other}"))),
        };
        let lang = match UnitKind::parse(field("units")?) {
            Some(UnitKind::Pinyin) => Lang::Zh,
            Some(UnitKind::Phoneme) => Lang::En,
            None => return Err(corrupt(line_no, "unknown unit kind")),
        };
        let stopped_early = field("stopped_early")?
            .parse::<bool>()
            .map_err(|_| corrupt(line_no, "bad stopped_early"))?;
        let budget = number("m")?;
        let alphabet_len = number("alphabet")?;
        let merge_len = number("merges")?;

        let expect_marker = |(n, l): (usize, &str), marker: &str| {
            if l == marker {
                Ok(())
            } else {
                Err(corrupt(n, format!("expected {marker}")))
            }
        };
        expect_marker(next("[alphabet]")?, "[alphabet]")?;
        let mut units = Vec::with_capacity(alphabet_len);
        for i in 0..alphabet_len {
            let (n, line) = next("alphabet entry")?;
            let (value, cp) = line
                .split_once('\t')
                .ok_or_else(|| corrupt(n, "expected `unit<TAB>codepoint`"))?;
            let unit = PronUnit::detect(value).map_err(|e| corrupt(n, e.to_string()))?;
            if u32::from_str_radix(cp, 16).ok() != Some(PSEUDO_BASE + i as u32) {
                return Err(corrupt(n, format!("unexpected code point {cp}")));
            }
            if units
                .last()
                .is_some_and(|prev: &PronUnit| prev.value() >= unit.value())
            {
                return Err(corrupt(n, "alphabet is not sorted"));
            }
            units.push(unit);
        }
        expect_marker(next("[merges]")?, "[merges]")?;
        let mut merges = Vec::with_capacity(merge_len);
        for _ in 0..merge_len {
            let (n, line) = next("merge")?;
            let (l, r) = line
                .split_once('\t')
                .ok_or_else(|| corrupt(n, "expected `left<TAB>right`"))?;
            merges.push((l.to_owned(), r.to_owned()));
        }
        expect_marker(next("[end]")?, "[end]")?;

        let alphabet = PseudoCharMap::from_units(units)?;
        Self::from_parts(kind, lang, budget, stopped_early, alphabet, merges)
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), SubwordError> {
        let tmp = path.with_extension("tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            self.write(&mut out)?;
            out.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SubwordError> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

/// One encoded symbol; `word_start` renders as a `▁` prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubwordToken {
    pub symbol: String,
    pub word_start: bool,
}

impl fmt::Display for SubwordToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word_start {
            write!(f, "{WORD_BOUNDARY}")?;
        }
        f.write_str(&self.symbol)
    }
}

pub fn render_tokens(tokens: &[SubwordToken]) -> String {
    tokens
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_tokens(line: &str) -> Vec<SubwordToken> {
    line.split_whitespace()
        .map(|t| match t.strip_prefix(WORD_BOUNDARY) {
            Some(symbol) => SubwordToken {
                symbol: symbol.to_owned(),
                word_start: true,
            },
            None => SubwordToken {
                symbol: t.to_owned(),
                word_start: false,
            },
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Learning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairFilter {
    Any,
    OneVowelSide,
}

struct Symbol {
    rendered: Arc<str>,
    vowels: u32,
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: Arc<str>,
    right: Arc<str>,
    pair: (u32, u32),
}

impl Ord for Candidate {
    // Max-heap: higher count first, then the smaller (left, right).
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Trainer {
    filter: PairFilter,
    symbols: Vec<Symbol>,
    symbol_ids: HashMap<Arc<str>, u32>,
    words: Vec<Vec<u32>>,
    freqs: Vec<u64>,
    pair_counts: HashMap<(u32, u32), u64>,
    occurs_in: HashMap<(u32, u32), Vec<usize>>,
    heap: BinaryHeap<Candidate>,
}

impl Trainer {
    fn new(
        alphabet: &PseudoCharMap,
        word_freqs: Vec<(Vec<u32>, u64)>,
        filter: PairFilter,
        is_vowel: impl Fn(&PronUnit) -> bool,
    ) -> Self {
        let symbols: Vec<Symbol> = alphabet
            .units()
            .iter()
            .map(|u| Symbol {
                rendered: Arc::from(u.value()),
                vowels: u32::from(is_vowel(u)),
            })
            .collect();
        let symbol_ids = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.rendered.clone(), i as u32))
            .collect();
        let (words, freqs) = word_freqs.into_iter().unzip();
        let mut t = Self {
            filter,
            symbols,
            symbol_ids,
            words,
            freqs,
            pair_counts: HashMap::new(),
            occurs_in: HashMap::new(),
            heap: BinaryHeap::new(),
        };
        for (idx, word) in t.words.iter().enumerate() {
            for w in word.windows(2) {
                let pair = (w[0], w[1]);
                *t.pair_counts.entry(pair).or_default() += t.freqs[idx];
                let list = t.occurs_in.entry(pair).or_default();
                if list.last() != Some(&idx) {
                    list.push(idx);
                }
            }
        }
        let pairs: Vec<_> = t.pair_counts.iter().map(|(&p, &c)| (p, c)).collect();
        for (pair, count) in pairs {
            t.push(pair, count);
        }
        t
    }

    fn eligible(&self, (l, r): (u32, u32)) -> bool {
        match self.filter {
            PairFilter::Any => true,
            PairFilter::OneVowelSide => {
                let (vl, vr) = (
                    self.symbols[l as usize].vowels,
                    self.symbols[r as usize].vowels,
                );
                (vl == 1 && vr == 0) || (vl == 0 && vr == 1)
            }
        }
    }

    fn push(&mut self, pair: (u32, u32), count: u64) {
        if count > 0 && self.eligible(pair) {
            self.heap.push(Candidate {
                count,
                left: self.symbols[pair.0 as usize].rendered.clone(),
                right: self.symbols[pair.1 as usize].rendered.clone(),
                pair,
            });
        }
    }

    fn best(&mut self) -> Option<(u32, u32)> {
        while let Some(c) = self.heap.pop() {
            if self.pair_counts.get(&c.pair).copied() == Some(c.count) {
                return Some(c.pair);
            }
        }
        None
    }

    fn intern(&mut self, l: u32, r: u32) -> u32 {
        let rendered: Arc<str> = Arc::from(format!(
            "{}-{}",
            self.symbols[l as usize].rendered, self.symbols[r as usize].rendered
        ));
        if let Some(&id) = self.symbol_ids.get(&rendered) {
            return id;
        }
        let vowels = self.symbols[l as usize].vowels + self.symbols[r as usize].vowels;
        self.symbols.push(Symbol {
            rendered: rendered.clone(),
            vowels,
        });
        let id = (self.symbols.len() - 1) as u32;
        self.symbol_ids.insert(rendered, id);
        id
    }

    fn merge(&mut self, pair: (u32, u32)) {
        let merged = self.intern(pair.0, pair.1);
        let mut delta: HashMap<(u32, u32), i64> = HashMap::new();
        let candidates = self.occurs_in.remove(&pair).unwrap_or_default();
        let mut still_listed = Vec::new();
        for idx in candidates {
            let word = &self.words[idx];
            if !word.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            let freq = self.freqs[idx] as i64;
            for w in word.windows(2) {
                *delta.entry((w[0], w[1])).or_default() -= freq;
            }
            let mut out = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(word[i]);
                    i += 1;
                }
            }
            for w in out.windows(2) {
                let p = (w[0], w[1]);
                *delta.entry(p).or_default() += freq;
                if p == pair {
                    still_listed.push(idx);
                }
                let list = self.occurs_in.entry(p).or_default();
                if list.last() != Some(&idx) {
                    list.push(idx);
                }
            }
            self.words[idx] = out;
        }
        if !still_listed.is_empty() {
            self.occurs_in.insert(pair, still_listed);
        }
        let mut changed: Vec<_> = delta.into_iter().filter(|&(_, d)| d != 0).collect();
        changed.sort_unstable();
        for (p, d) in changed {
            let entry = self.pair_counts.entry(p).or_default();
            *entry = (*entry as i64 + d) as u64;
            let count = *entry;
            if count == 0 {
                self.pair_counts.remove(&p);
            } else {
                self.push(p, count);
            }
        }
    }

    fn run(mut self, budget: usize) -> (Vec<(String, String)>, bool) {
        let mut merges = Vec::with_capacity(budget.min(1 << 16));
        while merges.len() < budget {
            let Some(pair) = self.best() else {
                return (merges, true);
            };
            merges.push((
                self.symbols[pair.0 as usize].rendered.to_string(),
                self.symbols[pair.1 as usize].rendered.to_string(),
            ));
            self.merge(pair);
        }
        (merges, false)
    }
}

fn word_types(
    corpus: &[PronSentence],
    alphabet: &PseudoCharMap,
) -> Result<Vec<(Vec<u32>, u64)>, SubwordError> {
    let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
    for s in corpus {
        for w in s.words() {
            let ids = w
                .units()
                .iter()
                .map(|u| {
                    alphabet
                        .id_of(u.value())
                        .ok_or_else(|| SubwordError::UnknownUnit(u.value().to_owned()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            *counts.entry(ids).or_default() += 1;
        }
    }
    let mut types: Vec<_> = counts.into_iter().collect();
    types.sort_unstable();
    Ok(types)
}

fn check_lang(corpus: &[PronSentence], lang: Lang) -> Result<(), SubwordError> {
    match corpus.iter().find(|s| s.lang() != lang) {
        Some(s) => Err(SubwordError::LangMismatch {
            expected: lang,
            found: s.lang(),
        }),
        None => Ok(()),
    }
}

/// Classic pair-merge BPE with at most `merges` rules.
pub fn learn_bpe(
    corpus: &[PronSentence],
    merges: usize,
    lang: Lang,
) -> Result<SubwordModel, SubwordError> {
    check_lang(corpus, lang)?;
    let alphabet = PseudoCharMap::build(corpus)?;
    let types = word_types(corpus, &alphabet)?;
    let (rules, stopped_early) =
        Trainer::new(&alphabet, types, PairFilter::Any, |_| false).run(merges);
    SubwordModel::from_parts(
        ModelKind::Plain,
        lang,
        merges,
        stopped_early,
        alphabet,
        rules,
    )
}

/// Vowel-constrained BPE: a pair is eligible only when one side has exactly
/// one vowel and the other none. Stops early, without error, when nothing is
/// eligible.
pub fn learn_syllables(
    corpus: &[PronSentence],
    merges: usize,
    inventory: &PhonemeInventory,
) -> Result<SubwordModel, SubwordError> {
    check_lang(corpus, Lang::En)?;
    if let Some(u) = corpus
        .iter()
        .flat_map(PronSentence::units)
        .find(|u| u.kind() != UnitKind::Phoneme || !inventory.contains(u.value()))
    {
        return Err(SubwordError::WrongKind(u.value().to_owned()));
    }
    let alphabet = PseudoCharMap::build(corpus)?;
    let types = word_types(corpus, &alphabet)?;
    let (rules, stopped_early) = Trainer::new(&alphabet, types, PairFilter::OneVowelSide, |u| {
        inventory.is_vowel_str(u.value())
    })
    .run(merges);
    SubwordModel::from_parts(
        ModelKind::Syllable,
        Lang::En,
        merges,
        stopped_early,
        alphabet,
        rules,
    )
}

/// Vowel count of a rendered symbol such as `k-ae-t`.
pub fn symbol_vowel_count(symbol: &str, inventory: &PhonemeInventory) -> usize {
    symbol
        .split('-')
        .filter(|u| inventory.is_vowel_str(u))
        .count()
}

/// Rendered symbols produced by encoding `corpus`.
pub fn encoded_symbols<'a>(
    model: &'a SubwordModel,
    corpus: &'a [PronSentence],
) -> impl Iterator<Item = String> + 'a {
    corpus.iter().flat_map(move |s| {
        model
            .encode(s, Strictness::Lenient)
            .expect("lenient encoding cannot fail")
            .into_iter()
            .map(|t| t.symbol)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(spec: &[(&str, usize)]) -> Vec<PronSentence> {
        spec.iter()
            .flat_map(|&(w, n)| {
                std::iter::repeat_with(move || PronSentence::parse(w, Lang::En).unwrap()).take(n)
            })
            .collect()
    }

    fn rules(model: &SubwordModel) -> Vec<(&str, &str)> {
        model
            .merges()
            .iter()
            .map(|r| (r.left.as_str(), r.right.as_str()))
            .collect()
    }

    fn sentence(text: &str) -> PronSentence {
        PronSentence::parse(text, Lang::En).unwrap()
    }

    #[test]
    fn pseudo_map_assignment() {
        let map = PseudoCharMap::build(&[sentence("th ah")]).unwrap();
        assert_eq!(map.char_of("ah"), Some('\u{E000}'));
        assert_eq!(map.char_of("th"), Some('\u{E001}'));
        assert_eq!(map.unit_of('\u{E001}').unwrap().value(), "th");
        assert!(PseudoCharMap::build(&[]).unwrap().is_empty());
    }

    #[test]
    fn pseudo_map_holds_many_pinyins() {
        let mut units = Vec::new();
        'outer: for a in b'a'..=b'z' {
            for b in b'a'..=b'z' {
                for tone in 1..=5 {
                    if units.len() == 1485 {
                        break 'outer;
                    }
                    let v = format!("{}{}_{tone}", a as char, b as char);
                    units.push(PronUnit::pinyin(&v).unwrap());
                }
            }
        }
        let map = PseudoCharMap::from_units(units).unwrap();
        assert_eq!(map.len(), 1485);
    }

    #[test]
    fn pseudo_map_overflow() {
        let units = (0..=PSEUDO_CAPACITY).map(|i| {
            let mut base = String::new();
            let mut n = i;
            loop {
                base.push((b'a' + (n % 26) as u8) as char);
                n /= 26;
                if n == 0 {
                    break;
                }
            }
            PronUnit::pinyin(&format!("{base}_1")).unwrap()
        });
        assert!(matches!(
            PseudoCharMap::from_units(units),
            Err(SubwordError::AlphabetOverflow { units }) if units == PSEUDO_CAPACITY + 1
        ));
    }

    #[test]
    fn pseudo_round_trip() {
        let s = sentence("w-uh-d y-uw l-ay-k");
        let map = PseudoCharMap::build([&s]).unwrap();
        let pseudo = map.to_pseudo(&s).unwrap();
        assert_eq!(pseudo.split(' ').count(), 3);
        assert_eq!(map.from_pseudo(&pseudo, Lang::En).unwrap(), s);
    }

    #[test]
    fn bpe_learns_most_frequent_pair() {
        let c = corpus(&[("l-ay-k", 3), ("l-ay", 2)]);
        let m1 = learn_bpe(&c, 1, Lang::En).unwrap();
        assert_eq!(rules(&m1), [("l", "ay")]);
        assert_eq!(m1.merges()[0].rank, 0);
        let m2 = learn_bpe(&c, 2, Lang::En).unwrap();
        assert_eq!(rules(&m2), [("l", "ay"), ("l-ay", "k")]);
        assert!(!m2.stopped_early());
        let m3 = learn_bpe(&c, 3, Lang::En).unwrap();
        assert_eq!(m3.merges().len(), 2);
        assert!(m3.stopped_early());
    }

    #[test]
    fn zero_budget_is_unit_level() {
        let c = corpus(&[("w-uh-d", 4)]);
        let m = learn_bpe(&c, 0, Lang::En).unwrap();
        assert!(m.merges().is_empty());
        let toks = m.encode(&sentence("w-uh-d"), Strictness::Strict).unwrap();
        assert_eq!(render_tokens(&toks), "▁w uh d");
    }

    #[test]
    fn ties_break_lexicographically() {
        // (b, ah) and (ah, d) both occur twice; (ah, d) < (b, ah).
        let c = corpus(&[("b-ah-d", 2)]);
        let m = learn_bpe(&c, 1, Lang::En).unwrap();
        assert_eq!(rules(&m), [("ah", "d")]);
    }

    #[test]
    fn merges_stay_inside_words() {
        let c = corpus(&[("l ay", 10)]);
        let m = learn_bpe(&c, 5, Lang::En).unwrap();
        assert!(m.merges().is_empty());
        assert!(m.stopped_early());
    }

    #[test]
    fn syllable_learning_examples() {
        let inv = PhonemeInventory::arpabet();
        let c = corpus(&[("k-ae-t", 2), ("ae-t", 1)]);
        let m = learn_syllables(&c, 2, inv).unwrap();
        assert_eq!(rules(&m), [("ae", "t"), ("k", "ae-t")]);
        assert!(m.vocab().contains("k-ae-t"));

        let vv = learn_syllables(&corpus(&[("ay-ah", 100)]), 5, inv).unwrap();
        assert!(vv.merges().is_empty() && vv.stopped_early());
        let cc = learn_syllables(&corpus(&[("s-t-r", 100)]), 5, inv).unwrap();
        assert!(cc.merges().is_empty() && cc.stopped_early());
    }

    #[test]
    fn syllables_reject_pinyin() {
        let c = vec![PronSentence::parse("ni_3", Lang::Zh).unwrap()];
        assert!(learn_syllables(&c, 3, PhonemeInventory::arpabet()).is_err());
    }

    #[test]
    fn bpe_rejects_mixed_languages() {
        let c = vec![
            PronSentence::parse("ni_3", Lang::Zh).unwrap(),
            sentence("ah"),
        ];
        assert!(matches!(
            learn_bpe(&c, 3, Lang::Zh),
            Err(SubwordError::LangMismatch { .. })
        ));
    }

    #[test]
    fn encode_examples() {
        let c = corpus(&[("l-ay-k", 3), ("l-ay", 2)]);
        let m = learn_bpe(&c, 2, Lang::En).unwrap();
        let toks = m.encode(&sentence("l-ay-k"), Strictness::Strict).unwrap();
        assert_eq!(render_tokens(&toks), "▁l-ay-k");
        assert_eq!(
            m.decode(&toks, Strictness::Strict).unwrap(),
            sentence("l-ay-k")
        );

        let zh = vec![PronSentence::parse("ni_3-hao_3", Lang::Zh).unwrap()];
        let mz = learn_bpe(&zh, 1, Lang::Zh).unwrap();
        let toks = mz.encode(&zh[0], Strictness::Strict).unwrap();
        assert_eq!(render_tokens(&toks), "▁ni_3-hao_3");
        assert_eq!(mz.decode(&toks, Strictness::Strict).unwrap(), zh[0]);
    }

    #[test]
    fn decode_edge_cases() {
        let m = learn_bpe(&corpus(&[("w-uh-d", 1)]), 0, Lang::En).unwrap();
        let toks = parse_tokens("▁w uh d");
        assert_eq!(
            m.decode(&toks, Strictness::Strict).unwrap(),
            sentence("w-uh-d")
        );
        assert!(m.decode(&[], Strictness::Strict).unwrap().is_empty());
        assert!(matches!(
            m.decode(&parse_tokens("▁w-uh"), Strictness::Strict),
            Err(SubwordError::MalformedToken(_))
        ));
        assert_eq!(
            m.decode(&parse_tokens("▁w-uh"), Strictness::Lenient)
                .unwrap(),
            sentence("w-uh")
        );
        assert!(m
            .decode(&parse_tokens("▁w-??"), Strictness::Lenient)
            .is_err());
        assert!(m.decode(&parse_tokens("uh"), Strictness::Strict).is_err());
    }

    #[test]
    fn unknown_units() {
        let m = learn_bpe(&corpus(&[("l-ay", 2)]), 1, Lang::En).unwrap();
        let s = sentence("l-ay-k");
        assert!(matches!(
            m.encode(&s, Strictness::Strict),
            Err(SubwordError::UnknownUnit(u)) if u == "k"
        ));
        let toks = m.encode(&s, Strictness::Lenient).unwrap();
        assert_eq!(render_tokens(&toks), "▁l-ay k");
        assert_eq!(m.decode(&toks, Strictness::Lenient).unwrap(), s);
    }

    #[test]
    fn model_file_round_trip() {
        let c = corpus(&[("l-ay-k", 3), ("l-ay", 2)]);
        let m = learn_bpe(&c, 2, Lang::En).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("pronspace-subword v1\nkind=plain m=2 units=phoneme"));
        let back = SubwordModel::read(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        for s in &c {
            assert_eq!(
                back.encode(s, Strictness::Strict).unwrap(),
                m.encode(s, Strictness::Strict).unwrap()
            );
        }

        let truncated = &text[..text.len() - "[end]\n".len() - 3];
        assert!(matches!(
            SubwordModel::read(truncated.as_bytes()),
            Err(SubwordError::CorruptModel { .. })
        ));
        let future = text.replace("pronspace-subword v1", "pronspace-subword v2");
        assert!(matches!(
            SubwordModel::read(future.as_bytes()),
            Err(SubwordError::VersionMismatch { .. })
        ));
        assert!(matches!(
            SubwordModel::read("hello\n".as_bytes()),
            Err(SubwordError::CorruptModel { .. })
        ));
        let bad_merge = text.replace("l-ay\tk", "l-ay\tzh");
        assert!(SubwordModel::read(bad_merge.as_bytes()).is_err());
    }

    #[test]
    fn model_save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let c = corpus(&[("k-ae-t", 2), ("ae-t", 1)]);
        let m = learn_syllables(&c, 2, PhonemeInventory::arpabet()).unwrap();
        m.save(&path).unwrap();
        assert_eq!(SubwordModel::load(&path).unwrap(), m);
    }

    #[test]
    fn symbol_vowels() {
        let inv = PhonemeInventory::arpabet();
        assert_eq!(symbol_vowel_count("k-ae-t", inv), 1);
        assert_eq!(symbol_vowel_count("s-t-r", inv), 0);
    }
}
