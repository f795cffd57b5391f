//! Text sentence -> pronunciation sentence.
//!
//! Each token is resolved in a fixed order: punctuation rules (applied to the
//! whole sentence first), lexicon lookup, the number path for digit tokens,
//! a grapheme-to-phoneme fallback, and finally rejection (or dropping the
//! word when configured to skip). A sentence with a rejected word yields no
//! pronunciation at all.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::DatasetEntry;
use crate::lexicon::{Lexicon, PronPolicy};
use crate::normalize::{
    apply_punct_rules, chinese_numeral_to_pinyin, en_number_to_words, parse_number_token,
    zh_decimal_to_chinese, NumberReadingMode, ZhNumberTable, ZH_NEGATIVE,
};
use crate::pron::{Lang, PronSentence, PronUnit, PronWord, TextSentence, UnitKind};

/// Version tag of the built-in English letter rules.
pub const G2P_RULES_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("sentence language {text} does not match lexicon language {lexicon}")]
    LangMismatch { text: Lang, lexicon: Lang },
    #[error("unknown G2P provider {0:?} (expected rules, none or external:<cmd>)")]
    UnknownProvider(String),
    #[error("{path}:{line_no}: {message}")]
    CharTable {
        path: String,
        line_no: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Word -> pronunciation fallback for words missing from the lexicon.
///
/// Implementations must be deterministic per word.
pub trait G2pProvider: Send + Sync {
    fn pronounce(&self, word: &str) -> Option<PronWord>;
}

impl<T: G2pProvider + ?Sized> G2pProvider for &T {
    fn pronounce(&self, word: &str) -> Option<PronWord> {
        (**self).pronounce(word)
    }
}

impl<T: G2pProvider + ?Sized> G2pProvider for Box<T> {
    fn pronounce(&self, word: &str) -> Option<PronWord> {
        (**self).pronounce(word)
    }
}

/// Provider that never produces anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoG2p;

impl G2pProvider for NoG2p {
    fn pronounce(&self, _word: &str) -> Option<PronWord> {
        None
    }
}

// Longest match wins; lengths are tried from 4 down to 1.
const EN_LETTER_RULES: &[(&str, &str)] = &[
    ("tion", "sh-ah-n"),
    ("sion", "zh-ah-n"),
    ("ough", "ao"),
    ("eigh", "ey"),
    ("igh", "ay"),
    ("tch", "ch"),
    ("sch", "s-k"),
    ("dge", "jh"),
    ("ing", "ih-ng"),
    ("ear", "ih-r"),
    ("air", "eh-r"),
    ("ch", "ch"),
    ("sh", "sh"),
    ("th", "th"),
    ("ph", "f"),
    ("wh", "w"),
    ("ng", "ng"),
    ("ck", "k"),
    ("qu", "k-w"),
    ("kn", "n"),
    ("wr", "r"),
    ("gh", "g"),
    ("zh", "zh"),
    ("ee", "iy"),
    ("ea", "iy"),
    ("ie", "iy"),
    ("ey", "iy"),
    ("oo", "uw"),
    ("ue", "uw"),
    ("ou", "aw"),
    ("ow", "ow"),
    ("oa", "ow"),
    ("oi", "oy"),
    ("oy", "oy"),
    ("ai", "ey"),
    ("ay", "ey"),
    ("au", "ao"),
    ("aw", "ao"),
    ("ar", "aa-r"),
    ("er", "er"),
    ("ir", "er"),
    ("ur", "er"),
    ("or", "ao-r"),
    ("bb", "b"),
    ("cc", "k"),
    ("dd", "d"),
    ("ff", "f"),
    ("gg", "g"),
    ("ll", "l"),
    ("mm", "m"),
    ("nn", "n"),
    ("pp", "p"),
    ("rr", "r"),
    ("ss", "s"),
    ("tt", "t"),
    ("zz", "z"),
    ("a", "ae"),
    ("b", "b"),
    ("c", "k"),
    ("d", "d"),
    ("e", "eh"),
    ("f", "f"),
    ("g", "g"),
    ("h", "hh"),
    ("i", "ih"),
    ("j", "jh"),
    ("k", "k"),
    ("l", "l"),
    ("m", "m"),
    ("n", "n"),
    ("o", "aa"),
    ("p", "p"),
    ("q", "k"),
    ("r", "r"),
    ("s", "s"),
    ("t", "t"),
    ("u", "ah"),
    ("v", "v"),
    ("w", "w"),
    ("x", "k-s"),
    ("y", "y"),
    ("z", "z"),
];

fn letter_rule(cluster: &str) -> Option<&'static str> {
    EN_LETTER_RULES
        .iter()
        .find(|(k, _)| *k == cluster)
        .map(|(_, v)| *v)
}

/// Rule-based English G2P: greedy longest-match letter clusters.
///
/// A final `e` after a consonant is silent in words of three or more
/// letters. Returns `None` for empty or non-alphabetic input.
pub fn rule_g2p_en(word: &str) -> Option<PronWord> {
    if word.is_empty() || !word.bytes().all(|b| b.is_ascii_alphabetic()) {
        return None;
    }
    let lower = word.to_ascii_lowercase();
    let mut letters = lower.as_str();
    if letters.len() >= 3 && letters.ends_with('e') {
        let before = letters.as_bytes()[letters.len() - 2];
        if !b"aeiouy".contains(&before) {
            letters = &letters[..letters.len() - 1];
        }
    }
    let mut units = Vec::new();
    let mut i = 0;
    while i < letters.len() {
        let max = (letters.len() - i).min(4);
        let (len, phones) = (1..=max)
            .rev()
            .find_map(|n| letter_rule(&letters[i..i + n]).map(|p| (n, p)))?;
        for ph in phones.split('-') {
            units.push(PronUnit::phoneme(ph).expect("rule table uses ARPAbet"));
        }
        i += len;
    }
    PronWord::new(units).ok()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleG2pEn;

impl G2pProvider for RuleG2pEn {
    fn pronounce(&self, word: &str) -> Option<PronWord> {
        rule_g2p_en(word)
    }
}

/// Per-character Pinyin table backing the Chinese fallback.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CharTable {
    map: HashMap<char, PronUnit>,
}

impl CharTable {
    pub fn new(map: HashMap<char, PronUnit>) -> Self {
        Self { map }
    }

    /// Single-character lexicon entries with single-syllable first readings.
    pub fn from_lexicon(lex: &Lexicon) -> Self {
        let mut map = HashMap::new();
        for entry in lex.entries() {
            let mut chars = entry.word.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                if let Some(first) = entry.pronunciations.first() {
                    if let [unit] = first.units() {
                        if unit.kind() == UnitKind::Pinyin {
                            map.insert(c, unit.clone());
                        }
                    }
                }
            }
        }
        Self { map }
    }

    /// `char<TAB>pinyin[<TAB>pinyin...]`; only the first reading is kept.
    pub fn read<R: BufRead>(reader: R, path: &Path) -> Result<Self, ConvertError> {
        let mut map = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConvertError::CharTable {
                path: path.display().to_string(),
                line_no: i + 1,
                message,
            };
            let mut fields = line.split_whitespace();
            let (Some(ch), Some(pinyin)) = (fields.next(), fields.next()) else {
                return Err(err("expected `char pinyin`".into()));
            };
            let mut chars = ch.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(err(format!("{ch:?} is not a single character")));
            };
            let unit = PronUnit::pinyin(pinyin).map_err(|e| err(e.to_string()))?;
            map.entry(c).or_insert(unit);
        }
        Ok(Self { map })
    }

    pub fn get(&self, c: char) -> Option<&PronUnit> {
        self.map.get(&c)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Per-character Chinese G2P; `None` if any character is unmapped.
pub fn rule_g2p_zh(word: &str, table: &CharTable) -> Option<PronWord> {
    let units = word
        .chars()
        .map(|c| table.get(c).cloned())
        .collect::<Option<Vec<_>>>()?;
    PronWord::new(units).ok()
}

#[derive(Debug, Clone, Default)]
pub struct RuleG2pZh {
    table: CharTable,
}

impl RuleG2pZh {
    pub fn new(table: CharTable) -> Self {
        Self { table }
    }
}

impl G2pProvider for RuleG2pZh {
    fn pronounce(&self, word: &str) -> Option<PronWord> {
        rule_g2p_zh(word, &self.table)
    }
}

/// Subprocess G2P: the command is run through `sh -c`, receives one word per
/// line on stdin and must answer with one `-`-joined pronunciation per line
/// (an empty line means no pronunciation). Answers are cached.
pub struct ExternalG2p {
    command: String,
    kind: UnitKind,
    cache: Mutex<HashMap<String, Option<PronWord>>>,
}

impl fmt::Debug for ExternalG2p {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalG2p")
            .field("command", &self.command)
            .field("kind", &self.kind)
            .finish()
    }
}

impl ExternalG2p {
    pub fn new(command: impl Into<String>, kind: UnitKind) -> Self {
        Self {
            command: command.into(),
            kind,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn query(&self, word: &str) -> io::Result<Option<PronWord>> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            writeln!(stdin, "{word}")?;
        }
        let output = child.wait_with_output()?;
        let text = String::from_utf8_lossy(&output.stdout);
        let line = text.lines().next().unwrap_or("").trim();
        if line.is_empty() {
            return Ok(None);
        }
        Ok(PronWord::parse(line, self.kind).ok())
    }
}

impl G2pProvider for ExternalG2p {
    fn pronounce(&self, word: &str) -> Option<PronWord> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(word) {
            return hit.clone();
        }
        // A failing subprocess counts as "no pronunciation".
        let answer = self.query(word).unwrap_or(None);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(word.to_owned(), answer.clone());
        answer
    }
}

/// G2P selection as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum G2pSpec {
    Rules,
    None,
    External(String),
}

impl G2pSpec {
    pub fn parse(s: &str) -> Result<Self, ConvertError> {
        match s {
            "rules" => Ok(G2pSpec::Rules),
            "none" => Ok(G2pSpec::None),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(G2pSpec::External(cmd.to_owned())),
                _ => Err(ConvertError::UnknownProvider(s.to_owned())),
            },
        }
    }

    /// Builds the provider for `lang`. The Chinese rule provider reads
    /// single characters from `zh_chars`.
    pub fn build(&self, lang: Lang, zh_chars: CharTable) -> Box<dyn G2pProvider> {
        match (self, lang) {
            (G2pSpec::None, _) => Box::new(NoG2p),
            (G2pSpec::Rules, Lang::En) => Box::new(RuleG2pEn),
            (G2pSpec::Rules, Lang::Zh) => Box::new(RuleG2pZh::new(zh_chars)),
            (G2pSpec::External(cmd), _) => {
                Box::new(ExternalG2p::new(cmd.clone(), lang.unit_kind()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumberMode {
    /// Magnitude, except digit-wise for an integer followed by `年`.
    #[default]
    Auto,
    Magnitude,
    DigitWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnMissing {
    #[default]
    Reject,
    SkipWord,
}

#[derive(Debug, Clone, Default)]
pub struct ConvertOptions {
    pub number_mode: NumberMode,
    pub on_missing: OnMissing,
    pub policy: PronPolicy,
    pub numerals: ZhNumberTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NoPronunciation,
    /// Nothing pronounceable was left in the sentence.
    EmptySentence,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NoPronunciation => "no-pronunciation",
            RejectReason::EmptySentence => "empty-sentence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub word: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConversionOutcome {
    Converted(PronSentence),
    Rejected(Rejection),
}

impl ConversionOutcome {
    pub fn sentence(&self) -> Option<&PronSentence> {
        match self {
            ConversionOutcome::Converted(s) => Some(s),
            ConversionOutcome::Rejected(_) => None,
        }
    }

    pub fn into_sentence(self) -> Option<PronSentence> {
        match self {
            ConversionOutcome::Converted(s) => Some(s),
            ConversionOutcome::Rejected(_) => None,
        }
    }
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn has_latin(token: &str) -> bool {
    token.bytes().any(|b| b.is_ascii_alphabetic())
}

struct Resolver<'a> {
    lex: &'a Lexicon,
    g2p: &'a dyn G2pProvider,
    latin: Option<&'a dyn G2pProvider>,
    opts: &'a ConvertOptions,
    rng: Option<ChaCha8Rng>,
}

impl Resolver<'_> {
    fn lexicon(&mut self, word: &str) -> Option<PronWord> {
        match self.rng.as_mut() {
            Some(rng) => self.lex.lookup_random(word, rng).cloned(),
            None => self.lex.lookup_first(word).cloned(),
        }
    }

    fn fallback(&self, word: &str) -> Option<PronWord> {
        match self.latin {
            Some(latin) if has_latin(word) => latin.pronounce(word),
            _ => self.g2p.pronounce(word),
        }
    }

    /// Lexicon, then G2P; used for number words and for `负`.
    fn plain_word(&mut self, word: &str) -> Option<PronWord> {
        self.lexicon(word).or_else(|| self.fallback(word))
    }

    fn number(&mut self, token: &str, next: Option<&str>) -> Option<Vec<PronWord>> {
        let num = parse_number_token(token)?;
        match self.lex.lang() {
            Lang::Zh => {
                let mode = match self.opts.number_mode {
                    NumberMode::Magnitude => NumberReadingMode::Magnitude,
                    NumberMode::DigitWise => NumberReadingMode::DigitWise,
                    NumberMode::Auto => {
                        if next == Some("年") && num.fraction.is_none() && !num.negative {
                            NumberReadingMode::DigitWise
                        } else {
                            NumberReadingMode::Magnitude
                        }
                    }
                };
                let chars = zh_decimal_to_chinese(token, mode).ok()?;
                let mut out = Vec::with_capacity(2);
                let body = match chars.strip_prefix(ZH_NEGATIVE) {
                    Some(rest) => {
                        out.push(self.plain_word(&ZH_NEGATIVE.to_string())?);
                        rest
                    }
                    None => chars.as_str(),
                };
                out.push(chinese_numeral_to_pinyin(body, &self.opts.numerals).ok()?);
                Some(out)
            }
            Lang::En => {
                let words = en_number_to_words(token).ok()?;
                let prons = words
                    .split(' ')
                    .map(|w| self.plain_word(w))
                    .collect::<Option<Vec<_>>>()?;
                Some(vec![PronWord::concat(&prons).ok()?])
            }
        }
    }

    fn token(&mut self, token: &str, next: Option<&str>) -> Option<Vec<PronWord>> {
        if let Some(p) = self.lexicon(token) {
            return Some(vec![p]);
        }
        if let Some(ps) = self.number(token, next) {
            return Some(ps);
        }
        self.fallback(token).map(|p| vec![p])
    }
}

/// Converts one sentence. See the module docs for the resolution order.
pub fn convert_sentence(
    text: &TextSentence,
    lex: &Lexicon,
    g2p: &dyn G2pProvider,
    opts: &ConvertOptions,
) -> Result<ConversionOutcome, ConvertError> {
    convert_sentence_with_latin(text, lex, g2p, None, opts)
}

/// Like [`convert_sentence`], but tokens containing Latin letters that miss
/// the lexicon go to `latin` instead of `g2p` (English inside Chinese text).
pub fn convert_sentence_with_latin(
    text: &TextSentence,
    lex: &Lexicon,
    g2p: &dyn G2pProvider,
    latin: Option<&dyn G2pProvider>,
    opts: &ConvertOptions,
) -> Result<ConversionOutcome, ConvertError> {
    if text.lang() != lex.lang() {
        return Err(ConvertError::LangMismatch {
            text: text.lang(),
            lexicon: lex.lang(),
        });
    }
    let normalized = apply_punct_rules(text);
    let rng = match opts.policy {
        PronPolicy::First => None,
        PronPolicy::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(fnv1a(&text.to_string()));
            Some(rng)
        }
    };
    let mut resolver = Resolver {
        lex,
        g2p,
        latin,
        opts,
        rng,
    };
    let tokens = normalized.tokens();
    let mut words = Vec::with_capacity(tokens.len());
    for (i, token) in tokens.iter().enumerate() {
        let next = tokens.get(i + 1).map(String::as_str);
        match resolver.token(token, next) {
            Some(ps) => words.extend(ps),
            None => match opts.on_missing {
                OnMissing::SkipWord => {}
                OnMissing::Reject => {
                    return Ok(ConversionOutcome::Rejected(Rejection {
                        word: token.clone(),
                        reason: RejectReason::NoPronunciation,
                    }))
                }
            },
        }
    }
    Ok(ConversionOutcome::Converted(PronSentence::new(
        words,
        text.lang(),
    )))
}

/// Everything needed to convert a Chinese/English sentence pair.
#[derive(Clone, Copy)]
pub struct PairResources<'a> {
    pub zh_lex: &'a Lexicon,
    pub en_lex: &'a Lexicon,
    pub zh_g2p: &'a dyn G2pProvider,
    pub en_g2p: &'a dyn G2pProvider,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairOutcome {
    Entry(DatasetEntry),
    Rejected {
        zh: Option<Rejection>,
        en: Option<Rejection>,
    },
}

fn side_outcome(outcome: ConversionOutcome) -> Result<PronSentence, Rejection> {
    match outcome {
        ConversionOutcome::Converted(s) if s.is_empty() => Err(Rejection {
            word: String::new(),
            reason: RejectReason::EmptySentence,
        }),
        ConversionOutcome::Converted(s) => Ok(s),
        ConversionOutcome::Rejected(r) => Err(r),
    }
}

/// Converts both sides and reports each side's rejection, if any.
pub fn convert_pair_detailed(
    s: &TextSentence,
    t: &TextSentence,
    res: &PairResources<'_>,
    opts: &ConvertOptions,
) -> Result<PairOutcome, ConvertError> {
    let zh = convert_sentence_with_latin(s, res.zh_lex, res.zh_g2p, Some(res.en_g2p), opts)?;
    let en = convert_sentence(t, res.en_lex, res.en_g2p, opts)?;
    Ok(match (side_outcome(zh), side_outcome(en)) {
        (Ok(s_p), Ok(t_p)) => PairOutcome::Entry(DatasetEntry {
            s: s.clone(),
            t: t.clone(),
            s_p,
            t_p,
        }),
        (zh, en) => PairOutcome::Rejected {
            zh: zh.err(),
            en: en.err(),
        },
    })
}

/// Quadruple when both sides convert to nonempty pronunciations.
pub fn convert_pair(
    s: &TextSentence,
    t: &TextSentence,
    res: &PairResources<'_>,
    opts: &ConvertOptions,
) -> Result<Option<DatasetEntry>, ConvertError> {
    Ok(match convert_pair_detailed(s, t, res, opts)? {
        PairOutcome::Entry(e) => Some(e),
        PairOutcome::Rejected { .. } => None,
    })
}
