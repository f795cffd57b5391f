//! Pronunciation units, words and sentences, plus the phoneme inventory.
//!
//! The rendering used here is the wire format for every file the toolkit
//! reads or writes: units inside a word are joined by `-`, words inside a
//! sentence are joined by a single space. A Pinyin unit is `base_tone`
//! (`ni_3`), a phoneme is a lowercase ARPAbet symbol without stress (`ah`).

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator between units of one pronunciation word.
pub const UNIT_SEPARATOR: char = '-';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PronError {
    #[error("invalid pronunciation unit {0:?}")]
    InvalidUnit(String),
    #[error("expected a {expected} unit, found {found:?}")]
    WrongKind { expected: UnitKind, found: String },
    #[error("pronunciation word has no units")]
    EmptyWord,
    #[error("pronunciation word mixes Pinyin and phoneme units: {0:?}")]
    MixedKinds(String),
    #[error("invalid phoneme inventory: {0}")]
    InvalidInventory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Pinyin,
    Phoneme,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Pinyin => "pinyin",
            UnitKind::Phoneme => "phoneme",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pinyin" => Some(UnitKind::Pinyin),
            "phoneme" => Some(UnitKind::Phoneme),
            _ => None,
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Zh,
    En,
}

impl Lang {
    /// Native pronunciation unit of the language.
    pub fn unit_kind(self) -> UnitKind {
        match self {
            Lang::Zh => UnitKind::Pinyin,
            Lang::En => UnitKind::Phoneme,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Lang::Zh => "zh",
            Lang::En => "en",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zh" => Some(Lang::Zh),
            "en" => Some(Lang::En),
            _ => None,
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const ARPABET_PHONEMES: [&str; 39] = [
    "aa", "ae", "ah", "ao", "aw", "ay", "b", "ch", "d", "dh", "eh", "er", "ey", "f", "g", "hh",
    "ih", "iy", "jh", "k", "l", "m", "n", "ng", "ow", "oy", "p", "r", "s", "sh", "t", "th", "uh",
    "uw", "v", "w", "y", "z", "zh",
];

const ARPABET_VOWELS: [&str; 15] = [
    "aa", "ae", "ah", "ao", "aw", "ay", "eh", "er", "ey", "ih", "iy", "ow", "oy", "uh", "uw",
];

/// Phoneme alphabet together with its vowel subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    phonemes: BTreeSet<String>,
    vowels: BTreeSet<String>,
}

impl PhonemeInventory {
    /// Builds an inventory from explicit phoneme and vowel lists.
    ///
    /// Every vowel must also be a phoneme and every phoneme must be a
    /// nonempty run of lowercase ASCII letters.
    pub fn new<P, V>(phonemes: P, vowels: V) -> Result<Self, PronError>
    where
        P: IntoIterator,
        P::Item: Into<String>,
        V: IntoIterator,
        V::Item: Into<String>,
    {
        let phonemes: BTreeSet<String> = phonemes.into_iter().map(Into::into).collect();
        let vowels: BTreeSet<String> = vowels.into_iter().map(Into::into).collect();
        if let Some(bad) = phonemes
            .iter()
            .find(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_lowercase()))
        {
            return Err(PronError::InvalidInventory(format!("bad phoneme {bad:?}")));
        }
        if let Some(stray) = vowels.iter().find(|v| !phonemes.contains(*v)) {
            return Err(PronError::InvalidInventory(format!(
                "vowel {stray:?} is not in the phoneme set"
            )));
        }
        Ok(Self { phonemes, vowels })
    }

    /// The 39-symbol ARPAbet set, lowercased, with 15 vowels.
    pub fn arpabet() -> &'static PhonemeInventory {
        static INVENTORY: OnceLock<PhonemeInventory> = OnceLock::new();
        INVENTORY.get_or_init(|| {
            PhonemeInventory::new(ARPABET_PHONEMES, ARPABET_VOWELS)
                .expect("built-in inventory is valid")
        })
    }

    pub fn contains(&self, phoneme: &str) -> bool {
        self.phonemes.contains(phoneme)
    }

    /// Vowel predicate over raw phoneme strings.
    pub fn is_vowel_str(&self, phoneme: &str) -> bool {
        self.vowels.contains(phoneme)
    }

    /// Vowel predicate over units; Pinyin units have no vowel predicate.
    pub fn is_vowel(&self, unit: &PronUnit) -> Result<bool, PronError> {
        match unit.kind {
            UnitKind::Phoneme => Ok(self.vowels.contains(unit.value.as_str())),
            UnitKind::Pinyin => Err(PronError::WrongKind {
                expected: UnitKind::Phoneme,
                found: unit.value.clone(),
            }),
        }
    }

    pub fn vowel_count(&self, word: &PronWord) -> Result<usize, PronError> {
        word.units().iter().try_fold(0usize, |acc, u| {
            self.is_vowel(u).map(|v| acc + usize::from(v))
        })
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &str> {
        self.phonemes.iter().map(String::as_str)
    }

    pub fn vowels(&self) -> impl Iterator<Item = &str> {
        self.vowels.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }
}

fn is_pinyin(value: &str) -> bool {
    let Some((base, tone)) = value.split_once('_') else {
        return false;
    };
    !base.is_empty()
        && base.bytes().all(|b| b.is_ascii_lowercase())
        && matches!(tone.as_bytes(), [b'1'..=b'5'])
}

/// One atomic pronunciation symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PronUnit {
    value: String,
    kind: UnitKind,
}

impl PronUnit {
    /// Validates `value` as a unit of `kind`; phonemes are checked against
    /// the ARPAbet inventory.
    pub fn new(value: &str, kind: UnitKind) -> Result<Self, PronError> {
        Self::with_inventory(value, kind, PhonemeInventory::arpabet())
    }

    pub fn with_inventory(
        value: &str,
        kind: UnitKind,
        inventory: &PhonemeInventory,
    ) -> Result<Self, PronError> {
        let ok = match kind {
            UnitKind::Pinyin => is_pinyin(value),
            UnitKind::Phoneme => inventory.contains(value),
        };
        if ok {
            Ok(Self {
                value: value.to_owned(),
                kind,
            })
        } else {
            Err(PronError::InvalidUnit(value.to_owned()))
        }
    }

    pub fn pinyin(value: &str) -> Result<Self, PronError> {
        Self::new(value, UnitKind::Pinyin)
    }

    pub fn phoneme(value: &str) -> Result<Self, PronError> {
        Self::new(value, UnitKind::Phoneme)
    }

    /// Guesses the kind from the shape of `value`: anything with the tone
    /// separator is Pinyin, everything else must be a phoneme.
    pub fn detect(value: &str) -> Result<Self, PronError> {
        if value.contains('_') {
            Self::pinyin(value)
        } else {
            Self::phoneme(value)
        }
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }
}

impl fmt::Display for PronUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

/// Nonempty sequence of same-kind units, rendered `a-b-c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PronWord {
    units: Vec<PronUnit>,
}

impl PronWord {
    pub fn new(units: Vec<PronUnit>) -> Result<Self, PronError> {
        let first = units.first().ok_or(PronError::EmptyWord)?;
        if units.iter().any(|u| u.kind != first.kind) {
            let rendered: Vec<&str> = units.iter().map(|u| u.value.as_str()).collect();
            return Err(PronError::MixedKinds(rendered.join("-")));
        }
        Ok(Self { units })
    }

    /// Parses a `-`-joined rendering; every token must be a valid `kind` unit.
    pub fn parse(text: &str, kind: UnitKind) -> Result<Self, PronError> {
        Self::parse_with(text, kind, PhonemeInventory::arpabet())
    }

    pub fn parse_with(
        text: &str,
        kind: UnitKind,
        inventory: &PhonemeInventory,
    ) -> Result<Self, PronError> {
        let units = text
            .split(UNIT_SEPARATOR)
            .map(|tok| PronUnit::with_inventory(tok, kind, inventory))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(units)
    }

    /// Parses a word whose kind is inferred from its first unit.
    pub fn detect(text: &str) -> Result<Self, PronError> {
        let first = text.split(UNIT_SEPARATOR).next().unwrap_or_default();
        let kind = if first.contains('_') {
            UnitKind::Pinyin
        } else {
            UnitKind::Phoneme
        };
        Self::parse(text, kind)
    }

    /// Joins several words into a single word (used for number readings).
    pub fn concat<'a>(words: impl IntoIterator<Item = &'a PronWord>) -> Result<Self, PronError> {
        Self::new(
            words
                .into_iter()
                .flat_map(|w| w.units.iter().cloned())
                .collect(),
        )
    }

    pub fn units(&self) -> &[PronUnit] {
        &self.units
    }

    pub fn kind(&self) -> UnitKind {
        self.units[0].kind
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

impl fmt::Display for PronWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, u) in self.units.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            f.write_str(&u.value)?;
        }
        Ok(())
    }
}

/// Ordered pronunciation words of one sentence; never carries punctuation.
///
/// A Chinese sentence may contain phoneme words for embedded Latin tokens, so
/// parsing infers the kind per word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PronSentence {
    words: Vec<PronWord>,
    lang: Lang,
}

impl PronSentence {
    pub fn new(words: Vec<PronWord>, lang: Lang) -> Self {
        Self { words, lang }
    }

    pub fn parse(text: &str, lang: Lang) -> Result<Self, PronError> {
        let words = text
            .split_whitespace()
            .map(|w| match lang {
                Lang::En => PronWord::parse(w, UnitKind::Phoneme),
                Lang::Zh => PronWord::detect(w),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { words, lang })
    }

    pub fn words(&self) -> &[PronWord] {
        &self.words
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn units(&self) -> impl Iterator<Item = &PronUnit> {
        self.words.iter().flat_map(|w| w.units.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }
}

impl fmt::Display for PronSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{w}")?;
        }
        Ok(())
    }
}

/// Pre-segmented surface sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TextSentence {
    tokens: Vec<String>,
    lang: Lang,
}

impl TextSentence {
    /// Splits on whitespace; empty tokens cannot occur.
    pub fn parse(text: &str, lang: Lang) -> Self {
        Self {
            tokens: text.split_whitespace().map(str::to_owned).collect(),
            lang,
        }
    }

    /// Builds from tokens, dropping any that are empty or contain whitespace
    /// by re-splitting them.
    pub fn from_tokens<I, S>(tokens: I, lang: Lang) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            tokens: tokens
                .into_iter()
                .flat_map(|t| {
                    t.as_ref()
                        .split_whitespace()
                        .map(str::to_owned)
                        .collect::<Vec<_>>()
                })
                .collect(),
            lang,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

impl fmt::Display for TextSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}
