//! Corpus toolkit for translation in pronunciation space.
//!
//! Parallel Chinese/English text is converted into pronunciation sentences
//! (toned Pinyin for Chinese, ARPAbet phonemes for English), subword and
//! syllable units are learned over those sentences with pair-merge BPE, the
//! results are packaged as `(s, t, s_p, t_p)` quadruples, and translations are
//! scored with 4-gram corpus BLEU in either text or pronunciation space.
//!
//! Module map:
//!
//! * [`pron`] - pronunciation units, words, sentences, phoneme inventory.
//! * [`lexicon`] - DaCiDian / Voxforge / TSV lexicon loading and lookup.
//! * [`normalize`] - digit numbers in both languages and punctuation rules.
//! * [`convert`] - the text-to-pronunciation sentence pipeline and G2P fallbacks.
//! * [`subword`] - pseudo-character map, plain BPE, vowel-constrained syllable BPE.
//! * [`dataset`] - quadruple dataset building, persistence, splitting, stats.
//! * [`eval`] - multi-bleu style corpus BLEU.

pub mod convert;
pub mod dataset;
pub mod eval;
pub mod lexicon;
pub mod normalize;
pub mod pron;
pub mod subword;

pub use pron::{
    Lang, PhonemeInventory, PronError, PronSentence, PronUnit, PronWord, TextSentence, UnitKind,
};
