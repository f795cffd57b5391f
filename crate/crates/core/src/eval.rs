//! Corpus-level 4-gram BLEU, single reference, `multi-bleu.perl` semantics.
//!
//! Clipped n-gram matches and hypothesis n-gram totals are summed over the
//! whole corpus before the precisions are formed; the brevity penalty uses
//! corpus lengths. Any zero precision makes the score zero unless add-one
//! smoothing is requested.
//!
//! Scores can be computed in text space (whitespace tokens) or in
//! pronunciation space, where each Pinyin/phoneme is a token by default.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::convert::{
    convert_sentence, ConversionOutcome, ConvertError, ConvertOptions, G2pProvider,
};
use crate::lexicon::Lexicon;
use crate::pron::{Lang, PronSentence, TextSentence};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("a pronunciation sentence cannot be scored in text space")]
    SpaceMismatch,
    #[error("no converter available to move text into pronunciation space")]
    NoConverter,
    #[error("sentence rejected during conversion at {word:?}")]
    Rejected { word: String },
    #[error(transparent)]
    Convert(#[from] ConvertError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    None,
    /// Adds one to matches and totals for orders 2..=4.
    Add1,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuReport {
    /// Score in [0, 100].
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
    /// Matched n-grams per order.
    pub matches: [u64; MAX_ORDER],
    /// Hypothesis n-grams per order.
    pub totals: [u64; MAX_ORDER],
}

impl BleuReport {
    /// `BLEU = 77.88, 100.0/100.0/100.0/100.0 (BP=0.779, ratio=0.800, hyp_len=4, ref_len=5)`
    pub fn human_line(&self) -> String {
        let ratio = if self.ref_length == 0 {
            0.0
        } else {
            self.hyp_length as f64 / self.ref_length as f64
        };
        format!(
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.bleu,
            100.0 * self.precisions[0],
            100.0 * self.precisions[1],
            100.0 * self.precisions[2],
            100.0 * self.precisions[3],
            self.brevity_penalty,
            ratio,
            self.hyp_length,
            self.ref_length,
        )
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("report is plain data")
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    matches: [u64; MAX_ORDER],
    totals: [u64; MAX_ORDER],
    hyp_len: usize,
    ref_len: usize,
}

impl Counts {
    fn add(mut self, o: Counts) -> Counts {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
        self
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_default() += 1;
    }
    counts
}

fn sentence_counts<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Counts {
    let mut c = Counts {
        hyp_len: hyp.len(),
        ref_len: reference.len(),
        ..Counts::default()
    };
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        c.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        c.matches[n - 1] = h
            .iter()
            .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
            .sum();
    }
    c
}

pub fn corpus_bleu<S: AsRef<str> + Sync>(
    hyps: &[Vec<S>],
    refs: &[Vec<S>],
) -> Result<BleuReport, EvalError> {
    corpus_bleu_with(hyps, refs, Smoothing::None)
}

pub fn corpus_bleu_with<S: AsRef<str> + Sync>(
    hyps: &[Vec<S>],
    refs: &[Vec<S>],
    smoothing: Smoothing,
) -> Result<BleuReport, EvalError> {
    if hyps.len() != refs.len() {
        return Err(EvalError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    // Integer sums, so the parallel reduction equals the sequential one.
    let c = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| sentence_counts(h, r))
        .reduce(Counts::default, Counts::add);

    let precisions: [f64; MAX_ORDER] = std::array::from_fn(|n| {
        let (m, t) = match smoothing {
            Smoothing::Add1 if n > 0 => (c.matches[n] + 1, c.totals[n] + 1),
            _ => (c.matches[n], c.totals[n]),
        };
        if t == 0 {
            0.0
        } else {
            m as f64 / t as f64
        }
    });
    // An empty hypothesis side has no defined penalty in the reference
    // script; treat it as the limit exp(-inf) = 0.
    let brevity_penalty = if c.hyp_len == 0 {
        0.0
    } else if c.hyp_len < c.ref_len {
        (1.0 - c.ref_len as f64 / c.hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        hyp_length: c.hyp_len,
        ref_length: c.ref_len,
        matches: c.matches,
        totals: c.totals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalSpace {
    #[default]
    Text,
    Pronunciation,
}

impl EvalSpace {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(EvalSpace::Text),
            "pron" | "pronunciation" => Some(EvalSpace::Pronunciation),
            _ => None,
        }
    }
}

/// Token granularity in pronunciation space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PronTokens {
    /// Each Pinyin/phoneme is one token; word boundaries are dissolved.
    #[default]
    Unit,
    /// Each hyphen-joined pronunciation word is one token.
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizeOptions {
    pub pron_tokens: PronTokens,
    /// Lowercase English text before scoring.
    pub lowercase: bool,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        Self {
            pron_tokens: PronTokens::Unit,
            lowercase: true,
        }
    }
}

pub fn text_tokens(sentence: &TextSentence, opts: TokenizeOptions) -> Vec<String> {
    sentence
        .tokens()
        .iter()
        .map(|t| {
            if opts.lowercase && sentence.lang() == Lang::En {
                t.to_lowercase()
            } else {
                t.clone()
            }
        })
        .collect()
}

pub fn pron_tokens(sentence: &PronSentence, opts: TokenizeOptions) -> Vec<String> {
    match opts.pron_tokens {
        PronTokens::Unit => sentence.units().map(|u| u.value().to_owned()).collect(),
        PronTokens::Word => sentence.words().iter().map(ToString::to_string).collect(),
    }
}

/// Text-to-pronunciation resources for [`to_eval_space`].
#[derive(Clone, Copy)]
pub struct Converter<'a> {
    pub lexicon: &'a Lexicon,
    pub g2p: &'a dyn G2pProvider,
    pub options: &'a ConvertOptions,
}

pub enum EvalInput<'a> {
    Text(&'a TextSentence),
    Pron(&'a PronSentence),
}

/// Tokenizes a sentence for scoring in `space`, converting text into
/// pronunciation space when needed.
pub fn to_eval_space(
    input: EvalInput<'_>,
    space: EvalSpace,
    converter: Option<Converter<'_>>,
    opts: TokenizeOptions,
) -> Result<Vec<String>, EvalError> {
    match (input, space) {
        (EvalInput::Text(t), EvalSpace::Text) => Ok(text_tokens(t, opts)),
        (EvalInput::Pron(p), EvalSpace::Pronunciation) => Ok(pron_tokens(p, opts)),
        (EvalInput::Pron(_), EvalSpace::Text) => Err(EvalError::SpaceMismatch),
        (EvalInput::Text(t), EvalSpace::Pronunciation) => {
            let c = converter.ok_or(EvalError::NoConverter)?;
            match convert_sentence(t, c.lexicon, c.g2p, c.options)? {
                ConversionOutcome::Converted(p) => Ok(pron_tokens(&p, opts)),
                ConversionOutcome::Rejected(r) => Err(EvalError::Rejected { word: r.word }),
            }
        }
    }
}
