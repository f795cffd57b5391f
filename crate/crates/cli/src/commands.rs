use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use pronspace::convert::{
    convert_sentence_with_latin, ConversionOutcome, ConvertOptions, G2pProvider, G2pSpec, NoG2p,
    NumberMode, OnMissing, PairOutcome, PairResources, RejectReason, Rejection, RuleG2pEn,
};
use pronspace::dataset::{
    build_dataset as build_entries, split_assignment, DatasetEntry, SplitSet, SplitSpec,
    StatsAccumulator, BUILD_BATCH,
};
use pronspace::eval::{
    corpus_bleu_with, pron_tokens, text_tokens, to_eval_space, Converter, EvalInput, EvalSpace,
    PronTokens, Smoothing, TokenizeOptions,
};
use pronspace::lexicon::PronPolicy;
use pronspace::normalize::ZhNumberTable;
use pronspace::subword::{
    learn_bpe as learn_plain, learn_syllables as learn_constrained, parse_tokens, render_tokens,
    Strictness, SubwordModel,
};
use pronspace::{Lang, PhonemeInventory, PronSentence, TextSentence};

use crate::manifest::Recorder;
use crate::resources::{load_lang, LangFlags};
use crate::{
    ApplyArgs, BleuArgs, BuildArgs, ConvertArgs, ConvertFlags, LearnBpeArgs, LearnSyllablesArgs,
    NumberModeArg, OnMissingArg, PolicyArg, PronTokenArg, SmoothArg, SpaceArg, SplitArgs,
    StatsArgs,
};

const DEFAULT_MERGES_ZH: usize = 16000;
const DEFAULT_MERGES_EN: usize = 10000;

fn open_input(path: Option<&Path>, rec: &mut Recorder) -> Result<Box<dyn BufRead>> {
    match path {
        Some(p) => {
            rec.input(p)
                .with_context(|| format!("cannot read {}", p.display()))?;
            let f = File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            Ok(Box::new(BufReader::new(f)))
        }
        None => Ok(Box::new(io::stdin().lock())),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn display_name(path: Option<&Path>) -> String {
    path.map_or_else(|| "<stdin>".to_owned(), |p| p.display().to_string())
}

/// Reads every line, naming the file and line on failure.
fn read_lines(reader: Box<dyn BufRead>, name: &str) -> Result<Vec<String>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.with_context(|| format!("{name}:{}: read failed", i + 1)))
        .collect()
}

fn convert_options(flags: &ConvertFlags, rec: &mut Recorder) -> Result<ConvertOptions> {
    let policy = match (flags.pron_policy, flags.seed) {
        (PolicyArg::First, _) => PronPolicy::First,
        (PolicyArg::Random, Some(seed)) => PronPolicy::Random { seed },
        (PolicyArg::Random, None) => bail!("--pron-policy random needs an explicit --seed"),
    };
    let numerals = match &flags.numerals {
        Some(path) => {
            rec.input(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            ZhNumberTable::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ZhNumberTable::default(),
    };
    Ok(ConvertOptions {
        number_mode: match flags.number_mode {
            NumberModeArg::Auto => NumberMode::Auto,
            NumberModeArg::Magnitude => NumberMode::Magnitude,
            NumberModeArg::Digitwise => NumberMode::DigitWise,
        },
        on_missing: match flags.on_missing {
            OnMissingArg::Reject => OnMissing::Reject,
            OnMissingArg::SkipWord => OnMissing::SkipWord,
        },
        policy,
        numerals,
    })
}

/// English provider used for Latin-script tokens inside Chinese text.
fn latin_fallback(spec: &G2pSpec) -> Box<dyn G2pProvider> {
    match spec {
        G2pSpec::None => Box::new(NoG2p),
        _ => Box::new(RuleG2pEn),
    }
}

fn reject_line(line_no: usize, side: Option<&str>, r: &Rejection, text: &str) -> String {
    let side = side.map(|s| format!("{s}\t")).unwrap_or_default();
    format!("{line_no}\t{side}{}\t{}\t{text}", r.reason, r.word)
}

pub fn convert(a: ConvertArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_path(a.manifest.clone());
    let lang = Lang::from(a.lang);
    let opts = convert_options(&a.convert, rec)?;
    let res = load_lang(
        LangFlags {
            lang,
            lexicon: &a.lexicon,
            format: a.lexicon_format,
            syllables: a.syllables.as_ref(),
            strict: a.convert.strict_lexicon,
            g2p: &a.g2p,
            char_table: a.char_table.as_ref(),
        },
        rec,
    )?;
    let latin = latin_fallback(&a.g2p);
    let latin: Option<&dyn G2pProvider> = (lang == Lang::Zh).then_some(latin.as_ref());

    let name = display_name(a.input.as_deref());
    let mut input = open_input(a.input.as_deref(), rec)?;
    let mut out = open_output(a.output.as_deref())?;
    let mut rejects = a
        .rejects
        .as_deref()
        .map(|p| open_output(Some(p)))
        .transpose()?;

    let (mut total, mut kept) = (0u64, 0u64);
    let mut batch = Vec::with_capacity(BUILD_BATCH);
    loop {
        batch.clear();
        let mut buf = String::new();
        while batch.len() < BUILD_BATCH {
            buf.clear();
            let n = input.read_line(&mut buf).with_context(|| {
                format!("{name}:{}: read failed", total as usize + batch.len() + 1)
            })?;
            if n == 0 {
                break;
            }
            batch.push(buf.trim_end_matches(['\n', '\r']).to_owned());
        }
        if batch.is_empty() {
            break;
        }
        let outcomes = batch
            .par_iter()
            .map(|line| {
                let text = TextSentence::parse(line, lang);
                convert_sentence_with_latin(&text, &res.lexicon, res.g2p.as_ref(), latin, &opts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (line, outcome) in batch.iter().zip(outcomes) {
            total += 1;
            let rejection = match outcome {
                ConversionOutcome::Converted(s) if !s.is_empty() => {
                    kept += 1;
                    writeln!(out, "{s}").context("write failed")?;
                    continue;
                }
                ConversionOutcome::Converted(_) => Rejection {
                    word: String::new(),
                    reason: RejectReason::EmptySentence,
                },
                ConversionOutcome::Rejected(r) => r,
            };
            if let Some(rj) = rejects.as_mut() {
                writeln!(
                    rj,
                    "{}",
                    reject_line(total as usize, None, &rejection, line)
                )
                .context("write to rejects file failed")?;
            }
        }
    }
    out.flush().context("write failed")?;
    if let Some(rj) = rejects.as_mut() {
        rj.flush().context("write to rejects file failed")?;
    }
    rec.count("lines", total);
    rec.count("converted", kept);
    rec.count("rejected", total - kept);
    eprintln!(
        "{name}: {total} line(s), {kept} converted, {} rejected",
        total - kept
    );
    Ok(())
}

pub fn build_dataset(a: BuildArgs, rec: &mut Recorder) -> Result<()> {
    fs::create_dir_all(&a.out)
        .with_context(|| format!("cannot create output directory {}", a.out.display()))?;
    rec.set_path(Some(a.out.join("manifest.json")));
    let opts = convert_options(&a.convert, rec)?;
    let zh = load_lang(
        LangFlags {
            lang: Lang::Zh,
            lexicon: &a.zh_lexicon,
            format: a.zh_lexicon_format,
            syllables: a.zh_syllables.as_ref(),
            strict: a.convert.strict_lexicon,
            g2p: &a.zh_g2p,
            char_table: a.zh_char_table.as_ref(),
        },
        rec,
    )?;
    let en = load_lang(
        LangFlags {
            lang: Lang::En,
            lexicon: &a.en_lexicon,
            format: a.en_lexicon_format,
            syllables: None,
            strict: a.convert.strict_lexicon,
            g2p: &a.en_g2p,
            char_table: None,
        },
        rec,
    )?;
    let res = PairResources {
        zh_lex: &zh.lexicon,
        en_lex: &en.lexicon,
        zh_g2p: zh.g2p.as_ref(),
        en_g2p: en.g2p.as_ref(),
    };
    let zh_in = open_input(Some(&a.zh), rec)?;
    let en_in = open_input(Some(&a.en), rec)?;

    let dataset_path = a.out.join("dataset.tsv");
    let mut tsv = open_output(Some(&dataset_path))?;
    let mut rejects = open_output(Some(&a.out.join("rejects.tsv")))?;
    let mut jsonl = if a.jsonl {
        Some(open_output(Some(&a.out.join("dataset.jsonl")))?)
    } else {
        None
    };

    let report = build_entries(zh_in, en_in, &res, &opts, |line_no, outcome| {
        match outcome {
            PairOutcome::Entry(e) => {
                writeln!(tsv, "{}", e.to_tsv_line())?;
                if let Some(j) = jsonl.as_mut() {
                    writeln!(j, "{}", e.to_json_line())?;
                }
            }
            PairOutcome::Rejected { zh, en } => {
                for (side, r) in [("zh", zh), ("en", en)] {
                    if let Some(r) = r {
                        writeln!(rejects, "{line_no}\t{side}\t{}\t{}", r.reason, r.word)?;
                    }
                }
            }
        }
        Ok(())
    })
    .map_err(|e| match e {
        pronspace::dataset::DatasetError::LineCountMismatch { zh_lines, en_lines } => {
            anyhow::anyhow!(
                "{} has {zh_lines} line(s) but {} has {en_lines}",
                a.zh.display(),
                a.en.display()
            )
        }
        other => other.into(),
    })?;
    tsv.flush()?;
    rejects.flush()?;
    if let Some(j) = jsonl.as_mut() {
        j.flush()?;
    }
    rec.count("total_pairs", report.total_pairs as u64);
    rec.count("kept", report.kept as u64);
    rec.count("rejected_pairs", report.rejected_pairs as u64);
    rec.count("rejected_zh", report.rejected_zh as u64);
    rec.count("rejected_en", report.rejected_en as u64);
    eprintln!(
        "{}: {} pair(s), {} kept, {} rejected (zh {}, en {})",
        dataset_path.display(),
        report.total_pairs,
        report.kept,
        report.rejected_pairs,
        report.rejected_zh,
        report.rejected_en
    );
    Ok(())
}

/// Streams the non-blank lines of a dataset TSV, validating each entry.
fn for_each_entry(
    path: &Path,
    mut f: impl FnMut(usize, &str, DatasetEntry) -> Result<()>,
) -> Result<()> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.with_context(|| format!("{}:{line_no}: read failed", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = DatasetEntry::from_tsv_line(&line, line_no)
            .with_context(|| format!("in {}", path.display()))?;
        f(line_no, &line, entry)?;
    }
    Ok(())
}

pub fn split(a: SplitArgs, rec: &mut Recorder) -> Result<()> {
    fs::create_dir_all(&a.out)
        .with_context(|| format!("cannot create output directory {}", a.out.display()))?;
    rec.set_path(Some(a.out.join("manifest.json")));
    rec.input(&a.input)
        .with_context(|| format!("cannot read {}", a.input.display()))?;

    let mut n = 0usize;
    for_each_entry(&a.input, |_, _, _| {
        n += 1;
        Ok(())
    })?;
    let spec = SplitSpec {
        dev_size: a.dev,
        test_size: a.test,
        seed: a.seed,
    };
    let sets =
        split_assignment(n, &spec).with_context(|| format!("splitting {}", a.input.display()))?;

    let mut outs = [SplitSet::Train, SplitSet::Dev, SplitSet::Test].map(|set| {
        let path = a.out.join(format!("{}.tsv", set.as_str()));
        (set, path)
    });
    let mut writers = Vec::with_capacity(3);
    for (_, path) in &mut outs {
        writers.push(open_output(Some(path))?);
    }
    let mut idx = 0usize;
    for_each_entry(&a.input, |_, line, _| {
        let w = match sets[idx] {
            SplitSet::Train => &mut writers[0],
            SplitSet::Dev => &mut writers[1],
            SplitSet::Test => &mut writers[2],
        };
        writeln!(w, "{line}")?;
        idx += 1;
        Ok(())
    })?;
    for w in &mut writers {
        w.flush()?;
    }
    rec.count("entries", n as u64);
    rec.count("train", (n - a.dev - a.test) as u64);
    rec.count("dev", a.dev as u64);
    rec.count("test", a.test as u64);
    rec.count("seed", a.seed);
    eprintln!(
        "{}: train {}, dev {}, test {}",
        a.out.display(),
        n - a.dev - a.test,
        a.dev,
        a.test
    );
    Ok(())
}

pub fn stats(a: StatsArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_path(a.manifest.clone());
    rec.input(&a.input)
        .with_context(|| format!("cannot read {}", a.input.display()))?;
    let mut acc = StatsAccumulator::default();
    for_each_entry(&a.input, |_, _, e| {
        acc.add(&e);
        Ok(())
    })?;
    let report = acc.finish();
    rec.count("entries", report.entries as u64);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn read_pron_corpus(
    path: Option<&Path>,
    lang: Lang,
    rec: &mut Recorder,
) -> Result<Vec<PronSentence>> {
    let name = display_name(path);
    let lines = read_lines(open_input(path, rec)?, &name)?;
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            PronSentence::parse(l, lang).with_context(|| format!("{name}:{}: {l:?}", i + 1))
        })
        .collect()
}

fn save_model(
    model: &SubwordModel,
    path: &Path,
    corpus_len: usize,
    rec: &mut Recorder,
) -> Result<()> {
    model
        .save(path)
        .with_context(|| format!("cannot write model {}", path.display()))?;
    rec.count("sentences", corpus_len as u64);
    rec.count("alphabet", model.alphabet().len() as u64);
    rec.count("merges_learned", model.merges().len() as u64);
    rec.count("merge_budget", model.budget() as u64);
    rec.count("stopped_early", u64::from(model.stopped_early()));
    let note = if model.stopped_early() {
        " (stopped early: no eligible pair left)"
    } else {
        ""
    };
    eprintln!(
        "{}: {} merge(s) over {} unit(s){note}",
        path.display(),
        model.merges().len(),
        model.alphabet().len()
    );
    Ok(())
}

pub fn learn_bpe(a: LearnBpeArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_path(a.manifest.clone());
    let lang = Lang::from(a.lang);
    let merges = a.merges.unwrap_or(match lang {
        Lang::Zh => DEFAULT_MERGES_ZH,
        Lang::En => DEFAULT_MERGES_EN,
    });
    let corpus = read_pron_corpus(a.input.as_deref(), lang, rec)?;
    let model = learn_plain(&corpus, merges, lang)?;
    save_model(&model, &a.model, corpus.len(), rec)
}

pub fn learn_syllables(a: LearnSyllablesArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_path(a.manifest.clone());
    let corpus = read_pron_corpus(a.input.as_deref(), Lang::En, rec)?;
    let model = learn_constrained(&corpus, a.merges, PhonemeInventory::arpabet())?;
    save_model(&model, &a.model, corpus.len(), rec)
}

fn load_model(path: &Path, rec: &mut Recorder) -> Result<SubwordModel> {
    rec.input(path)
        .with_context(|| format!("cannot read model {}", path.display()))?;
    SubwordModel::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn strictness(strict: bool) -> Strictness {
    if strict {
        Strictness::Strict
    } else {
        Strictness::Lenient
    }
}

/// Maps every input line through `f`, keeping blank lines blank.
fn map_lines(
    a: &ApplyArgs,
    rec: &mut Recorder,
    f: impl Fn(&str) -> Result<String> + Sync,
) -> Result<()> {
    let name = display_name(a.input.as_deref());
    let lines = read_lines(open_input(a.input.as_deref(), rec)?, &name)?;
    let mapped = lines
        .par_iter()
        .enumerate()
        .map(|(i, l)| {
            if l.trim().is_empty() {
                Ok(String::new())
            } else {
                f(l).with_context(|| format!("{name}:{}", i + 1))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = open_output(a.output.as_deref())?;
    for l in &mapped {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    rec.count("lines", mapped.len() as u64);
    Ok(())
}

pub fn apply_bpe(a: ApplyArgs, rec: &mut Recorder) -> Result<()> {
    let model = load_model(&a.model, rec)?;
    let strict = strictness(a.strict);
    map_lines(&a, rec, |line| {
        let s = PronSentence::parse(line, model.lang())?;
        Ok(render_tokens(&model.encode(&s, strict)?))
    })
}

pub fn decode_bpe(a: ApplyArgs, rec: &mut Recorder) -> Result<()> {
    let model = load_model(&a.model, rec)?;
    let strict = strictness(a.strict);
    map_lines(&a, rec, |line| {
        Ok(model.decode(&parse_tokens(line), strict)?.to_string())
    })
}

pub fn bleu(a: BleuArgs, rec: &mut Recorder) -> Result<()> {
    let lang = Lang::from(a.lang);
    let space = match a.space {
        SpaceArg::Text => EvalSpace::Text,
        SpaceArg::Pron => EvalSpace::Pronunciation,
    };
    let tok = TokenizeOptions {
        pron_tokens: match a.pron_token {
            PronTokenArg::Unit => PronTokens::Unit,
            PronTokenArg::Word => PronTokens::Word,
        },
        lowercase: !a.no_lowercase,
    };
    let opts = convert_options(&a.convert, rec)?;
    let resources = match &a.lexicon {
        Some(lexicon) if space == EvalSpace::Pronunciation => Some(load_lang(
            LangFlags {
                lang,
                lexicon,
                format: a.lexicon_format,
                syllables: a.syllables.as_ref(),
                strict: a.convert.strict_lexicon,
                g2p: &a.g2p,
                char_table: None,
            },
            rec,
        )?),
        Some(_) => bail!("--lexicon only applies with --space pron"),
        None => None,
    };

    let read = |path: &PathBuf, rec: &mut Recorder| -> Result<Vec<Vec<String>>> {
        let name = path.display().to_string();
        let lines = read_lines(open_input(Some(path), rec)?, &name)?;
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let at = || format!("{name}:{}", i + 1);
                match (space, &resources) {
                    (EvalSpace::Text, _) => Ok(text_tokens(&TextSentence::parse(l, lang), tok)),
                    (EvalSpace::Pronunciation, None) => {
                        let p = PronSentence::parse(l, lang).with_context(at)?;
                        Ok(pron_tokens(&p, tok))
                    }
                    (EvalSpace::Pronunciation, Some(r)) => {
                        let conv = Converter {
                            lexicon: &r.lexicon,
                            g2p: r.g2p.as_ref(),
                            options: &opts,
                        };
                        let text = TextSentence::parse(l, lang);
                        to_eval_space(EvalInput::Text(&text), space, Some(conv), tok)
                            .with_context(at)
                    }
                }
            })
            .collect()
    };
    let hyps = read(&a.hyp, rec)?;
    let refs = read(&a.reference, rec)?;
    let smoothing = match a.smooth {
        SmoothArg::None => Smoothing::None,
        SmoothArg::Add1 => Smoothing::Add1,
    };
    let report = corpus_bleu_with(&hyps, &refs, smoothing).with_context(|| {
        format!(
            "scoring {} against {}",
            a.hyp.display(),
            a.reference.display()
        )
    })?;
    rec.count("sentences", hyps.len() as u64);
    println!("{}", report.human_line());
    println!("{}", report.json_line());
    Ok(())
}
