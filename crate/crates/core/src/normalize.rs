//! Number reading and pronunciation-affecting punctuation.
//!
//! Chinese digit numbers are spelled as Chinese numerals (either by
//! magnitude, `22` -> `二十二`, or digit by digit, `2005` -> `二零零五`) and
//! then read character by character through [`ZhNumberTable`]. English digit
//! numbers are spelled as lowercase cardinal words (`2005` -> `two thousand
//! and five`) and pronounced word by word by the converter.

use std::collections::HashMap;

use thiserror::Error;

use crate::pron::{Lang, PronUnit, PronWord, TextSentence};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("number {0} is out of range")]
    Overflow(String),
    #[error("{0:?} is not a number")]
    NotANumber(String),
    #[error("no Pinyin for numeral {0:?}")]
    UnknownNumeral(char),
    #[error("numeral table line {line_no}: {message}")]
    Table { line_no: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumberReadingMode {
    /// 十/百/千/万/亿 grouping: `10500` -> `一万零五百`.
    Magnitude,
    /// Each digit independently: `2005` -> `二零零五`.
    DigitWise,
}

/// Prefix for negative Chinese numbers. Not part of the numeral table; it is
/// pronounced as an ordinary word.
pub const ZH_NEGATIVE: char = '负';
/// Word inserted before a Chinese number followed by `%`.
pub const ZH_PERCENT: &str = "百分之";
/// Word appended after an English number followed by `%`.
pub const EN_PERCENT: &str = "percentage";

const ZH_DIGITS: [char; 10] = ['零', '一', '二', '三', '四', '五', '六', '七', '八', '九'];
const ZH_SMALL_UNITS: [&str; 4] = ["", "十", "百", "千"];
const ZH_GROUP_UNITS: [&str; 5] = ["", "万", "亿", "兆", "京"];
const ZH_POINT: char = '点';

/// Exclusive upper bound on |n| for Chinese readings (one 京 group of four digits).
pub const ZH_LIMIT: u128 = 100_000_000_000_000_000_000;
/// Exclusive upper bound on |n| for English readings.
pub const EN_LIMIT: u64 = 1_000_000_000_000_000;

const ZH_TABLE_DOMAIN: &str = "零一二三四五六七八九十百千万亿兆京点";
const DEFAULT_ZH_TABLE: &str = include_str!("../data/zh_numerals.tsv");

/// Chinese numeral character -> Pinyin, total over the 18 numeral characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZhNumberTable {
    version: String,
    map: HashMap<char, PronUnit>,
}

impl Default for ZhNumberTable {
    fn default() -> Self {
        Self::parse(DEFAULT_ZH_TABLE).expect("shipped numeral table is valid")
    }
}

impl ZhNumberTable {
    /// Parses the `char<TAB>pinyin` data format. A `# zh-numerals <version>`
    /// header comment sets the version; other comments are ignored.
    pub fn parse(text: &str) -> Result<Self, NormalizeError> {
        let mut version = String::from("unversioned");
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("zh-numerals ") {
                    version = v.trim().to_owned();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let table_err = |message: String| NormalizeError::Table { line_no, message };
            let (ch, pinyin) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| table_err("expected `char pinyin`".into()))?;
            let mut chars = ch.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(table_err(format!("{ch:?} is not a single character")));
            };
            if !ZH_TABLE_DOMAIN.contains(c) {
                return Err(table_err(format!("{c:?} is not a numeral character")));
            }
            let unit = PronUnit::pinyin(pinyin.trim()).map_err(|e| table_err(e.to_string()))?;
            map.insert(c, unit);
        }
        if let Some(missing) = ZH_TABLE_DOMAIN.chars().find(|c| !map.contains_key(c)) {
            return Err(NormalizeError::Table {
                line_no: 0,
                message: format!("no entry for {missing:?}"),
            });
        }
        Ok(Self { version, map })
    }

    pub fn get(&self, c: char) -> Option<&PronUnit> {
        self.map.get(&c)
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

fn zh_group(g: u32, is_leading: bool) -> String {
    debug_assert!(g > 0 && g < 10_000);
    let digits = [(g / 1000) % 10, (g / 100) % 10, (g / 10) % 10, g % 10];
    let mut out = String::new();
    let mut started = false;
    let mut pending_zero = false;
    for (pos, &d) in digits.iter().enumerate() {
        let place = 3 - pos;
        if d == 0 {
            if started {
                pending_zero = true;
            }
            continue;
        }
        if pending_zero {
            out.push('零');
            pending_zero = false;
        }
        // 10..=19 at the very start of a number read as 十X, not 一十X.
        let bare_ten = is_leading && !started && place == 1 && d == 1;
        if !bare_ten {
            out.push(ZH_DIGITS[d as usize]);
        }
        out.push_str(ZH_SMALL_UNITS[place]);
        started = true;
    }
    out
}

fn zh_magnitude(n: u128) -> String {
    if n == 0 {
        return ZH_DIGITS[0].to_string();
    }
    let mut groups = Vec::new();
    let mut rest = n;
    while rest > 0 {
        groups.push((rest % 10_000) as u32);
        rest /= 10_000;
    }
    let mut out = String::new();
    let mut pending_zero = false;
    for (idx, &g) in groups.iter().enumerate().rev() {
        if g == 0 {
            pending_zero |= !out.is_empty();
            continue;
        }
        if !out.is_empty() && (pending_zero || g < 1000) {
            out.push('零');
        }
        out.push_str(&zh_group(g, out.is_empty()));
        out.push_str(ZH_GROUP_UNITS[idx]);
        pending_zero = false;
    }
    out
}

fn zh_digitwise(digits: &str) -> String {
    digits
        .bytes()
        .map(|b| ZH_DIGITS[(b - b'0') as usize])
        .collect()
}

/// Spells an integer with Chinese numerals; negatives get a `负` prefix.
pub fn zh_int_to_chinese(n: i128, mode: NumberReadingMode) -> Result<String, NormalizeError> {
    let abs = n.unsigned_abs();
    if abs >= ZH_LIMIT {
        return Err(NormalizeError::Overflow(n.to_string()));
    }
    let body = match mode {
        NumberReadingMode::Magnitude => zh_magnitude(abs),
        NumberReadingMode::DigitWise => zh_digitwise(&abs.to_string()),
    };
    Ok(if n < 0 {
        format!("{ZH_NEGATIVE}{body}")
    } else {
        body
    })
}

/// A digit-number token split into its parts: `-12.50` -> (true, "12", Some("50")).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberToken<'a> {
    pub negative: bool,
    pub integer: &'a str,
    pub fraction: Option<&'a str>,
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Recognizes `-?\d+(\.\d+)?`.
pub fn parse_number_token(s: &str) -> Option<NumberToken<'_>> {
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (integer, fraction) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if !all_digits(integer) || fraction.is_some_and(|f| !all_digits(f)) {
        return None;
    }
    Some(NumberToken {
        negative,
        integer,
        fraction,
    })
}

pub fn is_number_token(s: &str) -> bool {
    parse_number_token(s).is_some()
}

/// Decimal string to Chinese numerals; the fraction is always read digit-wise
/// after `点`. In digit-wise mode leading zeros of the integer part are kept.
pub fn zh_decimal_to_chinese(s: &str, mode: NumberReadingMode) -> Result<String, NormalizeError> {
    let num = parse_number_token(s).ok_or_else(|| NormalizeError::NotANumber(s.to_owned()))?;
    let mut out = String::new();
    if num.negative {
        out.push(ZH_NEGATIVE);
    }
    match mode {
        NumberReadingMode::DigitWise => out.push_str(&zh_digitwise(num.integer)),
        NumberReadingMode::Magnitude => {
            let significant = num.integer.trim_start_matches('0');
            if significant.len() > 20 {
                return Err(NormalizeError::Overflow(s.to_owned()));
            }
            let value: u128 = if significant.is_empty() {
                0
            } else {
                significant.parse().expect("digits only")
            };
            if value >= ZH_LIMIT {
                return Err(NormalizeError::Overflow(s.to_owned()));
            }
            out.push_str(&zh_magnitude(value));
        }
    }
    if let Some(frac) = num.fraction {
        out.push(ZH_POINT);
        out.push_str(&zh_digitwise(frac));
    }
    Ok(out)
}

/// Reads Chinese numerals character by character into one Pinyin word.
pub fn chinese_numeral_to_pinyin(
    chars: &str,
    table: &ZhNumberTable,
) -> Result<PronWord, NormalizeError> {
    let units = chars
        .chars()
        .map(|c| {
            table
                .get(c)
                .cloned()
                .ok_or(NormalizeError::UnknownNumeral(c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    PronWord::new(units).map_err(|_| NormalizeError::NotANumber(chars.to_owned()))
}

const EN_ONES: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];
const EN_TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const EN_SCALES: [&str; 5] = ["", "thousand", "million", "billion", "trillion"];

fn en_below_hundred(n: u64, out: &mut Vec<&'static str>) {
    debug_assert!(n < 100);
    if n < 20 {
        out.push(EN_ONES[n as usize]);
    } else {
        out.push(EN_TENS[(n / 10) as usize]);
        if !n.is_multiple_of(10) {
            out.push(EN_ONES[(n % 10) as usize]);
        }
    }
}

/// Lowercase cardinal words without hyphens, e.g. `2005` -> `two thousand
/// and five`, `-22` -> `minus twenty two`.
///
/// `and` joins a sub-hundred remainder to the hundred before it, and the
/// final sub-hundred group to a preceding scale word.
pub fn en_int_to_words(n: i64) -> Result<String, NormalizeError> {
    let abs = n.unsigned_abs();
    if abs >= EN_LIMIT {
        return Err(NormalizeError::Overflow(n.to_string()));
    }
    let mut words: Vec<&'static str> = Vec::new();
    if n < 0 {
        words.push("minus");
    }
    if abs == 0 {
        words.push(EN_ONES[0]);
        return Ok(words.join(" "));
    }
    let mut groups = Vec::new();
    let mut rest = abs;
    while rest > 0 {
        groups.push(rest % 1000);
        rest /= 1000;
    }
    let mut said_something = false;
    for (idx, &g) in groups.iter().enumerate().rev() {
        if g == 0 {
            continue;
        }
        let hundreds = g / 100;
        let rem = g % 100;
        if hundreds > 0 {
            words.push(EN_ONES[hundreds as usize]);
            words.push("hundred");
        }
        if rem > 0 {
            if hundreds > 0 || (idx == 0 && said_something) {
                words.push("and");
            }
            en_below_hundred(rem, &mut words);
        }
        if idx > 0 {
            words.push(EN_SCALES[idx]);
        }
        said_something = true;
    }
    Ok(words.join(" "))
}

/// Digit-number token to English words; fractions are read digit by digit
/// after `point`.
pub fn en_number_to_words(s: &str) -> Result<String, NormalizeError> {
    let num = parse_number_token(s).ok_or_else(|| NormalizeError::NotANumber(s.to_owned()))?;
    let significant = num.integer.trim_start_matches('0');
    let value: u64 = if significant.is_empty() {
        0
    } else if significant.len() > 15 {
        return Err(NormalizeError::Overflow(s.to_owned()));
    } else {
        significant.parse().expect("digits only")
    };
    let signed = i64::try_from(value).map_err(|_| NormalizeError::Overflow(s.to_owned()))?;
    let mut out = en_int_to_words(signed)?;
    if num.negative {
        out.insert_str(0, "minus ");
    }
    if let Some(frac) = num.fraction {
        out.push_str(" point");
        for b in frac.bytes() {
            out.push(' ');
            out.push_str(EN_ONES[(b - b'0') as usize]);
        }
    }
    Ok(out)
}

/// Removes thousands separators from `1,000`, `-12,345.6` (and the same with
/// a trailing percent sign). Returns `None` for anything else.
fn strip_group_commas(tok: &str) -> Option<String> {
    let (sign, body) = match tok.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", tok),
    };
    let (body, pct) = split_percent(body);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let groups: Vec<&str> = int.split(',').collect();
    if groups.len() < 2 || frac.is_some_and(|f| !all_digits(f)) {
        return None;
    }
    let head_ok = (1..=3).contains(&groups[0].len()) && all_digits(groups[0]);
    let tail_ok = groups[1..].iter().all(|g| g.len() == 3 && all_digits(g));
    if !(head_ok && tail_ok) {
        return None;
    }
    let mut out = format!("{sign}{}", groups.concat());
    if let Some(f) = frac {
        out.push('.');
        out.push_str(f);
    }
    if let Some(p) = pct {
        out.push(p);
    }
    Some(out)
}

fn split_percent(tok: &str) -> (&str, Option<char>) {
    for p in ['%', '％'] {
        if let Some(rest) = tok.strip_suffix(p) {
            return (rest, Some(p));
        }
    }
    (tok, None)
}

fn is_percent_sign(tok: &str) -> bool {
    tok == "%" || tok == "％"
}

/// True when the token carries no letters or digits at all.
pub fn is_punctuation_token(tok: &str) -> bool {
    !tok.is_empty() && !tok.chars().any(char::is_alphanumeric)
}

fn push_percent(out: &mut Vec<String>, number: String, lang: Lang) {
    match lang {
        Lang::Zh => {
            out.push(ZH_PERCENT.to_owned());
            out.push(number);
        }
        Lang::En => {
            out.push(number);
            out.push(EN_PERCENT.to_owned());
        }
    }
}

/// Applies the punctuation rules that change pronunciation:
///
/// * thousands separators are removed from numbers (`1,000` -> `1000`);
/// * a percent sign after a number becomes `百分之` before it (Chinese) or
///   `percentage` after it (English), for both `50%` and `50 %`;
/// * every remaining punctuation-only token is dropped.
///
/// The rules are idempotent.
pub fn apply_punct_rules(sentence: &TextSentence) -> TextSentence {
    let lang = sentence.lang();
    let mut out: Vec<String> = Vec::with_capacity(sentence.len());
    for raw in sentence.tokens() {
        let tok = strip_group_commas(raw).unwrap_or_else(|| raw.clone());
        if is_percent_sign(&tok) {
            // Only a bare number immediately before the sign takes the rule.
            if let Some(number) = out.pop_if(|t| is_number_token(t)) {
                push_percent(&mut out, number, lang);
            }
            continue;
        }
        if let (number, Some(_)) = split_percent(&tok) {
            if is_number_token(number) {
                push_percent(&mut out, number.to_owned(), lang);
                continue;
            }
        }
        if is_punctuation_token(&tok) {
            continue;
        }
        out.push(tok);
    }
    TextSentence::from_tokens(out, lang)
}
