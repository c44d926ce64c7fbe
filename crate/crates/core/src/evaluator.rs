//! Automatic answer grading: pull the final answer out of a chain-of-thought
//! response and decide numeric/textual equivalence against the gold answer.
//!
//! All numeric comparison happens in exact rational arithmetic. Tolerance is
//! applied only when one side is a decimal literal and the other side's
//! exact value has no finite decimal expansion (a truncated 1/3, say);
//! everything else compares exactly, so 6/5 vs 1.2 vs 120% never needs a
//! fudge factor.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use num::bigint::BigInt;
use num::{BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerForm {
    Integer,
    Decimal,
    Fraction,
    Percent,
    MixedNumber,
    Symbolic,
}

/// The final answer pulled from a response.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedAnswer {
    /// The matched token for numeric forms; the whole answer segment for
    /// symbolic ones.
    pub raw_span: String,
    pub value: Option<BigRational>,
    pub unit: Option<String>,
    pub form: AnswerForm,
    /// Fractional digits of a decimal/percent literal; drives the
    /// truncated-decimal tolerance.
    pub decimal_places: Option<u32>,
}

impl ExtractedAnswer {
    fn symbolic(span: String) -> Self {
        ExtractedAnswer {
            raw_span: span,
            value: None,
            unit: None,
            form: AnswerForm::Symbolic,
            decimal_places: None,
        }
    }

    /// Human-readable rendering for verdicts.
    pub fn display(&self) -> String {
        match (&self.value, &self.unit) {
            (Some(v), Some(u)) => format!("{v} {u}"),
            (Some(v), None) => format!("{v}"),
            _ => self.raw_span.clone(),
        }
    }
}

/// Extraction/grading knobs. Marker and unit lists are extensible because
/// chain-of-thought output is diverse and the defaults will not cover every
/// corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub answer_markers: Vec<String>,
    pub units: Vec<String>,
    pub ascii_units: Vec<String>,
    /// Relative tolerance for decimal-vs-nonterminating comparisons.
    pub tolerance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            answer_markers: [
                "故答案为：",
                "故答案为:",
                "答案为：",
                "答案为:",
                "答案是",
                "答案：",
                "答案:",
                "答：",
                "答:",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            units: [
                "平方厘米", "平方分米", "平方千米", "立方厘米", "立方分米", "摄氏度",
                "平方米", "立方米", "千克", "公斤", "千米", "公里", "厘米", "分米",
                "毫米", "毫升", "小时", "分钟", "星期", "元", "角", "分", "秒", "天",
                "年", "月", "日", "周", "岁", "米", "克", "吨", "升", "倍", "只", "个",
                "人", "名", "本", "支", "棵", "朵", "辆", "艘", "架", "台", "页", "箱",
                "包", "袋", "瓶", "杯", "块", "条", "根", "张", "段", "层", "组", "件",
                "套", "双", "对", "头", "圈", "步", "票", "道", "题", "棵树",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            ascii_units: ["km", "cm", "mm", "dm", "kg", "ml", "m", "g", "t", "l", "h", "min", "s"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            tolerance: 1e-6,
        }
    }
}

fn number_token_regex() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        regex::Regex::new(
            r"(?x)
            (?:(?P<mixint>\d+)\s*)?\$?\\frac\{(?P<lnum>-?\d+(?:\.\d+)?)\}\{(?P<lden>-?\d+(?:\.\d+)?)\}\$?
            | (?P<zden>\d+(?:\.\d+)?)分之(?P<znum>\d+(?:\.\d+)?)
            | (?P<yint>\d+)又(?P<ynum>\d+)/(?P<yden>\d+)
            | (?P<fnum>-?\d+(?:\.\d+)?)/(?P<fden>\d+(?:\.\d+)?)
            | (?P<pnum>-?\d+(?:\.\d+)?)\s*%
            | (?P<dec>-?\d+(?:\.\d+)?)
            ",
        )
        .unwrap()
    })
}

fn fold_digits(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{FF10}'..='\u{FF19}' => char::from(b'0' + (c as u32 - 0xFF10) as u8),
            '％' => '%',
            _ => c,
        })
        .collect()
}

fn parse_decimal(s: &str) -> Option<(BigRational, u32)> {
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    let int: BigInt = int_part.parse().ok()?;
    let places = frac_part.len() as u32;
    let scale = BigInt::from(10u32).pow(places);
    let frac: BigInt = if frac_part.is_empty() { BigInt::zero() } else { frac_part.parse().ok()? };
    let numer = (&int * &scale + frac) * BigInt::from(sign);
    Some((BigRational::new(numer, scale), places))
}

struct NumberToken {
    start: usize,
    end: usize,
    value: BigRational,
    form: AnswerForm,
    decimal_places: Option<u32>,
    text: String,
}

fn parse_token(caps: &regex::Captures<'_>) -> Option<(BigRational, AnswerForm, Option<u32>)> {
    if let (Some(n), Some(d)) = (caps.name("lnum"), caps.name("lden")) {
        let (num, _) = parse_decimal(n.as_str())?;
        let (den, _) = parse_decimal(d.as_str())?;
        if den.is_zero() {
            return None;
        }
        let frac = num / den;
        return match caps.name("mixint") {
            Some(i) => {
                let (whole, _) = parse_decimal(i.as_str())?;
                Some((whole + frac, AnswerForm::MixedNumber, None))
            }
            None => Some((frac, AnswerForm::Fraction, None)),
        };
    }
    if let (Some(d), Some(n)) = (caps.name("zden"), caps.name("znum")) {
        let (den, _) = parse_decimal(d.as_str())?;
        let (num, _) = parse_decimal(n.as_str())?;
        if den.is_zero() {
            return None;
        }
        return Some((num / den, AnswerForm::Fraction, None));
    }
    if let (Some(i), Some(n), Some(d)) = (caps.name("yint"), caps.name("ynum"), caps.name("yden")) {
        let (whole, _) = parse_decimal(i.as_str())?;
        let (num, _) = parse_decimal(n.as_str())?;
        let (den, _) = parse_decimal(d.as_str())?;
        if den.is_zero() {
            return None;
        }
        return Some((whole + num / den, AnswerForm::MixedNumber, None));
    }
    if let (Some(n), Some(d)) = (caps.name("fnum"), caps.name("fden")) {
        let (num, _) = parse_decimal(n.as_str())?;
        let (den, _) = parse_decimal(d.as_str())?;
        if den.is_zero() {
            return None;
        }
        return Some((num / den, AnswerForm::Fraction, None));
    }
    if let Some(p) = caps.name("pnum") {
        let (v, places) = parse_decimal(p.as_str())?;
        return Some((v / BigRational::from_integer(100.into()), AnswerForm::Percent, Some(places + 2)));
    }
    if let Some(d) = caps.name("dec") {
        let (v, places) = parse_decimal(d.as_str())?;
        let form = if d.as_str().contains('.') { AnswerForm::Decimal } else { AnswerForm::Integer };
        let dp = (form == AnswerForm::Decimal).then_some(places);
        return Some((v, form, dp));
    }
    None
}

const TRAILING_PUNCT: &[char] = &['．', '。', '.', '!', '！', '?', '？', ';', '；', ',', '，', '、', ':', '：'];

/// Finds the answer segment: text after the last answer marker, or the whole
/// response when no marker occurs. Returns (segment, marker_found).
fn answer_segment<'a>(response: &'a str, cfg: &EvalConfig) -> (&'a str, bool) {
    let mut best_end: Option<usize> = None;
    for marker in &cfg.answer_markers {
        if let Some(pos) = response.rfind(marker.as_str()) {
            let end = pos + marker.len();
            if best_end.map_or(true, |b| end > b) {
                best_end = Some(end);
            }
        }
    }
    match best_end {
        Some(end) => (&response[end..], true),
        None => (response, false),
    }
}

/// Tries to read a unit immediately after `from` (skipping whitespace and at
/// most one opening parenthesis). Returns (unit, end_of_unit_byte).
fn read_unit(segment: &str, from: usize, cfg: &EvalConfig) -> Option<(String, usize, usize)> {
    let mut idx = from;
    let bytes = segment.as_bytes();
    while idx < bytes.len() && (bytes[idx] as char).is_ascii_whitespace() {
        idx += 1;
    }
    let rest = &segment[idx..];
    let mut unit_start = idx;
    let rest = if let Some(stripped) = rest.strip_prefix('（').or_else(|| rest.strip_prefix('(')) {
        unit_start = idx + (rest.len() - stripped.len());
        stripped
    } else {
        rest
    };

    let mut han_units: Vec<&String> = cfg.units.iter().collect();
    han_units.sort_by_key(|u| std::cmp::Reverse(u.len()));
    for unit in han_units {
        if rest.starts_with(unit.as_str()) {
            return Some((unit.clone(), unit_start, unit_start + unit.len()));
        }
    }
    let mut ascii_units: Vec<&String> = cfg.ascii_units.iter().collect();
    ascii_units.sort_by_key(|u| std::cmp::Reverse(u.len()));
    for unit in ascii_units {
        if let Some(after) = rest.strip_prefix(unit.as_str()) {
            // Allow an exponent suffix (cm2, m³) but refuse when the match
            // is just the head of a longer word (mm vs m).
            let (suffix_len, after) = match after.chars().next() {
                Some(c @ ('2' | '3' | '²' | '³')) => (c.len_utf8(), &after[c.len_utf8()..]),
                _ => (0, after),
            };
            if after.chars().next().is_some_and(|c| c.is_ascii_alphanumeric()) {
                continue;
            }
            let end = unit_start + unit.len() + suffix_len;
            return Some((segment[unit_start..end].to_string(), unit_start, end));
        }
    }
    None
}

/// Total extraction: always returns a form, never fails.
pub fn extract_answer(response: &str, cfg: &EvalConfig) -> ExtractedAnswer {
    extract_answer_detail(response, cfg).0
}

pub(crate) fn extract_answer_detail(response: &str, cfg: &EvalConfig) -> (ExtractedAnswer, bool) {
    let folded = fold_digits(response);
    let (segment, had_marker) = answer_segment(&folded, cfg);
    let segment = segment.trim();
    let cleaned = segment.trim_end_matches(TRAILING_PUNCT).trim();

    // Collect candidate number tokens; skip any directly preceded by an
    // ASCII letter (the 2 in cm2 or x2 is an exponent, not an answer).
    let mut tokens: Vec<NumberToken> = Vec::new();
    for caps in number_token_regex().captures_iter(cleaned) {
        let m = caps.get(0).unwrap();
        let prev = cleaned[..m.start()].chars().next_back();
        if prev.is_some_and(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        // A minus directly after a digit or closing bracket is an operator,
        // not a sign.
        let mut start = m.start();
        let mut text = m.as_str().to_string();
        let mut caps_value = parse_token(&caps);
        if text.starts_with('-')
            && prev.is_some_and(|c| c.is_ascii_digit() || c == ')' || c == '）')
        {
            text.remove(0);
            start += 1;
            caps_value = caps_value.map(|(v, f, d)| (-v, f, d));
        }
        if let Some((value, form, decimal_places)) = caps_value {
            tokens.push(NumberToken {
                start,
                end: m.end(),
                value,
                form,
                decimal_places,
                text,
            });
        }
    }

    let Some(token) = tokens.pop() else {
        return (ExtractedAnswer::symbolic(cleaned.to_string()), had_marker);
    };

    let unit = read_unit(cleaned, token.end, cfg);

    // Any ASCII letters outside the token and its unit mean the segment is
    // an algebraic expression, not a bare number.
    let mut masked: Vec<(usize, usize)> = vec![(token.start, token.end)];
    if let Some((_, us, ue)) = &unit {
        masked.push((*us, *ue));
    }
    let has_stray_letters = cleaned.char_indices().any(|(i, c)| {
        c.is_ascii_alphabetic() && !masked.iter().any(|(s, e)| i >= *s && i < *e)
    });
    if has_stray_letters {
        return (ExtractedAnswer::symbolic(cleaned.to_string()), had_marker);
    }

    (
        ExtractedAnswer {
            raw_span: token.text,
            value: Some(token.value),
            unit: unit.map(|(u, _, _)| u),
            form: token.form,
            decimal_places: token.decimal_places,
        },
        had_marker,
    )
}

/// True when the rational has a finite decimal expansion.
fn terminating(r: &BigRational) -> bool {
    let mut d = r.denom().clone();
    for p in [2u32, 5u32] {
        let p = BigInt::from(p);
        while (&d % &p).is_zero() {
            d /= &p;
        }
    }
    d.is_one()
}

fn normalize_symbolic(s: &str) -> String {
    let mut out = s.trim().trim_end_matches(TRAILING_PUNCT).trim().to_string();
    loop {
        let t: String = out.chars().filter(|c| !c.is_whitespace()).collect();
        let stripped = strip_wrapping(&t);
        if stripped == out {
            break;
        }
        out = stripped;
    }
    out
}

/// Removes one layer of matching outer parentheses or `$` delimiters.
fn strip_wrapping(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() >= 2 {
        let (first, last) = (chars[0], chars[chars.len() - 1]);
        let pair = matches!((first, last), ('(', ')') | ('（', '）') | ('$', '$'));
        if pair {
            if first == '$' {
                return chars[1..chars.len() - 1].iter().collect();
            }
            // The opening paren must match the final closing one.
            let mut depth = 0i32;
            for (i, &c) in chars.iter().enumerate() {
                if c == first {
                    depth += 1;
                } else if c == last {
                    depth -= 1;
                    if depth == 0 && i != chars.len() - 1 {
                        return s.to_string();
                    }
                }
            }
            if depth == 0 {
                return chars[1..chars.len() - 1].iter().collect();
            }
        }
    }
    s.to_string()
}

fn truncation_tolerance(places: u32) -> BigRational {
    // Half a unit in the last printed place.
    let denom = BigInt::from(2) * BigInt::from(10u32).pow(places);
    BigRational::new(BigInt::one(), denom)
}

/// Decides whether two extracted answers agree. Symmetric and reflexive.
pub fn equivalent(pred: &ExtractedAnswer, gold: &ExtractedAnswer, tol: f64) -> bool {
    match (&pred.value, &gold.value) {
        (Some(p), Some(g)) => {
            if let (Some(pu), Some(gu)) = (&pred.unit, &gold.unit) {
                if pu != gu {
                    return false;
                }
            }
            if p == g {
                return true;
            }
            // Tolerance applies only to a decimal/percent literal standing
            // in for a value with no finite expansion.
            let mut allowed: Option<BigRational> = None;
            let tol_r = BigRational::from_float(tol).unwrap_or_else(BigRational::zero);
            for (side, other) in [(pred, g), (gold, p)] {
                if side.decimal_places.is_some() && !terminating(other) {
                    let rel = &tol_r * p.abs().max(g.abs());
                    let trunc = truncation_tolerance(side.decimal_places.unwrap());
                    let bound = rel.max(trunc);
                    allowed = Some(match allowed {
                        Some(prev) => prev.max(bound),
                        None => bound,
                    });
                }
            }
            match allowed {
                Some(bound) => (p - g).abs() <= bound,
                None => false,
            }
        }
        (None, None) => {
            // Empty-vs-empty is vacuously equal here; grading filters empty
            // extractions out as unparseable before comparison.
            normalize_symbolic(&pred.raw_span) == normalize_symbolic(&gold.raw_span)
        }
        _ => false,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub response: String,
}

/// Reads a predictions file: line-delimited JSON `{id, response}`.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CoreError> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| CoreError::Io { path: path.to_path_buf(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line)
            .map_err(|e| CoreError::InvalidConfig(format!("bad prediction line: {e}")))?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Correct,
    Incorrect,
    Unparseable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub prediction_id: String,
    pub decision: Decision,
    pub reason: String,
    pub predicted: String,
    pub gold: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GradeBucket {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradeReport {
    pub n: usize,
    pub correct: usize,
    /// Absent when there were zero items.
    pub accuracy: Option<f64>,
    pub per_grade: BTreeMap<String, GradeBucket>,
    pub verdicts: Vec<Verdict>,
}

/// Grades every prediction against the gold corpus. Pure per-item map plus
/// an order-independent reduction, so the aggregate does not depend on
/// prediction-file ordering.
pub fn grade_dataset(predictions: &[Prediction], gold: &Corpus, cfg: &EvalConfig) -> GradeReport {
    let mut verdicts = Vec::with_capacity(predictions.len());
    let mut correct = 0usize;
    let mut per_grade: BTreeMap<String, GradeBucket> = BTreeMap::new();

    for pred in predictions {
        let verdict = grade_one(pred, gold, cfg);
        if verdict.decision == Decision::Correct {
            correct += 1;
        }
        if let Some(rec) = gold.get(&pred.id) {
            if let Some(grade) = rec.meta.get("grade") {
                let bucket = per_grade.entry(format!("G{grade}")).or_default();
                bucket.n += 1;
                if verdict.decision == Decision::Correct {
                    bucket.correct += 1;
                }
            }
        }
        verdicts.push(verdict);
    }

    for bucket in per_grade.values_mut() {
        bucket.accuracy = if bucket.n > 0 { bucket.correct as f64 / bucket.n as f64 } else { 0.0 };
    }

    let n = predictions.len();
    GradeReport {
        n,
        correct,
        accuracy: (n > 0).then(|| correct as f64 / n as f64),
        per_grade,
        verdicts,
    }
}

fn grade_one(pred: &Prediction, gold: &Corpus, cfg: &EvalConfig) -> Verdict {
    let Some(gold_rec) = gold.get(&pred.id) else {
        return Verdict {
            prediction_id: pred.id.clone(),
            decision: Decision::Unparseable,
            reason: "missing_gold".into(),
            predicted: String::new(),
            gold: String::new(),
        };
    };

    let (pred_ans, pred_marker) = extract_answer_detail(&pred.response, cfg);
    let (gold_ans, _) = extract_answer_detail(&gold_rec.answer, cfg);

    let pred_empty = pred_ans.value.is_none() && normalize_symbolic(&pred_ans.raw_span).is_empty();
    if pred_empty || (pred_ans.value.is_none() && !pred_marker && pred_ans.form == AnswerForm::Symbolic && !pred_has_signal(&pred_ans)) {
        return Verdict {
            prediction_id: pred.id.clone(),
            decision: Decision::Unparseable,
            reason: "no_answer_found".into(),
            predicted: pred_ans.display(),
            gold: gold_ans.display(),
        };
    }

    let ok = equivalent(&pred_ans, &gold_ans, cfg.tolerance);
    let reason = if ok {
        "equivalent".to_string()
    } else if pred_ans.value.is_some() != gold_ans.value.is_some() {
        "form_mismatch".to_string()
    } else if pred_ans.unit.is_some() && gold_ans.unit.is_some() && pred_ans.unit != gold_ans.unit {
        "unit_conflict".to_string()
    } else {
        "value_mismatch".to_string()
    };
    Verdict {
        prediction_id: pred.id.clone(),
        decision: if ok { Decision::Correct } else { Decision::Incorrect },
        reason,
        predicted: pred_ans.display(),
        gold: gold_ans.display(),
    }
}

/// A marker-less symbolic span still counts as an answer when it contains
/// CJK or digit content (e.g. `x=14.4` or `无法整除`); pure noise does not.
fn pred_has_signal(ans: &ExtractedAnswer) -> bool {
    ans.raw_span.chars().any(|c| crate::corpus::is_han(c) || c.is_ascii_digit())
}
