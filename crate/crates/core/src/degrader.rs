//! Synthetic error injector. Applies the typical web-crawl error classes
//! (flattened fractions, dropped superscripts, missing line breaks,
//! substituted symbols, garbled spans) to a clean corpus and records every
//! edit in a manifest, so matching and cleaning can be verified against
//! known ground truth.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Record, Source};
use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// `\frac{X}{Y}` (with surrounding `$` when present) becomes `X\nY` or
    /// `XY`, coin flip per site.
    FractionFlatten,
    /// `B^{E}` becomes `BE`.
    SuperscriptDrop,
    /// Line breaks between solution lines are deleted.
    LinebreakDrop,
    /// Symbols rendered in a lookalike form, e.g. `×` as `X`, `+` as `十`.
    SymbolSubstitute,
    /// A random span replaced with noise characters.
    Garble,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 5] = [
        ErrorClass::FractionFlatten,
        ErrorClass::SuperscriptDrop,
        ErrorClass::LinebreakDrop,
        ErrorClass::SymbolSubstitute,
        ErrorClass::Garble,
    ];
}

/// Which record field an edit touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Question,
    Answer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegradationSpec {
    /// Enabled classes with their per-record application probability.
    pub rates: BTreeMap<ErrorClass, f64>,
    pub rng_seed: u64,
    /// Substitution table for [`ErrorClass::SymbolSubstitute`].
    #[serde(default = "default_symbol_map")]
    pub symbol_map: Vec<(String, String)>,
    /// Optional sub-mode emulating a global error: deletes a short span
    /// from the question at this rate.
    #[serde(default)]
    pub question_info_drop: Option<f64>,
}

fn default_symbol_map() -> Vec<(String, String)> {
    vec![("×".into(), "X".into()), ("+".into(), "十".into())]
}

impl DegradationSpec {
    /// All five classes at the given rate.
    pub fn all_classes(rate: f64, rng_seed: u64) -> Self {
        Self::with_classes(&ErrorClass::ALL, rate, rng_seed)
    }

    pub fn with_classes(classes: &[ErrorClass], rate: f64, rng_seed: u64) -> Self {
        DegradationSpec {
            rates: classes.iter().map(|&c| (c, rate)).collect(),
            rng_seed,
            symbol_map: default_symbol_map(),
            question_info_drop: None,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.rates.is_empty() {
            return Err(CoreError::InvalidConfig("no degradation class enabled".into()));
        }
        for (class, rate) in &self.rates {
            if !(0.0..=1.0).contains(rate) {
                return Err(CoreError::InvalidConfig(format!(
                    "rate for {class:?} is {rate}, expected [0,1]"
                )));
            }
        }
        if let Some(r) = self.question_info_drop {
            if !(0.0..=1.0).contains(&r) {
                return Err(CoreError::InvalidConfig(format!(
                    "question_info_drop rate is {r}, expected [0,1]"
                )));
            }
        }
        Ok(())
    }
}

/// One recorded edit: replace characters `[span_start, span_end)` of the
/// named field (offsets valid at application time, edits applied in order)
/// with `replacement`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub field: Field,
    pub class: ErrorClass,
    pub span_start: usize,
    pub span_end: usize,
    pub replacement: String,
}

#[derive(Debug, Clone, Default)]
pub struct DegradationManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DegradationManifest {
    pub fn entries_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries.iter().filter(move |e| e.id == id)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DegradeStats {
    /// Class sampled for a record that offered no applicable site.
    pub skipped_no_site: BTreeMap<ErrorClass, usize>,
    pub records_touched: usize,
}

pub struct DegradeOutcome {
    pub corpus: Corpus,
    pub manifest: DegradationManifest,
    pub stats: DegradeStats,
}

/// Replaces the char range `[start, end)` with `replacement`.
fn splice(text: &str, start: usize, end: usize, replacement: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + replacement.len());
    out.extend(chars[..start].iter());
    out.push_str(replacement);
    out.extend(chars[end..].iter());
    out
}

/// Re-applies manifest edits to a clean record, reproducing the degraded
/// record exactly.
pub fn apply_manifest(record: &Record, entries: &[ManifestEntry]) -> Record {
    let mut out = record.clone();
    out.source = Source::Crawl;
    for e in entries {
        debug_assert_eq!(e.id, record.id);
        let target = match e.field {
            Field::Question => &mut out.question,
            Field::Answer => &mut out.answer,
        };
        *target = splice(target, e.span_start, e.span_end, &e.replacement);
    }
    out
}

/// Byte offset of the given char offset.
fn byte_of_char(text: &str, char_idx: usize) -> usize {
    text.char_indices()
        .nth(char_idx)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

struct FieldDegrader<'a> {
    id: &'a str,
    field: Field,
    text: String,
    edits: Vec<ManifestEntry>,
}

impl<'a> FieldDegrader<'a> {
    fn new(id: &'a str, field: Field, text: &str) -> Self {
        FieldDegrader { id, field, text: text.to_string(), edits: Vec::new() }
    }

    fn edit(&mut self, class: ErrorClass, start: usize, end: usize, replacement: &str) {
        self.text = splice(&self.text, start, end, replacement);
        self.edits.push(ManifestEntry {
            id: self.id.to_string(),
            field: self.field,
            class,
            span_start: start,
            span_end: end,
            replacement: replacement.to_string(),
        });
    }

    /// Rewrites every `\frac{digits}{digits}` site (consuming a `$...$`
    /// wrapper when both dollars are adjacent). Returns false when the text
    /// had no site.
    fn fraction_flatten(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let re = fraction_regex();
        let mut applied = false;
        let mut search_from = 0usize; // char offset
        loop {
            let hay = self.text.clone();
            let from_byte = byte_of_char(&hay, search_from);
            let Some(caps) = re.captures(&hay[from_byte..]) else { break };
            let m = caps.get(0).unwrap();
            let start = search_from + hay[from_byte..from_byte + m.start()].chars().count();
            let end = start + m.as_str().chars().count();
            let numer = caps.name("n").unwrap().as_str();
            let denom = caps.name("d").unwrap().as_str();
            let replacement = if rng.gen_bool(0.5) {
                format!("{numer}\n{denom}")
            } else {
                format!("{numer}{denom}")
            };
            self.edit(ErrorClass::FractionFlatten, start, end, &replacement);
            search_from = start + replacement.chars().count();
            applied = true;
        }
        applied
    }

    /// Rewrites every `^{E}` site to `E`.
    fn superscript_drop(&mut self) -> bool {
        let re = superscript_regex();
        let mut applied = false;
        let mut search_from = 0usize;
        loop {
            let hay = self.text.clone();
            let from_byte = byte_of_char(&hay, search_from);
            let Some(caps) = re.captures(&hay[from_byte..]) else { break };
            let m = caps.get(0).unwrap();
            let start = search_from + hay[from_byte..from_byte + m.start()].chars().count();
            let end = start + m.as_str().chars().count();
            let exponent = caps.name("e").unwrap().as_str().to_string();
            self.edit(ErrorClass::SuperscriptDrop, start, end, &exponent);
            search_from = start + exponent.chars().count();
            applied = true;
        }
        applied
    }

    /// Deletes every newline.
    fn linebreak_drop(&mut self) -> bool {
        let mut applied = false;
        loop {
            let pos = self.text.chars().position(|c| c == '\n');
            match pos {
                Some(i) => {
                    self.edit(ErrorClass::LinebreakDrop, i, i + 1, "");
                    applied = true;
                }
                None => break,
            }
        }
        applied
    }

    fn symbol_substitute(&mut self, map: &[(String, String)]) -> bool {
        let mut applied = false;
        let mut i = 0usize;
        loop {
            let chars: Vec<char> = self.text.chars().collect();
            if i >= chars.len() {
                break;
            }
            let rest: String = chars[i..].iter().collect();
            let hit = map.iter().find(|(from, _)| rest.starts_with(from.as_str()));
            match hit {
                Some((from, to)) => {
                    let from_len = from.chars().count();
                    self.edit(ErrorClass::SymbolSubstitute, i, i + from_len, to);
                    i += to.chars().count();
                    applied = true;
                }
                None => i += 1,
            }
        }
        applied
    }

    fn garble(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let len = self.text.chars().count();
        if len == 0 {
            return false;
        }
        let span_len = rng.gen_range(5..=20).min(len);
        let start = rng.gen_range(0..=len - span_len);
        let noise_len = rng.gen_range(5..=20);
        let noise = noise_string(rng, noise_len);
        self.edit(ErrorClass::Garble, start, start + span_len, &noise);
        true
    }

    /// Deletes a short span, emulating information that only the answer can
    /// recover.
    fn info_drop(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let len = self.text.chars().count();
        if len < 4 {
            return false;
        }
        let span_len = rng.gen_range(2..=8).min(len - 1);
        let start = rng.gen_range(0..=len - span_len);
        self.edit(ErrorClass::Garble, start, start + span_len, "");
        true
    }
}

fn fraction_regex() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        regex::Regex::new(r"\$\\frac\{(?P<n>\d+)\}\{(?P<d>\d+)\}\$|\\frac\{(?P<n2>\d+)\}\{(?P<d2>\d+)\}").unwrap()
    })
}

fn superscript_regex() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"\^\{(?P<e>[^{}]+)\}").unwrap())
}

const GARBLE_PUNCT: &[char] = &[
    '!', '@', '#', '%', '&', '*', '(', ')', '_', '=', '[', ']', '{', '}', ';', ':', '"', ',',
    '<', '>', '?', '|', '~', '\\',
];

pub(crate) fn noise_string(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.5) {
                // Random ideograph from the base Han block.
                char::from_u32(rng.gen_range(0x4E00..=0x9FFF)).unwrap()
            } else {
                GARBLE_PUNCT[rng.gen_range(0..GARBLE_PUNCT.len())]
            }
        })
        .collect()
}

/// Severe whole-record garbling, used for syntax-error training augmentation.
pub(crate) fn garble_record(record: &Record, rng: &mut ChaCha8Rng) -> Record {
    let mut out = record.clone();
    for text in [&mut out.question, &mut out.answer] {
        let len = text.chars().count();
        if len == 0 {
            continue;
        }
        // Several overlapping noise splices leave little structure intact.
        for _ in 0..3 {
            let len = text.chars().count();
            let span = rng.gen_range(len / 3..=len.max(3) - 1).max(1).min(len);
            let start = rng.gen_range(0..=len - span);
            let noise_len = rng.gen_range(8..=24);
            let noise = noise_string(rng, noise_len);
            *text = splice(text, start, start + span, &noise);
        }
    }
    out
}

/// Per-record rng stream derived from the run seed and the record id, so
/// parallel execution stays deterministic.
fn record_rng(rng_seed: u64, id: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    ChaCha8Rng::seed_from_u64(rng_seed ^ h)
}

/// Degrades a seed corpus into a synthetic crawl corpus plus the manifest of
/// every edit made. Identical (corpus, spec) inputs produce byte-identical
/// output.
pub fn degrade(corpus: &Corpus, spec: &DegradationSpec) -> Result<DegradeOutcome, CoreError> {
    spec.validate()?;

    let results: Vec<(Record, Vec<ManifestEntry>, Vec<ErrorClass>)> = corpus
        .records()
        .par_iter()
        .map(|rec| {
            let mut rng = record_rng(spec.rng_seed, &rec.id);
            let mut entries = Vec::new();
            let mut skipped = Vec::new();
            let mut out = rec.clone();
            out.source = Source::Crawl;

            for field in [Field::Question, Field::Answer] {
                let text = match field {
                    Field::Question => out.question.clone(),
                    Field::Answer => out.answer.clone(),
                };
                let mut fd = FieldDegrader::new(&rec.id, field, &text);
                for class in ErrorClass::ALL {
                    let Some(&rate) = spec.rates.get(&class) else { continue };
                    // The sampling draw happens for every enabled class in a
                    // fixed order, so the stream stays aligned regardless of
                    // which classes find a site.
                    if !rng.gen_bool(rate.clamp(0.0, 1.0)) {
                        continue;
                    }
                    let applied = match class {
                        ErrorClass::FractionFlatten => fd.fraction_flatten(&mut rng),
                        ErrorClass::SuperscriptDrop => fd.superscript_drop(),
                        ErrorClass::LinebreakDrop => fd.linebreak_drop(),
                        ErrorClass::SymbolSubstitute => fd.symbol_substitute(&spec.symbol_map),
                        ErrorClass::Garble => fd.garble(&mut rng),
                    };
                    if !applied {
                        skipped.push(class);
                    }
                }
                if field == Field::Question {
                    if let Some(rate) = spec.question_info_drop {
                        if rng.gen_bool(rate.clamp(0.0, 1.0)) {
                            fd.info_drop(&mut rng);
                        }
                    }
                }
                match field {
                    Field::Question => out.question = fd.text.clone(),
                    Field::Answer => out.answer = fd.text.clone(),
                }
                entries.extend(fd.edits);
            }
            (out, entries, skipped)
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut manifest = DegradationManifest::default();
    let mut stats = DegradeStats::default();
    for (rec, entries, skipped) in results {
        if !entries.is_empty() {
            stats.records_touched += 1;
        }
        records.push(rec);
        manifest.entries.extend(entries);
        for class in skipped {
            *stats.skipped_no_site.entry(class).or_insert(0) += 1;
        }
    }

    let corpus_out = Corpus::from_records(records, Source::Crawl, format!("degraded:{}", corpus.provenance()))?;
    Ok(DegradeOutcome { corpus: corpus_out, manifest, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::normalize;
    use crate::matcher::subsequence_of;

    fn one_record_corpus(q: &str, a: &str) -> Corpus {
        Corpus::from_records(vec![Record::new("r1", q, a, Source::Seed)], Source::Seed, "test").unwrap()
    }

    fn degrade_answer(answer: &str, classes: &[ErrorClass], seed: u64) -> (String, DegradationManifest) {
        let corpus = one_record_corpus("占位问题？", answer);
        let spec = DegradationSpec::with_classes(classes, 1.0, seed);
        let out = degrade(&corpus, &spec).unwrap();
        (out.corpus.records()[0].answer.clone(), out.manifest)
    }

    #[test]
    fn superscript_drop_matches_known_form() {
        let (got, _) = degrade_answer("$3^{2}-1^{2}=8$", &[ErrorClass::SuperscriptDrop], 1);
        assert_eq!(got, "$32-12=8$");
    }

    #[test]
    fn fraction_flatten_newline_variant() {
        // Find an rng seed whose first coin flip takes the newline branch,
        // then pin it.
        let mut newline_seed = None;
        for s in 0..64 {
            let (got, _) = degrade_answer("2400÷$\\frac{6}{5}$", &[ErrorClass::FractionFlatten], s);
            if got == "2400÷6\n5" {
                newline_seed = Some(s);
                break;
            }
            assert_eq!(got, "2400÷65", "unexpected flatten output {got:?}");
        }
        let s = newline_seed.expect("no seed produced the newline variant");
        let (again, _) = degrade_answer("2400÷$\\frac{6}{5}$", &[ErrorClass::FractionFlatten], s);
        assert_eq!(again, "2400÷6\n5");
    }

    #[test]
    fn zero_rates_are_a_no_op() {
        let corpus = one_record_corpus("题目带\\frac{1}{2}？", "解：1\n2行答：好");
        let spec = DegradationSpec::all_classes(0.0, 9);
        let out = degrade(&corpus, &spec).unwrap();
        assert_eq!(out.corpus.records()[0].question, corpus.records()[0].question);
        assert_eq!(out.corpus.records()[0].answer, corpus.records()[0].answer);
        assert!(out.manifest.entries.is_empty());
        assert_eq!(out.corpus.source(), Source::Crawl);
    }

    #[test]
    fn reproducible_for_same_seed() {
        let corpus = one_record_corpus(
            "题目$\\frac{1}{5}$和2^{3}？",
            "解：2400÷$\\frac{6}{5}$\n=2000\n答：2000只×2+1",
        );
        let spec = DegradationSpec::all_classes(0.7, 42);
        let a = degrade(&corpus, &spec).unwrap();
        let b = degrade(&corpus, &spec).unwrap();
        assert_eq!(a.corpus.records(), b.corpus.records());
        assert_eq!(a.manifest.entries, b.manifest.entries);

        let other = DegradationSpec::all_classes(0.7, 43);
        let c = degrade(&corpus, &other).unwrap();
        assert!(
            a.corpus.records() != c.corpus.records() || a.manifest.entries != c.manifest.entries,
            "different seed should perturb something on this input"
        );
    }

    #[test]
    fn manifest_replay_reproduces_degraded_record() {
        let corpus = one_record_corpus(
            "把一根绳子对折n次，变成2^{n}+1段，对吗？用$\\frac{1}{2}$算。",
            "解：第一步2^{1}+1=3\n第二步2^{2}+1=5\n所以是（2^{n}+1）段\n答：对，共2×3+4段。",
        );
        for seed in 0..16 {
            let spec = DegradationSpec::all_classes(0.8, seed);
            let out = degrade(&corpus, &spec).unwrap();
            let entries: Vec<ManifestEntry> = out.manifest.entries_for("r1").cloned().collect();
            let replayed = apply_manifest(&corpus.records()[0], &entries);
            assert_eq!(&replayed, &out.corpus.records()[0], "seed {seed}");
        }
    }

    #[test]
    fn non_garble_classes_preserve_answer_subsequence() {
        let answer = "解：2400÷（1+$\\frac{1}{5}$）\n=2400÷$\\frac{6}{5}$\n=3^{2}-1^{2}\n答：去年养鸡2000只．";
        let classes = [
            ErrorClass::FractionFlatten,
            ErrorClass::SuperscriptDrop,
            ErrorClass::LinebreakDrop,
        ];
        for seed in 0..24 {
            let (degraded, _) = degrade_answer(answer, &classes, seed);
            assert!(
                subsequence_of(normalize(answer).as_str(), normalize(&degraded).as_str()),
                "seed {seed}: {degraded:?}"
            );
        }
    }

    #[test]
    fn symbol_substitution_table() {
        let (got, _) = degrade_answer("将(1)×2, 得2x+2y=40", &[ErrorClass::SymbolSubstitute], 5);
        assert_eq!(got, "将(1)X2, 得2x十2y=40");
    }

    #[test]
    fn skipped_classes_are_counted() {
        // No fraction site anywhere.
        let corpus = one_record_corpus("没有分数的题目？", "没有分数的答案");
        let spec = DegradationSpec::with_classes(&[ErrorClass::FractionFlatten], 1.0, 3);
        let out = degrade(&corpus, &spec).unwrap();
        assert_eq!(out.stats.skipped_no_site.get(&ErrorClass::FractionFlatten), Some(&2));
        assert!(out.manifest.entries.is_empty());
    }

    #[test]
    fn garble_replaces_a_span() {
        let corpus = one_record_corpus("一道正常的题目，不止二十个字的长度吗？", "一个正常的答案，足够长足够长足够长。");
        let spec = DegradationSpec::with_classes(&[ErrorClass::Garble], 1.0, 8);
        let out = degrade(&corpus, &spec).unwrap();
        assert!(!out.manifest.entries.is_empty());
        assert_ne!(out.corpus.records()[0].answer, corpus.records()[0].answer);
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec = DegradationSpec::all_classes(0.3, 7);
        let text = serde_json::to_string(&spec).unwrap();
        let back: DegradationSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.rates, spec.rates);
        assert_eq!(back.rng_seed, 7);
        assert_eq!(back.symbol_map, spec.symbol_map);

        // Hand-written spec files use the same shape.
        let hand: DegradationSpec = serde_json::from_str(
            r#"{"rates": {"fraction_flatten": 0.5, "garble": 0.1}, "rng_seed": 3}"#,
        )
        .unwrap();
        assert_eq!(hand.rates.len(), 2);
        assert_eq!(hand.symbol_map, default_symbol_map());
    }

    #[test]
    fn rejects_invalid_spec() {
        let empty = DegradationSpec { rates: BTreeMap::new(), rng_seed: 0, symbol_map: vec![], question_info_drop: None };
        assert!(empty.validate().is_err());
        let bad_rate = DegradationSpec::with_classes(&[ErrorClass::Garble], 1.5, 0);
        assert!(bad_rate.validate().is_err());
    }
}
