//! Record and corpus model, JSONL ingestion/serialization, and the text
//! normalization that underlies all matching.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CoreError;

/// Which collection a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Manually annotated high-quality records (matching targets and
    /// rewriter training targets).
    Seed,
    /// Noisy web-crawled records.
    Crawl,
    /// Records rewritten into high-quality format.
    Cleaned,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Seed => write!(f, "seed"),
            Source::Crawl => write!(f, "crawl"),
            Source::Cleaned => write!(f, "cleaned"),
        }
    }
}

/// One math problem: a question, its worked answer, and open metadata
/// (e.g. `grade: "3"`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub source: Source,
    pub meta: BTreeMap<String, String>,
}

impl Record {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
        source: Source,
    ) -> Self {
        Record {
            id: id.into(),
            question: question.into(),
            answer: answer.into(),
            source,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }
}

/// Wire format of one corpus line. Key order is fixed: id, question, answer,
/// meta. The source tag is assigned at ingest time and never serialized.
#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    question: String,
    answer: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

/// An ordered collection of records that all share one source tag.
/// Immutable after construction; ids are unique.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<Record>,
    source: Source,
    provenance: String,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, enforcing id uniqueness and a uniform source tag.
    pub fn from_records(
        records: Vec<Record>,
        source: Source,
        provenance: impl Into<String>,
    ) -> Result<Self, CoreError> {
        let provenance = provenance.into();
        let mut by_id = HashMap::with_capacity(records.len());
        for (idx, rec) in records.iter().enumerate() {
            debug_assert_eq!(rec.source, source, "record source differs from corpus source");
            if by_id.insert(rec.id.clone(), idx).is_some() {
                return Err(CoreError::DuplicateId { id: rec.id.clone(), line: idx + 1 });
            }
        }
        Ok(Corpus { records, source, provenance, by_id })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Record> {
        self.records.iter()
    }

    /// Content digest over (id, question, answer) of every record in order.
    /// Stable across runs; used to fingerprint rewrite checkpoints.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for rec in &self.records {
            hasher.update(rec.id.as_bytes());
            hasher.update([0x1f]);
            hasher.update(rec.question.as_bytes());
            hasher.update([0x1f]);
            hasher.update(rec.answer.as_bytes());
            hasher.update([0x1e]);
        }
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Outcome of reading a corpus file: the skip count plus one diagnostic
/// per skipped line, for reporting on standard error.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub ingested: usize,
    pub skipped: usize,
    pub diagnostics: Vec<String>,
}

/// Reads a line-delimited JSON corpus file. Malformed lines (bad JSON,
/// missing keys, empty id/question/answer) are skipped and counted;
/// duplicate ids abort the ingest.
pub fn ingest(path: &Path, source: Source) -> Result<(Corpus, IngestReport), CoreError> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut report = IngestReport::default();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| CoreError::Io { path: path.to_path_buf(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                report.skipped += 1;
                report.diagnostics.push(format!("{}:{lineno}: bad JSON: {e}", path.display()));
                continue;
            }
        };
        if parsed.id.is_empty() {
            report.skipped += 1;
            report.diagnostics.push(format!("{}:{lineno}: empty id", path.display()));
            continue;
        }
        if parsed.question.trim().is_empty() || parsed.answer.trim().is_empty() {
            report.skipped += 1;
            report
                .diagnostics
                .push(format!("{}:{lineno}: empty question or answer (id `{}`)", path.display(), parsed.id));
            continue;
        }
        if seen.insert(parsed.id.clone(), lineno).is_some() {
            return Err(CoreError::DuplicateId { id: parsed.id, line: lineno });
        }
        records.push(Record {
            id: parsed.id,
            question: parsed.question,
            answer: parsed.answer,
            source,
            meta: parsed.meta,
        });
    }

    report.ingested = records.len();
    let corpus = Corpus::from_records(records, source, path.display().to_string())?;
    Ok((corpus, report))
}

/// Writes a corpus in the line-delimited JSON format read by [`ingest`].
pub fn write_jsonl<W: Write>(corpus: &Corpus, writer: &mut W) -> std::io::Result<()> {
    for rec in corpus.records() {
        let line = RecordLine {
            id: rec.id.clone(),
            question: rec.question.clone(),
            answer: rec.answer.clone(),
            meta: rec.meta.clone(),
        };
        serde_json::to_writer(&mut *writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Convenience wrapper writing straight to a file path.
pub fn write_jsonl_file(corpus: &Corpus, path: &Path) -> Result<(), CoreError> {
    let mut file = std::fs::File::create(path).map_err(|e| CoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_jsonl(corpus, &mut file).map_err(|e| CoreError::Io { path: path.to_path_buf(), source: e })
}

/// Text reduced to the characters that carry meaning for matching: Han
/// ideographs, ASCII digits, and short ASCII letter runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    text: String,
    origin_len: usize,
}

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Character count of the text before normalization.
    pub fn origin_len(&self) -> usize {
        self.origin_len
    }

    /// Character count after normalization.
    pub fn len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

/// Han ideograph check covering the CJK Unified Ideographs blocks and their
/// extensions plus the compatibility blocks. Kana and hangul are excluded.
pub fn is_han(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'       // CJK Unified Ideographs
        | '\u{3400}'..='\u{4DBF}'     // Extension A
        | '\u{F900}'..='\u{FAFF}'     // Compatibility Ideographs
        | '\u{20000}'..='\u{2A6DF}'   // Extension B
        | '\u{2A700}'..='\u{2EBEF}'   // Extensions C-F + I head
        | '\u{2EBF0}'..='\u{2EE5F}'   // Extension I
        | '\u{2F800}'..='\u{2FA1F}'   // Compatibility Supplement
        | '\u{30000}'..='\u{323AF}'   // Extensions G-H
    )
}

/// Maps full-width digits and Latin letters to their ASCII forms; other
/// characters pass through unchanged.
fn fold_width(c: char) -> char {
    match c {
        '\u{FF10}'..='\u{FF19}' => char::from(b'0' + (c as u32 - 0xFF10) as u8),
        '\u{FF21}'..='\u{FF3A}' => char::from(b'A' + (c as u32 - 0xFF21) as u8),
        '\u{FF41}'..='\u{FF5A}' => char::from(b'a' + (c as u32 - 0xFF41) as u8),
        _ => c,
    }
}

/// Reduces text to Han ideographs, ASCII digits, and ASCII letters (after
/// width folding), then deletes every maximal ASCII letter run of length
/// three or more. Long letter runs are almost always LaTeX identifiers such
/// as `frac`, not variables, so dropping them lets a clean record and its
/// OCR-mangled twin normalize to the same string.
pub fn normalize(text: &str) -> NormalizedText {
    let origin_len = text.chars().count();

    let mut kept = String::with_capacity(text.len());
    for c in text.chars() {
        let c = fold_width(c);
        if c.is_ascii_digit() || c.is_ascii_alphabetic() || is_han(c) {
            kept.push(c);
        }
    }

    let mut out = String::with_capacity(kept.len());
    let mut run = String::new();
    for c in kept.chars() {
        if c.is_ascii_alphabetic() {
            run.push(c);
        } else {
            if run.len() <= 2 {
                out.push_str(&run);
            }
            run.clear();
            out.push(c);
        }
    }
    if !run.is_empty() && run.len() <= 2 {
        out.push_str(&run);
    }

    NormalizedText { text: out, origin_len }
}
