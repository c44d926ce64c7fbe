//! Rule-based cleaning baseline with full edit auditing.
//!
//! Three rules: extract the solution part of an answer via template
//! markers, turn `digit\ndigit` into `digit/digit`, and drop the comma in
//! `,=` / `,≈`. The fraction rule is applied blindly on purpose — the
//! inability to guard it by context is exactly the failure mode this
//! baseline exists to exhibit (a line break between two equations gets
//! fused into a bogus fraction).

use serde::{Deserialize, Serialize};

use crate::corpus::{Record, Source};
use crate::degrader::Field;

pub const RULE_EXTRACT_SOLUTION: &str = "extract_solution";
pub const RULE_FIX_FRACTIONS: &str = "fix_fractions";
pub const RULE_FIX_EQUATIONS: &str = "fix_equations";

/// Scope a rule applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleScope {
    Question,
    Answer,
    Both,
}

/// Registry entry describing one rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub pattern: String,
    pub replacement: String,
    pub scope: RuleScope,
}

/// A solution marker template: text from the last marker onward is kept;
/// the marker itself is kept or dropped per flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionMarker {
    pub text: String,
    pub keep: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleRegistry {
    pub markers: Vec<SolutionMarker>,
}

impl Default for RuleRegistry {
    fn default() -> Self {
        let drop = |text: &str| SolutionMarker { text: text.into(), keep: false };
        let keep = |text: &str| SolutionMarker { text: text.into(), keep: true };
        RuleRegistry {
            markers: vec![
                drop("试题解析："),
                drop("试题解析:"),
                drop("[详解]"),
                // The cleaned format itself begins with 解：, so this marker
                // stays in the output.
                keep("解："),
                keep("解:"),
            ],
        }
    }
}

impl RuleRegistry {
    pub fn rules(&self) -> Vec<Rule> {
        vec![
            Rule {
                id: RULE_EXTRACT_SOLUTION.into(),
                pattern: "text before the last solution marker".into(),
                replacement: "".into(),
                scope: RuleScope::Answer,
            },
            Rule {
                id: RULE_FIX_FRACTIONS.into(),
                pattern: "digit\\ndigit".into(),
                replacement: "digit/digit".into(),
                scope: RuleScope::Both,
            },
            Rule {
                id: RULE_FIX_EQUATIONS.into(),
                pattern: ",= ,≈ (ASCII or full-width comma)".into(),
                replacement: "= ≈".into(),
                scope: RuleScope::Answer,
            },
        ]
    }
}

/// One audited edit: replace chars `[span_start, span_end)` (offsets valid
/// at application time) with `after`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanEdit {
    pub rule: String,
    pub field: Field,
    pub span_start: usize,
    pub span_end: usize,
    pub before: String,
    pub after: String,
}

/// Ordered edits that turn the input record into the cleaned record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub record_id: String,
    pub edits: Vec<CleanEdit>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

/// Replays a change set against the original record.
pub fn apply_changeset(record: &Record, changes: &ChangeSet) -> Record {
    let mut out = record.clone();
    out.source = Source::Cleaned;
    for e in &changes.edits {
        let target = match e.field {
            Field::Question => &mut out.question,
            Field::Answer => &mut out.answer,
        };
        let chars: Vec<char> = target.chars().collect();
        let mut next = String::with_capacity(target.len());
        next.extend(chars[..e.span_start].iter());
        next.push_str(&e.after);
        next.extend(chars[e.span_end..].iter());
        *target = next;
    }
    out
}

fn char_offset(text: &str, byte_idx: usize) -> usize {
    text[..byte_idx].chars().count()
}

/// Keeps the text from the last solution marker onward; analysis prefixes
/// before it are dropped. Without any marker the answer passes through.
pub fn extract_solution(answer: &str, registry: &RuleRegistry) -> (String, Vec<CleanEdit>) {
    let mut last: Option<(usize, &SolutionMarker)> = None;
    for marker in &registry.markers {
        if let Some(byte_idx) = answer.rfind(&marker.text) {
            if last.map_or(true, |(best, _)| byte_idx > best) {
                last = Some((byte_idx, marker));
            }
        }
    }
    let Some((byte_idx, marker)) = last else {
        return (answer.to_string(), Vec::new());
    };
    let cut_bytes = if marker.keep { byte_idx } else { byte_idx + marker.text.len() };
    if cut_bytes == 0 {
        return (answer.to_string(), Vec::new());
    }
    let cut_chars = char_offset(answer, cut_bytes);
    let removed: String = answer.chars().take(cut_chars).collect();
    let rest: String = answer.chars().skip(cut_chars).collect();
    let edit = CleanEdit {
        rule: RULE_EXTRACT_SOLUTION.into(),
        field: Field::Answer,
        span_start: 0,
        span_end: cut_chars,
        before: removed,
        after: String::new(),
    };
    (rest, vec![edit])
}

/// Replaces every newline flanked by digits with a slash. Applied blindly:
/// a line break separating `…=10.5` from `21x=…` becomes `10.5/21x`, which
/// is wrong — and that blindness is the point of this baseline.
pub fn fix_fractions(text: &str, field: Field) -> (String, Vec<CleanEdit>) {
    let mut chars: Vec<char> = text.chars().collect();
    let mut edits = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '\n'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && i + 1 < chars.len()
            && chars[i + 1].is_ascii_digit()
        {
            chars[i] = '/';
            edits.push(CleanEdit {
                rule: RULE_FIX_FRACTIONS.into(),
                field,
                span_start: i,
                span_end: i + 1,
                before: "\n".into(),
                after: "/".into(),
            });
        }
        i += 1;
    }
    (chars.into_iter().collect(), edits)
}

/// Drops the comma in `,=` and `,≈` (ASCII or full-width comma). The scan
/// backtracks one position after each deletion so stacked commas reach a
/// fixed point in a single pass.
pub fn fix_equations(text: &str, field: Field) -> (String, Vec<CleanEdit>) {
    let mut chars: Vec<char> = text.chars().collect();
    let mut edits = Vec::new();
    let mut i = 0;
    while i + 1 < chars.len() {
        let is_comma = chars[i] == '，' || chars[i] == ',';
        let next_is_rel = chars[i + 1] == '=' || chars[i + 1] == '≈';
        if is_comma && next_is_rel {
            let before: String = chars[i].to_string();
            chars.remove(i);
            edits.push(CleanEdit {
                rule: RULE_FIX_EQUATIONS.into(),
                field,
                span_start: i,
                span_end: i + 1,
                before,
                after: String::new(),
            });
            i = i.saturating_sub(1);
        } else {
            i += 1;
        }
    }
    (chars.into_iter().collect(), edits)
}

/// Full cleaning pipeline: the answer goes through solution extraction,
/// fraction repair, then equation repair; the question only through
/// fraction repair. Returns the cleaned record plus the merged change set.
pub fn clean(record: &Record, registry: &RuleRegistry) -> (Record, ChangeSet) {
    let mut changes = ChangeSet { record_id: record.id.clone(), edits: Vec::new() };

    let (q1, q_edits) = fix_fractions(&record.question, Field::Question);
    changes.edits.extend(q_edits);

    let (a1, e1) = extract_solution(&record.answer, registry);
    let (a2, e2) = fix_fractions(&a1, Field::Answer);
    let (a3, e3) = fix_equations(&a2, Field::Answer);
    changes.edits.extend(e1);
    changes.edits.extend(e2);
    changes.edits.extend(e3);

    let cleaned = Record {
        id: record.id.clone(),
        question: q1,
        answer: a3,
        source: Source::Cleaned,
        meta: record.meta.clone(),
    };
    (cleaned, changes)
}
