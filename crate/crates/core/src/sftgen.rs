//! Rewriter prompt/target rendering, training-set assembly, and rewriter
//! output validation.
//!
//! The prompt wording and the marker conventions are load-bearing: the
//! input side uses `[题目]`/`[答案]`, the output side `[问题]`/`[答案]`,
//! and two fixed sentinel sentences mark records that should be dropped
//! instead of rewritten. Outputs that do not follow the format are
//! discarded downstream.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Record};
use crate::degrader::garble_record;
use crate::error::CoreError;
use crate::matcher::PairSet;

/// Bumped whenever prompt wording changes; part of the checkpoint
/// fingerprint so stale resume data is refused.
pub const TEMPLATE_VERSION: &str = "prompt-v1";

/// Full-string response marking a record too garbled to rewrite.
pub const SYNTAX_ERROR_SENTINEL: &str = "存在语法错误。";
/// Full-string response marking a record that is not a Chinese math problem.
pub const NOT_CHINESE_MATH_SENTINEL: &str = "这不是一道中文数学题。";

pub const QUESTION_MARKER_IN: &str = "[题目]";
pub const ANSWER_MARKER_IN: &str = "[答案]";
pub const QUESTION_MARKER_OUT: &str = "[问题]";
pub const ANSWER_MARKER_OUT: &str = "[答案]";

const INSTR_1: &str = "假设你是一个小学数学老师，下面给你一道可能存在语言不规范的题目和对应的答案，请将题目和答案转换成规范格式。";
const INSTR_2: &str = "注意答案只需要保留具体解答步骤，且不要改变原答案的解题思路。";
const INSTR_3: &str = "如果题目非中文数学题，请指出“这不是一道中文数学题。”。如果存在严重的语法错误导致理解困难，请输出“存在语法错误。”。";

/// The worked example embedded in the one-shot prompt. The `\n` sequences
/// in the input side are literal backslash-n text, mimicking how flattened
/// fractions arrive in crawled data.
const ONE_SHOT_DEMO_QUESTION: &str = "为民商店有一批大米，卖出总数的\\n\\n\\n\\n\\n\\n\\n\\n5\\n\\n\\n\\n8后，又运进540千克，这时商店里的大米数量与原来大米数量的比是6：7，为民商店原有大米多少千克？";

const ONE_SHOT_DEMO_ANSWER: &str = "试题分析：卖出总数的\\n\\n\\n\\n\\n\\n\\n\\n5\\n\\n\\n \\n8后，又运来540千克，这时商店里的大米数量与原来大米数量的比是6：7，则即此时大米的重量比原来少1-\\n\\n\\n\\n\\n\\n\\n\\n6\\n\\n\\n\\n7=\\n\\n\\n\\n\\n\\n\\n \\n1\\n\\n\\n\\n7，则这540千克是原来的\\n\\n\\n\\n\\n\\n\\n\\n5\\n\\n\\n\\n8-\\n\\n\\n\\n\\n\\n \\n\\n1\\n\\n\\n\\n7=\\n\\n\\n\\n\\n\\n\\n\\n27\\n\\n\\n\\n56，所以原来有540÷\\n\\n\\n\\n\\n\\n\\n\\n27\\n\\n\\n\\n56 =1120千克．\\n试题解析：540÷[5\\n8-（1-6\\n7）]=540÷[5\\n8-1\\n7]=540÷27\\n56=1120（千克）；答：为民商店原有大米1120千克．";

const ONE_SHOT_DEMO_OUTPUT_QUESTION: &str = "为民商店有一批大米，卖出总数的$\\frac{5}{8}$后，又运进540千克，这时商店里的大米数量与原来大米数量的比是6：7，为民商店原有大米多少千克？";

const ONE_SHOT_DEMO_OUTPUT_ANSWER: &str = "解：540÷[$\\frac{5}{8}$-（1-$\\frac{6}{7}$）]\n=540÷[$\\frac{5}{8}$-$\\frac{1}{7}$]\n=540÷$\\frac{27}{56}$\n=1120（千克）；\n答：为民商店原有大米1120千克．";

/// Prompt flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Instruction plus the record, for the fine-tuned rewriter.
    Sft,
    /// Instruction plus an embedded worked example, for base models.
    OneShot,
}

/// How a rendered example is meant to be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    SyntaxError,
    NotChineseMath,
}

/// One rendered rewriter example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub kind: ExampleKind,
    pub prompt: String,
    pub target: Option<String>,
    pub label: Label,
    pub seed_id: Option<String>,
    pub crawl_id: String,
}

/// Renders the rewriting prompt for one crawled record.
pub fn render_prompt(record: &Record, mode: PromptMode) -> String {
    match mode {
        PromptMode::Sft => format!(
            "{INSTR_1}\n{INSTR_2}\n{INSTR_3}\n{QUESTION_MARKER_IN}\n{}\n{ANSWER_MARKER_IN}\n{}",
            record.question, record.answer
        ),
        PromptMode::OneShot => format!(
            concat!(
                "{i1}\n{i2}\n{i3}\n\n",
                "样例\n",
                "# 输入：\n",
                "{qm}\n{dq}\n\n{am}\n{da}\n\n",
                "# 输出：\n{demo_out}\n\n",
                "请根据以上样例，输出下面这道题目的转换结果：\n\n",
                "{qm}\n{q}\n\n{am}\n{a}"
            ),
            i1 = INSTR_1,
            i2 = INSTR_2,
            i3 = INSTR_3,
            qm = QUESTION_MARKER_IN,
            am = ANSWER_MARKER_IN,
            dq = ONE_SHOT_DEMO_QUESTION,
            da = ONE_SHOT_DEMO_ANSWER,
            demo_out = one_shot_demo_output(),
            q = record.question,
            a = record.answer,
        ),
    }
}

fn one_shot_demo_output() -> String {
    format!(
        "{QUESTION_MARKER_OUT}\n{ONE_SHOT_DEMO_OUTPUT_QUESTION}\n{ANSWER_MARKER_OUT}\n{ONE_SHOT_DEMO_OUTPUT_ANSWER}"
    )
}

/// Renders the training target for a seed record: `[问题]` section first,
/// then `[答案]`, line structure preserved byte-exact.
pub fn render_target(seed: &Record) -> String {
    format!(
        "{QUESTION_MARKER_OUT}\n{}\n{ANSWER_MARKER_OUT}\n{}",
        seed.question, seed.answer
    )
}

/// Validation status of one rewriter response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputStatus {
    Ok,
    SyntaxError,
    NotChineseMath,
    /// Does not follow the output format; the record is discarded.
    Malformed,
}

/// A parsed rewriter response for one crawl record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteOutput {
    pub crawl_id: String,
    pub raw: String,
    pub parsed: Option<(String, String)>,
    pub status: OutputStatus,
}

fn count_occurrences(hay: &str, needle: &str) -> usize {
    hay.match_indices(needle).count()
}

/// Parses a raw rewriter response. Sentinels are matched as exact
/// full-string responses; otherwise the response must contain exactly one
/// `[问题]` marker followed by exactly one `[答案]` marker with nonempty
/// sections. Anything else is malformed (a status, not a failure).
pub fn extract_output(crawl_id: impl Into<String>, raw: &str) -> RewriteOutput {
    let crawl_id = crawl_id.into();
    let trimmed = raw.trim();
    if trimmed == SYNTAX_ERROR_SENTINEL {
        return RewriteOutput { crawl_id, raw: raw.to_string(), parsed: None, status: OutputStatus::SyntaxError };
    }
    if trimmed == NOT_CHINESE_MATH_SENTINEL {
        return RewriteOutput {
            crawl_id,
            raw: raw.to_string(),
            parsed: None,
            status: OutputStatus::NotChineseMath,
        };
    }

    let malformed = |raw: &str, crawl_id: String| RewriteOutput {
        crawl_id,
        raw: raw.to_string(),
        parsed: None,
        status: OutputStatus::Malformed,
    };

    if count_occurrences(raw, QUESTION_MARKER_OUT) != 1
        || count_occurrences(raw, ANSWER_MARKER_OUT) != 1
    {
        return malformed(raw, crawl_id);
    }
    let q_pos = raw.find(QUESTION_MARKER_OUT).unwrap();
    let a_pos = raw.find(ANSWER_MARKER_OUT).unwrap();
    if a_pos < q_pos {
        return malformed(raw, crawl_id);
    }
    let question = raw[q_pos + QUESTION_MARKER_OUT.len()..a_pos].trim();
    let answer = raw[a_pos + ANSWER_MARKER_OUT.len()..].trim();
    if question.is_empty() || answer.is_empty() {
        return malformed(raw, crawl_id);
    }
    RewriteOutput {
        crawl_id,
        raw: raw.to_string(),
        parsed: Some((question.to_string(), answer.to_string())),
        status: OutputStatus::Ok,
    }
}

/// Synthetic syntax-error augmentation settings. When `count` is absent,
/// 2% of the pair count is used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub count: Option<usize>,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { count: None, rng_seed: 0 }
    }
}

impl AugmentConfig {
    pub fn resolved_count(&self, pair_count: usize) -> usize {
        self.count.unwrap_or(pair_count / 50)
    }
}

/// Builds the rewriter training set: one example per pair (crawl prompt,
/// seed target), plus severely garbled records whose target is the
/// syntax-error sentinel, deterministically shuffled.
pub fn build_training_set(
    pairs: &PairSet,
    seed: &Corpus,
    crawl: &Corpus,
    aug: &AugmentConfig,
) -> Result<Vec<PromptExample>, CoreError> {
    let mut examples = Vec::with_capacity(pairs.pairs.len());
    for pair in &pairs.pairs {
        let seed_rec = seed
            .get(&pair.seed_id)
            .ok_or_else(|| CoreError::DanglingPair { side: "seed", id: pair.seed_id.clone() })?;
        let crawl_rec = crawl
            .get(&pair.crawl_id)
            .ok_or_else(|| CoreError::DanglingPair { side: "crawl", id: pair.crawl_id.clone() })?;
        examples.push(PromptExample {
            kind: ExampleKind::Train,
            prompt: render_prompt(crawl_rec, PromptMode::Sft),
            target: Some(render_target(seed_rec)),
            label: Label::Normal,
            seed_id: Some(seed_rec.id.clone()),
            crawl_id: crawl_rec.id.clone(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(aug.rng_seed);
    let aug_count = aug.resolved_count(pairs.pairs.len());
    if aug_count > 0 && !crawl.is_empty() {
        for _ in 0..aug_count {
            let base = &crawl.records()[rng.gen_range(0..crawl.len())];
            let garbled = garble_record(base, &mut rng);
            examples.push(PromptExample {
                kind: ExampleKind::Train,
                prompt: render_prompt(&garbled, PromptMode::Sft),
                target: Some(SYNTAX_ERROR_SENTINEL.to_string()),
                label: Label::SyntaxError,
                seed_id: None,
                crawl_id: base.id.clone(),
            });
        }
    }

    examples.shuffle(&mut rng);
    Ok(examples)
}

/// Serialization layout for the training-set file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLayout {
    /// `{prompt, target, label, seed_id, crawl_id}` per line.
    Flat,
    /// `{messages: [{role, content}, ...]}` per line, for chat-style
    /// fine-tuning stacks.
    Chat,
}

#[derive(Serialize)]
struct FlatLine<'a> {
    prompt: &'a str,
    target: &'a str,
    label: Label,
    seed_id: Option<&'a str>,
    crawl_id: &'a str,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatLine<'a> {
    messages: Vec<ChatMessage<'a>>,
}

/// Writes training examples as line-delimited JSON in the chosen layout.
pub fn write_training_set<W: std::io::Write>(
    examples: &[PromptExample],
    layout: TrainLayout,
    writer: &mut W,
) -> std::io::Result<()> {
    for ex in examples {
        let target = ex.target.as_deref().unwrap_or_default();
        match layout {
            TrainLayout::Flat => {
                let line = FlatLine {
                    prompt: &ex.prompt,
                    target,
                    label: ex.label,
                    seed_id: ex.seed_id.as_deref(),
                    crawl_id: &ex.crawl_id,
                };
                serde_json::to_writer(&mut *writer, &line)?;
            }
            TrainLayout::Chat => {
                let line = ChatLine {
                    messages: vec![
                        ChatMessage { role: "user", content: &ex.prompt },
                        ChatMessage { role: "assistant", content: target },
                    ],
                };
                serde_json::to_writer(&mut *writer, &line)?;
            }
        }
        writer.write_all(b"\n")?;
    }
    Ok(())
}
