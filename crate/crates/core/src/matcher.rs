//! Pairs seed records with crawled records: normalized questions must be
//! identical, or the normalized seed answer must be a subsequence of the
//! normalized crawl answer.
//!
//! Candidate generation has to stay sound at 84k x 574k scale: the filters
//! may only ever cut work, never drop a true pair. Each seed answer is
//! posted under its corpus-rarest character, so any crawl answer containing
//! a seed answer as a subsequence necessarily hits that posting. A
//! character-frequency signature then rejects most false candidates before
//! the exact two-pointer verification runs.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, Corpus, NormalizedText};

/// Why a pair was emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchReason {
    QuestionExact,
    AnswerSubsequence,
}

/// A (seed, crawl) pair plus the evidence needed to audit and dedup it.
/// The norm lengths are normalized question + answer character counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub seed_id: String,
    pub crawl_id: String,
    pub reason: MatchReason,
    pub seed_norm_len: usize,
    pub crawl_norm_len: usize,
}

/// All pairs found for one (seed, crawl) corpus combination.
#[derive(Debug, Clone)]
pub struct PairSet {
    pub pairs: Vec<MatchPair>,
    pub seed_total: usize,
    pub crawl_total: usize,
}

/// How the seed answer is required to appear inside the crawl answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMatchMode {
    /// In-order with gaps allowed. OCR insertions (line breaks inside
    /// fractions) make the clean answer a gapped subsequence of the noisy
    /// one, so this is the default.
    Subsequence,
    /// Contiguous occurrence, for comparison runs.
    Substring,
}

/// Pair dedup policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupMode {
    /// Emit every verified pair.
    Off,
    /// Keep one pair per crawl record: the seed with minimal
    /// |seed_norm_len - crawl_norm_len|, ties broken by smaller seed id.
    OnePerCrawl,
    /// One-to-one matching: one pair per crawl record first, then one pair
    /// per seed record by the same closest-length rule. Guarantees
    /// |pairs| <= min(seed_total, crawl_total).
    OnePerSeed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchConfig {
    pub answer_match_mode: AnswerMatchMode,
    /// Seed answers shorter than this (normalized characters) are excluded
    /// from answer matching; question matching still applies.
    pub min_answer_len: usize,
    pub dedup: DedupMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            answer_match_mode: AnswerMatchMode::Subsequence,
            min_answer_len: 8,
            dedup: DedupMode::OnePerCrawl,
        }
    }
}

/// Counters surfaced in the match report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MatchStats {
    /// Seeds whose normalized answer fell below `min_answer_len`.
    pub short_answer_seeds: usize,
    /// Pairs removed by the dedup policy.
    pub dedup_dropped: usize,
}

/// True iff `needle`'s characters appear in `haystack` in order, gaps
/// allowed. Linear two-pointer scan.
pub fn is_subsequence(needle: &NormalizedText, haystack: &NormalizedText) -> bool {
    subsequence_of(needle.as_str(), haystack.as_str())
}

pub(crate) fn subsequence_of(needle: &str, haystack: &str) -> bool {
    let mut wanted = needle.chars();
    let mut cur = match wanted.next() {
        None => return true,
        Some(c) => c,
    };
    for h in haystack.chars() {
        if h == cur {
            match wanted.next() {
                Some(next) => cur = next,
                None => return true,
            }
        }
    }
    false
}

/// Compact per-answer character-frequency signature: a 64-bit bloom of the
/// character set for O(1) rejection, plus exact per-character counts.
#[derive(Debug, Clone)]
struct AnswerSignature {
    bloom: u64,
    counts: Vec<(char, u32)>,
}

fn char_bit(c: char) -> u64 {
    // Cheap char hash; only used to pick a bloom bit.
    let h = (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    1u64 << (h >> 58)
}

impl AnswerSignature {
    fn of(text: &str) -> Self {
        let mut map: HashMap<char, u32> = HashMap::new();
        let mut bloom = 0u64;
        for c in text.chars() {
            *map.entry(c).or_insert(0) += 1;
            bloom |= char_bit(c);
        }
        let mut counts: Vec<(char, u32)> = map.into_iter().collect();
        counts.sort_unstable();
        AnswerSignature { bloom, counts }
    }

    /// Necessary condition for the subsequence/substring relation: every
    /// character of `self` occurs at least as often in the haystack.
    fn subset_of(&self, hay: &AnswerSignature, hay_counts: &HashMap<char, u32>) -> bool {
        if self.bloom & !hay.bloom != 0 {
            return false;
        }
        self.counts
            .iter()
            .all(|(c, n)| hay_counts.get(c).copied().unwrap_or(0) >= *n)
    }
}

/// Immutable index over a seed corpus, shared read-only by match workers.
pub struct MatchIndex {
    /// Normalized question text -> seed positions.
    question_map: HashMap<String, Vec<u32>>,
    /// Per-seed signature of the normalized answer.
    answer_signatures: Vec<AnswerSignature>,
    /// Candidate postings: each seed appears once, keyed by the rarest
    /// character (by seed-corpus frequency) of its normalized answer.
    rare_char_postings: HashMap<char, Vec<u32>>,
    /// Seeds whose normalized answer is empty; candidates only when the
    /// minimum answer length is zero.
    empty_answer_seeds: Vec<u32>,
    /// Normalized answers, indexed by seed position.
    answer_norms: Vec<String>,
    /// Normalized (question + answer) character counts per seed.
    norm_lens: Vec<usize>,
    answer_norm_lens: Vec<usize>,
    seed_ids: Vec<String>,
}

impl MatchIndex {
    pub fn seed_count(&self) -> usize {
        self.seed_ids.len()
    }

    pub fn question_key_count(&self) -> usize {
        self.question_map.len()
    }

    pub fn seeds_for_question(&self, normalized_question: &str) -> &[u32] {
        self.question_map
            .get(normalized_question)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Builds the question map, answer signatures, and rare-character postings
/// for a seed corpus. Single-threaded; the result is immutable.
pub fn build_index(seed: &Corpus) -> MatchIndex {
    let n = seed.len();
    let mut question_map: HashMap<String, Vec<u32>> = HashMap::with_capacity(n);
    let mut answer_signatures = Vec::with_capacity(n);
    let mut answer_norms = Vec::with_capacity(n);
    let mut norm_lens = Vec::with_capacity(n);
    let mut answer_norm_lens = Vec::with_capacity(n);
    let mut seed_ids = Vec::with_capacity(n);

    // Corpus-wide character frequencies over normalized answers, so each
    // seed can be posted under its rarest character.
    let mut corpus_freq: HashMap<char, u64> = HashMap::new();

    for (idx, rec) in seed.iter().enumerate() {
        let nq = normalize(&rec.question);
        let na = normalize(&rec.answer);
        question_map.entry(nq.as_str().to_string()).or_default().push(idx as u32);
        for c in na.as_str().chars() {
            *corpus_freq.entry(c).or_insert(0) += 1;
        }
        answer_signatures.push(AnswerSignature::of(na.as_str()));
        norm_lens.push(nq.len() + na.len());
        answer_norm_lens.push(na.len());
        answer_norms.push(na.as_str().to_string());
        seed_ids.push(rec.id.clone());
    }

    let mut rare_char_postings: HashMap<char, Vec<u32>> = HashMap::new();
    let mut empty_answer_seeds = Vec::new();
    for (idx, norm) in answer_norms.iter().enumerate() {
        let rarest = norm
            .chars()
            .min_by_key(|c| (corpus_freq.get(c).copied().unwrap_or(0), *c as u32));
        match rarest {
            Some(c) => rare_char_postings.entry(c).or_default().push(idx as u32),
            None => empty_answer_seeds.push(idx as u32),
        }
    }

    MatchIndex {
        question_map,
        answer_signatures,
        rare_char_postings,
        empty_answer_seeds,
        answer_norms,
        norm_lens,
        answer_norm_lens,
        seed_ids,
    }
}

/// Runs the matching predicate over every crawl record against the seed
/// corpus. The crawl corpus is partitioned across rayon workers; each worker
/// only reads the index, and results are merged in a deterministic order
/// (crawl id, then seed id) before dedup.
pub fn match_pairs(seed: &Corpus, crawl: &Corpus, config: &MatchConfig) -> (PairSet, MatchStats) {
    let index = build_index(seed);
    match_pairs_indexed(&index, seed.len(), crawl, config)
}

pub fn match_pairs_indexed(
    index: &MatchIndex,
    seed_total: usize,
    crawl: &Corpus,
    config: &MatchConfig,
) -> (PairSet, MatchStats) {
    let mut stats = MatchStats {
        short_answer_seeds: index
            .answer_norm_lens
            .iter()
            .filter(|&&l| l < config.min_answer_len)
            .count(),
        dedup_dropped: 0,
    };

    let mut pairs: Vec<MatchPair> = crawl
        .records()
        .par_iter()
        .map(|crawl_rec| {
            let nq = normalize(&crawl_rec.question);
            let na = normalize(&crawl_rec.answer);
            let crawl_norm_len = nq.len() + na.len();

            let mut seed_hits: Vec<(u32, MatchReason)> = Vec::new();
            for &i in index.seeds_for_question(nq.as_str()) {
                seed_hits.push((i, MatchReason::QuestionExact));
            }

            // Candidates for the answer route: union of rare-character
            // postings over the haystack's characters.
            let haystack = na.as_str();
            let hay_sig = AnswerSignature::of(haystack);
            let hay_counts: HashMap<char, u32> = hay_sig.counts.iter().copied().collect();

            let mut candidates: Vec<u32> = Vec::new();
            let mut seen_chars: Vec<char> = Vec::new();
            for c in haystack.chars() {
                if seen_chars.contains(&c) {
                    continue;
                }
                seen_chars.push(c);
                if let Some(posting) = index.rare_char_postings.get(&c) {
                    candidates.extend_from_slice(posting);
                }
            }
            if config.min_answer_len == 0 {
                candidates.extend_from_slice(&index.empty_answer_seeds);
            }
            candidates.sort_unstable();
            candidates.dedup();

            for i in candidates {
                let iu = i as usize;
                if index.answer_norm_lens[iu] < config.min_answer_len {
                    continue;
                }
                if seed_hits.iter().any(|(j, _)| *j == i) {
                    continue; // already paired via the question route
                }
                if !index.answer_signatures[iu].subset_of(&hay_sig, &hay_counts) {
                    continue;
                }
                let needle = index.answer_norms[iu].as_str();
                let verified = match config.answer_match_mode {
                    AnswerMatchMode::Subsequence => subsequence_of(needle, haystack),
                    AnswerMatchMode::Substring => haystack.contains(needle),
                };
                if verified {
                    seed_hits.push((i, MatchReason::AnswerSubsequence));
                }
            }

            seed_hits
                .into_iter()
                .map(|(i, reason)| MatchPair {
                    seed_id: index.seed_ids[i as usize].clone(),
                    crawl_id: crawl_rec.id.clone(),
                    reason,
                    seed_norm_len: index.norm_lens[i as usize],
                    crawl_norm_len,
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();

    pairs.sort_by(|a, b| (&a.crawl_id, &a.seed_id).cmp(&(&b.crawl_id, &b.seed_id)));

    let before = pairs.len();
    let pairs = dedup_pairs(pairs, config.dedup);
    stats.dedup_dropped = before - pairs.len();

    (
        PairSet { pairs, seed_total, crawl_total: crawl.len() },
        stats,
    )
}

/// Closeness score for dedup: absolute normalized-length difference.
fn pair_score(p: &MatchPair) -> usize {
    p.seed_norm_len.abs_diff(p.crawl_norm_len)
}

fn dedup_pairs(pairs: Vec<MatchPair>, mode: DedupMode) -> Vec<MatchPair> {
    match mode {
        DedupMode::Off => pairs,
        DedupMode::OnePerCrawl => best_per_key(pairs, |p| p.crawl_id.clone(), |p| p.seed_id.clone()),
        DedupMode::OnePerSeed => {
            let once_per_crawl =
                best_per_key(pairs, |p| p.crawl_id.clone(), |p| p.seed_id.clone());
            let mut out =
                best_per_key(once_per_crawl, |p| p.seed_id.clone(), |p| p.crawl_id.clone());
            out.sort_by(|a, b| (&a.crawl_id, &a.seed_id).cmp(&(&b.crawl_id, &b.seed_id)));
            out
        }
    }
}

/// Keeps, per key, the pair with minimal length difference; ties broken by
/// the lexicographically smaller opposite-side id. Preserves input order of
/// the surviving pairs.
fn best_per_key(
    pairs: Vec<MatchPair>,
    key: impl Fn(&MatchPair) -> String,
    tiebreak: impl Fn(&MatchPair) -> String,
) -> Vec<MatchPair> {
    let mut best: HashMap<String, usize> = HashMap::new();
    for (idx, p) in pairs.iter().enumerate() {
        let k = key(p);
        match best.get(&k) {
            None => {
                best.insert(k, idx);
            }
            Some(&cur) => {
                let cur_rank = (pair_score(&pairs[cur]), tiebreak(&pairs[cur]));
                let new_rank = (pair_score(p), tiebreak(p));
                if new_rank < cur_rank {
                    best.insert(k, idx);
                }
            }
        }
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| pairs[i].clone()).collect()
}
