//! Run statistics: pair rates, per-stage counters, and the consistency
//! checks between them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matcher::{MatchReason, MatchStats, PairSet};

/// Pair rate as a percentage of the seed corpus: 100 * pairs / seed_total.
pub fn pair_rate_percent(pairs: usize, seed_total: usize) -> f64 {
    if seed_total == 0 {
        0.0
    } else {
        100.0 * pairs as f64 / seed_total as f64
    }
}

/// Summary written next to the pairs file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: usize,
    pub seed_total: usize,
    pub crawl_total: usize,
    /// pairs / seed_total, as a fraction.
    pub pair_rate: f64,
    pub pair_rate_percent: f64,
    pub reason_counts: BTreeMap<String, usize>,
    pub short_answer_seeds_excluded: usize,
    pub dedup_dropped: usize,
}

pub fn match_report(set: &PairSet, stats: &MatchStats) -> MatchReport {
    let mut reason_counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in &set.pairs {
        let key = match p.reason {
            MatchReason::QuestionExact => "question_exact",
            MatchReason::AnswerSubsequence => "answer_subsequence",
        };
        *reason_counts.entry(key.to_string()).or_insert(0) += 1;
    }
    MatchReport {
        pairs: set.pairs.len(),
        seed_total: set.seed_total,
        crawl_total: set.crawl_total,
        pair_rate: if set.seed_total == 0 { 0.0 } else { set.pairs.len() as f64 / set.seed_total as f64 },
        pair_rate_percent: pair_rate_percent(set.pairs.len(), set.seed_total),
        reason_counts,
        short_answer_seeds_excluded: stats.short_answer_seeds,
        dedup_dropped: stats.dedup_dropped,
    }
}

/// Whole-pipeline report. Timings are the only timestamp-like values in any
/// artifact, so seeded runs stay byte-identical everywhere else.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub seed_ingested: usize,
    pub seed_skipped: usize,
    pub crawl_ingested: usize,
    pub crawl_skipped: usize,
    pub pairs: usize,
    pub pair_rate_percent: f64,
    pub training_examples: usize,
    pub rewritten: usize,
    pub discarded_by_status: BTreeMap<String, usize>,
    pub cleaned: usize,
    pub timings_secs: BTreeMap<String, f64>,
    pub config_fingerprint: String,
}

impl RunReport {
    /// Internal consistency: cleaned <= rewritten <= crawl count.
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.cleaned > self.rewritten {
            return Err(CoreError::InvalidConfig(format!(
                "report inconsistent: cleaned {} > rewritten {}",
                self.cleaned, self.rewritten
            )));
        }
        if self.rewritten > self.crawl_ingested {
            return Err(CoreError::InvalidConfig(format!(
                "report inconsistent: rewritten {} > crawl count {}",
                self.rewritten, self.crawl_ingested
            )));
        }
        Ok(())
    }
}
