//! Tables derived from a trial ledger.

use std::collections::BTreeMap;
use std::path::Path;

use brainformer_core::search::{rank, StopReason, TrialRecord};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub trial_id: u64,
    pub round: usize,
    pub parent_id: Option<u64>,
    pub stop_reason: StopReason,
    pub reward: f64,
    pub step_time: f64,
    pub steps_completed: u64,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub trial_id: u64,
    pub round: usize,
    pub reward: f64,
    /// Best reward among completed trials up to and including this one.
    pub best_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub n_records: usize,
    pub skipped_lines: usize,
    pub stop_reasons: BTreeMap<String, usize>,
    pub best_trial: Option<u64>,
    pub best_reward: Option<f64>,
    /// Trial ids from the root ancestor down to the best trial.
    pub lineage: Vec<u64>,
}

pub fn summary_rows(records: &[TrialRecord]) -> Vec<SummaryRow> {
    records
        .iter()
        .map(|r| SummaryRow {
            trial_id: r.trial_id,
            round: r.round,
            parent_id: r.parent_id,
            stop_reason: r.outcome.stop_reason,
            reward: r.outcome.reward,
            step_time: r.outcome.step_time,
            steps_completed: r.outcome.steps_completed,
            final_loss: r.outcome.final_valid_loss,
        })
        .collect()
}

pub fn reward_over_time(records: &[TrialRecord]) -> Vec<RewardRow> {
    let mut best: Option<f64> = None;
    records
        .iter()
        .map(|r| {
            if r.outcome.completed() {
                best = Some(best.map_or(r.outcome.reward, |b| b.max(r.outcome.reward)));
            }
            RewardRow {
                trial_id: r.trial_id,
                round: r.round,
                reward: r.outcome.reward,
                best_reward: best,
            }
        })
        .collect()
}

fn reason_name(r: StopReason) -> String {
    serde_json::to_value(r)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn stop_reason_tally(records: &[TrialRecord]) -> BTreeMap<String, usize> {
    let mut tally = BTreeMap::new();
    for r in records {
        *tally.entry(reason_name(r.outcome.stop_reason)).or_insert(0) += 1;
    }
    tally
}

/// Parent-pointer walk from `trial_id` to its root, returned root first.
/// Stops at a missing parent or a cycle.
pub fn lineage(records: &[TrialRecord], trial_id: u64) -> Vec<u64> {
    let by_id: BTreeMap<u64, &TrialRecord> = records.iter().map(|r| (r.trial_id, r)).collect();
    let mut chain = Vec::new();
    let mut cur = Some(trial_id);
    while let Some(id) = cur {
        if chain.contains(&id) || !by_id.contains_key(&id) {
            break;
        }
        chain.push(id);
        cur = by_id[&id].parent_id;
    }
    chain.reverse();
    chain
}

pub fn build_report(records: &[TrialRecord], skipped_lines: usize) -> LedgerReport {
    let best = records
        .iter()
        .filter(|r| r.outcome.completed())
        .min_by(|a, b| rank(a, b));
    LedgerReport {
        n_records: records.len(),
        skipped_lines,
        stop_reasons: stop_reason_tally(records),
        best_trial: best.map(|r| r.trial_id),
        best_reward: best.map(|r| r.outcome.reward),
        lineage: best
            .map(|r| lineage(records, r.trial_id))
            .unwrap_or_default(),
    }
}

/// Writes `rows` with a header, even when `rows` is empty.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> AppResult<()> {
    let csv_err = |e: csv::Error| AppError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "trial_id",
    "round",
    "parent_id",
    "stop_reason",
    "reward",
    "step_time",
    "steps_completed",
    "final_loss",
];

pub const REWARD_HEADER: [&str; 4] = ["trial_id", "round", "reward", "best_reward"];
