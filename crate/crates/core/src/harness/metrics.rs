//! Run metrics: per-episode records, retention series, and the JSONL log.
//!
//! Everything here is deterministic in (config, seed): no wall-clock, no
//! host-dependent ordering. Two identical runs produce byte-identical logs.

use serde::{Deserialize, Serialize};

use crate::refactorer::RefactorEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: u64,
    pub task: String,
    /// "train" or "reeval".
    pub kind: String,
    pub world_seed: u64,
    pub root: Option<String>,
    pub delta: bool,
    /// Non-alias node count after the episode (and any refactor).
    pub library_size: usize,
    /// Hash of the network serialization after the episode; replay anchors.
    pub network_hash: u64,
    /// Skills whose pending edits the maturity gate applied / skipped.
    pub gate_applied: Vec<String>,
    pub gate_skipped: Vec<String>,
    pub plan_len: usize,
    pub failure: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub name: String,
    pub attempts: u32,
    pub mastered: bool,
    /// Attempts consumed up to and including the mastering one.
    pub iterations_to_master: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: Vec<EpisodeRecord>,
    pub tasks: Vec<TaskOutcome>,
    /// Cumulative skill-retention rate, appended after each re-eval round.
    pub srr_series: Vec<f64>,
    pub srr_successes: u64,
    pub srr_total: u64,
    pub refactors: Vec<RefactorEvent>,
    pub warnings: Vec<String>,
    pub final_library_size: usize,
    pub final_network_hash: u64,
}

impl Metrics {
    pub fn library_sizes(&self) -> Vec<usize> {
        self.episodes.iter().map(|e| e.library_size).collect()
    }

    pub fn mastered_count(&self) -> usize {
        self.tasks.iter().filter(|t| t.mastered).count()
    }

    pub fn final_srr(&self) -> Option<f64> {
        self.srr_series.last().copied()
    }
}

/// The cumulative retention series over re-evaluation rounds: after each
/// round, total successes so far over total re-evaluations so far.
pub fn compute_srr(rounds: &[Vec<bool>]) -> Vec<f64> {
    let mut series = Vec::new();
    let mut wins = 0u64;
    let mut total = 0u64;
    for round in rounds {
        if round.is_empty() {
            continue;
        }
        wins += round.iter().filter(|&&b| b).count() as u64;
        total += round.len() as u64;
        series.push(wins as f64 / total as f64);
    }
    series
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Config { config: serde_json::Value },
    Episode { record: EpisodeRecord },
    Refactor { event: RefactorEvent },
    Srr { after_task: String, srr: f64 },
    Summary { metrics: Metrics },
}

pub fn render_log(lines: &[LogLine]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("log line serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<Vec<LogLine>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Flat per-episode CSV for external plotting.
pub fn render_csv(metrics: &Metrics) -> String {
    let mut out = String::from("episode,task,kind,delta,library_size,plan_len\n");
    for e in &metrics.episodes {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.index,
            e.task,
            e.kind,
            u8::from(e.delta),
            e.library_size,
            e.plan_len
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srr_is_the_cumulative_re_evaluation_rate() {
        // four re-evaluations, three successes
        assert_eq!(compute_srr(&[vec![true, true, false, true]]), vec![0.75]);
        // all successes pin the series at one
        assert_eq!(
            compute_srr(&[vec![true], vec![true, true]]),
            vec![1.0, 1.0]
        );
        // the scripted stream 1,1,0,1,1,1 grouped into two rounds:
        // after the first round 2/2, after the second 5/6
        let series = compute_srr(&[vec![true, true], vec![false, true, true, true]]);
        assert_eq!(series[0], 1.0);
        assert!((series[1] - 5.0 / 6.0).abs() < 1e-12);
    }
}
