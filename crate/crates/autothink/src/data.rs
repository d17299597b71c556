//! Data preparation: pass@k difficulty stratification, seeded rebalancing,
//! reward-variance alignment refinement, and mixed long/short SFT label
//! construction.
//!
//! Records flow through JSON Lines files, one object per line, UTF-8. The
//! whole pipeline is a deterministic function of its inputs and seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::task::Difficulty;
use crate::template::{parse_response, render_response, ParsedResponse, ReasoningMode, ResponsePayload};

/// One dataset item: prompt, expected answer, pass@k correctness bits, and
/// optionally a per-epoch reward history with its variance score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub prompt: String,
    pub expected: ResponsePayload,
    pub correctness_bits: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_history: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

/// One response turn with the correctness of the no-think and think models,
/// feeding SFT label construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnCandidate {
    pub turn_id: String,
    /// Bare answer text (free text or a rendered `[tool_call]` block) used
    /// as the label when the no-think model was right.
    pub ground_truth_label: String,
    pub nothink_correct: bool,
    /// Full think-mode completion from the thinking model, already in the
    /// output grammar; required when `think_correct` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub think_answer: Option<String>,
    pub think_correct: bool,
}

/// One warm-up SFT example in the output grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftTurn {
    pub turn_id: String,
    pub mode: ReasoningMode,
    pub label_text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("record {id}: expected {expected} correctness bits, got {got}")]
    BitLengthMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("record {0} has no difficulty; run stratify first")]
    MissingDifficulty(String),
    #[error("record {0} has no variance; compute reward variance first")]
    MissingVariance(String),
    #[error("reward history needs at least 2 entries, got {0}")]
    HistoryTooShort(usize),
    #[error("keep fraction must lie in (0, 1], got {0}")]
    InvalidKeepFraction(f64),
    #[error("turn {0}: think_correct is set but think_answer is missing")]
    MissingThinkAnswer(String),
    #[error("turn {turn_id}: label does not parse in {mode} mode: {reason}")]
    InvalidLabel {
        turn_id: String,
        mode: ReasoningMode,
        reason: String,
    },
    #[error("line {line}: {source}")]
    MalformedLine {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Assigns difficulty from pass@k counts: all k right is easy, none right
/// is hard, anything else is medium. Pure per record.
pub fn stratify(mut records: Vec<SampleRecord>, k: usize) -> Result<Vec<SampleRecord>, DataError> {
    for record in &mut records {
        if record.correctness_bits.len() != k {
            return Err(DataError::BitLengthMismatch {
                id: record.id.clone(),
                expected: k,
                got: record.correctness_bits.len(),
            });
        }
        let passes = record.correctness_bits.iter().filter(|b| **b).count();
        record.difficulty = Some(if passes == k {
            Difficulty::Easy
        } else if passes == 0 {
            Difficulty::Hard
        } else {
            Difficulty::Medium
        });
    }
    Ok(records)
}

/// Removes exactly ⌈n/2⌉ of the easy records and ⌈n/2⌉ of the hard ones by
/// seeded sampling without replacement; medium records and the relative
/// order of survivors are untouched.
pub fn rebalance(records: Vec<SampleRecord>, seed: u64) -> Result<Vec<SampleRecord>, DataError> {
    for record in &records {
        if record.difficulty.is_none() {
            return Err(DataError::MissingDifficulty(record.id.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut removed = vec![false; records.len()];
    for tier in [Difficulty::Easy, Difficulty::Hard] {
        let members: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.difficulty == Some(tier))
            .map(|(i, _)| i)
            .collect();
        let to_remove = members.len().div_ceil(2);
        for chosen in rand::seq::index::sample(&mut rng, members.len(), to_remove) {
            removed[members[chosen]] = true;
        }
    }
    Ok(records
        .into_iter()
        .zip(removed)
        .filter(|(_, gone)| !gone)
        .map(|(r, _)| r)
        .collect())
}

/// Sample variance of a reward history with the n−1 denominator.
pub fn reward_variance(history: &[f64]) -> Result<f64, DataError> {
    let n = history.len();
    if n < 2 {
        return Err(DataError::HistoryTooShort(n));
    }
    let mean = history.iter().sum::<f64>() / n as f64;
    Ok(history.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64)
}

/// Number of records kept by a fraction, a ceiling with a tolerance for
/// float artifacts (0.45 × 20 must keep 9, not 10).
fn kept_count(keep_fraction: f64, n: usize) -> usize {
    let target = keep_fraction * n as f64;
    let rounded = target.round();
    if (target - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        target.ceil() as usize
    }
}

/// Keeps the best-aligned (lowest-variance) fraction of the records:
/// ascending sort by variance with id as tie-break, then the leading
/// ⌈keep_fraction·n⌉ in sorted order.
pub fn variance_refine(
    records: Vec<SampleRecord>,
    keep_fraction: f64,
) -> Result<Vec<SampleRecord>, DataError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(DataError::InvalidKeepFraction(keep_fraction));
    }
    for record in &records {
        if record.variance.is_none() {
            return Err(DataError::MissingVariance(record.id.clone()));
        }
    }
    let keep = kept_count(keep_fraction, records.len());
    let mut sorted = records;
    sorted.sort_by(|a, b| {
        let va = a.variance.expect("checked above");
        let vb = b.variance.expect("checked above");
        va.partial_cmp(&vb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    sorted.truncate(keep);
    Ok(sorted)
}

/// Builds the mixed long/short SFT labels: the ground-truth label in the
/// no-think template when the no-think model was right, otherwise the
/// thinking model's completion when that was right, otherwise the turn is
/// dropped. Returns the turns plus the thinking rate among emitted turns.
pub fn build_sft_mix(candidates: &[TurnCandidate]) -> Result<(Vec<SftTurn>, f64), DataError> {
    let mut turns = Vec::new();
    let mut thinking = 0usize;
    for candidate in candidates {
        let (mode, label_text) = if candidate.nothink_correct {
            let label = render_response(&ParsedResponse::no_think(ResponsePayload::user_text(
                candidate.ground_truth_label.clone(),
            )));
            (ReasoningMode::NoThink, label)
        } else if candidate.think_correct {
            let answer = candidate
                .think_answer
                .clone()
                .ok_or_else(|| DataError::MissingThinkAnswer(candidate.turn_id.clone()))?;
            thinking += 1;
            (ReasoningMode::Think, answer)
        } else {
            continue; // both models wrong: no trustworthy label
        };
        match parse_response(&label_text) {
            Ok(parsed) if parsed.mode == mode => {}
            Ok(parsed) => {
                return Err(DataError::InvalidLabel {
                    turn_id: candidate.turn_id.clone(),
                    mode,
                    reason: format!("parses as {} mode", parsed.mode),
                })
            }
            Err(err) => {
                return Err(DataError::InvalidLabel {
                    turn_id: candidate.turn_id.clone(),
                    mode,
                    reason: err.to_string(),
                })
            }
        }
        turns.push(SftTurn {
            turn_id: candidate.turn_id.clone(),
            mode,
            label_text,
        });
    }
    let rate = if turns.is_empty() {
        0.0
    } else {
        thinking as f64 / turns.len() as f64
    };
    Ok((turns, rate))
}

/// Reads sample records from a JSONL file, reporting malformed lines by
/// number.
pub fn read_records(path: &Path) -> Result<Vec<SampleRecord>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|source| DataError::MalformedLine { line: i + 1, source })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes records as JSONL, one object per line.
pub fn write_records(records: &[SampleRecord], path: &Path) -> Result<(), DataError> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record).expect("record serializes");
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
