//! Synthetic tool-use tasks with controllable difficulty.
//!
//! Every task hides its true answer in a latent symbol that think mode
//! reveals as a hint. What varies by difficulty is whether the answer is
//! also recoverable from the observable part of the prompt:
//!
//! - `Easy`: the answer equals the observable symbol — readable directly.
//! - `Medium`: the answer is a per-task random permutation of the
//!   observable, so no shared observable-only head can fit it, while the
//!   hint still resolves it.
//! - `Hard`: the answer is an independent uniform latent — unrecoverable
//!   without the hint, with a closed-form chance baseline of 1/K.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::template::ToolCall;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn index(self) -> usize {
        match self {
            Difficulty::Easy => 0,
            Difficulty::Medium => 1,
            Difficulty::Hard => 2,
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        };
        f.write_str(s)
    }
}

/// Proportions over the three difficulty tiers; must sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DifficultyMix {
    pub easy: f64,
    pub medium: f64,
    pub hard: f64,
}

impl Default for DifficultyMix {
    fn default() -> Self {
        Self {
            easy: 0.47,
            medium: 0.21,
            hard: 0.32,
        }
    }
}

impl DifficultyMix {
    pub fn only(difficulty: Difficulty) -> Self {
        let mut mix = Self {
            easy: 0.0,
            medium: 0.0,
            hard: 0.0,
        };
        match difficulty {
            Difficulty::Easy => mix.easy = 1.0,
            Difficulty::Medium => mix.medium = 1.0,
            Difficulty::Hard => mix.hard = 1.0,
        }
        mix
    }

    pub fn proportions(&self) -> [f64; 3] {
        [self.easy, self.medium, self.hard]
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let p = self.proportions();
        if p.iter().any(|x| *x < 0.0) {
            return Err(EnvError::InvalidConfig(
                "difficulty proportions must be non-negative".to_string(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EnvError::InvalidConfig(format!(
                "difficulty proportions must sum to 1, got {total}"
            )));
        }
        Ok(())
    }
}

/// One synthetic tool-selection episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub task_id: u64,
    pub difficulty: Difficulty,
    /// Symbol readable from the prompt.
    pub observable: usize,
    /// Hidden symbol revealed as the hint in think mode; always equals the
    /// answer (the hint tells the truth).
    pub latent: usize,
    /// The K candidate tool names.
    pub catalog: Vec<String>,
    /// Index of the correct tool / argument symbol.
    pub answer: usize,
    pub ground_truth: ToolCall,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training aborted at step {step}: {source}")]
    Training {
        step: u64,
        source: crate::grpo::GrpoError,
    },
}

pub(crate) fn tool_catalog(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("tool_{i}")).collect()
}

fn ground_truth_call(catalog: &[String], answer: usize) -> ToolCall {
    let mut arguments = serde_json::Map::new();
    arguments.insert("arg".to_string(), serde_json::Value::from(answer as u64));
    ToolCall::new(catalog[answer].clone(), arguments)
}

/// Builds one task of the given difficulty, consuming randomness from `rng`.
pub fn sample_task(
    rng: &mut ChaCha8Rng,
    task_id: u64,
    difficulty: Difficulty,
    k: usize,
) -> SyntheticTask {
    let catalog = tool_catalog(k);
    let observable = rng.gen_range(0..k);
    let answer = match difficulty {
        Difficulty::Easy => observable,
        Difficulty::Medium => {
            let mut permutation: Vec<usize> = (0..k).collect();
            permutation.shuffle(rng);
            permutation[observable]
        }
        Difficulty::Hard => rng.gen_range(0..k),
    };
    let ground_truth = ground_truth_call(&catalog, answer);
    SyntheticTask {
        task_id,
        difficulty,
        observable,
        latent: answer,
        catalog,
        answer,
        ground_truth,
    }
}

/// Integer difficulty counts by largest-remainder apportionment, so each
/// count is within one task of `proportion × count`.
fn apportion(count: usize, mix: &DifficultyMix) -> [usize; 3] {
    let targets = mix.proportions().map(|p| p * count as f64);
    let mut counts = targets.map(|t| t.floor() as usize);
    let mut remainders: Vec<(usize, f64)> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t - t.floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut assigned: usize = counts.iter().sum();
    for (idx, _) in remainders {
        if assigned == count {
            break;
        }
        counts[idx] += 1;
        assigned += 1;
    }
    counts
}

/// Deterministic task list with the requested difficulty mix (each tier
/// within ±1 of its exact proportion) in seeded shuffled order.
pub fn generate_tasks(
    seed: u64,
    count: usize,
    mix: &DifficultyMix,
    k: usize,
) -> Result<Vec<SyntheticTask>, EnvError> {
    if k < 2 {
        return Err(EnvError::InvalidConfig(format!(
            "need at least 2 symbols, got {k}"
        )));
    }
    mix.validate()?;
    let counts = apportion(count, mix);
    let mut difficulties = Vec::with_capacity(count);
    for (difficulty, n) in Difficulty::ALL.into_iter().zip(counts) {
        difficulties.extend(std::iter::repeat(difficulty).take(n));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    difficulties.shuffle(&mut rng);
    Ok(difficulties
        .into_iter()
        .enumerate()
        .map(|(i, difficulty)| sample_task(&mut rng, i as u64, difficulty, k))
        .collect())
}
