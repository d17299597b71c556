//! Rollout sampling, controllable-mode evaluation, and the closed-form
//! expected-reward oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::policy::{argmax, policy_step_stats, step_distribution, PolicyParams, StepContext};
use crate::env::task::{Difficulty, SyntheticTask};
use crate::grpo::TrajectoryStep;
use crate::reward::{composite_reward, GroundTruth, RewardBreakdown, RewardConfig};
use crate::template::{
    render_response, ParsedResponse, ReasoningMode, ResponsePayload, ToolCall,
};

/// Length multiplier of the think-mode reasoning placeholder relative to
/// the full no-think rendering of the same payload.
pub const THINK_LENGTH_FACTOR: usize = 5;

/// Purpose tag for counter-based random streams.
#[derive(Debug, Clone, Copy)]
pub enum StreamPurpose {
    TaskSampling = 1,
    Rollout = 2,
}

/// An independent random stream keyed by (seed, purpose, step, prompt,
/// rollout). Streams never overlap, so rollouts may be generated in any
/// order or in parallel without changing a single sampled number.
///
/// Packing limits: step < 2^32, prompt < 2^12, rollout < 2^12.
pub fn seeded_stream(
    seed: u64,
    purpose: StreamPurpose,
    step: u64,
    prompt_index: u64,
    rollout_index: u64,
) -> ChaCha8Rng {
    debug_assert!(step < (1 << 32) && prompt_index < (1 << 12) && rollout_index < (1 << 12));
    let stream = ((purpose as u64) << 56) | (step << 24) | (prompt_index << 12) | rollout_index;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One sampled trajectory: the emitted text, its two decision steps, the
/// contexts/actions needed to recompute statistics, and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub task_id: u64,
    pub mode: ReasoningMode,
    pub emitted_text: String,
    pub steps: Vec<TrajectoryStep>,
    /// Debug side-channel: per-step decision context and sampled action,
    /// sufficient to recompute every step statistic.
    pub decisions: Vec<(StepContext, usize)>,
    pub reward: RewardBreakdown,
}

impl Rollout {
    pub fn token_length(&self) -> usize {
        self.emitted_text.split_whitespace().count()
    }
}

fn sample_from(stats_probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in stats_probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    stats_probs.len() - 1
}

fn answer_payload(task: &SyntheticTask, answer: usize) -> ResponsePayload {
    let mut arguments = serde_json::Map::new();
    arguments.insert("arg".to_string(), serde_json::Value::from(answer as u64));
    ResponsePayload::tool_calls(vec![ToolCall::new(task.catalog[answer].clone(), arguments)])
}

/// Fixed filler words cycled into the reasoning placeholder.
const REASONING_WORDS: [&str; 6] = ["inspect", "the", "candidate", "tools", "then", "decide"];

/// Deterministic placeholder reasoning text whose whitespace-token count is
/// `THINK_LENGTH_FACTOR ×` the full no-think rendering of the same payload,
/// which makes think responses measurably longer by construction.
fn reasoning_placeholder(payload: &ResponsePayload) -> String {
    let no_think_tokens = render_response(&ParsedResponse::no_think(payload.clone()))
        .split_whitespace()
        .count();
    let words = THINK_LENGTH_FACTOR * no_think_tokens;
    (0..words)
        .map(|i| REASONING_WORDS[i % REASONING_WORDS.len()])
        .collect::<Vec<_>>()
        .join(" ")
}

fn trajectory_step(
    params: &PolicyParams,
    ctx: &StepContext,
    action: usize,
    mode_flag: u8,
) -> TrajectoryStep {
    let (stats, _) = policy_step_stats(params, ctx, action);
    TrajectoryStep {
        logprob_new: stats.logprobs[action],
        logprob_old: stats.logprobs[action],
        entropy: stats.entropy,
        mode_flag,
    }
}

/// Samples one trajectory: mode from the mode head, then the answer from the
/// mode's head (think mode reveals the task's latent hint first). The
/// emitted text is rendered through the grammar, so it parses by
/// construction, and is scored with [`composite_reward`].
pub fn sample_rollout(
    params: &PolicyParams,
    task: &SyntheticTask,
    rng: &mut ChaCha8Rng,
    reward_cfg: &RewardConfig,
) -> Rollout {
    let mode_ctx = StepContext::Mode {
        difficulty: task.difficulty,
    };
    let mode_stats = step_distribution(params, &mode_ctx);
    let mode_action = sample_from(&mode_stats.probs, rng);
    let mode = if mode_action == 0 {
        ReasoningMode::Think
    } else {
        ReasoningMode::NoThink
    };
    let mode_flag = mode.mode_flag();

    let answer_ctx = match mode {
        ReasoningMode::Think => StepContext::AnswerThink {
            observable: task.observable,
            hint: task.latent,
        },
        ReasoningMode::NoThink => StepContext::AnswerNoThink {
            observable: task.observable,
        },
    };
    let answer_stats = step_distribution(params, &answer_ctx);
    let answer = sample_from(&answer_stats.probs, rng);

    let payload = answer_payload(task, answer);
    let parsed = match mode {
        ReasoningMode::Think => ParsedResponse::think(reasoning_placeholder(&payload), payload),
        ReasoningMode::NoThink => ParsedResponse::no_think(payload),
    };
    let emitted_text = render_response(&parsed);
    let gt = GroundTruth::tool_calls(vec![task.ground_truth.clone()]);
    let reward = composite_reward(&emitted_text, &gt, reward_cfg);

    Rollout {
        task_id: task.task_id,
        mode,
        emitted_text,
        steps: vec![
            trajectory_step(params, &mode_ctx, mode_action, mode_flag),
            trajectory_step(params, &answer_ctx, answer, mode_flag),
        ],
        decisions: vec![(mode_ctx, mode_action), (answer_ctx, answer)],
        reward,
    }
}

/// Greedy evaluation summary over a task set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub mean_token_length: f64,
    pub thinking_rate: f64,
}

/// Greedy (argmax) decoding over `tasks`. When `mode` is given the mode
/// choice is pinned — the forced-prefix semantics of controllable
/// inference — and only the answer head decides. Empty task lists report
/// zeros.
pub fn forced_mode_eval(
    params: &PolicyParams,
    tasks: &[SyntheticTask],
    mode: Option<ReasoningMode>,
) -> EvalSummary {
    if tasks.is_empty() {
        return EvalSummary {
            accuracy: 0.0,
            mean_token_length: 0.0,
            thinking_rate: 0.0,
        };
    }
    let mut correct = 0usize;
    let mut tokens = 0usize;
    let mut thinking = 0usize;
    for task in tasks {
        let chosen_mode = mode.unwrap_or_else(|| {
            let stats = step_distribution(
                params,
                &StepContext::Mode {
                    difficulty: task.difficulty,
                },
            );
            if argmax(&stats.probs) == 0 {
                ReasoningMode::Think
            } else {
                ReasoningMode::NoThink
            }
        });
        let answer_ctx = match chosen_mode {
            ReasoningMode::Think => StepContext::AnswerThink {
                observable: task.observable,
                hint: task.latent,
            },
            ReasoningMode::NoThink => StepContext::AnswerNoThink {
                observable: task.observable,
            },
        };
        let answer = argmax(&step_distribution(params, &answer_ctx).probs);
        if answer == task.answer {
            correct += 1;
        }
        let payload = answer_payload(task, answer);
        let parsed = match chosen_mode {
            ReasoningMode::Think => {
                thinking += 1;
                ParsedResponse::think(reasoning_placeholder(&payload), payload)
            }
            ReasoningMode::NoThink => ParsedResponse::no_think(payload),
        };
        tokens += parsed.token_length;
    }
    let n = tasks.len() as f64;
    EvalSummary {
        accuracy: correct as f64 / n,
        mean_token_length: tokens as f64 / n,
        thinking_rate: thinking as f64 / n,
    }
}

/// Closed-form expected answer rewards for one difficulty/mode cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub difficulty: Difficulty,
    pub mode: ReasoningMode,
    /// Expected reward of an untrained (uniform) answer head.
    pub chance_reward: f64,
    /// Expected reward of the best deterministic answer strategy for this
    /// mode.
    pub best_reward: f64,
}

/// The expected-reward table that makes the environment's mode economics
/// auditable: no-think pays `2a - 1` and think pays `a - 1/2` at answer
/// accuracy `a`. Uniform heads hit `1/K`; the best no-think strategy is
/// exact on easy tasks and stuck at chance elsewhere, while the best think
/// strategy copies the hint and is always right.
pub fn expected_reward_table(k: usize) -> Vec<OracleEntry> {
    let chance = 1.0 / k as f64;
    let no_think_at = |a: f64| 2.0 * a - 1.0;
    let think_at = |a: f64| a - 0.5;
    Difficulty::ALL
        .into_iter()
        .flat_map(|difficulty| {
            let best_no_think_acc = match difficulty {
                Difficulty::Easy => 1.0,
                Difficulty::Medium | Difficulty::Hard => chance,
            };
            [
                OracleEntry {
                    difficulty,
                    mode: ReasoningMode::NoThink,
                    chance_reward: no_think_at(chance),
                    best_reward: no_think_at(best_no_think_acc),
                },
                OracleEntry {
                    difficulty,
                    mode: ReasoningMode::Think,
                    chance_reward: think_at(chance),
                    best_reward: think_at(1.0),
                },
            ]
        })
        .collect()
}

/// The reward-maximizing mode per difficulty implied by the oracle table.
pub fn oracle_mode(difficulty: Difficulty, k: usize) -> ReasoningMode {
    let table = expected_reward_table(k);
    let best = |mode: ReasoningMode| {
        table
            .iter()
            .find(|e| e.difficulty == difficulty && e.mode == mode)
            .expect("table covers every cell")
            .best_reward
    };
    if best(ReasoningMode::NoThink) >= best(ReasoningMode::Think) {
        ReasoningMode::NoThink
    } else {
        ReasoningMode::Think
    }
}
