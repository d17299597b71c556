//! The training loop: group-sampled rollouts, group-relative advantages,
//! one analytic gradient-descent step per batch, then the adaptive entropy
//! controller update. Fully deterministic given the config seed.

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::policy::{policy_step_stats, PolicyParams};
use crate::env::rollout::{sample_rollout, seeded_stream, Rollout, StreamPurpose};
use crate::env::task::{sample_task, Difficulty, DifficultyMix, EnvError, SyntheticTask};
use crate::grpo::{
    compute_policy_loss, group_advantage, loss_gradient, update_adaptive_coeff, ClipConfig,
    EntropyControllerState, StepJacobian, TrajectoryStep,
};
use crate::report::TrainingSnapshot;
use crate::reward::RewardConfig;
use crate::template::ReasoningMode;

/// Full configuration of one training run; the JSON config file mirrors
/// this struct field for field. Unspecified fields take these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Rollouts per prompt (the GRPO group size G).
    pub group_size: usize,
    /// Prompts per optimizer step.
    pub batch_prompts: usize,
    /// Total optimizer steps.
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Symbol/tool count K of the synthetic environment.
    pub num_symbols: usize,
    pub difficulty_mix: DifficultyMix,
    /// Warm-start logit bias of the answer heads (the warm-up SFT analog);
    /// zero trains from scratch.
    pub warm_start_bias: f64,
    pub clip: ClipConfig,
    pub entropy: EntropyControllerState,
    pub reward: RewardConfig,
    /// Where the `train` subcommand streams the snapshot log.
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            batch_prompts: 16,
            steps: 400,
            learning_rate: 0.05,
            seed: 17,
            num_symbols: 4,
            difficulty_mix: DifficultyMix::default(),
            warm_start_bias: 2.0,
            clip: ClipConfig::default(),
            entropy: EntropyControllerState::default(),
            reward: RewardConfig::default(),
            log_path: None,
        }
    }
}

impl TrainConfig {
    /// The mode-selection experiment: the default (0.47/0.21/0.32) mix at
    /// K = 4 with the decoupled constraints on. Converges to no-think on
    /// easy tasks and think on hard ones within 2000 steps.
    pub fn mode_selection_run(seed: u64) -> Self {
        Self {
            steps: 2000,
            seed,
            learning_rate: 0.3,
            ..Self::default()
        }
    }

    /// The collapse reproduction: an easy-dominated mix with both entropy
    /// bonuses zeroed and the controller frozen. The easy bulk's short
    /// advantage dominance drags the shared mode preference down, think
    /// supply dries up, and entropy collapses.
    pub fn collapse_run(seed: u64) -> Self {
        Self {
            steps: 3000,
            seed,
            learning_rate: 0.3,
            difficulty_mix: DifficultyMix {
                easy: 0.94,
                medium: 0.03,
                hard: 0.03,
            },
            entropy: EntropyControllerState::disabled(),
            ..Self::default()
        }
    }

    /// The identical run to [`TrainConfig::collapse_run`] with the
    /// decoupled adaptive constraints enabled; long-mode entropy stays
    /// lower-bounded near its target instead of collapsing.
    pub fn decoupled_run(seed: u64) -> Self {
        Self {
            entropy: EntropyControllerState::default(),
            ..Self::collapse_run(seed)
        }
    }

    /// The controller-tracking experiment: hard-only tasks, so nearly all
    /// steps are long-mode and the adaptive coefficient must hold realized
    /// entropy at its target.
    pub fn entropy_tracking_run(seed: u64) -> Self {
        Self {
            steps: 1200,
            seed,
            learning_rate: 0.3,
            difficulty_mix: DifficultyMix::only(Difficulty::Hard),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.group_size < 2 {
            return Err(EnvError::InvalidConfig(
                "group_size must be at least 2".to_string(),
            ));
        }
        if self.group_size > 4096 || self.batch_prompts > 4096 {
            return Err(EnvError::InvalidConfig(
                "group_size and batch_prompts must not exceed 4096".to_string(),
            ));
        }
        if self.batch_prompts == 0 || self.steps == 0 {
            return Err(EnvError::InvalidConfig(
                "batch_prompts and steps must be positive".to_string(),
            ));
        }
        if self.steps > u32::MAX as usize {
            return Err(EnvError::InvalidConfig("too many steps".to_string()));
        }
        if self.num_symbols < 2 {
            return Err(EnvError::InvalidConfig(
                "num_symbols must be at least 2".to_string(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EnvError::InvalidConfig(
                "learning_rate must be positive and finite".to_string(),
            ));
        }
        if !self.warm_start_bias.is_finite() {
            return Err(EnvError::InvalidConfig(
                "warm_start_bias must be finite".to_string(),
            ));
        }
        self.difficulty_mix.validate()
    }
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub snapshots: Vec<TrainingSnapshot>,
    pub params: PolicyParams,
    pub controller: EntropyControllerState,
}

/// Runs the full loop, collecting one snapshot per optimizer step.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome, EnvError> {
    train_with_observer(cfg, |_| {})
}

/// Like [`train`], invoking `observer` with each snapshot as it is
/// produced (used by the CLI to stream the log).
pub fn train_with_observer(
    cfg: &TrainConfig,
    mut observer: impl FnMut(&TrainingSnapshot),
) -> Result<TrainOutcome, EnvError> {
    cfg.validate()?;
    let mut params = PolicyParams::warm_start(cfg.num_symbols, cfg.warm_start_bias);
    let mut controller = cfg.entropy.clone();
    let mut snapshots = Vec::with_capacity(cfg.steps);

    for step_index in 0..cfg.steps as u64 {
        let tasks = sample_batch_tasks(cfg, step_index);

        // Snapshot of the sampling policy; with a single optimizer pass per
        // batch the ratio is exactly one on every step.
        let old_params = params.clone();
        let groups: Vec<Vec<Rollout>> = tasks
            .iter()
            .enumerate()
            .map(|(p, task)| {
                (0..cfg.group_size as u64)
                    .map(|g| {
                        let mut rng = seeded_stream(
                            cfg.seed,
                            StreamPurpose::Rollout,
                            step_index,
                            p as u64,
                            g,
                        );
                        sample_rollout(&old_params, task, &mut rng, &cfg.reward)
                    })
                    .collect()
            })
            .collect();

        let mut batch_steps: Vec<TrajectoryStep> = Vec::new();
        let mut batch_advantages: Vec<f64> = Vec::new();
        let mut batch_jacobians: Vec<StepJacobian> = Vec::new();
        for group in &groups {
            let rewards: Vec<f64> = group.iter().map(|r| r.reward.total).collect();
            let advantages = group_advantage(&rewards).map_err(|source| EnvError::Training {
                step: step_index,
                source,
            })?;
            for (rollout, advantage) in group.iter().zip(advantages) {
                for (i, (ctx, action)) in rollout.decisions.iter().enumerate() {
                    let (stats, jacobian) = policy_step_stats(&params, ctx, *action);
                    batch_steps.push(TrajectoryStep {
                        logprob_new: stats.logprobs[*action],
                        logprob_old: rollout.steps[i].logprob_old,
                        entropy: stats.entropy,
                        mode_flag: rollout.steps[i].mode_flag,
                    });
                    batch_advantages.push(advantage);
                    batch_jacobians.push(jacobian);
                }
            }
        }

        let report = compute_policy_loss(&batch_steps, &batch_advantages, &cfg.clip, &controller)
            .map_err(|source| EnvError::Training {
                step: step_index,
                source,
            })?;
        let gradient = loss_gradient(
            &batch_steps,
            &batch_advantages,
            &cfg.clip,
            &controller,
            &batch_jacobians,
        )
        .map_err(|source| EnvError::Training {
            step: step_index,
            source,
        })?;
        params.descend(&gradient, cfg.learning_rate);

        let long_entropies: Vec<f64> = batch_steps
            .iter()
            .filter(|s| s.mode_flag == 0)
            .map(|s| s.entropy)
            .collect();
        controller = update_adaptive_coeff(&long_entropies, &controller);

        let snapshot = summarize_step(step_index, &groups, &report, &controller);
        observer(&snapshot);
        snapshots.push(snapshot);
    }

    Ok(TrainOutcome {
        snapshots,
        params,
        controller,
    })
}

fn sample_batch_tasks(cfg: &TrainConfig, step_index: u64) -> Vec<SyntheticTask> {
    let mut rng = seeded_stream(cfg.seed, StreamPurpose::TaskSampling, step_index, 0, 0);
    (0..cfg.batch_prompts)
        .map(|p| {
            let u: f64 = rng.gen();
            let difficulty = if u < cfg.difficulty_mix.easy {
                Difficulty::Easy
            } else if u < cfg.difficulty_mix.easy + cfg.difficulty_mix.medium {
                Difficulty::Medium
            } else {
                Difficulty::Hard
            };
            let task_id = step_index * cfg.batch_prompts as u64 + p as u64;
            sample_task(&mut rng, task_id, difficulty, cfg.num_symbols)
        })
        .collect()
}

fn summarize_step(
    step: u64,
    groups: &[Vec<Rollout>],
    report: &crate::grpo::LossReport,
    controller: &EntropyControllerState,
) -> TrainingSnapshot {
    let rollouts: Vec<&Rollout> = groups.iter().flatten().collect();
    let n = rollouts.len() as f64;
    let mean_reward = rollouts.iter().map(|r| r.reward.total).sum::<f64>() / n;
    let accuracy = rollouts
        .iter()
        .filter(|r| matches!(r.reward.answer, Some(a) if a > 0.0))
        .count() as f64
        / n;
    let thinking = rollouts
        .iter()
        .filter(|r| r.mode == ReasoningMode::Think)
        .count();
    let mean_len = |mode: ReasoningMode| {
        let lens: Vec<f64> = rollouts
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.token_length() as f64)
            .collect();
        (!lens.is_empty()).then(|| lens.iter().sum::<f64>() / lens.len() as f64)
    };
    TrainingSnapshot {
        step,
        mean_reward,
        accuracy,
        thinking_rate: thinking as f64 / n,
        mean_len_think: mean_len(ReasoningMode::Think),
        mean_len_nothink: mean_len(ReasoningMode::NoThink),
        mean_entropy_think: report.mean_entropy_long,
        mean_entropy_nothink: report.mean_entropy_short,
        adaptive_coeff: controller.long_coeff,
        loss: report.loss,
    }
}
