//! Desk-scale synthetic substrate: tasks with controllable difficulty, a
//! small categorical policy with analytic gradients, deterministic rollout
//! sampling, and the training loop that wires the optimizer to the reward
//! module.

pub mod policy;
pub mod rollout;
pub mod task;
pub mod train;

pub use policy::{policy_step_stats, step_distribution, PolicyParams, StepContext, StepStats};
pub use rollout::{
    expected_reward_table, forced_mode_eval, oracle_mode, sample_rollout, seeded_stream,
    EvalSummary, OracleEntry, Rollout, StreamPurpose, THINK_LENGTH_FACTOR,
};
pub use task::{generate_tasks, sample_task, Difficulty, DifficultyMix, EnvError, SyntheticTask};
pub use train::{train, train_with_observer, TrainConfig, TrainOutcome};
